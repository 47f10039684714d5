//! Answer-quality metrics from expert judgments.
//!
//! Each judged answer is Right, Related or Wrong with a satisfaction score.
//! Related answers count as correct for accuracy. The confusion matrix assumes
//! every reference answer is correct, so every actual label is positive:
//! `TP = right + related`, `FN = wrong`, `FP = TN = 0`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RELATED_BAND: (f64, f64) = (60.0, 85.0);

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no judgments")]
    EmptyJudgments,
    #[error("schema violation in {record}: {message}")]
    SchemaViolation { record: String, message: String },
    #[error("{record}: satisfaction {satisfaction} is outside the band for {label:?} ({band})")]
    SatisfactionOutOfBand {
        record: String,
        label: Label,
        satisfaction: f64,
        band: &'static str,
    },
    #[error("duplicate question_id `{0}`")]
    DuplicateQuestionId(String),
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Right,
    Related,
    Wrong,
}

impl Label {
    pub fn is_correct(self) -> bool {
        !matches!(self, Self::Wrong)
    }

    fn band(self) -> &'static str {
        match self {
            Self::Right => "exactly 100",
            Self::Related => "60 to 85",
            Self::Wrong => "exactly 0",
        }
    }

    fn allows(self, satisfaction: f64) -> bool {
        match self {
            Self::Right => satisfaction == 100.0,
            Self::Wrong => satisfaction == 0.0,
            Self::Related => (RELATED_BAND.0..=RELATED_BAND.1).contains(&satisfaction),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Judgment {
    pub question_id: String,
    pub label: Label,
    pub satisfaction: f64,
}

impl Judgment {
    pub fn validate(&self, record: &str) -> Result<(), EvalError> {
        if self.question_id.trim().is_empty() {
            return Err(EvalError::SchemaViolation {
                record: record.into(),
                message: "question_id is empty".into(),
            });
        }
        if !self.satisfaction.is_finite() || !self.label.allows(self.satisfaction) {
            return Err(EvalError::SatisfactionOutOfBand {
                record: record.into(),
                label: self.label,
                satisfaction: self.satisfaction,
                band: self.label.band(),
            });
        }
        Ok(())
    }
}

pub fn parse_judgment_line(line: &str, record: &str) -> Result<Judgment, EvalError> {
    let judgment: Judgment = serde_json::from_str(line).map_err(|e| EvalError::SchemaViolation {
        record: record.into(),
        message: e.to_string(),
    })?;
    judgment.validate(record)?;
    Ok(judgment)
}

/// Parses a whole judgment file. Blank lines are skipped; question ids must be
/// unique.
pub fn parse_judgments(content: &str, file_name: &str) -> Result<Vec<Judgment>, EvalError> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let j = parse_judgment_line(line, &format!("{file_name}:{}", i + 1))?;
        if !seen.insert(j.question_id.clone()) {
            return Err(EvalError::DuplicateQuestionId(j.question_id));
        }
        out.push(j);
    }
    Ok(out)
}

pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<Judgment>, EvalError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path.file_name().unwrap_or_default().to_string_lossy();
    parse_judgments(&content, &name)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub right: usize,
    pub related: usize,
    pub wrong: usize,
}

impl LabelCounts {
    pub fn of(judgments: &[Judgment]) -> Self {
        judgments.iter().fold(Self::default(), |mut c, j| {
            match j.label {
                Label::Right => c.right += 1,
                Label::Related => c.related += 1,
                Label::Wrong => c.wrong += 1,
            }
            c
        })
    }

    pub fn total(&self) -> usize {
        self.right + self.related + self.wrong
    }

    pub fn correct(&self) -> usize {
        self.right + self.related
    }
}

/// Percentage of answers labelled Right or Related.
pub fn overall_accuracy(judgments: &[Judgment]) -> Result<f64, EvalError> {
    let counts = LabelCounts::of(judgments);
    if counts.total() == 0 {
        return Err(EvalError::EmptyJudgments);
    }
    Ok(100.0 * counts.correct() as f64 / counts.total() as f64)
}

/// Mean satisfaction score.
pub fn average_satisfaction(judgments: &[Judgment]) -> Result<f64, EvalError> {
    if judgments.is_empty() {
        return Err(EvalError::EmptyJudgments);
    }
    let sum: f64 = judgments.iter().map(|j| j.satisfaction).sum();
    Ok(sum / judgments.len() as f64)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub counts: ConfusionCounts,
    pub positive: ClassMetrics,
    pub negative: ClassMetrics,
    /// `(TP + TN) / n`.
    pub accuracy: f64,
    /// Ratios that were 0/0 and reported as 0.
    pub undefined: Vec<String>,
}

fn ratio(num: usize, den: usize, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion_metrics(judgments: &[Judgment]) -> Result<ConfusionMetrics, EvalError> {
    let counts = LabelCounts::of(judgments);
    let n = counts.total();
    if n == 0 {
        return Err(EvalError::EmptyJudgments);
    }
    // All actual labels are positive.
    let c = ConfusionCounts {
        tp: counts.correct(),
        fn_: counts.wrong,
        fp: 0,
        tn: 0,
    };
    let mut undefined = Vec::new();
    let precision_pos = ratio(c.tp, c.tp + c.fp, "precision_pos", &mut undefined);
    let recall_pos = ratio(c.tp, c.tp + c.fn_, "recall_pos", &mut undefined);
    // For the negative class the roles swap: predicted negatives are TN + FN,
    // actual negatives are TN + FP.
    let precision_neg = ratio(c.tn, c.tn + c.fn_, "precision_neg", &mut undefined);
    let recall_neg = ratio(c.tn, c.tn + c.fp, "recall_neg", &mut undefined);
    Ok(ConfusionMetrics {
        counts: c,
        positive: ClassMetrics {
            precision: precision_pos,
            recall: recall_pos,
            f1: f1_score(precision_pos, recall_pos),
        },
        negative: ClassMetrics {
            precision: precision_neg,
            recall: recall_neg,
            f1: f1_score(precision_neg, recall_neg),
        },
        accuracy: (c.tp + c.tn) as f64 / n as f64,
        undefined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub n_right: usize,
    pub n_related: usize,
    pub n_wrong: usize,
    pub accuracy_pct: f64,
    pub avg_satisfaction_pct: f64,
    pub precision_pos: f64,
    pub recall_pos: f64,
    pub f1_pos: f64,
    pub precision_neg: f64,
    pub recall_neg: f64,
    pub f1_neg: f64,
    pub confusion: ConfusionCounts,
    pub confusion_accuracy: f64,
    pub undefined_ratios: Vec<String>,
}

pub fn evaluate(judgments: &[Judgment]) -> Result<EvalReport, EvalError> {
    let counts = LabelCounts::of(judgments);
    let confusion = confusion_metrics(judgments)?;
    Ok(EvalReport {
        n: counts.total(),
        n_right: counts.right,
        n_related: counts.related,
        n_wrong: counts.wrong,
        accuracy_pct: overall_accuracy(judgments)?,
        avg_satisfaction_pct: average_satisfaction(judgments)?,
        precision_pos: confusion.positive.precision,
        recall_pos: confusion.positive.recall,
        f1_pos: confusion.positive.f1,
        precision_neg: confusion.negative.precision,
        recall_neg: confusion.negative.recall,
        f1_neg: confusion.negative.f1,
        confusion: confusion.counts,
        confusion_accuracy: confusion.accuracy,
        undefined_ratios: confusion.undefined,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        format!(
            "questions: {}  (right {}, related {}, wrong {})\n\
             overall accuracy: {:.1}%\n\
             average satisfaction: {:.1}%\n\
             right/related  precision {:.4}  recall {:.4}  f1 {:.4}\n\
             wrong          precision {:.4}  recall {:.4}  f1 {:.4}\n\
             confusion: TP {} FN {} FP {} TN {}",
            self.n,
            self.n_right,
            self.n_related,
            self.n_wrong,
            self.accuracy_pct,
            self.avg_satisfaction_pct,
            self.precision_pos,
            self.recall_pos,
            self.f1_pos,
            self.precision_neg,
            self.recall_neg,
            self.f1_neg,
            self.confusion.tp,
            self.confusion.fn_,
            self.confusion.fp,
            self.confusion.tn,
        )
    }
}

pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let path = path.as_ref();
    fs::write(path, report.to_json() + "\n").map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}
