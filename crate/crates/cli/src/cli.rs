use std::ffi::OsString;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use legal_rag::chunk::{chunk_passage, WordSymbolTokenizer};
use legal_rag::corpus::{flatten_to_passages, load_corpus};
use legal_rag::embedding::Embedder;
use legal_rag::engine::{answer_question, Answer, EngineConfig};
use legal_rag::eval::{evaluate, load_judgments, write_report};
use legal_rag::index::{VectorIndex, DEFAULT_K};
use legal_rag::llm::Gateway;
use legal_rag::synthesis::{synthesize_dataset, QaFileWriter, SynthesisConfig, DEFAULT_QUESTIONS_PER_ARTICLE};

use crate::config::{embedder_for, ChunkArgs, EmbedArgs, EngineArgs, FileConfig, LlmArgs, DEFAULT_LISTEN};
use crate::service::{self, AppState, Snapshot};

#[derive(Debug, Parser)]
#[command(name = "legal-rag", version, about = "Question answering over legal corpora")]
pub struct Cli {
    /// TOML config file. Flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus directory and report its size.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        chunking: ChunkArgs,
    },
    /// Build or query a vector index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Generate question/answer pairs for every law article.
    #[command(name = "qa-gen")]
    QaGen {
        #[arg(long)]
        corpus: PathBuf,
        /// Output file, in the corpus `.qa.jsonl` format.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_QUESTIONS_PER_ARTICLE)]
        per_article: usize,
        #[arg(long, default_value_t = 1)]
        concurrency: usize,
        #[arg(long)]
        model_limit: Option<usize>,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Answer one question.
    Ask {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        question: String,
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Answer questions read from standard input, one per line.
    Chat {
        #[arg(long)]
        index: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Compute accuracy, satisfaction and confusion metrics from judgments.
    Eval {
        #[arg(long)]
        judgments: PathBuf,
        /// Also write the full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
        /// Directory of static UI assets served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Build the index from `--corpus` when the index file is missing.
        #[arg(long)]
        build_on_start: bool,
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        llm: LlmArgs,
        #[command(flatten)]
        embed: EmbedArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Chunk, embed and index a corpus.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        chunking: ChunkArgs,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Show the chunks nearest to a query.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
    },
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 on success, 1 on a domain error, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Ingest { corpus, chunking } => {
            let config = chunking.resolve(&file)?;
            let corpus = load_corpus(&corpus)?;
            let passages = flatten_to_passages(&corpus);
            let mut chunks = 0;
            for p in &passages {
                chunks += chunk_passage(&p.text, &p.source_ref, &config, &WordSymbolTokenizer)?.len();
            }
            let stats = corpus.stats();
            writeln!(
                out,
                "documents: {}\narticles: {}\nqa_pairs: {}\npassages: {}\nchunks: {}",
                stats.documents,
                stats.articles,
                stats.qa_pairs,
                passages.len(),
                chunks
            )?;
        }
        Command::Index(IndexCommand::Build {
            corpus,
            out: path,
            chunking,
            embed,
        }) => {
            let config = chunking.resolve(&file)?;
            let embedder = embed.resolve(&file)?;
            let corpus = load_corpus(&corpus)?;
            let index = VectorIndex::build(&corpus, &config, &WordSymbolTokenizer, embedder.as_ref())?;
            index.save(&path)?;
            writeln!(out, "indexed {} chunks into {}", index.len(), path.display())?;
        }
        Command::Index(IndexCommand::Search { index, query, k }) => {
            let index = VectorIndex::load(&index)?;
            let embedder = embedder_for(index.provider(), file.embedder.max_in_flight)?;
            let hits = index.search(&embedder.embed_one(&query)?, k)?;
            for (i, hit) in hits.iter().enumerate() {
                writeln!(out, "{}. [{}] score {:.6}", i + 1, hit.source_ref.label(), hit.score)?;
                writeln!(out, "   {}", snippet(&hit.text, 160))?;
            }
        }
        Command::QaGen {
            corpus,
            out: path,
            per_article,
            concurrency,
            model_limit,
            llm,
        } => {
            let limit = model_limit
                .or(file.chunking.model_limit)
                .unwrap_or(legal_rag::chunk::DEFAULT_MODEL_LIMIT);
            let gateway = llm.resolve(&file, limit)?;
            let corpus = load_corpus(&corpus)?;
            let config = SynthesisConfig {
                questions_per_article: per_article,
                concurrency,
                ..SynthesisConfig::default()
            };
            let mut writer = QaFileWriter::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let report = synthesize_dataset(&corpus, &config, &gateway, &mut writer)?;
            for f in &report.failures {
                eprintln!("article {} of {}: {}", f.article_number, f.doc_id, f.reason);
            }
            writeln!(
                out,
                "articles: {}\npairs: {}\nfailures: {}\nstyle warnings: {}\nwritten to {}",
                report.articles_processed,
                report.pairs.len(),
                report.failures.len(),
                report.style_warnings,
                path.display()
            )?;
        }
        Command::Ask {
            index,
            question,
            engine,
            llm,
        } => {
            let session = Session::open(&index, &engine, &llm, &file)?;
            let answer = session.answer(&question)?;
            print_answer(&mut out, &answer)?;
        }
        Command::Chat { index, engine, llm } => {
            let session = Session::open(&index, &engine, &llm, &file)?;
            let stdin = io::stdin();
            write!(out, "> ")?;
            out.flush()?;
            for line in stdin.lock().lines() {
                let line = line?;
                let q = line.trim();
                if q == "exit" || q == "quit" {
                    break;
                }
                if !q.is_empty() {
                    match session.answer(q) {
                        Ok(answer) => print_answer(&mut out, &answer)?,
                        Err(e) => writeln!(out, "error: {e:#}")?,
                    }
                }
                write!(out, "\n> ")?;
                out.flush()?;
            }
            writeln!(out)?;
        }
        Command::Eval { judgments, out: path } => {
            let judgments = load_judgments(&judgments)?;
            let report = evaluate(&judgments)?;
            writeln!(out, "{}", report.summary())?;
            if let Some(path) = path {
                write_report(&report, &path)?;
            }
        }
        Command::Serve {
            index,
            corpus,
            listen,
            static_dir,
            build_on_start,
            engine,
            llm,
            embed,
        } => {
            drop(out);
            let index_path = index.or(file.index.clone());
            let corpus_path = corpus.or(file.corpus.clone());
            let build = build_on_start || file.build_on_start.unwrap_or(false);
            let listen = listen
                .or(file.listen.clone())
                .unwrap_or_else(|| DEFAULT_LISTEN.to_string());
            let static_dir = static_dir.or(file.static_dir.clone());
            let engine = engine.resolve(&file)?;
            let gateway = llm.resolve(&file, engine.model_limit)?;

            let corpus = corpus_path.as_ref().map(load_corpus).transpose()?;
            let index = match &index_path {
                Some(p) if p.exists() => VectorIndex::load(p)?,
                _ if build => {
                    let Some(corpus) = &corpus else {
                        bail!("--build-on-start needs --corpus");
                    };
                    let chunking = ChunkArgs::default().resolve(&file)?;
                    let embedder = embed.resolve(&file)?;
                    let index = VectorIndex::build(corpus, &chunking, &WordSymbolTokenizer, embedder.as_ref())?;
                    if let Some(p) = &index_path {
                        index.save(p)?;
                    }
                    index
                }
                Some(p) => bail!(
                    "index file {} does not exist (pass --build-on-start to create it)",
                    p.display()
                ),
                None => bail!("no index given (--index or the config file's `index`)"),
            };
            // Blocking HTTP clients must be created outside the async runtime.
            let embedder = embedder_for(index.provider(), file.embedder.max_in_flight)?;
            let snapshot = Snapshot {
                index,
                embedder,
                corpus_stats: corpus.as_ref().map(|c| c.stats()),
            };
            let state = Arc::new(AppState::new(snapshot, gateway, engine));
            let app = service::router(state, static_dir.as_deref());
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&listen)
                    .await
                    .with_context(|| format!("binding {listen}"))?;
                log::info!("listening on {}", listener.local_addr()?);
                eprintln!("listening on http://{}", listener.local_addr()?);
                service::serve(listener, app).await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}

struct Session {
    index: VectorIndex,
    embedder: Arc<dyn Embedder>,
    gateway: Gateway,
    engine: EngineConfig,
}

impl Session {
    fn open(index: &PathBuf, engine: &EngineArgs, llm: &LlmArgs, file: &FileConfig) -> Result<Self> {
        let engine = engine.resolve(file)?;
        let index = VectorIndex::load(index)?;
        let embedder = embedder_for(index.provider(), file.embedder.max_in_flight)?;
        let gateway = llm.resolve(file, engine.model_limit)?;
        Ok(Self {
            index,
            embedder,
            gateway,
            engine,
        })
    }

    fn answer(&self, question: &str) -> Result<Answer> {
        Ok(answer_question(
            question,
            &self.index,
            &self.engine,
            &self.gateway,
            self.embedder.as_ref(),
        )?)
    }
}

fn print_answer(out: &mut impl Write, answer: &Answer) -> io::Result<()> {
    writeln!(out, "{}", answer.text)?;
    if answer.sources.is_empty() {
        return Ok(());
    }
    writeln!(out, "\nSources:")?;
    for s in &answer.sources {
        writeln!(out, "- {} (score {:.4})", s.source_ref.label(), s.score)?;
    }
    Ok(())
}

fn snippet(text: &str, max_chars: usize) -> String {
    let flat: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    match flat.char_indices().nth(max_chars) {
        Some((idx, _)) => format!("{}...", &flat[..idx]),
        None => flat,
    }
}
