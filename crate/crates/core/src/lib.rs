//! Retrieval-augmented question answering over article-structured legal
//! corpora.
//!
//! The pipeline is: load a [`corpus`], cut passages into overlapping token
//! windows ([`chunk`]), embed them ([`embedding`]), store them in a flat
//! [`index`], and answer questions through a chat model ([`llm`]) with the
//! [`engine`]. [`synthesis`] generates per-article Q&A datasets and [`eval`]
//! scores expert judgments of the answers.

pub mod chunk;
pub mod corpus;
pub mod embedding;
pub mod engine;
pub mod eval;
pub mod fixtures;
mod http;
pub mod index;
pub mod llm;
pub mod retry;
pub mod synthesis;

pub use http::Endpoint;
