//! File formats, experiment runners and the `signa` command-line tool on
//! top of [`signa_core`].
//!
//! - [`corpus`]: label CSVs and GloVe text embeddings.
//! - [`graph_io`]: co-occurrence matrices as CSV, JSON summary, PGM heatmap.
//! - [`dataset_io`]: dataset directories (`SIGD1` image tensor plus CSVs).
//! - [`checkpoint`]: `SIGNA1` model checkpoints.
//! - [`history`], [`report`], [`manifest`]: run outputs.
//! - [`runner`]: training runs on disk and parallel seed/grid execution.

pub mod checkpoint;
pub mod cli;
pub mod commands;
mod container;
pub mod corpus;
pub mod dataset_io;
mod error;
pub mod fsutil;
pub mod graph_io;
pub mod history;
pub mod manifest;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
