//! Semantic interleaving global channel attention (SIGNA) for multi-label
//! classification, built on a small reverse-mode tensor engine.
//!
//! The crate is `no_std` with `alloc`. Everything that touches the file
//! system or the command line lives in the companion `signa` crate.
//!
//! Layout:
//! - [`numerics`]: dense tensors, the differentiation graph, finite-difference checks.
//! - [`semantics`]: label co-occurrence graphs, word embeddings, GNN encoders.
//! - [`attention`]: the interleaving attention block.
//! - [`model`]: mini CNN backbone, loss, Adam, training loop, prediction.
//! - [`metrics`] and [`ablation`]: example/label-based scores and the ablation grid.
//! - [`synth`]: planted co-occurrence dataset generator.
//! - [`suites`]: gradient-check suites shared by tests and the CLI.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod ablation;
pub mod attention;
pub mod dataset;
pub mod experiment;
mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod params;
pub mod rng;
pub mod semantics;
pub mod suites;
pub mod synth;

pub use error::{Error, Result};
