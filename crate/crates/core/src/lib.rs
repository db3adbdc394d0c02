//! Multi-hop pivot routing between distant languages.
//!
//! Given a directed matrix of one-hop translation quality scores, this crate
//! enumerates candidate pivot paths (up to three hops), scores them with a
//! small LSTM trained on sampled path labels, and compares the learned router
//! against direct translation, random routing, prior pivoting, hop averaging
//! and the ground-truth best path.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the experiment
//! pipeline and the command line live in the `pivotroute` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod experiment;
pub mod features;
pub mod lang;
pub mod metrics;
pub mod nn;
pub mod path;
pub mod routers;
pub mod synth;

pub use error::{Error, Result};
pub use features::{EncodedPath, FeatureSequence, Token, EMBED_DIM, FEATURE_DIM};
pub use lang::{Direction, LangId, Language, LanguageRegistry, QualityMatrix};
pub use path::{Path, PathSet};
