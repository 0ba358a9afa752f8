//! Static Android malware triage from Dalvik opcode frequencies.
//!
//! The crate covers the whole path from bytecode to verdicts:
//!
//! * [`dex`] decodes `.dex` containers and smali text into 256-bin opcode
//!   histograms;
//! * [`corpus`] turns labelled app collections into feature matrices, and
//!   generates synthetic corpora;
//! * [`features`] normalizes rows and ranks opcodes by class-mean difference;
//! * [`reduce`] and [`neural`] provide feature reducers (variance top-k, PCA,
//!   autoencoders);
//! * [`classic`] and [`neural`] provide the classifiers;
//! * [`cluster`] provides k-means, agglomerative, BIRCH, DBSCAN and GMM
//!   clustering with SSE / silhouette / Calinski-Harabasz metrics;
//! * [`eval`] computes confusion-matrix metrics, ROC AUC and report tables;
//! * [`pipeline`] strings them together into sweeps and cluster studies.

// `!(x > 0.0)` is used on purpose: it rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dex;
pub mod eval;

pub use dex::{opcode_table, parse_dex, parse_smali, OpcodeHistogram};
pub mod classic;
pub mod cluster;
pub mod corpus;
pub mod features;
pub mod neural;
pub mod pipeline;
pub mod reduce;
pub mod rng;

pub use corpus::{FeatureMatrix, Label, Scale};
