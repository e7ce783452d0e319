//! Sentence-level annotation of chest X-ray reports: weakly supervised
//! sentence/annotation matching, a pointer-generator annotator, evaluation
//! metrics and a synthetic corpus generator.

pub mod corpus;
pub mod embed;
pub mod matcher;
pub mod metrics;
pub mod seq2seq;
pub mod synth;
pub mod textproc;
