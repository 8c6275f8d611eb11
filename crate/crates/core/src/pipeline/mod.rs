//! Dataset loading, run configuration, the synthetic benchmark, evaluation
//! and the bodies of the command-line subcommands.

mod commands;
mod config;
mod dataset;
mod eval;
pub mod synth;

pub use commands::{
    chunk_lines, chunk_sentence, flip_sentence, holdout_split, rank_candidates, run_train, score_candidates,
    ChunkRecord, ChunkedPhrase, FlipRecord, ScoreRecord, TrainReport,
};
pub use config::{GrounderKind, GrounderSelection, Paths, RunConfig};
pub use dataset::{load_candidates, load_dataset, load_images, Dataset};
pub use eval::{attribute_relevance, evaluate, EvalReport, ImageEval};
