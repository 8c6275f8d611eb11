//! Phrase-critic reranking of generated textual explanations.
//!
//! A candidate explanation is split into attribute phrases ("red beak",
//! "long neck"), each phrase is grounded to an image region with a score,
//! and an LSTM + two-layer regressor maps the sequence of groundings to one
//! image-relevance score. The critic is trained with a hinge ranking loss
//! over positive explanations and copies with flipped color/size attributes.
//! Candidates are finally reranked by relevance plus weighted fluency.

pub mod chunker;
pub mod critic;
pub mod error;
pub mod grounding;
pub mod hash;
pub mod jsonl;
pub mod negatives;
pub mod pipeline;
pub mod ranker;
pub mod rng;
pub mod tensor;

pub use chunker::{chunk_phrases, tokenize, AttributeCategory, AttributePhrase, Lexicon, TokenSequence};
pub use critic::{CriticDims, CriticModel, TrainConfig, TrainPair};
pub use error::{Error, Result};
pub use grounding::{BoundingBox, Grounder, Grounding, ImageRecord};
pub use negatives::FlipPolicy;
pub use rng::SeededRng;
pub use ranker::{ExplanationCandidate, RankedExplanation};
