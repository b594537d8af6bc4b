//! Feature-space data augmentation over precomputed embeddings, with a
//! softmax classifier head and few-shot integration experiments.

pub mod augment;
pub mod classifier;
pub mod cvae;
pub mod dataio;
pub mod deltaenc;
pub mod error;
pub mod fsi;
pub mod nn;
pub mod par;
pub mod rng;
pub mod synthgen;

pub use dataio::{AugmentedBatch, DatasetBundle, EmbeddingDataset, LabelVocab, Method};
pub use error::{Error, ErrorClass, Result};
pub use par::Jobs;
