//! Continual learning for quality assessment: a shared trunk, one linear head
//! per task, pairwise fidelity training, and summary-weighted inference.

// `!(x >= 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod optim;
pub mod summarizer;
pub mod synthbench;
pub mod thurstone;
pub mod trainer;

pub use dataset::{QualitySample, TaskDataset};
pub use error::{Error, Result};
pub use model::{ContinualModel, TrunkConfig};
pub use trainer::{Method, SequenceConfig, TrainConfig};

// The guide's snippets run as doctests so the book tracks the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/pairs.md")]
    mod pairs {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/forgetting.md")]
    mod forgetting {}
    #[doc = include_str!("../../../book/src/summaries.md")]
    mod summaries {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/benchmark.md")]
    mod benchmark {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
