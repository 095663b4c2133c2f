//! Matched classical and simulated-quantum network benchmarking, data
//! complexity characteristics, and the quantum qualifier Ξ̂ that predicts from
//! data alone which model family will fit better.

pub mod bench;
pub mod cdnn;
pub mod complexity;
pub mod datagen;
pub mod dvcs;
pub mod error;
pub mod geometry;
pub mod perfmetrics;
pub mod qdnn;
pub mod qsim;
pub mod qualifier;
pub mod train;

pub use error::{Error, Result};
pub use train::{Loss, Task, TrainConfig, TrainingSet};
