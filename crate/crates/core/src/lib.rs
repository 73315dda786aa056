//! Decision-directed data decomposition (D4).
//!
//! D4 repeatedly fits a linear learner to a supervised target, takes the
//! learned decision direction, and projects the data onto the orthogonal
//! complement of every direction found so far. What remains carries no
//! linearly recoverable information about the target, while structure in
//! other directions is left untouched.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: projectors, orthonormal bases, completion and deflation.
//! - [`learners`]: the learner registry (ridge least squares, logistic),
//!   k-means, probe kernels and cross-validation.
//! - [`decompose`]: the D4 loop, transforms and probe trajectories.
//! - [`kernelize`]: D4 carried out on a kernel matrix.
//! - [`synthbench`]: the spurious-correlation generalization benchmark.
//! - [`embedkit`]: word-embedding I/O, debiasing and bias metrics.

pub mod decompose;
pub mod embedkit;
pub mod kernelize;
pub mod learners;
pub mod linalg;
pub mod seed;
pub mod synthbench;

pub use decompose::{d4_fit, d4_reduce, d4_transform, probe_trajectory, D4Config, D4Error, D4Model};
pub use learners::{LabeledDataset, Learner, LearnerRegistry, LearnerSpec, Task};
pub use linalg::{FeatureMatrix, LinalgError, Matrix, OrthonormalBasis, Projector, Vector};
