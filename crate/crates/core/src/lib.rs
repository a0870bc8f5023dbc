//! Learning-from-demonstration toolkit: dynamical and kernelized movement
//! primitives, Gaussian mixture references, trajectory metrics including a
//! learned triplet-loss embedding, and outer-loop hyperparameter search.

pub mod dmp;
pub mod encoder;
pub mod error;
pub mod gmm;
pub mod hyperopt;
pub mod kmp;
pub mod letters;
pub mod linalg;
pub mod metrics;
pub mod par;
pub mod trajectory;

pub use dmp::{adapt_dmp, DmpConfig, DmpModel};
pub use encoder::{generate_triplets, train_encoder, EncoderParams, TrainConfig, Triplet};
pub use error::{Error, Result};
pub use gmm::{extract_reference, EmOptions, ProbRefTrajectory};
pub use hyperopt::{bo_optimize, gd_optimize, Bounds, Hyperparams};
pub use kmp::{adapt_kmp, KmpModel};
pub use metrics::{shape_distortion, MetricReport};
pub use trajectory::{ConstraintPoint, Constraints, Demonstration, Trajectory, ENCODER_POINTS};
