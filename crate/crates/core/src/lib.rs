//! Deep radiomic features for tumour volumes.
//!
//! The pipeline resamples an MRI volume to 1 mm, standardizes intensities, crops the tumour ROI
//! into a 64³ cube and runs a fixed two-block 3D CNN over it. Each of the 21 resulting activation
//! maps (the input plus ten maps per block) is summarised by a k-component Gaussian mixture fitted
//! to its in-ROI values, giving `63·k` features per patient. Those features, optionally joined with
//! clinical and immune-marker columns, feed a random forest evaluated by leave-one-out
//! cross-validation, and the predicted survival groups are compared with Kaplan-Meier curves and
//! a log-rank test.
//!
//! Runnable walkthroughs of each stage live in `examples/`:
//!
//! ```bash
//! cargo run --release --example preprocess_volume
//! cargo run --release --example cnn_activations
//! cargo run --release --example gmm_features
//! cargo run --release --example random_forest_loocv
//! cargo run --release --example survival_analysis
//! cargo run --release --example end_to_end
//! ```

pub mod classifier;
pub mod cnn;
pub mod error;
pub mod gmm;
pub mod pipeline;
pub mod report;
pub mod survival;
pub mod synthetic;
pub mod volume;

pub use error::{Error, Result};
