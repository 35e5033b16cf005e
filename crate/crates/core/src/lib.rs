//! Video action recognition from optical-flow time series.
//!
//! Frames become Horn–Schunck flow fields, each flow field becomes a pooled
//! descriptor, PCA reduces descriptors to a handful of channels, a
//! multi-channel 1D-CNN learns temporal features over the padded series, and a
//! chi-squared-kernel SVM classifies the learned features.

mod binio;
pub mod cnn1d;
pub mod corpus;
pub mod error;
pub mod flowfield;
pub mod pca;
pub mod pipeline;
pub mod svm;

pub use error::{Error, Result};
