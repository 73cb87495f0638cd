//! Evaluation metrics for generated interactions.

mod features;
mod physical;
mod report;
mod stats;


pub use features::{motion_descriptor, train_autoencoder, AutoencoderConfig, FeatureExtractor, AUTOENCODER_KIND};
pub use physical::{contact_ratio, contact_ratio_from_distances, penetration, penetration_from_distances};
pub use report::{evaluate, MetricReport, MetricsConfig, REPORT_VERSION};
pub use stats::{
    diversity, frechet_distance, frechet_from_features, mmodality, precision_recall, Frechet, GaussianStats,
    COVARIANCE_REGULARIZER,
};
