//! Anomaly scorers.
//!
//! [`gaussian`] is the forecast-only rolling Gaussian scorer. [`pca`] and
//! [`kmeans`] are the reconstruction- and distance-based baselines, both fit
//! on median/IQR-scaled validation data from [`robust`].

pub mod gaussian;
pub mod kmeans;
pub mod pca;
pub mod robust;

pub use gaussian::{channel_likelihood, rolling_params, GaussianScorerState, ScorerReport};
pub use kmeans::KMeansScorer;
pub use pca::Ppca;
pub use robust::{median_iqr_normalize, RobustScaler};
