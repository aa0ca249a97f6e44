//! Evaluation of generated spectrograms: a CNN digit classifier, KDE
//! support estimates for fidelity and diversity, PCA dimensioning and
//! PNG grids for visual inspection.

pub mod classifier;
pub mod error;
pub mod kde;
pub mod pca;
pub mod plot;
pub mod report;

pub use classifier::{classify_accuracy, train_classifier, Classifier, ClassifierConfig};
pub use error::{EvalError, Result};
pub use kde::{diversity, fidelity, kde_support, scott_bandwidth, top_f1, ManifoldEstimate};
pub use pca::{eigenvalues, pca_explained_variance, Pca};
pub use plot::{render_grid, write_grid_png};
pub use report::{evaluate_features, evaluate_pipeline, EvalConfig, EvalInputs, EvalReport, FeatureScores};
