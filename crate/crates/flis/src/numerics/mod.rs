//! Shared numerical kernels: sparse coding, regression, eigenvalues, and
//! the constrained dictionary update.

pub(crate) mod chol;
mod dict_update;
mod eigen;
mod lasso;
mod omp;
mod ridge;

pub use dict_update::{dict_update, dict_update_traced, objective as dict_objective};
pub use eigen::eig_extremes;
pub use lasso::{nonneg_lasso, GramLasso};
pub use omp::{omp_batch, omp_batch_with_errors};
pub use ridge::ridge_classifier;
