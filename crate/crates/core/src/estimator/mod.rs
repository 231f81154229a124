//! Sparse, low Tucker-rank estimation of the truncated VAR sieve.

pub mod agd;
pub mod aic;
pub mod design;
pub mod document;
pub mod objective;

pub use agd::{
    fit_agd, fit_agd_after_warm_start, fit_agd_from, fit_group_lasso_reference, init_factors, warm_start, FitConfig,
    FitResult, StepSize, Threshold, WarmStart,
};
pub use aic::{aic_value, grid_product, select_aic, AicRow, AicSelection, Triple};
pub use design::{build_design, DesignMatrices};
pub use document::{FitDocument, FIT_SCHEMA};
pub use objective::{balance_penalty, grad_factors, grad_full, loss, penalized_loss, FactorGradients};
