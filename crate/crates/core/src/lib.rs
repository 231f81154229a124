//! Sparse and low-rank estimation of high-dimensional vector autoregressions
//! of infinite order, through a Tucker-decomposed coefficient tensor.

pub mod error;
pub mod estimator;
pub mod forecast;
pub mod linalg;
pub mod process;
pub mod scalar;
pub mod simulation;
pub mod tensor;

pub use error::{Error, Result};
pub use estimator::{
    build_design, fit_agd, fit_agd_after_warm_start, fit_agd_from, init_factors, select_aic, warm_start, DesignMatrices,
    FitConfig, FitResult, StepSize, Threshold, WarmStart,
};
pub use forecast::{one_step_forecast, rolling_evaluate, ForecastMetrics, RollingPlan};
pub use process::{ar_to_ma, check_stationarity, ma_to_ar, simulate, truncation_error, GlpModel, PanelData};
pub use scalar::Scalar;
pub use tensor::{GroupSupport, Mode, Tensor3, TuckerFactors};

pub type Tensor3f64 = Tensor3<f64>;
pub type Tensor3f32 = Tensor3<f32>;
pub type TuckerFactorsF64 = TuckerFactors<f64>;
pub type FitConfigF64 = FitConfig<f64>;
pub type FitResultF64 = FitResult<f64>;
pub type PanelDataF64 = PanelData<f64>;
