//! Lifting-based variational multiclass segmentation.
//!
//! An input image is lifted into `K` feature channels ([`lifting`]), the
//! TV-regularized reduced energy is minimized over per-pixel simplex-valued
//! masks with a nonlinear primal-dual iteration ([`solver`]), and every pixel
//! is assigned to its dominant mask ([`evaluation`]).

pub mod datafit;
pub mod error;
pub mod evaluation;
pub mod grid_ops;
pub mod image;
pub mod lifting;
pub mod projections;
pub mod solver;

pub use datafit::{
    channel_mean, data_jacobian_adjoint, data_jacobian_apply, data_operator, m_residual,
    DataJacobian, DerivativeForm, SmoothingEps,
};
pub use error::{Result, SegError};
pub use evaluation::{assign_labels, compute_metrics, ClassMetrics, LabelMap, MetricsReport};
pub use grid_ops::{gradient, gradient_adjoint, smoothed_l1, tv_isotropic};
pub use image::{
    ChannelStack, DataFitValue, FeatureStack, GradientField, GradientStack, Image, MaskStack,
};
pub use lifting::{apply_recipe, gabor_response, ChannelDef, GaborSpec, LiftingRecipe};
pub use projections::{project_ball_2inf, project_ball_infinf, project_simplex, SimplexMode};
pub use solver::{
    energy, history_csv, pdhg_step, solve, solve_with, EnergyBreakdown, HistoryEntry,
    PrimalOperator, Solution, SolverConfig, SolverState,
};
