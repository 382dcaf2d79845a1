//! IRF-convolved model shapes, a bounded least-squares optimizer and the
//! curve fits built on them.

pub mod lm;
pub mod models;
pub mod shapes;

pub use lm::{data_digest, fit_curve, poisson_weights, FitOptions, FitParam, FitResult, Model, ModelId, ModelSpec, Param};
pub use models::{
    analytic_visibility, fit_g2_train, fit_hom_dip, fit_lifetime, fit_saturation, lifetime_enhancement, Background,
    DecayModel, G2TrainFit, HomFit, HomFitConfig, LifetimeFit, SaturationFit, Weighting,
};
pub use shapes::{convolve_gaussian, hom_dip_conv, one_sided_exp_conv, two_sided_exp_conv};
