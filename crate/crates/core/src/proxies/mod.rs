//! Gaussian and empirical proxies of the data distribution before and after
//! forgetting, and the logit shift they induce.

mod dirac;
mod gaussian;
mod homoscedastic;
mod pair;
mod posterior;

pub use dirac::{dirac_target, dirac_target_2c, ClassCounts, DiracTable};
pub use gaussian::{
    CovSource, CovStructure, Covariance, GaussianClassConditional, LabelKey, State,
};
pub use homoscedastic::{gaussian_kl_same_mean, homoscedastic_cost};
pub use pair::{fit, FitOptions, ProxyKind, ProxyPair, SigmaConvention, DEFAULT_RIDGE};
pub use posterior::{shifted_logits, OraclePair, PosteriorPair};
