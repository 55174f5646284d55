//! Deterministic numerical kernel: normal distribution functions, Cholesky,
//! seeded multivariate normal sampling and rectangle probabilities.

pub mod bvn;
pub mod linalg;
pub mod mvn;
pub mod normal;
pub mod sampling;

pub use bvn::{bvn_rectangle, bvn_upper};
pub use linalg::{cholesky, CholeskyFactor, CorrelationMatrix, DEFAULT_JITTER_TOL};
pub use mvn::{mvn_rectangle, ProbabilityEstimate, RectangleSpec, DEFAULT_PRECISION};
pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile, two_sided_p_value};
pub use sampling::{mvn_sample, stream_rng, MvnSampler, StreamRng};
