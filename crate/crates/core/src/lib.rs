//! Goodness-of-fit testing for stochastic block models.
//!
//! The test statistic is the maximum over `M` resampled, `sqrt(B)`-scaled sums
//! of entry-wise deviations, recentered so that under the null it converges to
//! a Type-I extreme value law. Unlike the plain maximum entry-wise deviation,
//! the resampling keeps the limit valid for sparse networks.
//!
//! The numerical core is generic over the scalar type (see [`Scalar`]); the
//! orchestration layers ([`testing`], [`sim`]) work in `f64` through the
//! aliases re-exported here.

pub mod deviation;
pub mod error;
pub mod estimation;
pub mod graph;
pub mod gumbel;
pub mod sbm;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod testing;

pub use error::{Error, Result};
pub use graph::{AdjacencyMatrix, BlockCounts, BlockIndex, Membership};
pub use scalar::Scalar;

/// Floating-point type used by the test orchestration and the CLI.
pub type Real = f64;

pub type BlockProbs = sbm::BlockProbabilityMatrix<Real>;
pub type Deviations = deviation::DeviationMatrix<Real>;
pub type Psi = deviation::PsiMatrix<Real>;
pub type Disparity = deviation::DisparityVector<Real>;
pub type Gumbel = gumbel::GumbelParams<Real>;
