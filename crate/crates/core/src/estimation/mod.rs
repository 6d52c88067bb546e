//! Block-probability estimation and spectral membership estimation.

pub mod eigen;
pub mod kmeans;

use num_traits::{FromPrimitive, Num};

use crate::error::{Error, Result};
use crate::graph::{block_counts, AdjacencyMatrix, Membership};
use crate::sbm::BlockProbabilityMatrix;
use crate::scalar::Scalar;
use crate::seed;

pub use eigen::{leading_eigenpairs, EigenOptions, Eigenpairs};
pub use kmeans::{kmeans, kmeans_with, KMeansFit, KMeansOptions};

/// Maximum-likelihood block probabilities under membership `g0`:
/// `Q̂_uv = m_uv / nPairs_uv`.
///
/// Works for any numeric type built from integers, including exact rationals.
pub fn estimate_q<T>(a: &AdjacencyMatrix, g0: &Membership) -> Result<BlockProbabilityMatrix<T>>
where
    T: Num + FromPrimitive + Clone + PartialOrd,
{
    let counts = block_counts(a, g0)?;
    let k = g0.k();
    let mut p = Vec::with_capacity(k * k);
    for u in 0..k {
        for v in 0..k {
            let pairs = counts.n_pairs(u, v);
            if pairs == 0 {
                return Err(Error::SingletonBlock(u));
            }
            let num = T::from_u64(counts.m(u, v)).expect("count fits the scalar type");
            let den = T::from_u64(pairs).expect("count fits the scalar type");
            p.push(num / den);
        }
    }
    Ok(BlockProbabilityMatrix::from_raw(k, p))
}

/// `½ Σ_{u,v} [m_uv log Q_uv + (n_uv − m_uv) log(1 − Q_uv)]` with `0 log 0 = 0`.
///
/// Returns negative infinity when `q` gives probability zero to the observed
/// counts (a zero entry with edges, or a unit entry with non-edges).
pub fn log_likelihood<T: Scalar>(
    a: &AdjacencyMatrix,
    g0: &Membership,
    q: &BlockProbabilityMatrix<T>,
) -> Result<T> {
    if q.k() != g0.k() {
        return Err(Error::InvalidArgument("q and g0 disagree on K".into()));
    }
    let counts = block_counts(a, g0)?;
    let k = g0.k();
    let mut total = T::zero();
    for u in 0..k {
        for v in 0..k {
            let p = *q.get(u, v);
            let hits = counts.m(u, v);
            let misses = counts.n_pairs(u, v) - hits;
            for (count, prob) in [(hits, p), (misses, T::one() - p)] {
                if count == 0 {
                    continue;
                }
                if prob <= T::zero() {
                    return Ok(T::neg_infinity());
                }
                total = total + T::of_usize(count as usize) * prob.ln();
            }
        }
    }
    Ok(total / T::of_usize(2))
}

/// Spectral clustering: k-means on the rows of the `k0` leading eigenvectors
/// (by |eigenvalue|) of `a`. Labels are numbered in order of first appearance.
pub fn spectral_membership(a: &AdjacencyMatrix, k0: usize, seed: u64) -> Result<Membership> {
    spectral_membership_with::<f64>(a, k0, seed, EigenOptions::default(), KMeansOptions::default())
}

pub fn spectral_membership_with<T: Scalar>(
    a: &AdjacencyMatrix,
    k0: usize,
    seed: u64,
    eigen: EigenOptions,
    km: KMeansOptions,
) -> Result<Membership> {
    let n = a.n();
    if k0 == 0 || k0 > n {
        return Err(Error::InvalidArgument(format!("K0 = {k0} must lie in [1, n = {n}]")));
    }
    if k0 == 1 {
        return Membership::new(vec![0; n], 1);
    }
    let pairs = leading_eigenpairs::<T>(a, k0, seed::derive(seed, &[seed::tag::LANCZOS]), eigen)?;
    let mut embedding = vec![T::zero(); n * k0];
    for (c, vec) in pairs.vectors.iter().enumerate() {
        for (i, &x) in vec.iter().enumerate() {
            embedding[i * k0 + c] = x;
        }
    }
    let fit = kmeans_with(&embedding, k0, k0, seed::derive(seed, &[seed::tag::KMEANS]), km)?;
    Ok(Membership::new(fit.labels, k0)?.canonical())
}
