//! Stochastic block model generation and network augmentation.

use num_traits::Num;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, Membership};
use crate::scalar::Scalar;
use crate::seed;

/// Symmetric K×K matrix of connection probabilities.
///
/// Generic over any ordered numeric type so that exact rationals can be used
/// in checks; the generators require a [`Scalar`].
#[derive(Clone, Debug, PartialEq)]
pub struct BlockProbabilityMatrix<T> {
    k: usize,
    p: Vec<T>,
}

impl<T: Num + Clone + PartialOrd> BlockProbabilityMatrix<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::InvalidArgument("probability matrix is empty".into()));
        }
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("probability matrix must be square".into()));
        }
        let p: Vec<T> = rows.into_iter().flatten().collect();
        let m = Self { k, p };
        for u in 0..k {
            for v in 0..k {
                let x = m.get(u, v);
                if x != m.get(v, u) {
                    return Err(Error::InvalidArgument(format!(
                        "probability matrix not symmetric at ({u}, {v})"
                    )));
                }
                if !(T::zero() <= *x && *x <= T::one()) {
                    return Err(Error::InvalidArgument(format!(
                        "probability at ({u}, {v}) outside [0, 1]"
                    )));
                }
            }
        }
        Ok(m)
    }

    /// Builds from a rule evaluated on the upper triangle.
    pub fn from_fn(k: usize, f: impl Fn(usize, usize) -> T) -> Result<Self> {
        let mut rows = vec![vec![T::zero(); k]; k];
        for u in 0..k {
            for v in u..k {
                let x = f(u, v);
                rows[u][v] = x.clone();
                rows[v][u] = x;
            }
        }
        Self::new(rows)
    }

    pub(crate) fn from_raw(k: usize, p: Vec<T>) -> Self {
        debug_assert_eq!(p.len(), k * k);
        Self { k, p }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.p[u * self.k + v]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.p.chunks(self.k).map(|r| r.to_vec()).collect()
    }

    /// Applies a permutation of community labels: entry `(perm[u], perm[v])`
    /// of the result is entry `(u, v)` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.k;
        let mut p = self.p.clone();
        for u in 0..k {
            for v in 0..k {
                p[perm[u] * k + perm[v]] = self.get(u, v).clone();
            }
        }
        Self { k, p }
    }
}

impl<T: Scalar> BlockProbabilityMatrix<T> {
    pub fn to_f64(&self) -> BlockProbabilityMatrix<f64> {
        BlockProbabilityMatrix {
            k: self.k,
            p: self.p.iter().map(|x| x.as_f64()).collect(),
        }
    }

    /// Largest diagonal entry.
    pub fn max_diagonal(&self) -> T {
        (0..self.k).map(|u| *self.get(u, u)).fold(T::neg_infinity(), T::max)
    }

    /// Smallest strictly off-diagonal entry; `None` when K = 1.
    pub fn min_off_diagonal(&self) -> Option<T> {
        (0..self.k)
            .flat_map(|u| (0..self.k).filter(move |&v| v != u).map(move |v| (u, v)))
            .map(|(u, v)| *self.get(u, v))
            .reduce(T::min)
    }
}

/// A block model together with the seed of its edge draws.
#[derive(Clone, Debug)]
pub struct SbmSpec<T> {
    pub q: BlockProbabilityMatrix<T>,
    pub g: Membership,
    pub seed: u64,
}

impl<T: Scalar> SbmSpec<T> {
    pub fn new(q: BlockProbabilityMatrix<T>, g: Membership, seed: u64) -> Result<Self> {
        if q.k() != g.k() {
            return Err(Error::InvalidArgument(format!(
                "probability matrix has K = {} but membership has K = {}",
                q.k(),
                g.k()
            )));
        }
        Ok(Self { q, g, seed })
    }
}

/// JSON form of an SBM: `{"k": 2, "sizes": [..], "q": [[..]], "seed": 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub k: usize,
    pub sizes: Vec<usize>,
    pub q: Vec<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl SbmConfig {
    pub fn to_spec(&self) -> Result<SbmSpec<f64>> {
        if self.sizes.len() != self.k {
            return Err(Error::InvalidArgument(format!(
                "k = {} but {} block sizes given",
                self.k,
                self.sizes.len()
            )));
        }
        if self.q.len() != self.k {
            return Err(Error::InvalidArgument(format!(
                "k = {} but q has {} rows",
                self.k,
                self.q.len()
            )));
        }
        let q = BlockProbabilityMatrix::new(self.q.clone())?;
        let g = Membership::contiguous(&self.sizes)?;
        SbmSpec::new(q, g, self.seed)
    }
}

/// Draws each unordered pair independently as Bernoulli(Q[g(i)][g(j)]).
///
/// Row `i` owns the pairs `{i, j}` with `j > i` and samples them block by
/// block with geometric skips from its own stream keyed by `(seed, i)`, so
/// the cost is linear in the number of edges and rows can run in parallel.
pub fn generate_sbm<T: Scalar>(spec: &SbmSpec<T>) -> AdjacencyMatrix {
    let key = seed::derive(spec.seed, &[seed::tag::GENERATE]);
    let q = spec.q.to_f64();
    let index = spec.g.index();
    let labels = spec.g.labels();
    let n = labels.len();
    let rows: Vec<Vec<(usize, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed::derive(key, &[i as u64]));
            let mut out = Vec::new();
            for v in 0..index.k() {
                let members = index.members(v);
                let upper = &members[members.partition_point(|&j| j <= i)..];
                let p = *q.get(labels[i], v);
                bernoulli_positions(&mut rng, upper.len(), p, |t| out.push((i, upper[t])));
            }
            out
        })
        .collect();
    AdjacencyMatrix::from_upper_pairs(n, rows.into_iter().flatten().collect())
}

/// Calls `hit` with the positions `< len` of successes in `len` Bernoulli(p)
/// trials, jumping between successes with geometric gaps.
fn bernoulli_positions(rng: &mut impl Rng, len: usize, p: f64, mut hit: impl FnMut(usize)) {
    if p <= 0.0 || len == 0 {
        return;
    }
    if p >= 1.0 {
        (0..len).for_each(hit);
        return;
    }
    let log_q = (-p).ln_1p();
    let mut pos = 0usize;
    loop {
        // u in (0, 1]
        let u = 1.0 - rng.random::<f64>();
        let gap = (u.ln() / log_q).floor();
        if gap >= (len - pos) as f64 {
            return;
        }
        pos += gap as usize;
        hit(pos);
        pos += 1;
        if pos >= len {
            return;
        }
    }
}

/// Result of appending a synthetic community to a network.
#[derive(Clone, Debug)]
pub struct Augmentation<T> {
    pub graph: AdjacencyMatrix,
    pub membership: Membership,
    /// Number of appended nodes.
    pub added: usize,
    pub p_within: T,
    pub p_between: T,
}

/// Smallest admissible size of the appended community.
pub const MIN_AUGMENTED_BLOCK: usize = 3;

/// Appends a community of `floor(min_u |g0^{-1}(u)| / 2)` nodes. Its
/// within-block probability is the largest diagonal entry of `qhat`; its
/// connection probability to every existing block is half the smallest
/// off-diagonal entry. Existing edges are untouched.
pub fn augment<T: Scalar>(
    a: &AdjacencyMatrix,
    g0: &Membership,
    qhat: &BlockProbabilityMatrix<T>,
    seed: u64,
) -> Result<Augmentation<T>> {
    g0.check_len(a)?;
    if qhat.k() != g0.k() {
        return Err(Error::InvalidArgument("qhat and g0 disagree on K".into()));
    }
    let p_between = qhat.min_off_diagonal().ok_or_else(|| {
        Error::AugmentationInfeasible("K0 = 1 has no between-community probability".into())
    })? / (T::one() + T::one());
    let p_within = qhat.max_diagonal();
    let min_size = g0.sizes().into_iter().min().unwrap_or(0);
    let added = min_size / 2;
    if added < MIN_AUGMENTED_BLOCK {
        return Err(Error::AugmentationInfeasible(format!(
            "smallest community has {min_size} nodes, appended community would have {added}"
        )));
    }

    let n = a.n();
    let n_plus = n + added;
    let key = seed::derive(seed, &[seed::tag::AUGMENT]);
    let (pw, pb) = (p_within.as_f64(), p_between.as_f64());
    let new_rows: Vec<Vec<(usize, usize)>> = (n..n_plus)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in 0..n {
                if seed::pair_uniform(key, j, i) < pb {
                    out.push((j, i));
                }
            }
            for j in (i + 1)..n_plus {
                if seed::pair_uniform(key, i, j) < pw {
                    out.push((i, j));
                }
            }
            out
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = a.edges().collect();
    pairs.extend(new_rows.into_iter().flatten());
    let graph = AdjacencyMatrix::from_upper_pairs(n_plus, pairs);

    let k0 = g0.k();
    let mut labels = g0.labels().to_vec();
    labels.extend(std::iter::repeat_n(k0, added));
    let membership = Membership::new(labels, k0 + 1)?;
    Ok(Augmentation { graph, membership, added, p_within, p_between })
}
