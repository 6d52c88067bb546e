//! Leading eigenpairs of a sparse symmetric adjacency matrix.
//!
//! Lanczos with full reorthogonalization. When the Krylov space becomes
//! invariant the recurrence restarts from a fresh vector orthogonal to the
//! basis, so repeated eigenvalues are found as well. Convergence is judged on
//! the Ritz residual bound `|beta_m * s_m|` and confirmed with true residuals.

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::scalar::Scalar;
use crate::seed;

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    /// Residual tolerance relative to the largest |eigenvalue|.
    pub tol: f64,
    /// Cap on Lanczos steps (the size of the Krylov basis).
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 5000 }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpairs<T> {
    /// Ordered by decreasing |value|.
    pub values: Vec<T>,
    /// `vectors[c]` is the unit eigenvector for `values[c]`.
    pub vectors: Vec<Vec<T>>,
    pub iterations: usize,
    pub max_residual: T,
}

/// Orders eigenvalue positions by decreasing magnitude; ties go to the
/// negative value first, then to the lower position.
fn magnitude_order<T: Scalar>(values: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (values[a], values[b]);
        y.abs()
            .partial_cmp(&x.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });
    order
}

/// Eight independent partial sums so the loop vectorizes.
fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (xc, yc) = (x.chunks_exact(8), y.chunks_exact(8));
    let tail = xc.remainder().iter().zip(yc.remainder()).fold(T::zero(), |s, (&a, &b)| s + a * b);
    for (a, b) in xc.zip(yc) {
        let a: &[T; 8] = a.try_into().unwrap();
        let b: &[T; 8] = b.try_into().unwrap();
        for l in 0..8 {
            acc[l] = acc[l] + a[l] * b[l];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn norm<T: Scalar>(x: &[T]) -> T {
    dot(x, x).sqrt()
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Classical Gram-Schmidt against the basis, repeated once when the first
/// pass cancels most of `w` (the usual "twice is enough" criterion).
fn orthogonalize<T: Scalar>(w: &mut [T], basis: &[Vec<T>]) {
    let before = norm(w);
    for pass in 0..2 {
        let coef: Vec<T> = basis.iter().map(|v| dot(v, w)).collect();
        for (v, &c) in basis.iter().zip(&coef) {
            axpy(-c, v, w);
        }
        if pass == 0 && norm(w) > before * T::FRAC_1_SQRT_2() {
            break;
        }
    }
}

/// Start vector keyed by local structure (degree and neighbor degree sum) so
/// that relabeling nodes permutes it accordingly.
fn structural_start<T: Scalar>(a: &AdjacencyMatrix, seed: u64) -> Vec<T> {
    let key = seed::derive(seed, &[seed::tag::LANCZOS]);
    (0..a.n())
        .map(|i| {
            let d = a.degree(i) as u64;
            let s: u64 = a.neighbors(i).iter().map(|&j| a.degree(j) as u64).sum();
            T::of_f64(1.0 + 0.5 * seed::pair_uniform(key, d as usize, s as usize + 1))
        })
        .collect()
}

fn random_unit<T: Scalar>(n: usize, key: u64, basis: &[Vec<T>]) -> Option<Vec<T>> {
    for attempt in 0..8usize {
        let mut w: Vec<T> = (0..n)
            .map(|i| T::of_f64(seed::pair_uniform(key, i, n + attempt) - 0.5))
            .collect();
        orthogonalize(&mut w, basis);
        let nw = norm(&w);
        if nw > T::of_f64(1e-6) {
            w.iter_mut().for_each(|x| *x = *x / nw);
            return Some(w);
        }
    }
    None
}

/// Implicit QL on a symmetric tridiagonal matrix. Returns the eigenvalues and,
/// if `rows` is non-empty, the requested rows of the eigenvector matrix
/// (`out[r][c]` is component `rows[r]` of eigenvector `c`).
pub(crate) fn tridiagonal_eigen<T: Scalar>(
    diag: &[T],
    off: &[T],
    rows: Option<&[usize]>,
) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..n).collect();
            &all
        }
    };
    let mut z: Vec<Vec<T>> = rows
        .iter()
        .map(|&r| (0..n).map(|c| if c == r { T::one() } else { T::zero() }).collect())
        .collect();
    let two = T::of_usize(2);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::EigenNoConvergence { iterations: iter, residual: e[l].as_f64() });
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for zr in z.iter_mut() {
                    let f = zr[i + 1];
                    zr[i + 1] = s * zr[i] + c * f;
                    zr[i] = c * zr[i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok((d, z))
}

/// The `k` eigenpairs of `a` with largest |eigenvalue|.
pub fn leading_eigenpairs<T: Scalar>(
    a: &AdjacencyMatrix,
    k: usize,
    seed: u64,
    opts: EigenOptions,
) -> Result<Eigenpairs<T>> {
    let n = a.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot take {k} eigenpairs of an n = {n} matrix")));
    }
    let tol = T::of_f64(opts.tol.max(100.0 * T::epsilon().as_f64()));
    let cap = opts.max_iter.min(n).max(k);
    let restart_key = seed::derive(seed, &[seed::tag::LANCZOS, 1]);

    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut alpha: Vec<T> = Vec::new();
    let mut beta: Vec<T> = Vec::new();

    let mut v = structural_start::<T>(a, seed);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x = *x / nv);
    let mut w = vec![T::zero(); n];
    let mut anorm = T::zero();
    let mut next_check = (2 * k + 10).max(20).min(cap);
    let mut last_residual = T::infinity();

    loop {
        a.mul_vec(&v, &mut w);
        let alpha_j = dot(&v, &w);
        basis.push(std::mem::take(&mut v));
        alpha.push(alpha_j);
        orthogonalize(&mut w, &basis);
        let mut beta_j = norm(&w);
        anorm = anorm.max(alpha_j.abs() + beta_j);
        let m = basis.len();

        if m >= next_check || m == cap {
            let (theta, last_row) = tridiagonal_eigen(&alpha, &beta, Some(&[m - 1]))?;
            let order = magnitude_order(&theta);
            let scale = theta[order[0]].abs().max(T::min_positive_value());
            let bound = order[..k]
                .iter()
                .map(|&c| (beta_j * last_row[0][c]).abs())
                .fold(T::zero(), T::max);
            last_residual = bound / scale;
            if last_residual <= tol || m == n {
                let pairs = ritz_pairs(a, &basis, &alpha, &beta, k)?;
                if pairs.max_residual / scale <= tol * T::of_usize(10) || m == n {
                    return Ok(Eigenpairs { iterations: m, ..pairs });
                }
            }
            if m == cap {
                return Err(Error::EigenNoConvergence {
                    iterations: m,
                    residual: last_residual.as_f64(),
                });
            }
            next_check = (m + m / 4).max(m + 1).min(cap);
        }

        if beta_j <= anorm * T::of_f64(1e-10) {
            // Invariant subspace: continue from a fresh direction.
            match random_unit(n, seed::derive(restart_key, &[m as u64]), &basis) {
                Some(fresh) => {
                    v = fresh;
                    beta_j = T::zero();
                }
                None => {
                    return Err(Error::EigenNoConvergence {
                        iterations: m,
                        residual: last_residual.as_f64(),
                    })
                }
            }
        } else {
            v = w.iter().map(|&x| x / beta_j).collect();
        }
        beta.push(beta_j);
    }
}

fn ritz_pairs<T: Scalar>(
    a: &AdjacencyMatrix,
    basis: &[Vec<T>],
    alpha: &[T],
    beta: &[T],
    k: usize,
) -> Result<Eigenpairs<T>> {
    let n = a.n();
    let (theta, z) = tridiagonal_eigen(alpha, beta, None)?;
    let order = magnitude_order(&theta);
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    let mut max_residual = T::zero();
    let mut av = vec![T::zero(); n];
    for &c in &order[..k] {
        let mut y = vec![T::zero(); n];
        for (j, vj) in basis.iter().enumerate() {
            axpy(z[j][c], vj, &mut y);
        }
        let ny = norm(&y);
        y.iter_mut().for_each(|x| *x = *x / ny);
        a.mul_vec(&y, &mut av);
        let res = av
            .iter()
            .zip(&y)
            .fold(T::zero(), |acc, (&p, &q)| {
                let r = p - theta[c] * q;
                acc + r * r
            })
            .sqrt();
        max_residual = max_residual.max(res);
        values.push(theta[c]);
        vectors.push(y);
    }
    Ok(Eigenpairs { values, vectors, iterations: basis.len(), max_residual })
}
