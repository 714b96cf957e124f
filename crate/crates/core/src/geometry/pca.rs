//! Two-component PCA of one layer's delta rows.
//!
//! The scatter matrix is formed in whichever of the `D x D` covariance or
//! the `n x n` Gram form is smaller, and its top eigenpairs are found by
//! orthogonal (block power) iteration with a Rayleigh-Ritz step.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::store::Label;
use crate::verifier::ActivationDelta;

pub const PCA_TOLERANCE: f64 = 1e-10;
pub const PCA_MAX_ITERATIONS: usize = 1000;
const BLOCK: usize = 4;
const INIT_SEED: u64 = 0x5eed_0f9c;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    /// 1-based.
    pub layer_index: usize,
    /// Two orthonormal directions of length `D`.
    pub components: [Vec<f64>; 2],
    /// Sample variance (denominator `n - 1`) along each component.
    pub explained_variance: [f64; 2],
    /// Total sample variance of the centered rows.
    pub total_variance: f64,
    pub points: Vec<ProjectedPoint>,
    /// Free-form description of the delta set, written to exported headers.
    pub source: String,
    pub iterations: usize,
    pub converged: bool,
}

/// Projects row `layer` (1-based) of each delta onto its top two principal
/// directions. Each direction's largest-magnitude coordinate is positive.
pub fn pca_project(deltas: &[(ActivationDelta, Label)], layer: usize) -> Result<ProjectionResult> {
    let n = deltas.len();
    if n < 3 {
        return Err(Error::TooFewPoints(n));
    }
    let (layers, dim) = deltas[0].0.delta.shape();
    for (d, _) in deltas {
        deltas[0].0.delta.check_same_shape(&d.delta)?;
    }
    if layer == 0 || layer > layers {
        return Err(Error::LayerOutOfRange { layer, layers });
    }
    if dim < 2 {
        return Err(Error::ProjectionDim(dim));
    }

    let mut rows: Vec<Vec<f64>> = deltas
        .iter()
        .map(|(d, _)| d.delta.row(layer - 1).iter().map(|&v| f64::from(v)).collect())
        .collect();
    let mut mean = vec![0.0; dim];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    for r in &mut rows {
        for (v, m) in r.iter_mut().zip(&mean) {
            *v -= m;
        }
    }

    let denom = (n - 1) as f64;
    let total_variance = rows.iter().flatten().map(|v| v * v).sum::<f64>() / denom;
    if total_variance <= 0.0 || total_variance.is_nan() {
        return Err(Error::DegenerateVariance(layer));
    }

    let gram_form = n < dim;
    let scatter = if gram_form {
        gram(&rows, denom)
    } else {
        covariance(&rows, dim, denom)
    };
    let eig = top_eigenpairs(&scatter, 2);

    let mut components: [Vec<f64>; 2] = if gram_form {
        // v = X^T u / |X^T u|
        let lift = |u: &[f64]| -> Vec<f64> {
            let mut v = vec![0.0; dim];
            for (r, &w) in rows.iter().zip(u) {
                for (acc, x) in v.iter_mut().zip(r) {
                    *acc += w * x;
                }
            }
            v
        };
        [lift(&eig.vectors[0]), lift(&eig.vectors[1])]
    } else {
        [eig.vectors[0].clone(), eig.vectors[1].clone()]
    };
    orthonormalize(&mut components);
    for c in &mut components {
        fix_sign(c);
    }

    let points = rows
        .iter()
        .zip(deltas)
        .map(|(r, (_, label))| ProjectedPoint {
            x: dot(r, &components[0]),
            y: dot(r, &components[1]),
            label: *label,
        })
        .collect();

    Ok(ProjectionResult {
        layer_index: layer,
        components,
        explained_variance: [eig.values[0].max(0.0), eig.values[1].max(0.0)],
        total_variance,
        points,
        source: String::new(),
        iterations: eig.iterations,
        converged: eig.converged,
    })
}

fn covariance(rows: &[Vec<f64>], dim: usize, denom: f64) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; dim]; dim];
    for r in rows {
        for i in 0..dim {
            let ri = r[i];
            for j in i..dim {
                c[i][j] += ri * r[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            c[i][j] /= denom;
            c[j][i] = c[i][j];
        }
    }
    c
}

fn gram(rows: &[Vec<f64>], denom: f64) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = dot(&rows[i], &rows[j]) / denom;
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    g
}

pub(crate) struct Eigenpairs {
    /// Descending.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

/// Top `k` eigenpairs of a symmetric positive semidefinite matrix.
pub(crate) fn top_eigenpairs(s: &[Vec<f64>], k: usize) -> Eigenpairs {
    let m = s.len();
    let p = BLOCK.max(k).min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(INIT_SEED);
    let mut q: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..m).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    orthonormalize(&mut q);

    let scale = s.iter().enumerate().map(|(i, r)| r[i]).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut values = vec![0.0; p];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < PCA_MAX_ITERATIONS {
        iterations += 1;
        let mut z: Vec<Vec<f64>> = q.iter().map(|v| mat_vec(s, v)).collect();
        orthonormalize(&mut z);
        q = z;

        // Rayleigh-Ritz on the current subspace.
        let sq: Vec<Vec<f64>> = q.iter().map(|v| mat_vec(s, v)).collect();
        let h: Vec<Vec<f64>> = (0..p)
            .map(|i| (0..p).map(|j| dot(&q[i], &sq[j])).collect())
            .collect();
        let (ritz_vals, w) = jacobi_eigen(h);
        let rotate = |basis: &[Vec<f64>]| -> Vec<Vec<f64>> {
            (0..p)
                .map(|c| {
                    let mut v = vec![0.0; m];
                    for (b, coeff) in basis.iter().zip(&w[c]) {
                        for (acc, x) in v.iter_mut().zip(b) {
                            *acc += coeff * x;
                        }
                    }
                    v
                })
                .collect()
        };
        q = rotate(&q);
        let sq = rotate(&sq);
        values = ritz_vals;

        let residual = (0..k)
            .map(|j| {
                sq[j]
                    .iter()
                    .zip(&q[j])
                    .map(|(a, b)| (a - values[j] * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if residual <= PCA_TOLERANCE * scale {
            converged = true;
            break;
        }
    }
    q.truncate(k);
    values.truncate(k);
    Eigenpairs {
        values,
        vectors: q,
        iterations,
        converged,
    }
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Returns values in descending order and matching vectors as
/// rows of coefficients.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for pi in 0..n {
            for qi in pi + 1..n {
                if a[pi][qi] == 0.0 {
                    continue;
                }
                let theta = (a[qi][qi] - a[pi][pi]) / (2.0 * a[pi][qi]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let (arp, arq) = (a[r][pi], a[r][qi]);
                    a[r][pi] = c * arp - s * arq;
                    a[r][qi] = s * arp + c * arq;
                }
                for r in 0..n {
                    let (apr, aqr) = (a[pi][r], a[qi][r]);
                    a[pi][r] = c * apr - s * aqr;
                    a[qi][r] = s * apr + c * aqr;
                }
                for r in 0..n {
                    let (vrp, vrq) = (v[r][pi], v[r][qi]);
                    v[r][pi] = c * vrp - s * vrq;
                    v[r][qi] = s * vrp + c * vrq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&c| (0..n).map(|r| v[r][c]).collect()).collect();
    (values, vectors)
}

fn mat_vec(s: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    s.iter().map(|row| dot(row, v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Columns that
/// collapse are replaced by the first standard basis vector that survives
/// projection.
fn orthonormalize(cols: &mut [Vec<f64>]) {
    let m = cols.first().map_or(0, Vec::len);
    for j in 0..cols.len() {
        let scale = norm(&cols[j]);
        for _ in 0..2 {
            for i in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let proj = dot(&done[i], &rest[0]);
                for (x, y) in rest[0].iter_mut().zip(&done[i]) {
                    *x -= proj * y;
                }
            }
        }
        let nrm = norm(&cols[j]);
        if nrm > 1e-12 * scale.max(f64::MIN_POSITIVE) && nrm > 0.0 {
            cols[j].iter_mut().for_each(|x| *x /= nrm);
            continue;
        }
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            for _ in 0..2 {
                for prev in cols[..j].iter() {
                    let proj = dot(prev, &cand);
                    for (x, y) in cand.iter_mut().zip(prev) {
                        *x -= proj * y;
                    }
                }
            }
            let nrm = norm(&cand);
            if nrm > 1e-6 {
                cand.iter_mut().for_each(|x| *x /= nrm);
                cols[j] = cand;
                break;
            }
        }
    }
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
