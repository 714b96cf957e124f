//! Dense layer-by-dimension activation matrices and the numerical kernels
//! shared by the verifier and the analysis code.
//!
//! Values are stored as `f32` and every reduction accumulates in `f64`.
//! Reductions run in a fixed order so results are bit-reproducible for a
//! given input order.

use crate::error::{Error, Result, Shape};

/// An `L x D` matrix of hidden activations, one row per layer.
///
/// Construction rejects non-finite values, so every live `LayerMatrix` is
/// finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMatrix {
    num_layers: usize,
    dim: usize,
    data: Vec<f32>,
}

impl LayerMatrix {
    pub fn new(num_layers: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if num_layers == 0 || dim == 0 || num_layers.checked_mul(dim) != Some(data.len()) {
            return Err(Error::Shape {
                layers: num_layers,
                dim,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: pos / dim,
                index: pos % dim,
            });
        }
        Ok(Self {
            num_layers,
            dim,
            data,
        })
    }

    /// Builds a matrix from row vectors. All rows must have the same length.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::Shape {
                    layers: rows.len(),
                    dim,
                    len: data.len() + row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn zeros(num_layers: usize, dim: usize) -> Result<Self> {
        Self::new(num_layers, dim, vec![0.0; num_layers * dim])
    }

    /// Converts 64-bit values to storage precision, rejecting anything that
    /// overflows `f32`.
    pub(crate) fn from_f64(num_layers: usize, dim: usize, data: &[f64]) -> Result<Self> {
        Self::new(num_layers, dim, data.iter().map(|&v| v as f32).collect())
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> Shape {
        (self.num_layers, self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Row `layer` (0-based).
    pub fn row(&self, layer: usize) -> &[f32] {
        &self.data[layer * self.dim..(layer + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn get(&self, layer: usize, index: usize) -> f32 {
        self.data[layer * self.dim + index]
    }

    /// Multiplies every element by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(
            self.num_layers,
            self.dim,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn negated(&self) -> Self {
        Self {
            num_layers: self.num_layers,
            dim: self.dim,
            data: self.data.iter().map(|v| -v).collect(),
        }
    }

    pub(crate) fn check_same_shape(&self, other: &LayerMatrix) -> Result<()> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(Error::Dimension {
                left: self.shape(),
                right: other.shape(),
            })
        }
    }
}

/// Euclidean norm of `a - b`, accumulated in 64-bit.
pub fn row_distance(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Mean over layers of the per-layer Euclidean distance between rows.
pub fn layer_avg_distance(a: &LayerMatrix, b: &LayerMatrix) -> Result<f64> {
    a.check_same_shape(b)?;
    let total: f64 = a.rows().zip(b.rows()).map(|(ra, rb)| row_distance(ra, rb)).sum();
    Ok(total / a.num_layers as f64)
}

/// Elementwise `a - b`.
pub fn matrix_subtract(a: &LayerMatrix, b: &LayerMatrix) -> Result<LayerMatrix> {
    a.check_same_shape(b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
    LayerMatrix::new(a.num_layers, a.dim, data)
}

/// Elementwise mean, summed in input order with a 64-bit accumulator.
pub fn elementwise_mean<M: AsRef<LayerMatrix>>(matrices: &[M]) -> Result<LayerMatrix> {
    let first = check_uniform(matrices)?;
    let mut acc = vec![0.0f64; first.data.len()];
    for m in matrices {
        accumulate(&mut acc, m.as_ref());
    }
    finish_mean(first, acc, matrices.len())
}

/// Elementwise mean using a fixed pairwise reduction tree evaluated in
/// parallel.
///
/// The tree splits at `len / 2` at every level regardless of thread count,
/// so the result is identical from run to run. It may differ from
/// [`elementwise_mean`] in the last bits.
pub fn elementwise_mean_pairwise<M: AsRef<LayerMatrix> + Sync>(
    matrices: &[M],
) -> Result<LayerMatrix> {
    let first = check_uniform(matrices)?;
    let acc = pairwise_sum(matrices);
    finish_mean(first, acc, matrices.len())
}

const PAIRWISE_LEAF: usize = 8;

fn pairwise_sum<M: AsRef<LayerMatrix> + Sync>(matrices: &[M]) -> Vec<f64> {
    if matrices.len() <= PAIRWISE_LEAF {
        let mut acc = vec![0.0f64; matrices[0].as_ref().data.len()];
        for m in matrices {
            accumulate(&mut acc, m.as_ref());
        }
        return acc;
    }
    let (left, right) = matrices.split_at(matrices.len() / 2);
    let (mut l, r) = rayon::join(|| pairwise_sum(left), || pairwise_sum(right));
    for (x, y) in l.iter_mut().zip(r) {
        *x += y;
    }
    l
}

fn check_uniform<M: AsRef<LayerMatrix>>(matrices: &[M]) -> Result<&LayerMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::EmptyClass("mean of an empty sequence".into()))?
        .as_ref();
    for m in &matrices[1..] {
        first.check_same_shape(m.as_ref())?;
    }
    Ok(first)
}

fn accumulate(acc: &mut [f64], m: &LayerMatrix) {
    for (a, &v) in acc.iter_mut().zip(&m.data) {
        *a += f64::from(v);
    }
}

fn finish_mean(shape: &LayerMatrix, mut acc: Vec<f64>, count: usize) -> Result<LayerMatrix> {
    let n = count as f64;
    for a in &mut acc {
        *a /= n;
    }
    LayerMatrix::from_f64(shape.num_layers, shape.dim, &acc)
}

impl AsRef<LayerMatrix> for LayerMatrix {
    fn as_ref(&self) -> &LayerMatrix {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f32]]) -> LayerMatrix {
        LayerMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(LayerMatrix::new(0, 2, vec![]), Err(Error::Shape { .. })));
        assert!(matches!(LayerMatrix::new(2, 2, vec![0.0; 3]), Err(Error::Shape { .. })));
        let err = LayerMatrix::new(2, 2, vec![0.0, 0.0, 0.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { layer: 1, index: 1 }));
        assert!(LayerMatrix::new(1, 1, vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn distance_examples() {
        let a = m(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let b = m(&[&[3.0, 4.0], &[1.0, 1.0]]);
        assert_eq!(layer_avg_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(layer_avg_distance(&a, &b).unwrap(), 2.5);
        let c = m(&[&[1.0, 2.0, 2.0]]);
        let z = m(&[&[0.0, 0.0, 0.0]]);
        assert_eq!(layer_avg_distance(&c, &z).unwrap(), 3.0);
    }

    #[test]
    fn distance_shape_mismatch_names_both_shapes() {
        let a = m(&[&[0.0, 0.0]]);
        let b = m(&[&[0.0, 0.0, 0.0]]);
        let err = layer_avg_distance(&a, &b).unwrap_err();
        assert!(matches!(err, Error::Dimension { left: (1, 2), right: (1, 3) }));
        assert!(err.to_string().contains("(1, 2)"));
    }

    #[test]
    fn mean_examples() {
        let a = m(&[&[0.0, 0.0]]);
        let b = m(&[&[2.0, 4.0]]);
        assert_eq!(elementwise_mean(&[a.clone(), b]).unwrap(), m(&[&[1.0, 2.0]]));
        assert_eq!(elementwise_mean(std::slice::from_ref(&a)).unwrap(), a);

        let x = m(&[&[0.3, -1.7], &[5.0, 2.25]]);
        let zero = elementwise_mean(&[x.clone(), x.negated()]).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));

        let empty: [LayerMatrix; 0] = [];
        assert!(matches!(elementwise_mean(&empty), Err(Error::EmptyClass(_))));
        let bad = [m(&[&[1.0]]), m(&[&[1.0, 2.0]])];
        assert!(matches!(elementwise_mean(&bad), Err(Error::Dimension { .. })));
    }

    #[test]
    fn pairwise_mean_is_reproducible() {
        let mats: Vec<_> = (0..37)
            .map(|i| m(&[&[i as f32 * 0.1, 1.0 / (i as f32 + 1.0)]]))
            .collect();
        let a = elementwise_mean_pairwise(&mats).unwrap();
        let b = elementwise_mean_pairwise(&mats).unwrap();
        assert_eq!(a, b);
        let seq = elementwise_mean(&mats).unwrap();
        for (x, y) in a.as_slice().iter().zip(seq.as_slice()) {
            assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0));
        }
    }

    #[test]
    fn subtract_examples() {
        let a = m(&[&[3.0, 4.0]]);
        let b = m(&[&[1.0, 1.0]]);
        assert_eq!(matrix_subtract(&a, &b).unwrap(), m(&[&[2.0, 3.0]]));
        assert!(matrix_subtract(&a, &a).unwrap().as_slice().iter().all(|&v| v == 0.0));

        let diff = matrix_subtract(&a, &b).unwrap();
        let back: Vec<f32> = diff.as_slice().iter().zip(b.as_slice()).map(|(d, y)| d + y).collect();
        assert_eq!(back, a.as_slice());
        assert!(matrix_subtract(&a, &m(&[&[1.0]])).is_err());
    }
}
