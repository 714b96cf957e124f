//! Layer-wise separability of the two centroid classes and 2-D projections
//! of delta rows for plotting.

mod pca;
mod plot;

pub use pca::{pca_project, ProjectedPoint, ProjectionResult, PCA_MAX_ITERATIONS, PCA_TOLERANCE};
pub use plot::{
    format_curve_csv, format_projection_csv, parse_curve_csv, parse_projection_csv,
    write_curve_csv, write_projection_csv, ParsedProjection,
};

use crate::matrix::row_distance;
use crate::store::CentroidPair;

/// Per-layer Euclidean distance between the success and failure centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSeparabilityCurve {
    /// Index 0 is layer 1.
    pub distances: Vec<f64>,
}

impl LayerSeparabilityCurve {
    pub fn mean(&self) -> f64 {
        self.distances.iter().sum::<f64>() / self.distances.len() as f64
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

pub fn layer_distance_curve(centroids: &CentroidPair) -> LayerSeparabilityCurve {
    LayerSeparabilityCurve {
        distances: centroids
            .v_succ
            .rows()
            .zip(centroids.v_fail.rows())
            .map(|(s, f)| row_distance(s, f))
            .collect(),
    }
}

/// Shallow, middle and final layer (1-based): `ceil(L/8)`, `ceil(L/2)`,
/// `L`, deduplicated.
pub fn default_layers(num_layers: usize) -> Vec<usize> {
    let mut layers = vec![
        num_layers.div_ceil(8).max(1),
        num_layers.div_ceil(2).max(1),
        num_layers,
    ];
    layers.dedup();
    layers
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{layer_avg_distance, LayerMatrix};

    fn pair(succ: &[[f32; 2]], fail: &[[f32; 2]]) -> CentroidPair {
        CentroidPair {
            v_succ: LayerMatrix::from_rows(succ).unwrap(),
            v_fail: LayerMatrix::from_rows(fail).unwrap(),
            n_succ: 1,
            n_fail: 1,
            model_tag: String::new(),
            source_description: String::new(),
        }
    }

    #[test]
    fn curve_examples() {
        let same = pair(&[[1.0, 2.0], [3.0, 4.0]], &[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(layer_distance_curve(&same).distances, vec![0.0, 0.0]);

        let c = pair(&[[3.0, 4.0], [1.0, 1.0]], &[[0.0, 0.0], [1.0, 1.0]]);
        let curve = layer_distance_curve(&c);
        assert_eq!(curve.distances, vec![5.0, 0.0]);
        assert_eq!(curve.mean(), layer_avg_distance(&c.v_succ, &c.v_fail).unwrap());

        let mut scaled = c.clone();
        scaled.v_succ = c.v_succ.scaled(2.0).unwrap();
        scaled.v_fail = c.v_fail.scaled(2.0).unwrap();
        assert_eq!(layer_distance_curve(&scaled).distances, vec![10.0, 0.0]);
    }

    #[test]
    fn default_layer_choice() {
        assert_eq!(default_layers(32), vec![4, 16, 32]);
        assert_eq!(default_layers(3), vec![1, 2, 3]);
        assert_eq!(default_layers(1), vec![1]);
        assert_eq!(default_layers(2), vec![1, 2]);
    }
}
