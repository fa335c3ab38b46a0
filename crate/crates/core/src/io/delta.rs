use std::collections::BTreeMap;

use super::adapter::AdapterPair;
use super::tensor_map::NamedTensorMap;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// An update to one base weight, either stored densely or as adapter factors.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaSource {
    Dense { target: String, delta: Matrix },
    LowRank(AdapterPair),
}

impl DeltaSource {
    pub fn dense(target: impl Into<String>, delta: Matrix) -> Self {
        DeltaSource::Dense {
            target: target.into(),
            delta,
        }
    }

    pub fn target(&self) -> &str {
        match self {
            DeltaSource::Dense { target, .. } => target,
            DeltaSource::LowRank(pair) => pair.target(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            DeltaSource::Dense { delta, .. } => delta.shape(),
            DeltaSource::LowRank(pair) => pair.delta_shape(),
        }
    }

    pub fn materialize(&self) -> Matrix {
        match self {
            DeltaSource::Dense { delta, .. } => delta.clone(),
            DeltaSource::LowRank(pair) => pair.delta(),
        }
    }

    /// Materializes and checks the result against the base weight's shape.
    pub fn materialize_for(&self, base: &Matrix) -> Result<Matrix> {
        if self.shape() != base.shape() {
            return Err(Error::shape(
                format!("update for `{}`", self.target()),
                base.shape(),
                self.shape(),
            ));
        }
        Ok(self.materialize())
    }
}

impl From<AdapterPair> for DeltaSource {
    fn from(pair: AdapterPair) -> Self {
        DeltaSource::LowRank(pair)
    }
}

pub fn materialize_delta(src: &DeltaSource) -> Result<Matrix> {
    Ok(src.materialize())
}

/// Keys deltas by their target path.
pub fn delta_map(sources: impl IntoIterator<Item = DeltaSource>) -> BTreeMap<String, DeltaSource> {
    sources
        .into_iter()
        .map(|s| (s.target().to_string(), s))
        .collect()
}

/// Per-path dense differences between two checkpoints.
#[derive(Debug, Clone, Default)]
pub struct CheckpointDiff {
    pub deltas: BTreeMap<String, DeltaSource>,
    pub only_in_base: Vec<String>,
    pub only_in_tuned: Vec<String>,
}

/// `tuned − base` for every shared path. Paths present on one side only are
/// listed, not diffed.
pub fn diff_checkpoints(base: &NamedTensorMap, tuned: &NamedTensorMap) -> Result<CheckpointDiff> {
    let mut out = CheckpointDiff::default();
    for (path, entry) in base.iter() {
        match tuned.entry(path) {
            None => out.only_in_base.push(path.to_string()),
            Some(other) => {
                if other.shape() != entry.shape() {
                    return Err(Error::ShapeMismatch {
                        context: format!("tensor `{path}`"),
                        expected: entry.matrix().shape(),
                        found: other.matrix().shape(),
                    });
                }
                let delta = other.matrix() - entry.matrix();
                out.deltas
                    .insert(path.to_string(), DeltaSource::dense(path, delta));
            }
        }
    }
    out.only_in_tuned = tuned
        .paths()
        .filter(|p| !base.contains(p))
        .map(str::to_string)
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_rank_scaling() {
        let pair = AdapterPair::new(
            "w",
            Matrix::from_rows(&[[1.0], [0.0]]),
            Matrix::from_rows(&[[0.0, 2.0]]),
            16.0,
        )
        .unwrap();
        let d = materialize_delta(&pair.into()).unwrap();
        assert_eq!(d, Matrix::from_rows(&[[0.0, 32.0], [0.0, 0.0]]));
    }

    #[test]
    fn unit_scaling_is_plain_product() {
        let b = Matrix::from_rows(&[[0.3, -1.1], [2.0, 0.7], [0.1, 0.2]]);
        let a = Matrix::from_rows(&[[1.5, 0.25, -3.0], [0.5, 4.0, 1.0]]);
        let pair = AdapterPair::new("w", b.clone(), a.clone(), 2.0).unwrap();
        assert_eq!(pair.delta(), &b * &a);
    }

    #[test]
    fn dense_passes_through() {
        let m = Matrix::from_rows(&[[1.0, 2.0]]);
        assert_eq!(materialize_delta(&DeltaSource::dense("w", m.clone())).unwrap(), m);
    }

    #[test]
    fn diff_identity_zero_base_and_shape_mismatch() {
        let mut base = NamedTensorMap::new();
        base.insert("a", Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        base.insert("only_base", Matrix::identity(1));
        let diff = diff_checkpoints(&base, &base).unwrap();
        assert!(diff.deltas.values().all(|d| d.materialize().is_zero()));

        let mut zero = NamedTensorMap::new();
        zero.insert("a", Matrix::zeros(2, 2));
        zero.insert("only_tuned", Matrix::identity(1));
        let diff = diff_checkpoints(&zero, &base).unwrap();
        assert_eq!(diff.deltas["a"].materialize(), *base.get("a").unwrap());
        assert_eq!(diff.only_in_base, vec!["only_tuned".to_string()]);
        assert_eq!(diff.only_in_tuned, vec!["only_base".to_string()]);

        let mut wrong = NamedTensorMap::new();
        wrong.insert("a", Matrix::zeros(2, 3));
        assert!(matches!(
            diff_checkpoints(&base, &wrong),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
