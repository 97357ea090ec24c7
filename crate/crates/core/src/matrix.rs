//! Feature matrices: `H x W` grids of `C`-dimensional feature elements.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// One owned feature element (a `C`-dimensional vector).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureElement(Vec<f64>);

impl FeatureElement {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Invalid("feature element needs at least one component".into()));
        }
        if let Some(i) = components.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("component {i} is not finite")));
        }
        Ok(FeatureElement(components))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn channels(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for FeatureElement {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean distance between two feature elements.
pub fn element_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "element channels differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(euclidean(a, b))
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Row-major `H x W x C` matrix of finite `f64` values, channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || channels == 0 {
            return Err(Error::Invalid(format!(
                "matrix dims must be positive, got {rows}x{cols}x{channels}"
            )));
        }
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::Invalid("matrix dims overflow".into()))?;
        if data.len() != expected {
            return Err(Error::Invalid(format!(
                "expected {expected} values for {rows}x{cols}x{channels}, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("value {i} is not finite")));
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            channels,
            data,
        })
    }

    /// Scalar (`C = 1`) matrix from row vectors.
    pub fn from_scalar_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if let Some(r) = rows.iter().position(|r| r.as_ref().len() != w) {
            return Err(Error::Invalid(format!("row {r} has a different width")));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        FeatureMatrix::new(h, w, 1, data)
    }

    pub fn from_elements(rows: usize, cols: usize, elements: &[FeatureElement]) -> Result<Self> {
        let channels = elements.first().map(|e| e.channels()).unwrap_or(0);
        if elements.iter().any(|e| e.channels() != channels) {
            return Err(Error::Dimension("elements have differing channel counts".into()));
        }
        let data = elements.iter().flat_map(|e| e.as_slice().iter().copied()).collect();
        FeatureMatrix::new(rows, cols, channels, data)
    }

    pub fn zeros(rows: usize, cols: usize, channels: usize) -> Result<Self> {
        FeatureMatrix::new(rows, cols, channels, vec![0.0; rows * cols * channels])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Element at 0-based `(row, col)`.
    #[inline]
    pub fn element(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.cols + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// All elements of one row, concatenated.
    pub fn row(&self, row: usize) -> &[f64] {
        let len = self.cols * self.channels;
        &self.data[row * len..(row + 1) * len]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels)
    }

    /// Apply `f` to every element, keeping positions. `f` must return exactly
    /// `out_channels` values.
    pub fn map_elements<F>(&self, out_channels: usize, mut f: F) -> Result<FeatureMatrix>
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let mut data = vec![0.0; self.rows * self.cols * out_channels];
        for (src, dst) in self.elements().zip(data.chunks_exact_mut(out_channels)) {
            f(src, dst);
        }
        FeatureMatrix::new(self.rows, self.cols, out_channels, data)
    }

    /// Entrywise L1 norm of `self - other`; shapes must match.
    pub fn l1_distance(&self, other: &FeatureMatrix) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "point-wise distance needs equal shapes, got {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum())
    }
}

/// A collection of matrices of one modality, keyed by class id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub modality: String,
    entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub class_id: u64,
    pub matrix: FeatureMatrix,
}

impl Dataset {
    pub fn new(modality: impl Into<String>, entries: Vec<Entry>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.class_id) {
                return Err(Error::Invalid(format!("duplicate class id {}", e.class_id)));
            }
        }
        if let Some(first) = entries.first() {
            let c = first.matrix.channels();
            if let Some(bad) = entries.iter().find(|e| e.matrix.channels() != c) {
                return Err(Error::Dimension(format!(
                    "class {} has {} channels, dataset has {c}",
                    bad.class_id,
                    bad.matrix.channels()
                )));
            }
        }
        Ok(Dataset {
            modality: modality.into(),
            entries,
        })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn channels(&self) -> Option<usize> {
        self.entries.first().map(|e| e.matrix.channels())
    }

    pub fn class_ids(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.class_id).collect()
    }

    pub fn matrices(&self) -> Vec<FeatureMatrix> {
        self.entries.iter().map(|e| e.matrix.clone()).collect()
    }

    pub fn position(&self, class_id: u64) -> Option<usize> {
        self.entries.iter().position(|e| e.class_id == class_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        assert_eq!(element_distance(&[3.0], &[3.0]).unwrap(), 0.0);
        assert_eq!(element_distance(&[0.0, 3.0], &[4.0, 0.0]).unwrap(), 5.0);
        assert_eq!(element_distance(&[1.0, 2.0, 2.0], &[0.0, 0.0, 0.0]).unwrap(), 3.0);
        assert!(matches!(
            element_distance(&[1.0], &[1.0, 2.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(FeatureMatrix::new(0, 2, 1, vec![]).is_err());
        assert!(FeatureMatrix::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(FeatureMatrix::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(FeatureElement::new(vec![]).is_err());
    }

    #[test]
    fn element_views() {
        let m = FeatureMatrix::new(2, 3, 2, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(m.element(1, 2), &[10.0, 11.0]);
        assert_eq!(m.row(1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        assert_eq!(m.elements().count(), 6);
    }

    #[test]
    fn dataset_validation() {
        let m = |c| FeatureMatrix::zeros(1, 1, c).unwrap();
        let dup = Dataset::new(
            "x",
            vec![
                Entry { class_id: 7, matrix: m(1) },
                Entry { class_id: 7, matrix: m(1) },
            ],
        );
        assert!(matches!(dup, Err(Error::Invalid(_))));
        let mixed = Dataset::new(
            "x",
            vec![
                Entry { class_id: 1, matrix: m(160) },
                Entry { class_id: 2, matrix: m(80) },
            ],
        );
        assert!(matches!(mixed, Err(Error::Dimension(_))));
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 3)
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in vec3(), b in vec3(), c in vec3()) {
            let ab = element_distance(&a, &b).unwrap();
            let ba = element_distance(&b, &a).unwrap();
            let ac = element_distance(&a, &c).unwrap();
            let cb = element_distance(&c, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(element_distance(&a, &a).unwrap(), 0.0);
            prop_assert!(ab <= ac + cb + 1e-12);
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }
    }
}
