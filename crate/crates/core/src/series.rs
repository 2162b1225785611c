//! Multivariate series with observation masks, missing-at-random masking,
//! min-max normalization and sliding windows.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

/// Lower and upper bound applied after min-max scaling.
pub const NORMALIZED_CLIP: (f64, f64) = (-1.0, 2.0);

/// Binary `rows × cols` matrix; `true` means observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![true; rows * cols] }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![false; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::arg(format!(
                "mask data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count_observed(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Elementwise AND.
    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.shape() != other.shape() {
            return Err(Error::arg(format!(
                "mask shapes differ: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect();
        Ok(Mask { rows: self.rows, cols: self.cols, data })
    }
}

/// A `T × N` multivariate series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDataset {
    values: Matrix,
    mask: Mask,
    labels: Option<Vec<bool>>,
    channel_names: Vec<String>,
    start_index: i64,
}

impl SeriesDataset {
    pub fn new(
        values: Matrix,
        mask: Mask,
        labels: Option<Vec<bool>>,
        channel_names: Vec<String>,
        start_index: i64,
    ) -> Result<Self> {
        let (t, n) = values.shape();
        if t == 0 {
            return Err(Error::Structural("series has no rows".into()));
        }
        if n == 0 {
            return Err(Error::Structural("series has no channels".into()));
        }
        if mask.shape() != (t, n) {
            return Err(Error::arg(format!("mask shape {:?} differs from values {:?}", mask.shape(), (t, n))));
        }
        if channel_names.len() != n {
            return Err(Error::arg(format!("{} channel names for {n} channels", channel_names.len())));
        }
        if let Some(l) = &labels {
            if l.len() != t {
                return Err(Error::arg(format!("{} labels for {t} rows", l.len())));
            }
        }
        Ok(Self { values, mask, labels, channel_names, start_index })
    }

    /// Fully observed, unlabeled dataset with channels named `c0, c1, ...`.
    pub fn from_values(values: Matrix) -> Result<Self> {
        let (t, n) = values.shape();
        let names = (0..n).map(|i| format!("c{i}")).collect();
        Self::new(values, Mask::full(t, n), None, names, 0)
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn start_index(&self) -> i64 {
        self.start_index
    }

    pub fn timestamp(&self, row: usize) -> i64 {
        self.start_index + row as i64
    }

    pub fn with_labels(mut self, labels: Option<Vec<bool>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.len() {
                return Err(Error::arg(format!("{} labels for {} rows", l.len(), self.len())));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Observed value at `(row, channel)`, `None` when missing.
    pub fn observed(&self, row: usize, channel: usize) -> Option<f64> {
        self.mask.get(row, channel).then(|| self.values[(row, channel)])
    }

    /// Rows `[start, end)` as a new dataset; timestamps are preserved.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::arg(format!("invalid row range {start}..{end} for {} rows", self.len())));
        }
        let n = self.n_channels();
        let values = Matrix::from_vec(end - start, n, self.values.as_slice()[start * n..end * n].to_vec());
        let mask = Mask::from_vec(end - start, n, self.mask.as_slice()[start * n..end * n].to_vec())?;
        let labels = self.labels.as_ref().map(|l| l[start..end].to_vec());
        Self::new(values, mask, labels, self.channel_names.clone(), self.timestamp(start))
    }

    /// Appends `other` below `self`. Channel counts must match and
    /// `other` must start at the next timestamp.
    pub fn concat(&self, other: &SeriesDataset) -> Result<Self> {
        if other.n_channels() != self.n_channels() {
            return Err(Error::arg("cannot concatenate series with different channel counts"));
        }
        if other.start_index != self.timestamp(self.len()) {
            return Err(Error::Structural(format!(
                "series are not contiguous: {} follows {}",
                other.start_index,
                self.timestamp(self.len() - 1)
            )));
        }
        let n = self.n_channels();
        let t = self.len() + other.len();
        let mut values = self.values.as_slice().to_vec();
        values.extend_from_slice(other.values.as_slice());
        let mut mask = self.mask.as_slice().to_vec();
        mask.extend_from_slice(other.mask.as_slice());
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Self::new(
            Matrix::from_vec(t, n, values),
            Mask::from_vec(t, n, mask)?,
            labels,
            self.channel_names.clone(),
            self.start_index,
        )
    }
}

/// Missing-at-random mask: each entry is dropped (set to `false`)
/// independently with probability `rate`.
///
/// Draws are taken row-major from [`SeededRng::new(seed)`](SeededRng), one
/// `uniform()` per entry; an entry is dropped when the draw is `< rate`.
pub fn generate_mask(rows: usize, cols: usize, rate: f64, seed: u64) -> Result<Mask> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::arg(format!("missing rate {rate} outside [0, 1]")));
    }
    let mut rng = SeededRng::new(seed);
    let data = (0..rows * cols).map(|_| rng.uniform() >= rate).collect();
    Mask::from_vec(rows, cols, data)
}

/// Drops additional observations; the result's mask is `dataset.mask AND mask`.
pub fn apply_mask(dataset: &SeriesDataset, mask: &Mask) -> Result<SeriesDataset> {
    let combined = dataset.mask.and(mask)?;
    let mut out = dataset.clone();
    out.mask = combined;
    Ok(out)
}

/// Per-channel min-max scaling fit on observed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Normalizer {
    pub fn from_bounds(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::arg("normalizer bounds differ in length"));
        }
        if min.iter().zip(&max).any(|(a, b)| !(a <= b)) {
            return Err(Error::arg("normalizer requires min <= max on every channel"));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn n_channels(&self) -> usize {
        self.min.len()
    }

    pub fn transform_value(&self, channel: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[channel], self.max[channel]);
        if hi == lo {
            return 0.0;
        }
        ((v - lo) / (hi - lo)).clamp(NORMALIZED_CLIP.0, NORMALIZED_CLIP.1)
    }

    pub fn inverse_value(&self, channel: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[channel], self.max[channel]);
        v * (hi - lo) + lo
    }

    /// Scales observed entries; missing entries are stored as 0.
    pub fn normalize(&self, dataset: &SeriesDataset) -> Result<SeriesDataset> {
        self.map_observed(dataset, |c, v| self.transform_value(c, v))
    }

    pub fn denormalize(&self, dataset: &SeriesDataset) -> Result<SeriesDataset> {
        self.map_observed(dataset, |c, v| self.inverse_value(c, v))
    }

    fn map_observed(&self, dataset: &SeriesDataset, f: impl Fn(usize, f64) -> f64) -> Result<SeriesDataset> {
        let n = dataset.n_channels();
        if n != self.n_channels() {
            return Err(Error::arg(format!("normalizer has {} channels, dataset has {n}", self.n_channels())));
        }
        let mut out = dataset.clone();
        for r in 0..dataset.len() {
            for c in 0..n {
                out.values[(r, c)] = match dataset.observed(r, c) {
                    Some(v) => f(c, v),
                    None => 0.0,
                };
            }
        }
        Ok(out)
    }
}

/// Fits min/max per channel over observed entries. Channels without any
/// observation get bounds `(0, 1)`.
pub fn fit_normalizer(dataset: &SeriesDataset) -> Normalizer {
    let n = dataset.n_channels();
    let mut min = vec![f64::INFINITY; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    for r in 0..dataset.len() {
        for c in 0..n {
            if let Some(v) = dataset.observed(r, c) {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
    }
    for c in 0..n {
        if min[c] > max[c] {
            min[c] = 0.0;
            max[c] = 1.0;
        }
    }
    Normalizer { min, max }
}

/// `w_s` rows of context and the row that follows them.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub values: Matrix,
    pub mask: Mask,
    pub target: Vec<f64>,
    pub target_mask: Vec<bool>,
    /// Timestamp of the target row.
    pub target_index: i64,
}

impl Window {
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.values.cols()
    }

    pub fn target_observed(&self) -> bool {
        self.target_mask.iter().any(|&m| m)
    }
}

/// Window ending just before `target_row`. Requires `w_s <= target_row < T`.
pub fn window_at(dataset: &SeriesDataset, target_row: usize, w_s: usize) -> Window {
    assert!(w_s <= target_row && target_row < dataset.len(), "window_at: target row out of range");
    let n = dataset.n_channels();
    let start = target_row - w_s;
    let values = Matrix::from_vec(w_s, n, dataset.values.as_slice()[start * n..target_row * n].to_vec());
    let mask = Mask { rows: w_s, cols: n, data: dataset.mask.as_slice()[start * n..target_row * n].to_vec() };
    let target_mask = dataset.mask.row(target_row).to_vec();
    let target = (0..n).map(|c| dataset.observed(target_row, c).unwrap_or(0.0)).collect();
    Window { values, mask, target, target_mask, target_index: dataset.timestamp(target_row) }
}

/// All windows with stride 1, ordered by target. Empty when `T <= w_s`.
pub fn make_windows(dataset: &SeriesDataset, w_s: usize) -> Vec<Window> {
    (w_s..dataset.len()).map(|row| window_at(dataset, row, w_s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize, n: usize) -> SeriesDataset {
        let data = (0..t * n).map(|i| i as f64).collect();
        SeriesDataset::from_values(Matrix::from_vec(t, n, data)).unwrap()
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        let v = Matrix::zeros(3, 2);
        assert!(SeriesDataset::new(v.clone(), Mask::full(2, 2), None, vec!["a".into(), "b".into()], 0).is_err());
        assert!(SeriesDataset::new(v.clone(), Mask::full(3, 2), Some(vec![false; 2]), vec!["a".into(), "b".into()], 0)
            .is_err());
        assert!(matches!(
            SeriesDataset::new(Matrix::zeros(3, 0), Mask::full(3, 0), None, vec![], 0),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn mask_extremes() {
        assert_eq!(generate_mask(7, 3, 0.0, 1).unwrap(), Mask::full(7, 3));
        assert_eq!(generate_mask(7, 3, 1.0, 1).unwrap(), Mask::empty(7, 3));
        assert!(generate_mask(2, 2, 1.5, 1).is_err());
        assert!(generate_mask(2, 2, -0.1, 1).is_err());
    }

    #[test]
    fn mask_rate_concentrates() {
        let m = generate_mask(100, 100, 0.5, 42).unwrap();
        let dropped = 10_000 - m.count_observed();
        let frac = dropped as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "dropped fraction {frac}");
    }

    #[test]
    fn mask_is_pure_function_of_inputs() {
        assert_eq!(generate_mask(50, 4, 0.3, 9).unwrap(), generate_mask(50, 4, 0.3, 9).unwrap());
        assert_ne!(generate_mask(50, 4, 0.3, 9).unwrap(), generate_mask(50, 4, 0.3, 10).unwrap());
    }

    #[test]
    fn apply_mask_is_boolean_and() {
        let d = ramp(1, 3);
        let d = apply_mask(&d, &Mask::from_vec(1, 3, vec![true, true, false]).unwrap()).unwrap();
        let d = apply_mask(&d, &Mask::from_vec(1, 3, vec![true, false, true]).unwrap()).unwrap();
        assert_eq!(d.mask().row(0), &[true, false, false]);
        assert_eq!(d.values(), ramp(1, 3).values());

        let full = apply_mask(&ramp(4, 2), &Mask::full(4, 2)).unwrap();
        assert_eq!(full, ramp(4, 2));
        let none = apply_mask(&ramp(4, 2), &Mask::empty(4, 2)).unwrap();
        assert_eq!(none.mask().count_observed(), 0);
        assert!(apply_mask(&ramp(4, 2), &Mask::full(3, 2)).is_err());
    }

    #[test]
    fn normalizer_rules() {
        let v = Matrix::from_rows(&[&[2.0, 5.0, 0.0], &[4.0, 5.0, 4.0]]);
        let d = SeriesDataset::from_values(v).unwrap();
        let norm = fit_normalizer(&d);
        let out = norm.normalize(&d).unwrap();
        assert_eq!(out.values().row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(out.values().row(1), &[1.0, 0.0, 1.0]);
        assert_eq!(norm.transform_value(2, 10.0), 2.0);
        assert_eq!(norm.transform_value(2, -100.0), -1.0);
    }

    #[test]
    fn normalizer_uses_observed_entries_only() {
        let v = Matrix::from_rows(&[&[2.0, 7.0], &[100.0, 9.0], &[4.0, 8.0]]);
        let mut mask = Mask::full(3, 2);
        mask.set(1, 0, false);
        let d = SeriesDataset::new(v, mask, None, vec!["a".into(), "b".into()], 0).unwrap();
        let norm = fit_normalizer(&d);
        assert_eq!(norm.min(), &[2.0, 7.0]);
        assert_eq!(norm.max(), &[4.0, 9.0]);

        let unobserved = apply_mask(&d, &Mask::empty(3, 2)).unwrap();
        let norm = fit_normalizer(&unobserved);
        assert_eq!((norm.min(), norm.max()), (&[0.0, 0.0][..], &[1.0, 1.0][..]));
    }

    #[test]
    fn window_counts_and_indices() {
        assert_eq!(make_windows(&ramp(6, 2), 5).len(), 1);
        assert_eq!(make_windows(&ramp(6, 2), 5)[0].target_index, 5);
        assert_eq!(make_windows(&ramp(10, 2), 5).len(), 5);
        assert!(make_windows(&ramp(5, 2), 5).is_empty());

        let d = ramp(10, 2);
        let w = make_windows(&d, 3).into_iter().find(|w| w.target_index == 7).unwrap();
        assert_eq!(w.values.row(0), d.values().row(4));
        assert_eq!(w.values.row(2), d.values().row(6));
        assert_eq!(w.target, d.values().row(7));
    }

    #[test]
    fn slice_and_concat_round_trip() {
        let d = ramp(10, 3);
        let a = d.slice_rows(0, 4).unwrap();
        let b = d.slice_rows(4, 10).unwrap();
        assert_eq!(b.start_index(), 4);
        assert_eq!(a.concat(&b).unwrap(), d);
        assert!(b.concat(&a).is_err());
    }
}
