//! Median / inter-quartile-range scaling.

use alloc::vec::Vec;

pub const IQR_FLOOR: f64 = 1e-4;

/// Linear-interpolation quantile of sorted data (position `q·(n-1)`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustScaler {
    median: Vec<f64>,
    iqr: Vec<f64>,
}

impl RobustScaler {
    /// Fits one median/IQR per channel. Channels without values get
    /// median 0 and the floored IQR.
    pub fn fit<C: AsRef<[f64]>>(channels: &[C]) -> Self {
        let mut median = Vec::with_capacity(channels.len());
        let mut iqr = Vec::with_capacity(channels.len());
        for c in channels {
            let mut v: Vec<f64> = c.as_ref().to_vec();
            if v.is_empty() {
                median.push(0.0);
                iqr.push(IQR_FLOOR);
                continue;
            }
            v.sort_by(f64::total_cmp);
            median.push(quantile_sorted(&v, 0.5));
            iqr.push((quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)).max(IQR_FLOOR));
        }
        Self { median, iqr }
    }

    pub fn median(&self) -> &[f64] {
        &self.median
    }

    /// Floored IQR per channel.
    pub fn iqr(&self) -> &[f64] {
        &self.iqr
    }

    pub fn transform(&self, channel: usize, v: f64) -> f64 {
        (v - self.median[channel]) / self.iqr[channel]
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(c, &v)| self.transform(c, v)).collect()
    }
}

/// Fits on `channels` and returns them scaled.
pub fn median_iqr_normalize<C: AsRef<[f64]>>(channels: &[C]) -> Vec<Vec<f64>> {
    let scaler = RobustScaler::fit(channels);
    channels
        .iter()
        .enumerate()
        .map(|(c, vals)| vals.as_ref().iter().map(|&v| scaler.transform(c, v)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        let s = RobustScaler::fit(core::slice::from_ref(&v));
        assert_eq!(s.median()[0], 50.5);
        assert_eq!(s.iqr()[0], 49.5);
        assert_eq!(median_iqr_normalize(&[v])[0][99], 1.0);
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let out = median_iqr_normalize(&[vec![3.0; 10]]);
        assert!(out[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn order_does_not_matter() {
        let a = RobustScaler::fit(&[vec![5.0, 1.0, 3.0, 2.0, 4.0]]);
        let b = RobustScaler::fit(&[vec![1.0, 2.0, 3.0, 4.0, 5.0]]);
        assert_eq!(a, b);
        assert_eq!(a.median()[0], 3.0);
        assert_eq!(a.iqr()[0], 2.0);
    }
}
