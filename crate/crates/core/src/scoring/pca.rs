//! Probabilistic PCA reconstruction scorer.
//!
//! The maximum-likelihood fit takes the top `q` eigenpairs of the sample
//! covariance, sets the noise variance to the mean of the remaining
//! eigenvalues and reconstructs through the posterior mean
//! `W (WᵀW + σ²I)⁻¹ Wᵀ (x - μ)`, which in the eigenbasis shrinks each
//! retained component by `(λ_k - σ²) / λ_k`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Ppca {
    mean: Vec<f64>,
    /// Retained eigenvalues, descending.
    eigenvalues: Vec<f64>,
    noise_variance: f64,
    /// `N × N` reconstruction operator.
    projection: DMatrix<f64>,
}

impl Ppca {
    pub fn default_components(n_channels: usize) -> usize {
        n_channels.saturating_sub(1).clamp(1, 8)
    }

    /// Fits on rows of equal width. `observed` marks which entries are
    /// present; missing ones are filled with their channel mean before the
    /// covariance is formed.
    pub fn fit<R: AsRef<[f64]>, M: AsRef<[bool]>>(rows: &[R], observed: Option<&[M]>, q: usize) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows < q + 1 {
            return Err(Error::Fit(format!("PPCA with {q} components needs at least {} rows, got {n_rows}", q + 1)));
        }
        let d = rows[0].as_ref().len();
        if q == 0 || q > d {
            return Err(Error::Fit(format!("component count {q} outside 1..={d}")));
        }
        let is_obs = |r: usize, c: usize| observed.is_none_or(|m| m[r].as_ref()[c]);

        let mut mean = alloc::vec![0.0; d];
        for c in 0..d {
            let (mut s, mut k) = (0.0, 0usize);
            for r in 0..n_rows {
                if is_obs(r, c) {
                    s += rows[r].as_ref()[c];
                    k += 1;
                }
            }
            mean[c] = if k > 0 { s / k as f64 } else { 0.0 };
        }
        let centered = DMatrix::from_fn(n_rows, d, |r, c| if is_obs(r, c) { rows[r].as_ref()[c] - mean[c] } else { 0.0 });
        let cov = centered.transpose() * &centered / n_rows as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let noise_variance = if q < d {
            order[q..].iter().map(|&k| eig.eigenvalues[k].max(0.0)).sum::<f64>() / (d - q) as f64
        } else {
            0.0
        };
        let mut projection = DMatrix::zeros(d, d);
        let mut eigenvalues = Vec::with_capacity(q);
        for &k in &order[..q] {
            let lambda = eig.eigenvalues[k].max(0.0);
            eigenvalues.push(lambda);
            let shrink = if lambda > noise_variance && lambda > 0.0 { (lambda - noise_variance) / lambda } else { 0.0 };
            let u = eig.eigenvectors.column(k);
            projection += shrink * (u * u.transpose());
        }
        Ok(Self { mean, eigenvalues, noise_variance, projection })
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Mean squared reconstruction error over observed entries of `x`
    /// (missing entries are set to the channel mean first). Zero when
    /// nothing is observed.
    pub fn score(&self, x: &[f64], observed: &[bool]) -> f64 {
        let d = self.mean.len();
        let centered = DMatrix::from_fn(d, 1, |c, _| if observed[c] { x[c] - self.mean[c] } else { 0.0 });
        let recon = &self.projection * &centered;
        let (mut s, mut k) = (0.0, 0usize);
        for c in 0..d {
            if observed[c] {
                let e = centered[c] - recon[c];
                s += e * e;
                k += 1;
            }
        }
        if k == 0 {
            0.0
        } else {
            s / k as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use alloc::vec;

    #[test]
    fn rank_one_data_reconstructs_exactly() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.3 - 1.0, 2.0 * (i as f64 * 0.3 - 1.0) + 0.5]).collect();
        let p = Ppca::fit::<_, Vec<bool>>(&rows, None, 1).unwrap();
        for r in &rows {
            assert!(p.score(r, &[true, true]) < 1e-10);
        }
    }

    #[test]
    fn recovers_minor_axis_variance() {
        let mut rng = SeededRng::new(5);
        let rows: Vec<Vec<f64>> = (0..5000)
            .map(|_| {
                let (a, b) = (2.0 * rng.normal(), rng.normal());
                // rotate by 30 degrees
                let (c, s) = (0.866_025_403_784_438_6, 0.5);
                vec![c * a - s * b + 1.0, s * a + c * b - 2.0]
            })
            .collect();
        let p = Ppca::fit::<_, Vec<bool>>(&rows, None, 1).unwrap();
        assert!((p.noise_variance() - 1.0).abs() < 0.1, "{}", p.noise_variance());
        assert!((p.eigenvalues()[0] - 4.0).abs() < 0.4);
    }

    #[test]
    fn off_subspace_point_scores_higher() {
        let mut rng = SeededRng::new(6);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let a = rng.normal();
                vec![a, a + 0.05 * rng.normal(), -a + 0.05 * rng.normal()]
            })
            .collect();
        let p = Ppca::fit::<_, Vec<bool>>(&rows, None, 1).unwrap();
        let worst = rows.iter().map(|r| p.score(r, &[true; 3])).fold(0.0, f64::max);
        assert!(p.score(&[0.0, 3.0, 3.0], &[true; 3]) > worst);
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let rows = vec![vec![1.0, 2.0, 3.0]; 2];
        assert!(matches!(Ppca::fit::<_, Vec<bool>>(&rows, None, 2), Err(Error::Fit(_))));
    }

    #[test]
    fn missing_entries_are_ignored_in_score() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let p = Ppca::fit::<_, Vec<bool>>(&rows, None, 1).unwrap();
        assert_eq!(p.score(&[100.0, 0.0], &[false, false]), 0.0);
    }
}
