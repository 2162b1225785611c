//! Rolling Gaussian anomaly likelihood over forecasts.
//!
//! For each channel the last `W` forecasts (the current one included) define
//! a Gaussian with population variance; the channel likelihood is the
//! negative log-density of the current forecast and the timestamp score is
//! the sum over channels. Observations are never consulted.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::matrix::Matrix;

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-4;
pub const DEFAULT_WINDOW: usize = 50_000;
/// Running sums are rebuilt from the buffer after this many pushes.
pub const REFRESH_EVERY: usize = 4096;

/// `ln σ + ½ ln 2π + ½ ((ŷ - μ)/σ)²` with `σ` floored at `sigma_floor`.
pub fn channel_likelihood(y_hat: f64, mu: f64, sigma: f64, sigma_floor: f64) -> f64 {
    let s = sigma.max(sigma_floor);
    let z = (y_hat - mu) / s;
    libm::log(s) + 0.5 * libm::log(2.0 * PI) + 0.5 * z * z
}

/// Mean and population standard deviation of the last `min(window, len)`
/// values. `buffer` must be nonempty.
pub fn rolling_params(buffer: &[f64], window: usize) -> (f64, f64) {
    assert!(!buffer.is_empty(), "rolling_params: empty buffer");
    let tail = &buffer[buffer.len() - window.min(buffer.len()).max(1)..];
    let n = tail.len() as f64;
    let mu = tail.iter().sum::<f64>() / n;
    let var = tail.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    (mu, libm::sqrt(var))
}

/// Bounded FIFO with shifted running sums.
#[derive(Debug, Clone)]
struct RollingChannel {
    buf: VecDeque<f64>,
    cap: usize,
    shift: f64,
    s1: f64,
    s2: f64,
    since_refresh: usize,
}

impl RollingChannel {
    fn new(cap: usize) -> Self {
        Self { buf: VecDeque::with_capacity(cap.min(1 << 16)), cap, shift: 0.0, s1: 0.0, s2: 0.0, since_refresh: 0 }
    }

    fn push(&mut self, v: f64) {
        if self.buf.is_empty() {
            self.shift = v;
        }
        if self.buf.len() == self.cap {
            let old = self.buf.pop_front().expect("full buffer") - self.shift;
            self.s1 -= old;
            self.s2 -= old * old;
        }
        self.buf.push_back(v);
        let d = v - self.shift;
        self.s1 += d;
        self.s2 += d * d;
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_EVERY {
            self.refresh();
        }
    }

    fn refresh(&mut self) {
        let n = self.buf.len().max(1) as f64;
        self.shift = self.buf.iter().sum::<f64>() / n;
        self.s1 = 0.0;
        self.s2 = 0.0;
        for &v in &self.buf {
            let d = v - self.shift;
            self.s1 += d;
            self.s2 += d * d;
        }
        self.since_refresh = 0;
    }

    fn params(&self) -> (f64, f64) {
        let n = self.buf.len() as f64;
        let mean_d = self.s1 / n;
        let var = (self.s2 / n - mean_d * mean_d).max(0.0);
        (self.shift + mean_d, libm::sqrt(var))
    }
}

/// Per-timestamp aggregate scores and per-channel likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerReport {
    pub scores: Vec<f64>,
    /// `T × N` channel likelihoods.
    pub likelihoods: Matrix,
}

#[derive(Debug, Clone)]
pub struct GaussianScorerState {
    window: usize,
    sigma_floor: f64,
    channels: Vec<RollingChannel>,
}

impl GaussianScorerState {
    /// `window` is the total number of forecasts held per channel,
    /// including any prepended history.
    pub fn new(n_channels: usize, window: usize, sigma_floor: f64) -> Self {
        let window = window.max(1);
        Self { window, sigma_floor, channels: (0..n_channels).map(|_| RollingChannel::new(window)).collect() }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Prepends the last `W - 1` rows of `history` (training-period
    /// forecasts).
    pub fn seed<R: AsRef<[f64]>>(&mut self, history: &[R]) {
        let keep = self.window - 1;
        let start = history.len().saturating_sub(keep);
        for row in &history[start..] {
            for (ch, &v) in self.channels.iter_mut().zip(row.as_ref()) {
                ch.push(v);
            }
        }
    }

    /// Current rolling `(μ, σ)` of each channel. Empty channels report `(0, 0)`.
    pub fn params(&self) -> Vec<(f64, f64)> {
        self.channels.iter().map(|c| if c.buf.is_empty() { (0.0, 0.0) } else { c.params() }).collect()
    }

    /// Adds the current forecast, then scores it against the updated window.
    pub fn push(&mut self, forecast: &[f64], likelihoods: &mut [f64]) -> f64 {
        assert_eq!(forecast.len(), self.channels.len(), "forecast width differs from scorer");
        let mut total = 0.0;
        for ((ch, &y), out) in self.channels.iter_mut().zip(forecast).zip(likelihoods.iter_mut()) {
            ch.push(y);
            let (mu, sigma) = ch.params();
            *out = channel_likelihood(y, mu, sigma, self.sigma_floor);
            total += *out;
        }
        total
    }

    /// Scores a causal stream of forecasts.
    pub fn score_stream<R: AsRef<[f64]>>(&mut self, forecasts: &[R]) -> ScorerReport {
        let n = self.channels.len();
        let mut likelihoods = Matrix::zeros(forecasts.len(), n);
        let scores = forecasts
            .iter()
            .enumerate()
            .map(|(t, f)| self.push(f.as_ref(), likelihoods.row_mut(t)))
            .collect();
        ScorerReport { scores, likelihoods }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use alloc::vec;

    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

    #[test]
    fn likelihood_examples() {
        assert!((channel_likelihood(1.0, 1.0, 1.0, 1e-4) - 0.918939).abs() < 1e-6);
        assert!((channel_likelihood(2.0, 1.0, 1.0, 1e-4) - 1.418939).abs() < 1e-6);
        assert!((channel_likelihood(3.0, 1.0, 0.5, 1e-4) - 8.225792).abs() < 1e-6);
    }

    #[test]
    fn likelihood_increases_with_deviation() {
        let mut last = f64::NEG_INFINITY;
        for k in 0..20 {
            let a = channel_likelihood(0.3 + 0.1 * k as f64, 0.3, 0.2, 1e-4);
            assert!(a > last);
            last = a;
        }
    }

    #[test]
    fn rolling_params_examples() {
        let (mu, sigma) = rolling_params(&[1.0, 2.0, 3.0], 3);
        assert_eq!(mu, 2.0);
        assert!((sigma * sigma - 2.0 / 3.0).abs() < 1e-15);
        let (_, s) = rolling_params(&[4.0; 5], 3);
        assert_eq!(s, 0.0);
        assert_eq!(rolling_params(&[100.0, 1.0, 2.0, 3.0], 3).0, 2.0);
    }

    #[test]
    fn running_sums_track_direct_recomputation() {
        let mut rng = SeededRng::new(21);
        let mut state = GaussianScorerState::new(1, 700, 1e-4);
        let mut all = Vec::new();
        for _ in 0..10_000 {
            let v = 50.0 + 3.0 * rng.normal();
            all.push(v);
            state.push(&[v], &mut [0.0]);
            let (mu, sigma) = state.params()[0];
            let (dmu, dsigma) = rolling_params(&all, 700);
            assert!((mu - dmu).abs() < 1e-9);
            assert!((sigma - dsigma).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_stream_hits_the_floor() {
        let mut state = GaussianScorerState::new(3, 100, 1e-4);
        state.seed(&vec![vec![0.7; 3]; 50]);
        let report = state.score_stream(&vec![vec![0.7; 3]; 20]);
        let expected = 3.0 * (libm::log(1e-4) + HALF_LN_2PI);
        assert!(report.scores.iter().all(|s| (s - expected).abs() < 1e-12));
    }

    #[test]
    fn seed_keeps_w_minus_one_rows() {
        let mut state = GaussianScorerState::new(1, 4, 1e-4);
        let history: Vec<Vec<f64>> = (0..10).map(|v| vec![v as f64]).collect();
        state.seed(&history);
        assert_eq!(state.channels[0].buf.len(), 3);
        assert_eq!(state.channels[0].buf.front(), Some(&7.0));
    }
}
