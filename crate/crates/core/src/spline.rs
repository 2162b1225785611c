//! Natural cubic spline control paths.
//!
//! Each window is turned into one spline per channel, fit through the
//! observed entries only, on relative time `0..w_s-1`. Outside a channel's
//! knot span the path is held flat, so its derivative there is zero.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::series::Window;

/// Piecewise cubic `a + b·s + c·s² + d·s³` with `s = t - t_k` on `[t_k, t_{k+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpline {
    knot_times: Vec<f64>,
    coefficients: Vec<[f64; 4]>,
    fallback_value: f64,
}

impl ChannelSpline {
    /// A path that is `value` everywhere.
    pub fn constant(value: f64) -> Self {
        Self { knot_times: Vec::new(), coefficients: Vec::new(), fallback_value: value }
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.knot_times
    }

    pub fn coefficients(&self) -> &[[f64; 4]] {
        &self.coefficients
    }

    pub fn is_constant(&self) -> bool {
        self.coefficients.is_empty()
    }

    fn locate(&self, t: f64) -> Option<(usize, f64)> {
        if self.coefficients.is_empty() {
            return None;
        }
        let first = self.knot_times[0];
        let last = self.knot_times[self.knot_times.len() - 1];
        if t < first || t > last {
            return None;
        }
        // Last interval whose left knot is <= t.
        let k = self.knot_times.partition_point(|&x| x <= t).saturating_sub(1);
        let k = k.min(self.coefficients.len() - 1);
        Some((k, t - self.knot_times[k]))
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.coefficients.is_empty() {
            return self.fallback_value;
        }
        let t = t.clamp(self.knot_times[0], self.knot_times[self.knot_times.len() - 1]);
        let (k, s) = self.locate(t).expect("clamped time lies in span");
        let [a, b, c, d] = self.coefficients[k];
        a + s * (b + s * (c + s * d))
    }

    /// Zero outside the knot span.
    pub fn eval_derivative(&self, t: f64) -> f64 {
        match self.locate(t) {
            Some((k, s)) => {
                let [_, b, c, d] = self.coefficients[k];
                b + s * (2.0 * c + 3.0 * d * s)
            }
            None => 0.0,
        }
    }

    pub fn eval_second_derivative(&self, t: f64) -> f64 {
        match self.locate(t) {
            Some((k, s)) => {
                let [_, _, c, d] = self.coefficients[k];
                2.0 * c + 6.0 * d * s
            }
            None => 0.0,
        }
    }
}

/// Natural cubic spline through `(times[k], values[k])`.
///
/// Second derivatives at the knots solve the tridiagonal system
/// `h_{k-1} M_{k-1} + 2(h_{k-1} + h_k) M_k + h_k M_{k+1} = 6(Δ_k - Δ_{k-1})`
/// with `M_0 = M_{K-1} = 0`, via the Thomas algorithm.
pub fn fit_natural_cubic(times: &[f64], values: &[f64]) -> Result<ChannelSpline> {
    let k = times.len();
    if values.len() != k {
        return Err(Error::arg("spline times and values differ in length"));
    }
    if k < 2 {
        return Err(Error::arg("natural cubic spline needs at least two knots"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::arg("spline knot times must be strictly increasing"));
    }
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let slope: Vec<f64> = (0..k - 1).map(|i| (values[i + 1] - values[i]) / h[i]).collect();

    let mut second = alloc::vec![0.0; k];
    let interior = k - 2;
    if interior > 0 {
        // Forward sweep on rows 1..k-2; sub = h[i-1], diag = 2(h[i-1]+h[i]), sup = h[i].
        let mut c_prime = alloc::vec![0.0; interior];
        let mut d_prime = alloc::vec![0.0; interior];
        for j in 0..interior {
            let i = j + 1;
            let sub = h[i - 1];
            let diag = 2.0 * (h[i - 1] + h[i]);
            let sup = h[i];
            let rhs = 6.0 * (slope[i] - slope[i - 1]);
            if j == 0 {
                c_prime[j] = sup / diag;
                d_prime[j] = rhs / diag;
            } else {
                let denom = diag - sub * c_prime[j - 1];
                c_prime[j] = sup / denom;
                d_prime[j] = (rhs - sub * d_prime[j - 1]) / denom;
            }
        }
        for j in (0..interior).rev() {
            let next = if j + 1 < interior { second[j + 2] } else { 0.0 };
            second[j + 1] = d_prime[j] - c_prime[j] * next;
        }
    }

    let coefficients = (0..k - 1)
        .map(|i| {
            let a = values[i];
            let b = slope[i] - h[i] * (2.0 * second[i] + second[i + 1]) / 6.0;
            let c = second[i] / 2.0;
            let d = (second[i + 1] - second[i]) / (6.0 * h[i]);
            [a, b, c, d]
        })
        .collect();
    Ok(ChannelSpline { knot_times: times.to_vec(), coefficients, fallback_value: values[0] })
}

/// Control path for one window on relative time `[0, w_s - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPath {
    splines: Vec<ChannelSpline>,
    span_end: f64,
    include_time_channel: bool,
}

impl WindowPath {
    pub fn new(splines: Vec<ChannelSpline>, span_end: f64, include_time_channel: bool) -> Self {
        Self { splines, span_end, include_time_channel }
    }

    pub fn n_channels(&self) -> usize {
        self.splines.len()
    }

    pub fn splines(&self) -> &[ChannelSpline] {
        &self.splines
    }

    pub fn time_span(&self) -> (f64, f64) {
        (0.0, self.span_end)
    }

    pub fn include_time_channel(&self) -> bool {
        self.include_time_channel
    }

    /// Width of the output of [`eval`](Self::eval).
    pub fn dim(&self) -> usize {
        self.splines.len() + usize::from(self.include_time_channel)
    }

    fn clamp(&self, t: f64) -> f64 {
        t.clamp(0.0, self.span_end)
    }

    /// Normalized time coordinate `t / (w_s - 1)`.
    pub fn time_value(&self, t: f64) -> f64 {
        if self.span_end > 0.0 {
            self.clamp(t) / self.span_end
        } else {
            0.0
        }
    }

    pub fn time_derivative(&self, t: f64) -> f64 {
        if self.span_end > 0.0 && (0.0..=self.span_end).contains(&t) {
            1.0 / self.span_end
        } else {
            0.0
        }
    }

    /// Channel values at `t`, followed by the time coordinate when enabled.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let tc = self.clamp(t);
        let mut out: Vec<f64> = self.splines.iter().map(|s| s.eval(tc)).collect();
        if self.include_time_channel {
            out.push(self.time_value(t));
        }
        out
    }

    pub fn eval_derivative(&self, t: f64) -> Vec<f64> {
        let inside = (0.0..=self.span_end).contains(&t);
        let mut out: Vec<f64> =
            self.splines.iter().map(|s| if inside { s.eval_derivative(t) } else { 0.0 }).collect();
        if self.include_time_channel {
            out.push(self.time_derivative(t));
        }
        out
    }
}

/// Builds the per-channel splines of a window from its observed entries.
///
/// Two or more observations give a natural cubic; a single observation
/// gives a constant at that value; none gives the constant 0.
pub fn build_window_path(window: &Window, include_time_channel: bool) -> WindowPath {
    let w = window.len();
    let mut times = Vec::with_capacity(w);
    let mut vals = Vec::with_capacity(w);
    let splines = (0..window.n_channels())
        .map(|c| {
            times.clear();
            vals.clear();
            for r in 0..w {
                if window.mask.get(r, c) {
                    times.push(r as f64);
                    vals.push(window.values[(r, c)]);
                }
            }
            match times.len() {
                0 => ChannelSpline::constant(0.0),
                1 => ChannelSpline::constant(vals[0]),
                _ => fit_natural_cubic(&times, &vals).expect("row indices are strictly increasing"),
            }
        })
        .collect();
    WindowPath::new(splines, w.saturating_sub(1) as f64, include_time_channel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::series::{Mask, Window};
    use alloc::vec;

    #[test]
    fn passes_through_knots() {
        let s = fit_natural_cubic(&[0.0, 1.0, 2.0], &[1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.eval(1.0), 3.0);
        assert!((s.eval(2.0) - 2.0).abs() < 1e-12);
        assert_eq!(s.eval(0.0), 1.0);
    }

    #[test]
    fn collinear_knots_give_the_line() {
        let s = fit_natural_cubic(&[0.0, 1.0, 2.5, 4.0], &[0.0, 2.0, 5.0, 8.0]).unwrap();
        for i in 0..=40 {
            let t = i as f64 * 0.1;
            assert!((s.eval_derivative(t) - 2.0).abs() < 1e-12);
            assert!((s.eval(t) - 2.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(fit_natural_cubic(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(fit_natural_cubic(&[1.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(fit_natural_cubic(&[0.0], &[1.0]).is_err());
        assert!(fit_natural_cubic(&[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn flat_extension_outside_knots() {
        let s = fit_natural_cubic(&[1.0, 2.0, 3.0], &[1.0, 4.0, 2.0]).unwrap();
        assert_eq!(s.eval(0.0), 1.0);
        assert_eq!(s.eval(3.5), 2.0);
        assert_eq!(s.eval_derivative(0.5), 0.0);
        assert_eq!(s.eval_derivative(3.5), 0.0);
    }

    fn window(values: &[&[f64]], mask: &[&[bool]]) -> Window {
        let v = Matrix::from_rows(values);
        let (r, c) = v.shape();
        let m = Mask::from_vec(r, c, mask.iter().flat_map(|row| row.iter().copied()).collect()).unwrap();
        Window { values: v, mask: m, target: vec![0.0; c], target_mask: vec![true; c], target_index: r as i64 }
    }

    #[test]
    fn window_path_fallbacks() {
        let w = window(
            &[&[1.0, 7.0, 3.0], &[2.0, 0.0, 9.0], &[3.0, 0.0, 9.0], &[4.0, 0.0, 9.0], &[5.0, 0.0, 11.0]],
            &[
                &[true, true, true],
                &[true, false, false],
                &[true, false, false],
                &[true, false, false],
                &[true, false, true],
            ],
        );
        let mut w2 = w.clone();
        for r in 0..5 {
            w2.mask.set(r, 1, false);
        }
        let p = build_window_path(&w, false);
        assert_eq!(p.splines()[0].knot_times().len(), 5);
        // single observation -> constant
        assert!(p.splines()[1].is_constant());
        assert_eq!(p.eval(3.3)[1], 7.0);
        assert_eq!(p.eval_derivative(3.3)[1], 0.0);
        // two observations at 0 and 4 -> straight line
        for i in 0..=8 {
            let t = i as f64 * 0.5;
            assert!((p.eval(t)[2] - (3.0 + 2.0 * t)).abs() < 1e-12);
            assert!((p.eval_derivative(t)[2] - 2.0).abs() < 1e-12);
        }
        // fully missing -> zero
        let p2 = build_window_path(&w2, false);
        assert_eq!(p2.eval(2.0)[1], 0.0);
        assert_eq!(p2.eval_derivative(2.0)[1], 0.0);
    }

    #[test]
    fn time_channel() {
        let w = window(&[&[1.0], &[1.0], &[1.0], &[1.0], &[1.0]], &[&[true] as &[bool]; 5]);
        let p = build_window_path(&w, true);
        assert_eq!(p.dim(), 2);
        assert_eq!(p.eval(2.0), vec![1.0, 0.5]);
        assert_eq!(p.eval_derivative(2.0), vec![0.0, 0.25]);
        assert_eq!(p.eval(9.0)[1], 1.0);
        assert_eq!(p.eval_derivative(9.0)[1], 0.0);
    }
}
