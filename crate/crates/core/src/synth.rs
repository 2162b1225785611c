//! Synthetic benchmark with labeled anomaly segments.
//!
//! Channels mix a few shared latent sinusoids. Consecutive channel pairs
//! load on the same latent with opposite signs, so they are strongly
//! negatively correlated. Test anomalies are either level shifts on one
//! channel or sign flips of one member of a correlated pair.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;
use crate::series::{Mask, SeriesDataset};

const N_LATENT: usize = 3;
const NOISE_SD: f64 = 0.05;
const COVERAGE: f64 = 0.10;
const LENGTH_JITTER: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    LevelShift,
    SignFlip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalySegment {
    /// Row range within the test set, end exclusive.
    pub start: usize,
    pub end: usize,
    pub channel: usize,
    pub kind: AnomalyKind,
}

struct Latent {
    period: f64,
    phase: f64,
}

/// Generates `(train, test)`; test rows continue the train timeline.
pub fn synth_generate(
    n_channels: usize,
    train_len: usize,
    test_len: usize,
    segments: usize,
    seed: u64,
) -> Result<(SeriesDataset, SeriesDataset)> {
    synth_generate_with_segments(n_channels, train_len, test_len, segments, seed).map(|(a, b, _)| (a, b))
}

pub fn synth_generate_with_segments(
    n_channels: usize,
    train_len: usize,
    test_len: usize,
    segments: usize,
    seed: u64,
) -> Result<(SeriesDataset, SeriesDataset, Vec<AnomalySegment>)> {
    if n_channels < 3 {
        return Err(Error::arg(format!("need at least 3 channels, got {n_channels}")));
    }
    if train_len == 0 || test_len == 0 {
        return Err(Error::arg("train and test lengths must be positive"));
    }
    let mean_len = if segments > 0 { COVERAGE * test_len as f64 / segments as f64 } else { 0.0 };
    if segments > 0 && mean_len * (1.0 - LENGTH_JITTER) < 1.0 {
        return Err(Error::arg(format!("{segments} segments do not fit in {test_len} test rows")));
    }

    let mut rng = SeededRng::derived(seed, 0x5e4);
    let latents: Vec<Latent> = (0..N_LATENT)
        .map(|_| Latent { period: rng.uniform_range(30.0, 150.0), phase: rng.uniform_range(0.0, core::f64::consts::TAU) })
        .collect();
    let mut loadings = vec![vec![0.0; N_LATENT]; n_channels];
    let mut baseline = vec![0.0; n_channels];
    for (c, row) in loadings.iter_mut().enumerate() {
        let main = (c / 2) % N_LATENT;
        let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
        for (k, l) in row.iter_mut().enumerate() {
            *l = if k == main { sign * rng.uniform_range(0.7, 1.0) } else { rng.uniform_range(-0.2, 0.2) };
        }
        baseline[c] = rng.uniform_range(1.5, 2.5);
    }

    let total = train_len + test_len;
    let mut values = Matrix::zeros(total, n_channels);
    for t in 0..total {
        let lat: Vec<f64> = latents
            .iter()
            .map(|l| libm::sin(core::f64::consts::TAU * t as f64 / l.period + l.phase))
            .collect();
        for c in 0..n_channels {
            let signal: f64 = loadings[c].iter().zip(&lat).map(|(a, b)| a * b).sum();
            values[(t, c)] = baseline[c] + signal + NOISE_SD * rng.normal();
        }
    }

    let mut placed = Vec::with_capacity(segments);
    let mut labels = vec![false; test_len];
    for s in 0..segments {
        let slot_start = s * test_len / segments;
        let slot_end = (s + 1) * test_len / segments;
        let len = libm::round(mean_len * rng.uniform_range(1.0 - LENGTH_JITTER, 1.0 + LENGTH_JITTER)) as usize;
        let len = len.clamp(1, slot_end - slot_start);
        let start = slot_start + rng.below(slot_end - slot_start - len + 1);
        let channel = rng.below(n_channels);
        let kind = if s % 2 == 0 { AnomalyKind::LevelShift } else { AnomalyKind::SignFlip };
        let shift = rng.uniform_range(1.5, 2.5) * if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        for r in start..start + len {
            let v = &mut values[(train_len + r, channel)];
            *v = match kind {
                AnomalyKind::LevelShift => *v + shift,
                AnomalyKind::SignFlip => -*v,
            };
            labels[r] = true;
        }
        placed.push(AnomalySegment { start, end: start + len, channel, kind });
    }

    let names: Vec<String> = (0..n_channels).map(|c| format!("s{c}")).collect();
    let train_values = Matrix::from_vec(train_len, n_channels, values.as_slice()[..train_len * n_channels].to_vec());
    let test_values = Matrix::from_vec(test_len, n_channels, values.as_slice()[train_len * n_channels..].to_vec());
    let train = SeriesDataset::new(
        train_values,
        Mask::full(train_len, n_channels),
        Some(vec![false; train_len]),
        names.clone(),
        0,
    )?;
    let test = SeriesDataset::new(test_values, Mask::full(test_len, n_channels), Some(labels), names, train_len as i64)?;
    Ok((train, test, placed))
}
