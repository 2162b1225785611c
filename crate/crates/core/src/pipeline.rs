//! Mask, normalize, train, forecast, score and evaluate.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{evaluate, EvalReport};
use crate::model::{DgNcdeModel, ModelConfig};
use crate::scoring::gaussian::{DEFAULT_SIGMA_FLOOR, DEFAULT_WINDOW};
use crate::scoring::kmeans::{DEFAULT_RESTARTS, MAX_K};
use crate::scoring::{GaussianScorerState, KMeansScorer, Ppca, RobustScaler, ScorerReport};
use crate::series::{apply_mask, fit_normalizer, generate_mask, window_at, Mask, Normalizer, SeriesDataset};
use crate::train::{train, TrainConfig, TrainHistory};

/// Offset mixed into the experiment seed for the test-set mask.
pub const TEST_MASK_SEED_XOR: u64 = 0x7465_7374;

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerConfig {
    /// Rolling window, counting prepended training forecasts.
    pub window: usize,
    pub sigma_floor: f64,
    /// PPCA components; `None` uses `min(N - 1, 8)`.
    pub pca_components: Option<usize>,
    pub kmeans_max_k: usize,
    pub kmeans_restarts: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            pca_components: None,
            kmeans_max_k: MAX_K,
            kmeans_restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub scorer: ScorerConfig,
    /// Also fit and evaluate the PCA and k-means scorers.
    pub ablations: bool,
}

impl ExperimentConfig {
    pub fn new(n_channels: usize) -> Self {
        Self {
            model: ModelConfig::new(n_channels),
            train: TrainConfig::default(),
            scorer: ScorerConfig::default(),
            ablations: false,
        }
    }
}

/// Forecasts for every row of `dataset` from row `w_s` on.
pub fn forecast_series(model: &DgNcdeModel, dataset: &SeriesDataset) -> Result<Vec<Vec<f64>>> {
    let w_s = model.config().window;
    let mut out = Vec::with_capacity(dataset.len().saturating_sub(w_s));
    // bounded memory: windows are built per chunk
    let rows: Vec<usize> = (w_s..dataset.len()).collect();
    for chunk in rows.chunks(512) {
        let windows: Vec<_> = chunk.iter().map(|&r| window_at(dataset, r, w_s)).collect();
        out.extend(model.forecast_batch(&windows)?);
    }
    Ok(out)
}

/// The last `w_s` training rows stacked on the test rows, timestamps
/// taken from the test set.
fn with_context(train_set: &SeriesDataset, test_set: &SeriesDataset, w_s: usize) -> Result<SeriesDataset> {
    let n = train_set.n_channels();
    if test_set.n_channels() != n {
        return Err(Error::arg("train and test channel counts differ"));
    }
    if train_set.len() < w_s {
        return Err(Error::arg("training series shorter than the window"));
    }
    let tail = train_set.len() - w_s;
    let mut values = train_set.values().as_slice()[tail * n..].to_vec();
    values.extend_from_slice(test_set.values().as_slice());
    let mut mask = train_set.mask().as_slice()[tail * n..].to_vec();
    mask.extend_from_slice(test_set.mask().as_slice());
    let t = w_s + test_set.len();
    SeriesDataset::new(
        Matrix::from_vec(t, n, values),
        Mask::from_vec(t, n, mask)?,
        None,
        test_set.channel_names().to_vec(),
        test_set.start_index() - w_s as i64,
    )
}

/// One forecast per test row, using the training tail as context.
pub fn forecast_test(model: &DgNcdeModel, train_set: &SeriesDataset, test_set: &SeriesDataset) -> Result<Vec<Vec<f64>>> {
    forecast_series(model, &with_context(train_set, test_set, model.config().window)?)
}

/// Seeds a Gaussian scorer with training forecasts and streams the test
/// forecasts through it.
pub fn gaussian_scores(history: &[Vec<f64>], test: &[Vec<f64>], n_channels: usize, cfg: &ScorerConfig) -> ScorerReport {
    let window = cfg.window.min(history.len() + test.len()).max(1);
    let mut state = GaussianScorerState::new(n_channels, window, cfg.sigma_floor);
    state.seed(history);
    state.score_stream(test)
}

/// Everything needed to score a test series with a trained model.
#[derive(Debug, Clone)]
pub struct ScoringRun {
    pub train_forecasts: Vec<Vec<f64>>,
    pub test_forecasts: Vec<Vec<f64>>,
    pub gaussian: ScorerReport,
}

/// Forecasts the (normalized) training series and the test series and
/// computes Gaussian scores. Ground truth is not read beyond the model
/// inputs.
pub fn score_test(
    model: &DgNcdeModel,
    train_set: &SeriesDataset,
    test_set: &SeriesDataset,
    cfg: &ScorerConfig,
) -> Result<ScoringRun> {
    let train_forecasts = forecast_series(model, train_set)?;
    let test_forecasts = forecast_test(model, train_set, test_set)?;
    let gaussian = gaussian_scores(&train_forecasts, &test_forecasts, model.config().n_channels, cfg);
    Ok(ScoringRun { train_forecasts, test_forecasts, gaussian })
}

/// Rows of `series` targeted by the last `n_val` forecasts in `forecasts`.
fn validation_part<'a>(forecasts: &'a [Vec<f64>], series: &SeriesDataset, val_rows: usize) -> (&'a [Vec<f64>], usize) {
    let k = val_rows.min(forecasts.len());
    (&forecasts[forecasts.len() - k..], series.len() - k)
}

fn deviations(forecasts: &[Vec<f64>], series: &SeriesDataset, first_row: usize) -> (Vec<Vec<f64>>, Vec<Vec<bool>>) {
    let n = series.n_channels();
    let mut dev = Vec::with_capacity(forecasts.len());
    let mut obs = Vec::with_capacity(forecasts.len());
    for (k, f) in forecasts.iter().enumerate() {
        let r = first_row + k;
        dev.push((0..n).map(|c| series.observed(r, c).map_or(0.0, |y| f[c] - y)).collect());
        obs.push(series.mask().row(r).to_vec());
    }
    (dev, obs)
}

/// PCA reconstruction scores of forecast deviations. Fit on the
/// validation tail of the training series.
pub fn pca_scores(run: &ScoringRun, train_set: &SeriesDataset, test_set: &SeriesDataset, val_ratio: f64, cfg: &ScorerConfig) -> Result<Vec<f64>> {
    let n = train_set.n_channels();
    let n_val = libm::round(train_set.len() as f64 * val_ratio) as usize;
    let (val_f, first) = validation_part(&run.train_forecasts, train_set, n_val);
    let (val_dev, val_obs) = deviations(val_f, train_set, first);
    let observed_cols: Vec<Vec<f64>> = (0..n)
        .map(|c| val_dev.iter().zip(&val_obs).filter(|(_, o)| o[c]).map(|(d, _)| d[c]).collect())
        .collect();
    let scaler = RobustScaler::fit(&observed_cols);
    let scaled: Vec<Vec<f64>> = val_dev.iter().map(|d| scaler.transform_row(d)).collect();
    let q = cfg.pca_components.unwrap_or_else(|| Ppca::default_components(n));
    let ppca = Ppca::fit(&scaled, Some(&val_obs), q)?;
    let (test_dev, test_obs) = deviations(&run.test_forecasts, test_set, 0);
    Ok(test_dev.iter().zip(&test_obs).map(|(d, o)| ppca.score(&scaler.transform_row(d), o)).collect())
}

/// Distance of each normalized test forecast to the nearest validation
/// cluster centroid.
pub fn kmeans_scores(run: &ScoringRun, train_set: &SeriesDataset, val_ratio: f64, seed: u64, cfg: &ScorerConfig) -> Result<Vec<f64>> {
    let n = train_set.n_channels();
    let n_val = libm::round(train_set.len() as f64 * val_ratio) as usize;
    let (val_f, _) = validation_part(&run.train_forecasts, train_set, n_val);
    let cols: Vec<Vec<f64>> = (0..n).map(|c| val_f.iter().map(|f| f[c]).collect()).collect();
    let scaler = RobustScaler::fit(&cols);
    let points: Vec<Vec<f64>> = val_f.iter().map(|f| scaler.transform_row(f)).collect();
    let km = KMeansScorer::fit(&points, cfg.kmeans_max_k, cfg.kmeans_restarts, seed)?;
    Ok(run.test_forecasts.iter().map(|f| km.score(&scaler.transform_row(f))).collect())
}

/// Masked, normalized copies of a train/test pair.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: SeriesDataset,
    pub test: SeriesDataset,
    pub normalizer: Normalizer,
}

/// Drops entries at `rate` (train mask from `seed`, test mask from
/// `seed ^ TEST_MASK_SEED_XOR`) and min-max normalizes both sets with
/// bounds fit on the masked training set.
pub fn prepare(train_set: &SeriesDataset, test_set: &SeriesDataset, rate: f64, seed: u64) -> Result<Prepared> {
    let n = train_set.n_channels();
    let train_mask = generate_mask(train_set.len(), n, rate, seed)?;
    let test_mask = generate_mask(test_set.len(), test_set.n_channels(), rate, seed ^ TEST_MASK_SEED_XOR)?;
    let train_masked = apply_mask(train_set, &train_mask)?;
    let test_masked = apply_mask(test_set, &test_mask)?;
    let normalizer = fit_normalizer(&train_masked);
    Ok(Prepared {
        train: normalizer.normalize(&train_masked)?,
        test: normalizer.normalize(&test_masked)?,
        normalizer,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub gaussian: EvalReport,
    pub pca: Option<EvalReport>,
    pub kmeans: Option<EvalReport>,
    pub history: TrainHistory,
    pub scores: Vec<f64>,
}

/// One (missing rate, seed) cell: mask, train a fresh model, score the
/// test set and evaluate against `test_set`'s labels.
pub fn run_experiment(
    train_set: &SeriesDataset,
    test_set: &SeriesDataset,
    rate: f64,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult> {
    let labels = test_set.labels().ok_or_else(|| Error::arg("test set has no labels"))?.to_vec();
    let prepared = prepare(train_set, test_set, rate, seed)?;
    let model = DgNcdeModel::new(cfg.model.clone(), seed)?;
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let (model, history) = train(model, &prepared.train, &train_cfg)?;
    let run = score_test(&model, &prepared.train, &prepared.test, &cfg.scorer)?;
    let gaussian = evaluate(&run.gaussian.scores, &labels)?;
    let (pca, kmeans) = if cfg.ablations {
        let p = pca_scores(&run, &prepared.train, &prepared.test, train_cfg.val_ratio, &cfg.scorer)?;
        let k = kmeans_scores(&run, &prepared.train, train_cfg.val_ratio, seed, &cfg.scorer)?;
        (Some(evaluate(&p, &labels)?), Some(evaluate(&k, &labels)?))
    } else {
        (None, None)
    };
    Ok(ExperimentResult { gaussian, pca, kmeans, history, scores: run.gaussian.scores })
}
