//! Flat `key=value` run configuration.
//!
//! One assignment per line; `#` starts a comment. Unknown and repeated keys
//! are errors, and every value goes through a typed parse.

use std::path::{Path, PathBuf};

use gstpro_core::model::ModelConfig;
use gstpro_core::pipeline::{ExperimentConfig, ScorerConfig};
use gstpro_core::solver::Solver;
use gstpro_core::train::TrainConfig;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `n_channels` is taken from the data at run time.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub scorer: ScorerConfig,
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub labels_path: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::new(0),
            train: TrainConfig::default(),
            scorer: ScorerConfig::default(),
            train_path: None,
            test_path: None,
            labels_path: None,
            out: None,
        }
    }
}

/// Every accepted key with a short description.
pub const KEYS: &[(&str, &str)] = &[
    ("window", "sliding window length w_s"),
    ("hidden_h", "spatial hidden width d_h"),
    ("hidden_z", "temporal hidden width d_z"),
    ("fc_hidden", "width of hidden fully connected layers"),
    ("fc_layers", "hidden layers per fully connected stack"),
    ("embed_dim", "node embedding width"),
    ("solver", "euler or rk4"),
    ("steps_per_unit", "solver steps per unit of window time"),
    ("include_time_channel", "add time as a control channel (true/false)"),
    ("shared_temporal", "share one temporal stack across nodes (true/false)"),
    ("epochs", "maximum training epochs"),
    ("patience", "epochs without validation improvement before stopping"),
    ("batch_size", "windows per optimizer step"),
    ("lr", "Adam learning rate"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("weight_decay", "L2 penalty added to gradients"),
    ("clip_norm", "global gradient norm cap"),
    ("val_ratio", "trailing fraction of training rows used for validation"),
    ("seed", "model initialization and shuffling seed"),
    ("score_window", "rolling scorer window W (capped at available forecasts)"),
    ("sigma_floor", "lower bound on the rolling standard deviation"),
    ("pca_components", "PPCA components for the ablation scorer (auto = min(N-1, 8))"),
    ("kmeans_max_k", "largest K tried by the k-means ablation scorer"),
    ("kmeans_restarts", "k-means restarts per K"),
    ("train", "training series CSV"),
    ("test", "test series CSV"),
    ("labels", "test labels CSV"),
    ("out", "output path"),
];

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?} as a number"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(format!("expected true or false, found {v:?}")),
    }
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(String::new, |p| p.display().to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::Line { line: line_no, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            cfg.set(key, value).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let (m, t, s) = (&mut self.model, &mut self.train, &mut self.scorer);
        match key {
            "window" => m.window = parse_num(v)?,
            "hidden_h" => m.hidden_h = parse_num(v)?,
            "hidden_z" => m.hidden_z = parse_num(v)?,
            "fc_hidden" => m.fc_hidden = parse_num(v)?,
            "fc_layers" => m.fc_layers = parse_num(v)?,
            "embed_dim" => m.embed_dim = parse_num(v)?,
            "solver" => m.solver = Solver::parse(v).ok_or_else(|| format!("unknown solver {v:?}"))?,
            "steps_per_unit" => m.steps_per_unit = parse_num(v)?,
            "include_time_channel" => m.include_time_channel = parse_bool(v)?,
            "shared_temporal" => m.shared_temporal = parse_bool(v)?,
            "epochs" => t.epochs = parse_num(v)?,
            "patience" => t.patience = parse_num(v)?,
            "batch_size" => t.batch_size = parse_num(v)?,
            "lr" => t.lr = parse_num(v)?,
            "beta1" => t.beta1 = parse_num(v)?,
            "beta2" => t.beta2 = parse_num(v)?,
            "weight_decay" => t.weight_decay = parse_num(v)?,
            "clip_norm" => t.clip_norm = parse_num(v)?,
            "val_ratio" => t.val_ratio = parse_num(v)?,
            "seed" => t.seed = parse_num(v)?,
            "score_window" => s.window = parse_num(v)?,
            "sigma_floor" => s.sigma_floor = parse_num(v)?,
            "pca_components" => s.pca_components = if v == "auto" { None } else { Some(parse_num(v)?) },
            "kmeans_max_k" => s.kmeans_max_k = parse_num(v)?,
            "kmeans_restarts" => s.kmeans_restarts = parse_num(v)?,
            "train" => self.train_path = Some(PathBuf::from(v)),
            "test" => self.test_path = Some(PathBuf::from(v)),
            "labels" => self.labels_path = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let (m, t, s) = (&self.model, &self.train, &self.scorer);
        Some(match key {
            "window" => m.window.to_string(),
            "hidden_h" => m.hidden_h.to_string(),
            "hidden_z" => m.hidden_z.to_string(),
            "fc_hidden" => m.fc_hidden.to_string(),
            "fc_layers" => m.fc_layers.to_string(),
            "embed_dim" => m.embed_dim.to_string(),
            "solver" => m.solver.name().to_string(),
            "steps_per_unit" => m.steps_per_unit.to_string(),
            "include_time_channel" => m.include_time_channel.to_string(),
            "shared_temporal" => m.shared_temporal.to_string(),
            "epochs" => t.epochs.to_string(),
            "patience" => t.patience.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "lr" => t.lr.to_string(),
            "beta1" => t.beta1.to_string(),
            "beta2" => t.beta2.to_string(),
            "weight_decay" => t.weight_decay.to_string(),
            "clip_norm" => t.clip_norm.to_string(),
            "val_ratio" => t.val_ratio.to_string(),
            "seed" => t.seed.to_string(),
            "score_window" => s.window.to_string(),
            "sigma_floor" => s.sigma_floor.to_string(),
            "pca_components" => s.pca_components.map_or_else(|| "auto".into(), |q| q.to_string()),
            "kmeans_max_k" => s.kmeans_max_k.to_string(),
            "kmeans_restarts" => s.kmeans_restarts.to_string(),
            "train" => show_path(&self.train_path),
            "test" => show_path(&self.test_path),
            "labels" => show_path(&self.labels_path),
            "out" => show_path(&self.out),
            _ => return None,
        })
    }

    /// The configuration as a parseable document.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            let v = self.get(key).unwrap_or_default();
            if !v.is_empty() {
                out.push_str(&format!("{key}={v}\n"));
            }
        }
        out
    }

    /// Model config for `n_channels`, validated together with the
    /// training and scorer settings.
    pub fn experiment(&self, n_channels: usize) -> Result<ExperimentConfig, ConfigError> {
        let model = ModelConfig { n_channels, ..self.model.clone() };
        model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.scorer.window == 0 || !(self.scorer.sigma_floor > 0.0) {
            return Err(ConfigError::Invalid("score_window and sigma_floor must be positive".into()));
        }
        Ok(ExperimentConfig { model, train: self.train.clone(), scorer: self.scorer.clone(), ablations: false })
    }
}

/// `--help` text listing every key and its default.
pub fn help_text() -> String {
    let defaults = RunConfig::default();
    let mut out = String::from("Config file keys (key=value, # comments) and defaults:\n");
    for (key, desc) in KEYS {
        let v = defaults.get(key).unwrap_or_default();
        let v = if v.is_empty() { "(unset)".to_string() } else { v };
        out.push_str(&format!("  {key:<22} {v:<10} {desc}\n"));
    }
    out
}
