//! Command-line driver.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use gstpro_core::metrics::{evaluate, mean_std};
use gstpro_core::model::DgNcdeModel;
use gstpro_core::pipeline::{run_experiment, score_test};
use gstpro_core::series::{apply_mask, fit_normalizer, generate_mask, SeriesDataset};
use gstpro_core::synth::synth_generate;
use gstpro_core::train::train;

use crate::checkpoint::Checkpoint;
use crate::config::{help_text, RunConfig};
use crate::io;

#[derive(Debug, Parser)]
#[command(name = "gstpro", version, about = "Spatiotemporal neural CDE forecasting and forecast-only anomaly scoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark: train.csv, test.csv, labels.csv.
    Synth {
        #[arg(long, default_value_t = 5)]
        channels: usize,
        #[arg(long = "train-len", default_value_t = 3000)]
        train_len: usize,
        #[arg(long = "test-len", default_value_t = 2000)]
        test_len: usize,
        #[arg(long, default_value_t = 4)]
        segments: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop entries at random and write the masked series and its mask.
    Mask {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Mask file (default: OUT with `.mask.csv` in place of `.csv`).
        #[arg(long = "mask-out")]
        mask_out: Option<PathBuf>,
    },
    /// Train a forecaster and write a checkpoint plus history CSV.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// History CSV (default: OUT with `.history.csv` appended).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Score a test series from forecasts. Labels are never read.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Scorer settings (score_window, sigma_floor).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write per-channel likelihoods.
        #[arg(long = "channels-out")]
        channels_out: Option<PathBuf>,
    },
    /// ROC-AUC and PRC-AUC of scores against labels.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// mask, train, score and eval for every (rate, seed) pair.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Comma-separated missing rates.
        #[arg(long, default_value = "0,0.1,0.3,0.5,0.7,0.9")]
        rates: String,
        /// `A..B` (inclusive) or a comma-separated list.
        #[arg(long, default_value = "1..5")]
        seeds: String,
        /// Output directory for sweep.csv and summary.txt.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional chart of mean AUC against missing rate; `.svg` gives SVG,
        /// anything else plain text.
        #[arg(long)]
        chart: Option<PathBuf>,
    },
}

pub fn command() -> clap::Command {
    let keys = help_text();
    let mut cmd = Cli::command().after_help(keys.clone());
    for sub in ["train", "score", "sweep"] {
        cmd = cmd.mut_subcommand(sub, |c| c.after_help(keys.clone()));
    }
    cmd
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command().try_get_matches_from(args).map_err(|e| {
        if e.use_stderr() {
            anyhow::Error::new(e)
        } else {
            // --help / --version
            let _ = e.print();
            std::process::exit(0)
        }
    })?;
    let cli = Cli::from_arg_matches(&matches)?;
    execute(cli.command)
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { channels, train_len, test_len, segments, seed, out } => {
            synth(channels, train_len, test_len, segments, seed, &out)
        }
        Command::Mask { input, rate, seed, out, mask_out } => mask(&input, rate, seed, &out, mask_out),
        Command::Train { config, train, out, history } => train_cmd(config, train, out, history),
        Command::Score { model, train, test, out, config, channels_out } => {
            score(&model, &train, &test, &out, config, channels_out)
        }
        Command::Eval { scores, labels, out } => eval(&scores, &labels, &out),
        Command::Sweep { config, train, test, labels, rates, seeds, out, chart } => {
            sweep(config, train, test, labels, &rates, &seeds, out, chart)
        }
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_series(path: &Path) -> Result<SeriesDataset> {
    io::load_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p).with_context(|| format!("config {}", p.display()))?),
        None => Ok(RunConfig::default()),
    }
}

fn pick(flag: Option<PathBuf>, from_config: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| from_config.clone()).with_context(|| format!("no {what} path given (flag or config key)"))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let s = path.to_string_lossy();
    PathBuf::from(match s.strip_suffix(".csv") {
        Some(stem) => format!("{stem}{suffix}"),
        None => format!("{s}{suffix}"),
    })
}

fn synth(channels: usize, train_len: usize, test_len: usize, segments: usize, seed: u64, out: &Path) -> Result<()> {
    let (train_set, test_set) = synth_generate(channels, train_len, test_len, segments, seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    io::save_csv(&out.join("train.csv"), &train_set)?;
    io::save_csv(&out.join("test.csv"), &test_set)?;
    let mut buf = Vec::new();
    io::write_labels(&mut buf, test_set.start_index(), test_set.labels().unwrap_or_default())?;
    write_file(&out.join("labels.csv"), buf)
}

fn mask(input: &Path, rate: f64, seed: u64, out: &Path, mask_out: Option<PathBuf>) -> Result<()> {
    let ds = load_series(input)?;
    let m = generate_mask(ds.len(), ds.n_channels(), rate, seed)?;
    let masked = apply_mask(&ds, &m)?;
    io::save_csv(out, &masked)?;
    let mut buf = Vec::new();
    io::write_mask(&mut buf, &masked)?;
    write_file(&mask_out.unwrap_or_else(|| with_suffix(out, ".mask.csv")), buf)
}

fn train_cmd(config: Option<PathBuf>, train_path: Option<PathBuf>, out: Option<PathBuf>, history: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config.as_deref())?;
    let train_path = pick(train_path, &cfg.train_path, "training series")?;
    let out = pick(out, &cfg.out, "model output")?;
    let raw = load_series(&train_path)?;
    let exp = cfg.experiment(raw.n_channels())?;
    let normalizer = fit_normalizer(&raw);
    let data = normalizer.normalize(&raw)?;
    let model = DgNcdeModel::new(exp.model, exp.train.seed)?;
    let (model, hist) = train(model, &data, &exp.train).context("training failed")?;
    Checkpoint { model, normalizer }.save(&out).with_context(|| format!("writing {}", out.display()))?;
    let mut buf = Vec::new();
    io::write_history(&mut buf, &hist)?;
    write_file(&history.unwrap_or_else(|| PathBuf::from(format!("{}.history.csv", out.display()))), buf)
}

fn score(model: &Path, train_path: &Path, test_path: &Path, out: &Path, config: Option<PathBuf>, channels_out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config.as_deref())?;
    let ck = Checkpoint::load(model).with_context(|| format!("reading {}", model.display()))?;
    let train_set = ck.normalizer.normalize(&load_series(train_path)?)?;
    let test_set = ck.normalizer.normalize(&load_series(test_path)?)?;
    let run = score_test(&ck.model, &train_set, &test_set, &cfg.scorer)?;
    let mut buf = Vec::new();
    io::write_scores(&mut buf, test_set.start_index(), &run.gaussian.scores)?;
    write_file(out, buf)?;
    if let Some(path) = channels_out {
        let mut buf = Vec::new();
        io::write_channel_scores(&mut buf, test_set.start_index(), test_set.channel_names(), &run.gaussian.likelihoods)?;
        write_file(&path, buf)?;
    }
    Ok(())
}

fn eval(scores: &Path, labels: &Path, out: &Path) -> Result<()> {
    let (s_start, scores) = io::read_scores(fs::File::open(scores)?).with_context(|| format!("reading {}", scores.display()))?;
    let (l_start, labels) = io::read_labels(fs::File::open(labels)?).with_context(|| format!("reading {}", labels.display()))?;
    if s_start != l_start || scores.len() != labels.len() {
        bail!(
            "scores cover timestamps {s_start}..{} but labels cover {l_start}..{}",
            s_start + scores.len() as i64,
            l_start + labels.len() as i64
        );
    }
    let report = evaluate(&scores, &labels)?;
    write_file(out, io::format_report(&report))
}

pub fn parse_rates(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|r| {
            let v: f64 = r.trim().parse().with_context(|| format!("bad rate {r:?}"))?;
            if !(0.0..=1.0).contains(&v) {
                bail!("rate {v} outside [0, 1]");
            }
            Ok(v)
        })
        .collect()
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().with_context(|| format!("bad seed range {s:?}"))?;
        let b: u64 = b.trim().parse().with_context(|| format!("bad seed range {s:?}"))?;
        if a > b {
            bail!("empty seed range {s:?}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().with_context(|| format!("bad seed {x:?}"))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rate: f64,
    pub seed: u64,
    pub roc_auc: f64,
    pub prc_auc: f64,
}

/// Per-rate `(rate, roc mean, roc std, prc mean, prc std)`, rates in
/// first-seen order.
pub fn summarize(rows: &[SweepRow]) -> Vec<(f64, f64, f64, f64, f64)> {
    let mut rates: Vec<f64> = Vec::new();
    for r in rows {
        if !rates.contains(&r.rate) {
            rates.push(r.rate);
        }
    }
    rates
        .into_iter()
        .map(|rate| {
            let roc: Vec<f64> = rows.iter().filter(|r| r.rate == rate).map(|r| r.roc_auc).collect();
            let prc: Vec<f64> = rows.iter().filter(|r| r.rate == rate).map(|r| r.prc_auc).collect();
            let (rm, rs) = mean_std(&roc);
            let (pm, ps) = mean_std(&prc);
            (rate, rm, rs, pm, ps)
        })
        .collect()
}

pub fn text_chart(summary: &[(f64, f64, f64, f64, f64)]) -> String {
    const WIDTH: usize = 50;
    let mut out = String::from("mean ROC-AUC (#) and PRC-AUC (*) by missing rate\n");
    for &(rate, roc, _, prc, _) in summary {
        let bar = |v: f64| (v.clamp(0.0, 1.0) * WIDTH as f64).round() as usize;
        writeln!(out, "{rate:>5.2} roc |{:<WIDTH$}| {roc:.3}", "#".repeat(bar(roc))).unwrap();
        writeln!(out, "{:>5} prc |{:<WIDTH$}| {prc:.3}", "", "*".repeat(bar(prc))).unwrap();
    }
    out
}

pub fn svg_chart(summary: &[(f64, f64, f64, f64, f64)]) -> String {
    let (w, h, m) = (480.0, 320.0, 40.0);
    let x = |rate: f64| m + rate * (w - 2.0 * m);
    let y = |v: f64| h - m - v.clamp(0.0, 1.0) * (h - 2.0 * m);
    let line = |pick: fn(&(f64, f64, f64, f64, f64)) -> f64| {
        summary.iter().map(|s| format!("{:.1},{:.1}", x(s.0), y(pick(s)))).collect::<Vec<_>>().join(" ")
    };
    let mut out = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n");
    writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>").unwrap();
    writeln!(out, "<line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>", h - m, w - m, h - m).unwrap();
    writeln!(out, "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>", h - m).unwrap();
    for t in [0.0, 0.5, 1.0] {
        writeln!(out, "<text x=\"{:.1}\" y=\"{}\" font-size=\"10\">{t}</text>", x(t) - 6.0, h - m + 14.0).unwrap();
        writeln!(out, "<text x=\"8\" y=\"{:.1}\" font-size=\"10\">{t}</text>", y(t) + 3.0).unwrap();
    }
    writeln!(out, "<text x=\"{}\" y=\"{}\" font-size=\"11\">missing rate</text>", w / 2.0 - 30.0, h - 8.0).unwrap();
    writeln!(out, "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>", line(|s| s.1)).unwrap();
    writeln!(out, "<polyline fill=\"none\" stroke=\"darkorange\" stroke-width=\"2\" points=\"{}\"/>", line(|s| s.3)).unwrap();
    writeln!(out, "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"steelblue\">ROC-AUC</text>", w - 110.0, m - 20.0).unwrap();
    writeln!(out, "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"darkorange\">PRC-AUC</text>", w - 110.0, m - 6.0).unwrap();
    out.push_str("</svg>\n");
    out
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    config: Option<PathBuf>,
    train_path: Option<PathBuf>,
    test_path: Option<PathBuf>,
    labels_path: Option<PathBuf>,
    rates: &str,
    seeds: &str,
    out: Option<PathBuf>,
    chart: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(config.as_deref())?;
    let train_set = load_series(&pick(train_path, &cfg.train_path, "training series")?)?;
    let test_set = load_series(&pick(test_path, &cfg.test_path, "test series")?)?;
    let labels_path = pick(labels_path, &cfg.labels_path, "labels")?;
    let out = pick(out, &cfg.out, "output directory")?;
    let (l_start, labels) = io::read_labels(fs::File::open(&labels_path)?)?;
    if l_start != test_set.start_index() || labels.len() != test_set.len() {
        bail!("labels do not cover the test series timestamps");
    }
    let test_set = test_set.with_labels(Some(labels))?;
    let exp = cfg.experiment(train_set.n_channels())?;
    let (rates, seeds) = (parse_rates(rates)?, parse_seeds(seeds)?);

    let mut rows = Vec::new();
    for &rate in &rates {
        for &seed in &seeds {
            let r = run_experiment(&train_set, &test_set, rate, seed, &exp)
                .with_context(|| format!("rate {rate}, seed {seed}"))?;
            rows.push(SweepRow { rate, seed, roc_auc: r.gaussian.roc_auc, prc_auc: r.gaussian.prc_auc });
        }
    }
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut table = String::from("rate,seed,roc_auc,prc_auc\n");
    for r in &rows {
        writeln!(table, "{},{},{},{}", r.rate, r.seed, r.roc_auc, r.prc_auc).unwrap();
    }
    write_file(&out.join("sweep.csv"), table)?;
    let summary = summarize(&rows);
    let mut text = String::new();
    for &(rate, rm, rs, pm, ps) in &summary {
        writeln!(text, "rate={rate} roc_auc={rm:.4}±{rs:.4} prc_auc={pm:.4}±{ps:.4}").unwrap();
    }
    write_file(&out.join("summary.txt"), text)?;
    if let Some(path) = chart {
        let is_svg = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("svg"));
        write_file(&path, if is_svg { svg_chart(&summary) } else { text_chart(&summary) })?;
    }
    Ok(())
}
