//! Experiment harness: configuration, dataset files, CSV summaries and the
//! `gen`, `train`, `eval` and `sweep` commands.

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::cp::{DecomposeConfig, PowerConfig, WhiteningSource};
use crate::error::{invalid, Error, Result, Stage};
use crate::fourier::{BiasWindow, FourierConfig};
use crate::pipeline::{
    evaluate_realizable, evaluate_target, generate_kernel_target, generate_realizable, risk, sub_seed, train, Dataset,
    ExperimentReport, KernelMixtureTarget, LabelMode, NetworkParams, RiskEstimate, TrainConfig,
};
use crate::regression::RegressionConfig;
use crate::score::GaussianDensity;

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "NNLIFT_OUT_DIR";
pub const DATASET_MAGIC: &[u8; 8] = b"NNLIFTDS";
pub const DATASET_VERSION: u32 = 1;
pub const CSV_SCHEMA_VERSION: u32 = 1;
/// Columns of the summary and sweep tables, in order.
pub const CSV_COLUMNS: [&str; 17] = [
    "schema_version",
    "status",
    "target",
    "seed",
    "d",
    "k",
    "n",
    "max_column_error",
    "mean_column_error",
    "max_bias_error",
    "risk",
    "risk_se",
    "target_variance",
    "relative_risk",
    "lambda",
    "wall_time",
    "message",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Gen,
    #[default]
    Train,
    Eval,
    Sweep,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    #[default]
    Realizable,
    KernelMixture,
}

fn default_sigma() -> f64 {
    1.0
}

fn default_labels() -> LabelMode {
    LabelMode::Continuous { noise: 0.01 }
}

fn default_activation() -> Activation {
    Activation::Step
}

fn default_components() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    #[serde(default = "default_sigma")]
    pub sigma_x: f64,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub target: TargetKind,
    #[serde(default = "default_labels")]
    pub labels: LabelMode,
    /// Mixture size for kernel targets.
    #[serde(default = "default_components")]
    pub components: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WhiteningChoice {
    #[default]
    SecondMoment,
    Contracted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionSettings {
    pub iterations: usize,
    /// Restarts per component; omitted means `10 k`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    pub tol: f64,
    pub eigen_floor: f64,
    pub whitening: WhiteningChoice,
    pub sign_repair: bool,
}

impl Default for DecompositionSettings {
    fn default() -> Self {
        let d = DecomposeConfig::default();
        Self {
            iterations: d.power.iterations,
            restarts: d.power.restarts,
            tol: d.power.tol,
            eigen_floor: d.eigen_floor,
            whitening: WhiteningChoice::SecondMoment,
            sign_repair: d.sign_repair,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowChoice {
    #[default]
    AlignedTaper,
    DensityFloor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourierSettings {
    /// Cap parameter; omitted means `max(1/sqrt(n), 1e-3)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub psi: f64,
    pub window: WindowChoice,
    pub two_sided: bool,
    pub phase_floor: f64,
}

impl Default for FourierSettings {
    fn default() -> Self {
        let f = FourierConfig::default();
        Self {
            eps: f.eps,
            psi: f.psi,
            window: WindowChoice::AlignedTaper,
            two_sided: f.two_sided,
            phase_floor: f.phase_floor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionSettings {
    pub lambda_grid: Vec<f64>,
    pub relative: bool,
    pub holdout: f64,
}

impl Default for RegressionSettings {
    fn default() -> Self {
        let r = RegressionConfig::default();
        Self {
            lambda_grid: r.lambda_grid,
            relative: r.relative,
            holdout: r.holdout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Fresh Monte-Carlo points for risk.
    pub n_mc: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { n_mc: 10_000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    /// Sample sizes; empty means the data section's `n`.
    pub n: Vec<usize>,
    /// Widths; empty means the data section's `k`.
    pub k: Vec<usize>,
    /// Seeds per point; empty means the master seed.
    pub seeds: Vec<u64>,
    /// Worker threads for sweep points; 1 runs them in order.
    pub parallel: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub decomposition: DecompositionSettings,
    #[serde(default)]
    pub fourier: FourierSettings,
    #[serde(default)]
    pub regression: RegressionSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
    #[serde(default)]
    pub paths: PathSettings,
}

fn cfg_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Configuration(format!("`{field}`: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Configuration(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Configuration(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Configuration(e.to_string()))
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Configuration(e.to_string()))
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if json { Self::from_json_str(&text) } else { Self::from_toml_str(&text) };
        parsed.map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.d == 0 {
            return Err(cfg_err("data.d", "must be at least 1"));
        }
        if d.k == 0 {
            return Err(cfg_err("data.k", "must be at least 1"));
        }
        if d.k > d.d {
            return Err(cfg_err("data.k", format!("must not exceed data.d = {}", d.d)));
        }
        if d.n == 0 {
            return Err(cfg_err("data.n", "must be at least 1"));
        }
        if !(d.sigma_x > 0.0 && d.sigma_x.is_finite()) {
            return Err(cfg_err("data.sigma_x", "must be positive"));
        }
        if let LabelMode::Continuous { noise } = d.labels {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(cfg_err("data.labels.noise", "must be finite and nonnegative"));
            }
        }
        if d.target == TargetKind::KernelMixture && d.components == 0 {
            return Err(cfg_err("data.components", "must be at least 1"));
        }
        if matches!(d.activation, Activation::Linear) {
            return Err(cfg_err("data.activation", "linear has no usable spectrum"));
        }
        let dc = &self.decomposition;
        if dc.iterations == 0 {
            return Err(cfg_err("decomposition.iterations", "must be at least 1"));
        }
        if dc.restarts == Some(0) {
            return Err(cfg_err("decomposition.restarts", "must be at least 1"));
        }
        if !(dc.tol > 0.0) {
            return Err(cfg_err("decomposition.tol", "must be positive"));
        }
        if !(dc.eigen_floor >= 0.0 && dc.eigen_floor < 1.0) {
            return Err(cfg_err("decomposition.eigen_floor", "must lie in [0, 1)"));
        }
        let f = &self.fourier;
        if let Some(e) = f.eps {
            if !(e > 0.0 && e <= std::f64::consts::SQRT_2) {
                return Err(cfg_err("fourier.eps", "must lie in (0, sqrt 2]"));
            }
        }
        if !(f.psi >= 0.0 && f.psi < 1.0) {
            return Err(cfg_err("fourier.psi", "must lie in [0, 1)"));
        }
        if !(f.phase_floor >= 0.0) {
            return Err(cfg_err("fourier.phase_floor", "must be nonnegative"));
        }
        let r = &self.regression;
        if r.lambda_grid.is_empty() || r.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(cfg_err("regression.lambda_grid", "must be a nonempty list of nonnegative numbers"));
        }
        if !(r.holdout > 0.0 && r.holdout < 1.0) {
            return Err(cfg_err("regression.holdout", "must lie in (0, 1)"));
        }
        if self.eval.n_mc < 2 {
            return Err(cfg_err("eval.n_mc", "must be at least 2"));
        }
        if self.sweep.n.contains(&0) {
            return Err(cfg_err("sweep.n", "entries must be at least 1"));
        }
        if self.sweep.k.contains(&0) {
            return Err(cfg_err("sweep.k", "entries must be at least 1"));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let dc = &self.decomposition;
        let f = &self.fourier;
        let r = &self.regression;
        TrainConfig {
            decomposition: DecomposeConfig {
                power: PowerConfig {
                    iterations: dc.iterations,
                    restarts: dc.restarts,
                    tol: dc.tol,
                    seed: 0,
                },
                source: match dc.whitening {
                    WhiteningChoice::SecondMoment => WhiteningSource::SecondMoment,
                    WhiteningChoice::Contracted => WhiteningSource::Contracted { seed: 0 },
                },
                eigen_floor: dc.eigen_floor,
                sign_repair: dc.sign_repair,
            },
            fourier: FourierConfig {
                eps: f.eps,
                psi: f.psi,
                window: match f.window {
                    WindowChoice::AlignedTaper => BiasWindow::AlignedTaper {
                        flat: 1.0,
                        taper: 3.0,
                        transverse_scale: self.data.sigma_x,
                    },
                    WindowChoice::DensityFloor => BiasWindow::DensityFloor,
                },
                two_sided: f.two_sided,
                phase_floor: f.phase_floor,
                seed: 0,
            },
            regression: RegressionConfig {
                lambda_grid: r.lambda_grid.clone(),
                relative: r.relative,
                holdout: r.holdout,
                seed: 0,
            },
            ..TrainConfig::default()
        }
        .with_seed(self.seed)
    }
}

/// Input law recorded in a dataset header.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensityDescriptor {
    /// `N(0, sigma^2 I)`.
    Gaussian { sigma: f64 },
}

impl DensityDescriptor {
    pub fn gaussian(&self, d: usize) -> Result<GaussianDensity> {
        match *self {
            DensityDescriptor::Gaussian { sigma } => GaussianDensity::from_std(d, sigma),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Generator {
    Realizable {
        seed: u64,
        labels: LabelMode,
        params: NetworkParams,
    },
    KernelMixture {
        seed: u64,
        target: KernelMixtureTarget,
    },
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub version: u32,
    pub d: usize,
    pub n: usize,
    pub label_arity: usize,
    pub density: DensityDescriptor,
    pub generator: Generator,
}

/// Binary dataset: magic, `u32` version, `u32` header length, JSON header,
/// then `n` rows of `d + label_arity` little-endian `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub data: Dataset,
}

fn format_err(msg: impl Into<String>) -> Error {
    invalid(format!("dataset file: {}", msg.into()))
}

impl DatasetFile {
    pub fn new(density: DensityDescriptor, generator: Generator, data: Dataset) -> Self {
        Self {
            header: DatasetHeader {
                version: DATASET_VERSION,
                d: data.dim,
                n: data.len(),
                label_arity: 1,
                density,
                generator,
            },
            data,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        if h.n != self.data.len() || h.d != self.data.dim || h.label_arity != 1 {
            return Err(format_err("header does not describe the rows"));
        }
        let json = serde_json::to_vec(h).map_err(|e| format_err(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * h.n * (h.d + 1));
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for i in 0..h.n {
            for v in self.data.row(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&self.data.ys[i].to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != DATASET_MAGIC {
            return Err(format_err("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != DATASET_VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body_start = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| format_err("truncated header"))?;
        let header: DatasetHeader =
            serde_json::from_slice(&bytes[16..body_start]).map_err(|e| format_err(format!("header: {e}")))?;
        if header.version != version {
            return Err(format_err("header version disagrees with the preamble"));
        }
        if header.label_arity != 1 {
            return Err(format_err("only scalar labels are supported"));
        }
        if header.d == 0 {
            return Err(format_err("dimension must be positive"));
        }
        let width = header.d + header.label_arity;
        let body = &bytes[body_start..];
        let expected = header
            .n
            .checked_mul(width)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| format_err("row count overflows"))?;
        if body.len() != expected {
            return Err(format_err(format!(
                "body holds {} bytes, header promises {} rows of {} values",
                body.len(),
                header.n,
                width
            )));
        }
        let mut xs = Vec::with_capacity(header.n * header.d);
        let mut ys = Vec::with_capacity(header.n);
        for (c, chunk) in body.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            if c % width == header.d {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
        let data = Dataset::new(header.d, xs, ys)?;
        match header.density {
            DensityDescriptor::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                return Err(format_err("density scale must be positive"));
            }
            _ => {}
        }
        Ok(Self { header, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::InvalidArgument(m) => invalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Plain-text export with columns `x0..x{d-1},y`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut head: Vec<String> = (0..self.data.dim).map(|i| format!("x{i}")).collect();
        head.push("y".into());
        wr.write_record(&head).map_err(csv_err)?;
        for i in 0..self.data.len() {
            let mut rec: Vec<String> = self.data.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.data.ys[i].to_string());
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    invalid(format!("csv: {e}"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub status: String,
    pub target: TargetKind,
    pub seed: u64,
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub report: Option<ExperimentReport>,
    pub wall_time: f64,
    pub message: String,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SummaryRow {
    pub fn ok(target: TargetKind, report: ExperimentReport, wall_time: f64) -> Self {
        Self {
            status: "ok".into(),
            target,
            seed: report.seed,
            d: report.d,
            k: report.k,
            n: report.n,
            report: Some(report),
            wall_time,
            message: String::new(),
        }
    }

    pub fn failed(target: TargetKind, seed: u64, d: usize, k: usize, n: usize, err: &Error, wall_time: f64) -> Self {
        let status = match err.stage() {
            Some(s) => format!("error:{s}"),
            None => "error".into(),
        };
        Self {
            status,
            target,
            seed,
            d,
            k,
            n,
            report: None,
            wall_time,
            message: err.to_string(),
        }
    }

    pub fn record(&self) -> Vec<String> {
        let r = self.report.as_ref();
        vec![
            CSV_SCHEMA_VERSION.to_string(),
            self.status.clone(),
            match self.target {
                TargetKind::Realizable => "realizable".into(),
                TargetKind::KernelMixture => "kernel-mixture".into(),
            },
            self.seed.to_string(),
            self.d.to_string(),
            self.k.to_string(),
            self.n.to_string(),
            opt(r.and_then(|r| r.max_column_error())),
            opt(r.and_then(|r| r.mean_column_error())),
            opt(r.and_then(|r| r.max_bias_error())),
            opt(r.map(|r| r.risk.risk)),
            opt(r.map(|r| r.risk.std_error)),
            opt(r.map(|r| r.risk.target_variance)),
            opt(r.map(|r| r.risk.relative())),
            opt(r.map(|r| r.lambda)),
            self.wall_time.to_string(),
            self.message.clone(),
        ]
    }
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in rows {
        wr.write_record(r.record()).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

fn summary_bytes(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_summary(&mut buf, rows)?;
    Ok(buf)
}

/// Compares two summary tables field by field, ignoring `wall_time`.
/// Numeric fields match within `tol` relative to `max(1, |a|)`.
pub fn compare_summaries(a: &str, b: &str, tol: f64) -> std::result::Result<(), String> {
    let read = |s: &str| -> std::result::Result<Vec<csv::StringRecord>, String> {
        csv::Reader::from_reader(s.as_bytes())
            .records()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| e.to_string())
    };
    let head = |s: &str| -> std::result::Result<Vec<String>, String> {
        let mut r = csv::Reader::from_reader(s.as_bytes());
        Ok(r.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect())
    };
    let (ha, hb) = (head(a)?, head(b)?);
    if ha != hb {
        return Err(format!("column mismatch: {ha:?} vs {hb:?}"));
    }
    let (ra, rb) = (read(a)?, read(b)?);
    if ra.len() != rb.len() {
        return Err(format!("{} rows vs {}", ra.len(), rb.len()));
    }
    for (i, (x, y)) in ra.iter().zip(&rb).enumerate() {
        for (c, name) in ha.iter().enumerate() {
            if name == "wall_time" {
                continue;
            }
            let (u, v) = (&x[c], &y[c]);
            match (u.parse::<f64>(), v.parse::<f64>()) {
                (Ok(p), Ok(q)) => {
                    let same = (p.is_nan() && q.is_nan()) || (p - q).abs() <= tol * p.abs().max(1.0);
                    if !same {
                        return Err(format!("row {i} `{name}`: {u} vs {v}"));
                    }
                }
                _ if u == v => {}
                _ => return Err(format!("row {i} `{name}`: `{u}` vs `{v}`")),
            }
        }
    }
    Ok(())
}

/// Output directory: explicit flag, then the environment, then the config.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.paths.output.clone().unwrap_or_else(|| PathBuf::from("nnlift-out"))
}

/// Builds the dataset described by a config without touching disk.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<DatasetFile> {
    cfg.validate()?;
    let d = &cfg.data;
    let density = DensityDescriptor::Gaussian { sigma: d.sigma_x };
    match d.target {
        TargetKind::Realizable => {
            let (data, params) = generate_realizable(d.d, d.k, d.n, d.sigma_x, d.activation, d.labels, cfg.seed)?;
            let generator = Generator::Realizable {
                seed: cfg.seed,
                labels: d.labels,
                params,
            };
            Ok(DatasetFile::new(density, generator, data))
        }
        TargetKind::KernelMixture => {
            let target = KernelMixtureTarget::random(d.d, d.components, sub_seed(cfg.seed, 4));
            let data = generate_kernel_target(&target, d.d, d.n, d.sigma_x, cfg.seed)?;
            Ok(DatasetFile::new(density, Generator::KernelMixture { seed: cfg.seed, target }, data))
        }
    }
}

pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let file = generate_dataset(cfg)?;
    let path = out.join("dataset.nnds");
    file.save(&path)?;
    Ok(path)
}

/// Files written by `train`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainArtifacts {
    pub report: PathBuf,
    pub summary: PathBuf,
    pub model: PathBuf,
}

#[derive(Serialize)]
struct FullReport<'a> {
    config: &'a ExperimentConfig,
    params: &'a NetworkParams,
    report: &'a ExperimentReport,
}

fn target_kind(g: &Generator) -> TargetKind {
    match g {
        Generator::KernelMixture { .. } => TargetKind::KernelMixture,
        _ => TargetKind::Realizable,
    }
}

/// Risk on the dataset's own rows, for files without a known target.
fn empirical_risk(params: &NetworkParams, data: &Dataset) -> Result<RiskEstimate> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData("need two rows to estimate risk".into()));
    }
    let pred = params.eval_batch(&data.xs);
    let e: Vec<f64> = pred.iter().zip(&data.ys).map(|(p, y)| (p - y).powi(2)).collect();
    let m = n as f64;
    let r = e.iter().sum::<f64>() / m;
    let mean_y = data.ys.iter().sum::<f64>() / m;
    Ok(RiskEstimate {
        risk: r,
        std_error: (e.iter().map(|v| (v - r).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt(),
        target_variance: data.ys.iter().map(|y| (y - mean_y).powi(2)).sum::<f64>() / (m - 1.0),
        n,
    })
}

pub fn train_file(cfg: &ExperimentConfig, file: &DatasetFile) -> Result<(NetworkParams, ExperimentReport)> {
    let h = &file.header;
    let density = h.density.gaussian(h.d)?;
    let k = cfg.data.k;
    if k > h.d {
        return Err(cfg_err("data.k", format!("exceeds the dataset dimension {}", h.d)));
    }
    let mut tc = cfg.train_config();
    if let BiasWindow::AlignedTaper { transverse_scale, .. } = &mut tc.fourier.window {
        *transverse_scale = density.std_dev();
    }
    let out = train(&file.data, &density, k, cfg.data.activation, &tc)?;
    let mc_seed = cfg.seed;
    let n_mc = cfg.eval.n_mc;
    let report = match &h.generator {
        Generator::Realizable { params, .. } if params.width() == k => {
            evaluate_realizable(params, &out, &file.data, &density, n_mc, mc_seed)?
        }
        Generator::Realizable { params, .. } => {
            evaluate_target(|x| params.eval(x), &out, &file.data, &density, n_mc, mc_seed)?
        }
        Generator::KernelMixture { target, .. } => {
            evaluate_target(|x| target.eval(x), &out, &file.data, &density, n_mc, mc_seed)?
        }
        Generator::External => {
            let mut rep = evaluate_target(|_| 0.0, &out, &file.data, &density, 2, mc_seed)?;
            rep.risk = empirical_risk(&out.params, &file.data)?;
            rep
        }
    };
    Ok((out.params, report))
}

pub fn cmd_train(cfg: &ExperimentConfig, dataset: &Path, out: &Path) -> Result<TrainArtifacts> {
    cfg.validate()?;
    let file = DatasetFile::load(dataset)?;
    let clock = Instant::now();
    let (params, report) = train_file(cfg, &file)?;
    let wall = clock.elapsed().as_secs_f64();
    let full = FullReport {
        config: cfg,
        params: &params,
        report: &report,
    };
    let json = serde_json::to_vec_pretty(&full).map_err(|e| invalid(e.to_string()))?;
    let model = serde_json::to_vec_pretty(&params).map_err(|e| invalid(e.to_string()))?;
    let row = SummaryRow::ok(target_kind(&file.header.generator), report, wall);
    let csv = summary_bytes(&[row])?;
    let arts = TrainArtifacts {
        report: out.join("report.json"),
        summary: out.join("summary.csv"),
        model: out.join("model.json"),
    };
    write_atomic(&arts.report, &json)?;
    write_atomic(&arts.model, &model)?;
    write_atomic(&arts.summary, &csv)?;
    Ok(arts)
}

/// Risk of a saved model against a dataset's generator, or its rows when
/// the generator is unknown.
pub fn cmd_eval(cfg: &ExperimentConfig, model: &Path, dataset: &Path, out: &Path) -> Result<(PathBuf, RiskEstimate)> {
    cfg.validate()?;
    let text = fs::read_to_string(model)?;
    let params: NetworkParams =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", model.display())))?;
    let file = DatasetFile::load(dataset)?;
    if params.dim() != file.header.d {
        return Err(invalid("model and dataset dimensions differ"));
    }
    let density = file.header.density.gaussian(file.header.d)?;
    let seed = sub_seed(cfg.seed, 3);
    let n_mc = cfg.eval.n_mc;
    let est = match &file.header.generator {
        Generator::Realizable { params: truth, .. } => risk(|x| truth.eval(x), |x| params.eval(x), &density, n_mc, seed)?,
        Generator::KernelMixture { target, .. } => risk(|x| target.eval(x), |x| params.eval(x), &density, n_mc, seed)?,
        Generator::External => empirical_risk(&params, &file.data)?,
    };
    let path = out.join("eval.json");
    let json = serde_json::to_vec_pretty(&est).map_err(|e| invalid(e.to_string()))?;
    write_atomic(&path, &json)?;
    Ok((path, est))
}

/// Sweep points `(n, k)` in table order.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<(usize, usize, u64)> {
    let ns = if cfg.sweep.n.is_empty() { vec![cfg.data.n] } else { cfg.sweep.n.clone() };
    let ks = if cfg.sweep.k.is_empty() { vec![cfg.data.k] } else { cfg.sweep.k.clone() };
    let seeds = if cfg.sweep.seeds.is_empty() { vec![cfg.seed] } else { cfg.sweep.seeds.clone() };
    let mut out = Vec::new();
    for &n in &ns {
        for &k in &ks {
            for &s in &seeds {
                out.push((n, k, s));
            }
        }
    }
    out
}

fn sweep_row(cfg: &ExperimentConfig, n: usize, k: usize, seed: u64) -> SummaryRow {
    let clock = Instant::now();
    let mut point = cfg.clone();
    point.data.n = n;
    point.data.k = k;
    point.seed = seed;
    let target = cfg.data.target;
    let run = || -> Result<ExperimentReport> {
        // the generator needs k columns; the width check lives in training
        let mut gen_cfg = point.clone();
        if gen_cfg.data.target == TargetKind::KernelMixture || gen_cfg.data.k > gen_cfg.data.d {
            gen_cfg.data.k = gen_cfg.data.k.min(gen_cfg.data.d);
        }
        let file = generate_dataset(&gen_cfg)?;
        let mut tc = point.train_config();
        if let BiasWindow::AlignedTaper { transverse_scale, .. } = &mut tc.fourier.window {
            *transverse_scale = point.data.sigma_x;
        }
        let density = file.header.density.gaussian(point.data.d)?;
        let out = train(&file.data, &density, k, point.data.activation, &tc)?;
        let mc = seed;
        match &file.header.generator {
            Generator::Realizable { params, .. } if params.width() == k => {
                evaluate_realizable(params, &out, &file.data, &density, point.eval.n_mc, mc)
            }
            Generator::Realizable { params, .. } => {
                evaluate_target(|x| params.eval(x), &out, &file.data, &density, point.eval.n_mc, mc)
            }
            Generator::KernelMixture { target, .. } => {
                evaluate_target(|x| target.eval(x), &out, &file.data, &density, point.eval.n_mc, mc)
            }
            Generator::External => unreachable!("generated datasets record their generator"),
        }
    };
    match run() {
        Ok(rep) => SummaryRow::ok(target, rep, clock.elapsed().as_secs_f64()),
        Err(e) => SummaryRow::failed(target, seed, cfg.data.d, k, n, &e, clock.elapsed().as_secs_f64()),
    }
}

/// Runs every sweep point and returns the rows in table order.
pub fn run_sweep(cfg: &ExperimentConfig, parallel: usize) -> Result<Vec<SummaryRow>> {
    cfg.validate()?;
    let points = sweep_points(cfg);
    if parallel <= 1 {
        return Ok(points.iter().map(|&(n, k, s)| sweep_row(cfg, n, k, s)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| invalid(e.to_string()))?;
    Ok(pool.install(|| points.par_iter().map(|&(n, k, s)| sweep_row(cfg, n, k, s)).collect()))
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, parallel: usize) -> Result<(PathBuf, Vec<SummaryRow>)> {
    let rows = run_sweep(cfg, parallel)?;
    let path = out.join("sweep.csv");
    write_atomic(&path, &summary_bytes(&rows)?)?;
    Ok((path, rows))
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.stage() {
        Some(Stage::Moments) => 2,
        Some(Stage::Decomposition) => 3,
        Some(Stage::Fourier) => 4,
        Some(Stage::Regression) => 5,
        None => 1,
    }
}

#[derive(Debug, Parser)]
#[command(name = "nnlift", version, about = "Method-of-moments training of two-layer networks")]
pub struct Cli {
    /// Experiment configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; takes precedence over NNLIFT_OUT_DIR.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweep points.
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset file.
    Gen {
        /// Also write a CSV copy of the rows.
        #[arg(long)]
        csv: bool,
    },
    /// Train on a dataset file and write reports.
    Train {
        /// Dataset path; defaults to `paths.input`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a saved model.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run a parameter sweep.
    Sweep,
}

fn load_for(cli: &Cli, mode: Mode) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Configuration("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.mode = mode;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.parallel {
        cfg.sweep.parallel = p;
    }
    Ok(cfg)
}

fn required(p: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Configuration(format!("missing {what} path")))
}

/// Runs a parsed command line and returns a message for stdout.
pub fn execute(cli: Cli) -> Result<String> {
    match &cli.command {
        Command::Gen { csv } => {
            let cfg = load_for(&cli, Mode::Gen)?;
            let out = resolve_out_dir(cli.out.as_deref(), &cfg);
            let file = generate_dataset(&cfg)?;
            let path = out.join("dataset.nnds");
            file.save(&path)?;
            if *csv {
                let mut buf = Vec::new();
                file.write_csv(&mut buf)?;
                write_atomic(&out.join("dataset.csv"), &buf)?;
            }
            Ok(format!("wrote {}", path.display()))
        }
        Command::Train { data } => {
            let cfg = load_for(&cli, Mode::Train)?;
            let out = resolve_out_dir(cli.out.as_deref(), &cfg);
            let data = required(data.clone(), &cfg.paths.input, "dataset")?;
            let arts = cmd_train(&cfg, &data, &out)?;
            Ok(format!("wrote {} and {}", arts.report.display(), arts.summary.display()))
        }
        Command::Eval { model, data } => {
            let cfg = load_for(&cli, Mode::Eval)?;
            let out = resolve_out_dir(cli.out.as_deref(), &cfg);
            let model = required(model.clone(), &cfg.paths.model, "model")?;
            let data = required(data.clone(), &cfg.paths.input, "dataset")?;
            let (path, est) = cmd_eval(&cfg, &model, &data, &out)?;
            Ok(format!(
                "risk {:.6e} +- {:.2e} (target variance {:.6e}); wrote {}",
                est.risk,
                est.std_error,
                est.target_variance,
                path.display()
            ))
        }
        Command::Sweep => {
            let cfg = load_for(&cli, Mode::Sweep)?;
            let out = resolve_out_dir(cli.out.as_deref(), &cfg);
            let (path, rows) = cmd_sweep(&cfg, &out, cfg.sweep.parallel)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            Ok(format!("wrote {} ({} rows, {} failed)", path.display(), rows.len(), failed))
        }
    }
}

/// Entry point for the binary; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
