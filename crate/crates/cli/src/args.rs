//! Flag definitions. Every flag has a config-file key of the same name with
//! dashes replaced by underscores; flags given on the command line win.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use wishart_core::{Backend, QuadratureConfig};

#[derive(Debug, Parser)]
#[command(
    name = "wishart",
    version,
    about = "Exact eigenvalue densities of Wishart correlation matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the analytic density on a grid.
    Density(DensityArgs),
    /// Sample the ensemble and write an eigenvalue histogram.
    Mc(McArgs),
    /// Compare the analytic density with a Monte Carlo histogram.
    Compare(CompareArgs),
    /// Estimate a correlation spectrum from time series.
    Ingest(IngestArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Density(_) => "density",
            Command::Mc(_) => "mc",
            Command::Compare(_) => "compare",
            Command::Ingest(_) => "ingest",
        }
    }
}

/// `min:max:count`, uniformly spaced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [min, max, count] = parts[..] else {
            return Err(format!("expected min:max:count, got '{s}'"));
        };
        let min: f64 = min.trim().parse().map_err(|e| format!("grid min '{min}': {e}"))?;
        let max: f64 = max.trim().parse().map_err(|e| format!("grid max '{max}': {e}"))?;
        let count: usize = count.trim().parse().map_err(|e| format!("grid count '{count}': {e}"))?;
        if count == 0 {
            return Err("grid count must be at least 1".into());
        }
        if !(min.is_finite() && max.is_finite()) || min < 0.0 || (count > 1 && max <= min) {
            return Err(format!("grid needs 0 <= min < max, got {min}:{max}"));
        }
        Ok(GridSpec { min, max, count })
    }
}

/// `min:max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSpec {
    pub min: f64,
    pub max: f64,
}

impl FromStr for RangeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let Some((min, max)) = s.split_once(':') else {
            return Err(format!("expected min:max, got '{s}'"));
        };
        let min: f64 = min.trim().parse().map_err(|e| format!("range min '{min}': {e}"))?;
        let max: f64 = max.trim().parse().map_err(|e| format!("range max '{max}': {e}"))?;
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(format!("range needs min < max, got {min}:{max}"));
        }
        Ok(RangeSpec { min, max })
    }
}

macro_rules! string_serde {
    ($t:ty, $fmt:expr) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                #[allow(clippy::redundant_closure_call)]
                s.serialize_str(&($fmt)(self))
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(GridSpec, |g: &GridSpec| format!("{}:{}:{}", g.min, g.max, g.count));
string_serde!(RangeSpec, |r: &RangeSpec| format!("{}:{}", r.min, r.max));

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendArg {
    Cells,
    Epsilon,
    Both,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Backend {
        match b {
            BackendArg::Cells => Backend::Cells,
            BackendArg::Epsilon => Backend::Epsilon,
            BackendArg::Both => Backend::Both,
        }
    }
}

/// Ensemble definition. Exactly one spectrum source must be given.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelArgs {
    /// Eigenvalues Λ of the correlation matrix, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    /// JSON file holding the spectrum (array, or object with a `spectrum` array).
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<PathBuf>,
    /// CSV time series (one series per row); the spectrum of its correlation
    /// matrix is used and n defaults to the series length.
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeseries: Option<PathBuf>,
    /// Number of samples per series in the ensemble.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Dyson index: 1 real, 2 complex.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<u8>,
}

impl ModelArgs {
    fn merge(&mut self, file: ModelArgs) {
        // A spectrum source on the command line replaces the file's source.
        if self.lambda.is_none() && self.spectrum.is_none() && self.timeseries.is_none() {
            self.lambda = file.lambda;
            self.spectrum = file.spectrum;
            self.timeseries = file.timeseries;
        }
        self.n = self.n.or(file.n);
        self.beta = self.beta.or(file.beta);
    }
}

/// Quadrature settings; unset values use the library defaults.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendArg>,
    /// Relative accuracy of each one-dimensional integral.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    /// Refinement cap of the quadrature rules.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_levels: Option<u32>,
    /// Initial truncation point of the unbounded radial range.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_cut: Option<f64>,
    /// Relative accuracy of the epsilon extrapolation.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_tol: Option<f64>,
    /// With `--backend both`, cross-check every k-th grid point.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_check_stride: Option<usize>,
    /// Relative tolerance of the backend cross-check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_check_tol: Option<f64>,
}

impl QuadArgs {
    fn merge(&mut self, file: QuadArgs) {
        self.backend = self.backend.or(file.backend);
        self.rel_tol = self.rel_tol.or(file.rel_tol);
        self.max_levels = self.max_levels.or(file.max_levels);
        self.tail_cut = self.tail_cut.or(file.tail_cut);
        self.epsilon_tol = self.epsilon_tol.or(file.epsilon_tol);
        self.cross_check_stride = self.cross_check_stride.or(file.cross_check_stride);
        self.cross_check_tol = self.cross_check_tol.or(file.cross_check_tol);
    }

    pub fn to_config(&self) -> anyhow::Result<QuadratureConfig> {
        let mut c = QuadratureConfig::default();
        if let Some(b) = self.backend {
            c.backend = b.into();
        }
        if let Some(v) = self.rel_tol {
            if !(v > 0.0 && v < 1.0) {
                bail!("--rel-tol must lie in (0, 1), got {v}");
            }
            c.rel_tol = v;
        }
        if let Some(v) = self.max_levels {
            c.max_levels = v;
        }
        c.tail_cut = self.tail_cut.or(c.tail_cut);
        if let Some(v) = self.epsilon_tol {
            c.epsilon_tol = v;
        }
        if let Some(v) = self.cross_check_stride {
            if v == 0 {
                bail!("--cross-check-stride must be at least 1");
            }
            c.cross_check_stride = v;
        }
        if let Some(v) = self.cross_check_tol {
            c.cross_check_tol = v;
        }
        c.check()?;
        Ok(c)
    }
}

/// Output destination and format.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct OutArgs {
    /// Output file; standard output when omitted. `WISHART_OUT_DIR`
    /// replaces its directory.
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

impl OutArgs {
    fn merge(&mut self, file: OutArgs) {
        self.out = self.out.clone().or(file.out);
        self.format = self.format.or(file.format);
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or(Format::Csv)
    }
}

/// Monte Carlo settings.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleArgs {
    /// Number of sampled matrices.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num: Option<usize>,
    /// Histogram bin width.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Histogram range `min:max`.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeSpec>,
}

impl SampleArgs {
    fn merge(&mut self, file: SampleArgs) {
        self.num = self.num.or(file.num);
        self.bin = self.bin.or(file.bin);
        self.seed = self.seed.or(file.seed);
        self.range = self.range.or(file.range);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Evaluation grid `min:max:count`.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Add dense windows around every eigenvalue's bulk to the grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub resolve: bool,
    /// Write the curve and exit 0 even if some points failed.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub best_effort: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub quad: QuadArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutArgs,
    /// JSON config file with the same keys as the flags.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl DensityArgs {
    fn merge(&mut self, file: DensityArgs) {
        self.model.merge(file.model);
        self.grid = self.grid.or(file.grid);
        self.resolve |= file.resolve;
        self.best_effort |= file.best_effort;
        self.quad.merge(file.quad);
        self.output.merge(file.output);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct McArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub sample: SampleArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutArgs,
    /// JSON config file with the same keys as the flags.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl McArgs {
    fn merge(&mut self, file: McArgs) {
        self.model.merge(file.model);
        self.sample.merge(file.sample);
        self.output.merge(file.output);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub sample: SampleArgs,
    /// Grid of the analytic curve used for the moment checks; must cover
    /// the histogram range.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Minimum fraction of occupied bins within 3 sigma.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_within: Option<f64>,
    /// Maximum L1 distance between analytic and histogram densities.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_l1: Option<f64>,
    /// Maximum |∫S dx - 1| on the moment grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_mass_error: Option<f64>,
    /// Maximum |∫x S dx - (n/p) Σ Λ| on the moment grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_mean_error: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub quad: QuadArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutArgs,
    /// JSON config file with the same keys as the flags.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl CompareArgs {
    fn merge(&mut self, file: CompareArgs) {
        self.model.merge(file.model);
        self.sample.merge(file.sample);
        self.grid = self.grid.or(file.grid);
        self.min_within = self.min_within.or(file.min_within);
        self.max_l1 = self.max_l1.or(file.max_l1);
        self.max_mass_error = self.max_mass_error.or(file.max_mass_error);
        self.max_mean_error = self.max_mean_error.or(file.max_mean_error);
        self.quad.merge(file.quad);
        self.output.merge(file.output);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestArgs {
    /// CSV time series, one series per row.
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Spectrum JSON destination; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Also evaluate the density of the ingested spectrum.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub then_density: bool,
    /// Ensemble n for `--then-density`; defaults to the series length.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Grid for `--then-density`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Density destination for `--then-density`; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_out: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// JSON config file with the same keys as the flags.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl IngestArgs {
    fn merge(&mut self, file: IngestArgs) {
        self.input = self.input.clone().or(file.input);
        self.out = self.out.clone().or(file.out);
        self.then_density |= file.then_density;
        self.n = self.n.or(file.n);
        self.grid = self.grid.or(file.grid);
        self.density_out = self.density_out.clone().or(file.density_out);
        self.format = self.format.or(file.format);
    }
}

/// Reads a config file: a JSON object of flag values, or a previous output
/// (CSV with a `#` metadata line, or a JSON document), whose metadata
/// `config` entry is used.
fn read_config(path: &std::path::Path, command: &str) -> anyhow::Result<serde_json::Map<String, serde_json::Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let json = match text.strip_prefix('#') {
        Some(rest) => rest.lines().next().unwrap_or_default(),
        None => text.as_str(),
    };
    let value: serde_json::Value =
        serde_json::from_str(json).with_context(|| format!("config {} is not valid JSON", path.display()))?;
    let serde_json::Value::Object(mut map) = value else {
        bail!("config {} must be a JSON object", path.display());
    };
    // JSON outputs nest their metadata under `meta`.
    if !map.contains_key("command") {
        if let Some(serde_json::Value::Object(meta)) = map.get("meta") {
            if meta.contains_key("command") {
                map = meta.clone();
            }
        }
    }
    if let Some(cmd) = map.get("command") {
        if cmd.as_str() != Some(command) {
            bail!("config {} was written by '{}', not '{command}'", path.display(), cmd);
        }
        match map.remove("config") {
            Some(serde_json::Value::Object(inner)) => map = inner,
            _ => bail!("metadata in {} has no config object", path.display()),
        }
    }
    Ok(map)
}

/// Rejects keys that do not name a flag of `command`.
fn check_keys(
    map: &serde_json::Map<String, serde_json::Value>,
    command: &str,
    path: &std::path::Path,
) -> anyhow::Result<()> {
    let cli = Cli::command();
    let sub = cli.find_subcommand(command).expect("subcommand exists");
    let known: Vec<String> = sub
        .get_arguments()
        .map(|a| a.get_id().as_str().to_owned())
        .filter(|id| id != "config" && id != "help")
        .collect();
    for key in map.keys() {
        if !known.contains(key) {
            bail!(
                "unknown key '{key}' in config {} (known keys: {})",
                path.display(),
                known.join(", ")
            );
        }
    }
    Ok(())
}

fn load<T: serde::de::DeserializeOwned>(path: &std::path::Path, command: &str) -> anyhow::Result<T> {
    let map = read_config(path, command)?;
    check_keys(&map, command, path)?;
    serde_json::from_value(serde_json::Value::Object(map))
        .with_context(|| format!("invalid value in config {}", path.display()))
}

/// Fills unset flags from `--config`.
pub fn apply_config(command: &mut Command) -> anyhow::Result<()> {
    let name = command.name();
    match command {
        Command::Density(a) => {
            if let Some(p) = a.config.clone() {
                a.merge(load(&p, name)?);
            }
        }
        Command::Mc(a) => {
            if let Some(p) = a.config.clone() {
                a.merge(load(&p, name)?);
            }
        }
        Command::Compare(a) => {
            if let Some(p) = a.config.clone() {
                a.merge(load(&p, name)?);
            }
        }
        Command::Ingest(a) => {
            if let Some(p) = a.config.clone() {
                a.merge(load(&p, name)?);
            }
        }
    }
    Ok(())
}
