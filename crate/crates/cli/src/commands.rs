//! The four subcommands.

use std::process::ExitCode;

use anyhow::{bail, Context};
use serde::Serialize;
use wishart_core::compare::{compare, Thresholds};
use wishart_core::density::{default_range, resolving_grid, uniform_grid};
use wishart_core::spectral::{correlation_spectrum, parse_spectrum_json, validate, TimeSeriesMatrix, Usage};
use wishart_core::{
    check_moments, eval_curve, histogram_density, sample_ensemble, Backend, Beta, DensityCurve, MCConfig, ModelParams,
    QuadratureConfig, Spectrum,
};

use crate::args::{
    BackendArg, CompareArgs, DensityArgs, Format, GridSpec, IngestArgs, McArgs, ModelArgs, OutArgs, QuadArgs, RangeSpec,
};
use crate::output::{destination, emit, metadata};

/// Exit code for results that ran but missed an acceptance threshold.
pub const NUMERICAL_FAILURE: u8 = 1;

const DEFAULT_GRID_COUNT: usize = 256;
const DEFAULT_NUM_MATRICES: usize = 100_000;
const DEFAULT_BIN: f64 = 3.0;
const DEFAULT_MAX_MASS_ERROR: f64 = 1e-3;
const DEFAULT_MAX_MEAN_ERROR: f64 = 0.5;

struct Model {
    spectrum: Spectrum,
    params: ModelParams,
    /// Eigenvalues in the order they were given.
    values: Vec<f64>,
}

/// Loads the spectrum from its single source and fixes n and beta.
fn resolve_model(m: &ModelArgs, usage: Usage) -> anyhow::Result<Model> {
    let sources = [m.lambda.is_some(), m.spectrum.is_some(), m.timeseries.is_some()];
    if sources.iter().filter(|&&s| s).count() != 1 {
        bail!("give exactly one spectrum source: --lambda, --spectrum or --timeseries");
    }
    let (values, series_len) = if let Some(l) = &m.lambda {
        (l.clone(), None)
    } else if let Some(path) = &m.spectrum {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        (
            parse_spectrum_json(&text).with_context(|| format!("parsing spectrum {}", path.display()))?,
            None,
        )
    } else {
        let path = m.timeseries.as_ref().expect("one source is set");
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let ts = TimeSeriesMatrix::from_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
        let cs = correlation_spectrum(&ts)?;
        let spectrum = cs
            .to_spectrum()
            .with_context(|| format!("the correlation matrix of {} is not invertible", path.display()))?;
        (spectrum.values().to_vec(), Some(ts.n()))
    };
    let Some(n) = m.n.or(series_len) else {
        bail!("missing --n (samples per series)");
    };
    let beta = Beta::try_from(m.beta.unwrap_or(1))?;
    let params = ModelParams::new(values.len(), n, beta);
    let (spectrum, params) = validate(&values, &params, usage)?;
    Ok(Model {
        spectrum,
        params,
        values,
    })
}

/// Model flags with every source replaced by inline values.
fn resolved_model_args(model: &Model) -> ModelArgs {
    ModelArgs {
        lambda: Some(model.values.clone()),
        spectrum: None,
        timeseries: None,
        n: Some(model.params.n),
        beta: Some(model.params.beta.index()),
    }
}

/// Quadrature flags with every value spelled out.
fn resolved_quad_args(c: &QuadratureConfig) -> QuadArgs {
    QuadArgs {
        backend: Some(match c.backend {
            Backend::Cells => BackendArg::Cells,
            Backend::Epsilon => BackendArg::Epsilon,
            Backend::Both => BackendArg::Both,
        }),
        rel_tol: Some(c.rel_tol),
        max_levels: Some(c.max_levels),
        tail_cut: c.tail_cut,
        epsilon_tol: Some(c.epsilon_tol),
        cross_check_stride: Some(c.cross_check_stride),
        cross_check_tol: Some(c.cross_check_tol),
    }
}

/// `default_range` with `DEFAULT_GRID_COUNT` points. When n < p + 2 the
/// density has no value at 0, so the grid starts just above it.
fn default_grid(model: &Model) -> GridSpec {
    let (min, max) = default_range(&model.spectrum, &model.params);
    let min = if model.params.n >= model.params.p + 2 {
        min
    } else {
        1e-9 * max
    };
    GridSpec {
        min,
        max,
        count: DEFAULT_GRID_COUNT,
    }
}

fn grid_points(spec: GridSpec, resolve: bool, model: &Model) -> anyhow::Result<Vec<f64>> {
    Ok(if resolve {
        resolving_grid(&model.spectrum, &model.params, spec.min, spec.max, spec.count)?
    } else {
        uniform_grid(spec.min, spec.max, spec.count)?
    })
}

fn curve_csv(meta: &serde_json::Value, curve: &DensityCurve) -> String {
    let mut out = format!("# {meta}\nx,density\n");
    for (x, v) in curve.xs.iter().zip(&curve.values) {
        out.push_str(&format!("{x},{v:e}\n"));
    }
    out
}

fn curve_json(meta: &serde_json::Value, curve: &DensityCurve) -> String {
    let values: Vec<Option<f64>> = curve.values.iter().map(|v| v.is_finite().then_some(*v)).collect();
    let doc = serde_json::json!({ "meta": meta, "xs": curve.xs, "values": values });
    serde_json::to_string_pretty(&doc).expect("curve serialises") + "\n"
}

fn report_curve_problems(curve: &DensityCurve) {
    for f in &curve.meta.failures {
        eprintln!("warning: x = {}: {}", f.x, f.error);
    }
    for c in curve.meta.cross_checks.iter().filter(|c| !c.agree) {
        match c.epsilon {
            Some(e) => eprintln!(
                "warning: x = {}: backends disagree (cells {:e}, epsilon {e:e})",
                c.x, c.cells
            ),
            None => eprintln!("warning: x = {}: epsilon backend failed", c.x),
        }
    }
}

pub fn density(a: &DensityArgs) -> anyhow::Result<ExitCode> {
    let model = resolve_model(&a.model, Usage::Analytic)?;
    let quad = a.quad.to_config()?;
    let grid = a.grid.unwrap_or_else(|| default_grid(&model));
    let xs = grid_points(grid, a.resolve, &model)?;
    let curve = eval_curve(&xs, &model.spectrum, &model.params, &quad)?;

    let config = DensityArgs {
        model: resolved_model_args(&model),
        grid: Some(grid),
        resolve: a.resolve,
        best_effort: a.best_effort,
        quad: resolved_quad_args(&quad),
        output: OutArgs {
            out: None,
            format: Some(a.output.format()),
        },
        config: None,
    };
    let meta = metadata("density", &config, &curve.meta);
    let (text, ext) = match a.output.format() {
        Format::Csv => (curve_csv(&meta, &curve), "csv"),
        Format::Json => (curve_json(&meta, &curve), "json"),
    };
    emit(
        &text,
        destination(a.output.out.as_deref(), &format!("density.{ext}")).as_deref(),
    )?;

    if !curve.is_clean() {
        report_curve_problems(&curve);
        if !a.best_effort {
            eprintln!(
                "error: {} point(s) failed and {} cross-check(s) disagreed; rerun with --best-effort to accept",
                curve.meta.failures.len(),
                curve.meta.cross_checks.iter().filter(|c| !c.agree).count()
            );
            return Ok(ExitCode::from(NUMERICAL_FAILURE));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn mc_config(a: &crate::args::SampleArgs, default_range: Option<(f64, f64)>) -> anyhow::Result<MCConfig> {
    let mc = MCConfig {
        num_matrices: a.num.unwrap_or(DEFAULT_NUM_MATRICES),
        seed: a.seed.unwrap_or(0),
        bin_width: a.bin.unwrap_or(DEFAULT_BIN),
        range: a.range.map(|r| (r.min, r.max)).or(default_range),
    };
    mc.check()?;
    Ok(mc)
}

#[derive(Serialize)]
struct McResult {
    p: usize,
    n: usize,
    beta: Beta,
    spectrum: Vec<f64>,
    mean_eigenvalue: f64,
    underflow: u64,
    overflow: u64,
}

pub fn mc(a: &McArgs) -> anyhow::Result<ExitCode> {
    let model = resolve_model(&a.model, Usage::Sampling)?;
    let mc = mc_config(&a.sample, None)?;
    let ensemble = sample_ensemble(&model.spectrum, &model.params, mc.num_matrices, mc.seed)?;
    let hist = histogram_density(&ensemble, &mc)?;
    let mut sample = a.sample.clone();
    sample.num = Some(mc.num_matrices);
    sample.seed = Some(mc.seed);
    sample.bin = Some(mc.bin_width);
    let config = McArgs {
        model: resolved_model_args(&model),
        sample,
        output: OutArgs {
            out: None,
            format: Some(a.output.format()),
        },
        config: None,
    };
    let result = McResult {
        p: model.params.p,
        n: model.params.n,
        beta: model.params.beta,
        spectrum: model.spectrum.values().to_vec(),
        mean_eigenvalue: ensemble.mean_trace() / model.params.p as f64,
        underflow: hist.underflow,
        overflow: hist.overflow,
    };
    let meta = metadata("mc", &config, &result);
    let (text, ext) = match a.output.format() {
        Format::Csv => (hist.to_csv(&meta), "csv"),
        Format::Json => (hist.to_json(&meta) + "\n", "json"),
    };
    emit(
        &text,
        destination(a.output.out.as_deref(), &format!("histogram.{ext}")).as_deref(),
    )?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct MomentCheck {
    mass: Option<f64>,
    mean: Option<f64>,
    expected_mean: f64,
    mass_error: Option<f64>,
    mean_error: Option<f64>,
    /// Why the moments could not be formed, if they could not. The check
    /// is then skipped rather than failed.
    unavailable: Option<String>,
    pass: bool,
}

#[derive(Serialize)]
struct CompareResult<'a> {
    summary: &'a wishart_core::compare::Summary,
    moments: MomentCheck,
    thresholds: Thresholds,
    pass: bool,
}

pub fn compare_cmd(a: &CompareArgs) -> anyhow::Result<ExitCode> {
    let model = resolve_model(&a.model, Usage::Analytic)?;
    let quad = a.quad.to_config()?;
    let range = match a.sample.range {
        Some(r) => r,
        None => {
            let (min, max) = default_range(&model.spectrum, &model.params);
            RangeSpec { min, max }
        }
    };
    if range.min < 0.0 {
        bail!(
            "histogram range {}:{} starts below 0, where the density vanishes",
            range.min,
            range.max
        );
    }
    let grid = a.grid.unwrap_or_else(|| {
        let full = default_grid(&model);
        GridSpec {
            min: full.min.min(range.min),
            max: full.max.max(range.max),
            ..full
        }
    });
    if grid.min > range.min || grid.max < range.max {
        bail!(
            "grid {}:{} does not cover the histogram range {}:{}",
            grid.min,
            grid.max,
            range.min,
            range.max
        );
    }
    let mc = mc_config(&a.sample, Some((range.min, range.max)))?;
    let cmp = compare(&model.spectrum, &model.params, &quad, &mc)?;

    let xs = grid_points(grid, true, &model)?;
    let curve = eval_curve(&xs, &model.spectrum, &model.params, &quad)?;
    let max_mass = a.max_mass_error.unwrap_or(DEFAULT_MAX_MASS_ERROR);
    let max_mean = a.max_mean_error.unwrap_or(DEFAULT_MAX_MEAN_ERROR);
    let expected_mean = cmp.summary.expected_mean;
    let moments = match check_moments(&curve) {
        Ok(m) => MomentCheck {
            mass: Some(m.mass),
            mean: Some(m.mean),
            expected_mean,
            mass_error: Some(m.mass_error),
            mean_error: Some(m.mean_error),
            unavailable: None,
            pass: m.mass_error.abs() <= max_mass && m.mean_error.abs() <= max_mean,
        },
        Err(e) => MomentCheck {
            mass: None,
            mean: None,
            expected_mean,
            mass_error: None,
            mean_error: None,
            unavailable: Some(e.to_string()),
            pass: true,
        },
    };
    let thresholds = Thresholds {
        min_within_3sigma: a.min_within.unwrap_or(Thresholds::default().min_within_3sigma),
        max_l1: a.max_l1.unwrap_or(Thresholds::default().max_l1),
    };
    let pass = cmp.passes(&thresholds) && moments.pass;

    let mut sample = a.sample.clone();
    sample.num = Some(mc.num_matrices);
    sample.seed = Some(mc.seed);
    sample.bin = Some(mc.bin_width);
    sample.range = Some(range);
    let config = CompareArgs {
        model: resolved_model_args(&model),
        sample,
        grid: Some(grid),
        min_within: Some(thresholds.min_within_3sigma),
        max_l1: Some(thresholds.max_l1),
        max_mass_error: Some(max_mass),
        max_mean_error: Some(max_mean),
        quad: resolved_quad_args(&quad),
        output: OutArgs {
            out: None,
            format: Some(a.output.format()),
        },
        config: None,
    };
    let result = CompareResult {
        summary: &cmp.summary,
        moments,
        thresholds,
        pass,
    };
    let meta = metadata("compare", &config, &result);
    let (text, ext) = match a.output.format() {
        Format::Csv => (cmp.to_csv(&meta), "csv"),
        Format::Json => {
            let doc = serde_json::json!({ "meta": meta, "rows": cmp.rows });
            (
                serde_json::to_string_pretty(&doc).expect("comparison serialises") + "\n",
                "json",
            )
        }
    };
    emit(
        &text,
        destination(a.output.out.as_deref(), &format!("compare.{ext}")).as_deref(),
    )?;

    let s = &cmp.summary;
    eprintln!(
        "{} bins occupied, {:.2}% within 3 sigma (min {:.2}%), L1 {:.4} (max {})",
        s.occupied_bins,
        100.0 * s.within_3sigma,
        100.0 * thresholds.min_within_3sigma,
        s.l1,
        thresholds.max_l1
    );
    match (&result.moments.mass_error, &result.moments.mean_error) {
        (Some(dm), Some(dx)) => eprintln!(
            "moments: mass error {dm:.2e} (max {max_mass:e}), mean error {dx:.3} (max {max_mean}) against {expected_mean:.4}"
        ),
        _ => eprintln!(
            "warning: moment check skipped: {}",
            result.moments.unavailable.as_deref().unwrap_or_default()
        ),
    }
    if !s.analytic_failures.is_empty() {
        eprintln!("{} analytic point(s) failed", s.analytic_failures.len());
    }
    eprintln!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(NUMERICAL_FAILURE)
    })
}

pub fn ingest(a: &IngestArgs) -> anyhow::Result<ExitCode> {
    let Some(input) = &a.input else {
        bail!("missing --input (CSV time series)");
    };
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let ts = TimeSeriesMatrix::from_csv(&text).with_context(|| format!("parsing {}", input.display()))?;
    let cs = correlation_spectrum(&ts)?;
    for &i in &cs.near_zero {
        eprintln!(
            "warning: eigenvalue {i} of the correlation matrix is {:e}; the matrix is not invertible and has no analytic density",
            cs.eigenvalues[i]
        );
    }
    let mut config = a.clone();
    config.out = None;
    config.density_out = None;
    config.config = None;
    let doc = serde_json::json!({
        "command": "ingest",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "p": ts.p(),
        "n": ts.n(),
        "spectrum": cs.eigenvalues,
        "near_zero": cs.near_zero,
    });
    let json = serde_json::to_string_pretty(&doc).expect("spectrum serialises") + "\n";
    emit(&json, destination(a.out.as_deref(), "spectrum.json").as_deref())?;

    if !a.then_density {
        return Ok(ExitCode::SUCCESS);
    }
    let spectrum = cs
        .to_spectrum()
        .context("cannot evaluate the density of a singular correlation matrix")?;
    let args = DensityArgs {
        model: ModelArgs {
            lambda: Some(spectrum.values().to_vec()),
            n: Some(a.n.unwrap_or(ts.n())),
            ..Default::default()
        },
        grid: a.grid,
        output: OutArgs {
            out: a.density_out.clone(),
            format: a.format,
        },
        ..Default::default()
    };
    density(&args)
}
