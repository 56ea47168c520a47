//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines always show up in `cargo test` output.

use std::time::{Duration, Instant};

use statrs::distribution::{ChiSquared, ContinuousCDF};
use wishart_core::compare::compare_histogram;
use wishart_core::density::{resolving_grid, uniform_grid};
use wishart_core::integrand::IntegrandContext;
use wishart_core::quadrature::{de, imaginary_part_epsilon};
use wishart_core::*;

const FIVE: [f64; 5] = [1.44, 0.64, 0.49, 0.25, 0.16];
const TEN: [f64; 10] = [1.0, 0.81, 0.7225, 0.64, 0.45, 0.36, 0.25, 0.2025, 0.1225, 0.03];

struct Outcome {
    pass: bool,
    detail: String,
}

/// Grid points already evaluated by the cell backend, kept for the backend
/// cross-check.
struct Sampled {
    label: String,
    spectrum: Spectrum,
    params: ModelParams,
    xs: Vec<f64>,
    values: Vec<f64>,
}

fn spectrum(l: &[f64]) -> Spectrum {
    Spectrum::new(l).expect("valid spectrum")
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn criterion_1(sampled: &mut Vec<Sampled>) -> Outcome {
    let start = Instant::now();
    let config = QuadratureConfig::default();
    let mut worst = 0.0f64;
    for n in [4usize, 6, 8] {
        for lam in [0.5, 1.0, 2.0] {
            let chi = ChiSquared::new(n as f64).unwrap();
            let (lo, hi) = (lam * chi.inverse_cdf(0.0005), lam * chi.inverse_cdf(0.9995));
            let grid = uniform_grid(lo, hi, 64).unwrap();
            let s = spectrum(&[lam]);
            let params = ModelParams::real(1, n);
            let curve = eval_curve(&grid, &s, &params, &config).unwrap();
            let oracle: Vec<f64> = grid.iter().map(|&x| chisq_oracle(x, n, lam).unwrap()).collect();
            let peak = oracle.iter().copied().fold(0.0, f64::max);
            let sup = curve
                .values
                .iter()
                .zip(&oracle)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(sup / peak);
            sampled.push(Sampled {
                label: format!("chi2 n={n} lambda={lam}"),
                spectrum: s,
                params,
                xs: grid,
                values: curve.values,
            });
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst <= 1e-6 && within(elapsed, 10),
        detail: format!(
            "max sup-norm / peak = {worst:.2e} (limit 1e-6), {:.2?} (limit 10 s)",
            elapsed
        ),
    }
}

fn mc_case(lambdas: &[f64], n: usize, bin: f64, seed: u64, sampled: &mut Vec<Sampled>) -> (bool, String) {
    let s = spectrum(lambdas);
    let params = ModelParams::real(lambdas.len(), n);
    let mc = MCConfig {
        num_matrices: 1_000_000,
        seed,
        bin_width: bin,
        range: None,
    };
    let ensemble = sample_ensemble(&s, &params, mc.num_matrices, mc.seed).unwrap();
    let hist = histogram_density(&ensemble, &mc).unwrap();
    let cmp = compare_histogram(&hist, &s, &params, &QuadratureConfig::default()).unwrap();
    let sum = &cmp.summary;
    // cross-check points: bin centres
    let xs: Vec<f64> = cmp.rows.iter().map(|r| r.center()).collect();
    let values = eval_curve(&xs, &s, &params, &QuadratureConfig::default())
        .unwrap()
        .values;
    sampled.push(Sampled {
        label: format!("p={} n={n}", lambdas.len()),
        spectrum: s,
        params,
        xs,
        values,
    });
    let ok = sum.analytic_failures.is_empty() && sum.within_3sigma >= 0.99 && sum.l1 <= 0.02;
    (
        ok,
        format!(
            "p={} n={n}: {:.2}% of {} bins within 3 sigma, L1 = {:.4}",
            lambdas.len(),
            100.0 * sum.within_3sigma,
            sum.occupied_bins,
            sum.l1
        ),
    )
}

fn criterion_2(sampled: &mut Vec<Sampled>) -> Outcome {
    let start = Instant::now();
    let (a, da) = mc_case(&[1.0, 0.4], 6, 0.25, 2024, sampled);
    let (b, db) = mc_case(&[1.2, 0.7, 0.3], 8, 0.25, 2025, sampled);
    let elapsed = start.elapsed();
    Outcome {
        pass: a && b && within(elapsed, 300),
        detail: format!("{da}; {db} (limits 99%, 0.02); {:.2?} (limit 5 min)", elapsed),
    }
}

/// Reference case at n = 200: histogram comparison plus moments on [0, 600].
fn reference_case(lambdas: &[f64], seed: u64, limit_s: u64, sampled: Option<&mut Vec<Sampled>>) -> (bool, String, f64) {
    let start = Instant::now();
    let s = spectrum(lambdas);
    let params = ModelParams::real(lambdas.len(), 200);
    let config = QuadratureConfig::default();
    let mc = MCConfig {
        num_matrices: 100_000,
        seed,
        bin_width: 3.0,
        range: Some((0.0, 600.0)),
    };
    let ensemble = sample_ensemble(&s, &params, mc.num_matrices, mc.seed).unwrap();
    let hist = histogram_density(&ensemble, &mc).unwrap();
    let cmp = compare_histogram(&hist, &s, &params, &config).unwrap();
    let grid = resolving_grid(&s, &params, 0.0, 600.0, 240).unwrap();
    let curve = eval_curve(&grid, &s, &params, &config).unwrap();
    let moments = check_moments(&curve);
    let elapsed = start.elapsed();
    if let Some(sampled) = sampled {
        let coarse = uniform_grid(0.0, 600.0, 240).unwrap();
        let values = eval_curve(&coarse, &s, &params, &config).unwrap().values;
        sampled.push(Sampled {
            label: format!("p={} n=200", lambdas.len()),
            spectrum: s.clone(),
            params,
            xs: coarse,
            values,
        });
    }
    let within_ok = cmp.summary.within_3sigma >= 0.95;
    let mass_ok = moments.as_ref().is_ok_and(|m| m.mass_error.abs() <= 1e-3);
    let mean = moments.as_ref().map(|m| m.mean).unwrap_or(f64::NAN);
    let detail = format!(
        "{:.2}% of {} bins within 3 sigma (limit 95%), mass {}, {:.2?} (limit {} min)",
        100.0 * cmp.summary.within_3sigma,
        cmp.summary.occupied_bins,
        match &moments {
            Ok(m) => format!("{:.6}", m.mass),
            Err(e) => e.to_string(),
        },
        elapsed,
        limit_s / 60
    );
    (within_ok && mass_ok && within(elapsed, limit_s), detail, mean)
}

fn criterion_3(sampled: &mut Vec<Sampled>) -> Outcome {
    let (ok, detail, mean) = reference_case(&FIVE, 7, 900, Some(sampled));
    let mean_ok = (mean - 119.2).abs() <= 0.5;
    Outcome {
        pass: ok && mean_ok,
        detail: format!("{detail}, mean {mean:.3} (119.2 +- 0.5)"),
    }
}

fn criterion_4() -> Outcome {
    let (ok, detail, mean) = reference_case(&TEN, 8, 2700, None);
    // First-moment identity (n/p) Σ Λ for the listed spectrum.
    let identity = 200.0 / 10.0 * TEN.iter().sum::<f64>();
    let mean_ok = (mean - identity).abs() <= 0.5;
    Outcome {
        pass: ok && mean_ok,
        detail: format!(
            "{detail}, mean {mean:.3} ((n/p) sum = {identity:.3} +- 0.5; a mean of 92.8 would need sum 4.64, the listed values sum to {:.4})",
            TEN.iter().sum::<f64>()
        ),
    }
}

fn criterion_5(sampled: &[Sampled]) -> Outcome {
    let start = Instant::now();
    let config = QuadratureConfig::default();
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for case in sampled {
        for (k, (&x, &cells)) in case.xs.iter().zip(&case.values).enumerate() {
            if k % config.cross_check_stride != 0 || x == 0.0 {
                continue;
            }
            checked += 1;
            let ctx = IntegrandContext::new(x, &case.spectrum, &case.params).unwrap();
            match imaginary_part_epsilon(&ctx, &config) {
                Ok(r) => {
                    let diff = (r.value - cells).abs();
                    if diff > (1e-4 * cells.abs()).max(1e-8) {
                        failures.push(format!("{} x={x}: cells {cells:e} epsilon {:e}", case.label, r.value));
                    }
                    if cells.abs() > 1e-8 {
                        worst = worst.max(diff / cells.abs());
                    }
                }
                Err(e) => failures.push(format!("{} x={x}: {e}", case.label)),
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "{checked} points, worst relative difference {worst:.2e} (limit 1e-4 or 1e-8 absolute){}, {:.2?}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failures: {}", failures.join("; "))
            },
            start.elapsed()
        ),
    }
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let config = QuadratureConfig::default();
    let mut notes = Vec::new();

    // scale covariance
    let params = ModelParams::real(3, 8);
    let base = [1.2, 0.7, 0.3];
    let mut scale_err = 0.0f64;
    for sigma in [0.5, 2.0] {
        let scaled: Vec<f64> = base.iter().map(|l| sigma * l).collect();
        for x in [1.0, 4.0, 9.0, 20.0] {
            let a = eval_point(x, &spectrum(&base), &params, &config).unwrap();
            let b = eval_point(sigma * x, &spectrum(&scaled), &params, &config).unwrap();
            scale_err = scale_err.max((b - a / sigma).abs() / (a / sigma).abs());
        }
    }
    let scale_ok = scale_err <= 1e-6;
    notes.push(format!("scale {scale_err:.1e}"));

    // permutation invariance
    let perm = eval_point(5.0, &spectrum(&[0.3, 1.2, 0.7]), &params, &config).unwrap();
    let orig = eval_point(5.0, &spectrum(&base), &params, &config).unwrap();
    let perm_ok = perm == orig;
    notes.push(format!("permutation {}", if perm_ok { "exact" } else { "differs" }));

    // nonnegativity before clipping
    let grid = uniform_grid(0.05, 60.0, 200).unwrap();
    let min_rel = grid
        .iter()
        .map(|&x| eval_point(x, &spectrum(&base), &params, &config).unwrap())
        .fold(f64::INFINITY, f64::min);
    let nonneg_ok = min_rel >= -1e-6;
    notes.push(format!("min {min_rel:.1e}"));

    // Monte Carlo determinism across thread counts
    let draw = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                sample_ensemble(&spectrum(&base), &params, 20_000, 3)
                    .unwrap()
                    .eigenvalues
            })
    };
    let det_ok = draw(1) == draw(4);
    notes.push(format!("threads {}", if det_ok { "identical" } else { "differ" }));

    // calibration integrals
    let c1 = de::integrate(0.0, 1.0, |nd| nd.from_lo.powf(-0.5), 1e-12, 0.0, 12).value;
    let rule = de::rule(0.0, 1.0, 6);
    let c2: f64 = rule
        .iter()
        .flat_map(|a| {
            rule.iter()
                .map(move |b| a.weight * b.weight * (a.from_lo * b.from_lo).powf(-0.5))
        })
        .sum();
    let c3: f64 = (0..6)
        .map(|k| {
            de::integrate(
                10.0 * k as f64,
                10.0 * (k + 1) as f64,
                |nd| nd.x.sqrt() * (-nd.x).exp(),
                1e-12,
                0.0,
                12,
            )
            .value
        })
        .sum();
    let cal_ok =
        (c1 - 2.0).abs() <= 1e-10 && (c2 - 4.0).abs() <= 1e-9 && (c3 - std::f64::consts::PI.sqrt() / 2.0).abs() <= 1e-8;
    notes.push(format!(
        "calibration {:.1e}/{:.1e}/{:.1e}",
        c1 - 2.0,
        c2 - 4.0,
        c3 - std::f64::consts::PI.sqrt() / 2.0
    ));

    let elapsed = start.elapsed();
    Outcome {
        pass: scale_ok && perm_ok && nonneg_ok && det_ok && cal_ok && within(elapsed, 60),
        detail: format!("{}, {:.2?} (limit 1 min)", notes.join(", "), elapsed),
    }
}

fn report(name: &str, o: &Outcome) -> bool {
    println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    o.pass
}

fn main() {
    // `cargo test -- <filter>` and `--list` are passed through; run only
    // when no filter excludes this target.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut sampled = Vec::new();
    let results = [
        report("1 chi-squared oracle", &criterion_1(&mut sampled)),
        report("2 small-instance Monte Carlo", &criterion_2(&mut sampled)),
        report("3 five-eigenvalue case (p=5, n=200)", &criterion_3(&mut sampled)),
        report("4 ten-eigenvalue case (p=10, n=200)", &criterion_4()),
        report("5 backend cross-validation", &criterion_5(&sampled)),
        report("6 invariants", &criterion_6()),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
