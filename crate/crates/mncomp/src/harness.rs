//! Seeded Monte-Carlo experiment driver: per-seed pipeline runs, outage and
//! satisfaction metrics, sweep presets, and CSV/JSON emission.
//!
//! Every run is a pure function of `(config, scheme, seed)`: the topology
//! generator is seeded with the seed itself, the channel generator with a
//! fixed salt of it, so re-running any preset with the same inputs
//! reproduces the output files byte for byte. Seeds execute on a worker
//! pool; results are collected in job order and aggregated in seed order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::association::comp_associate;
use crate::baselines::{apply_mode, run_scheme, Scheme};
use crate::channel::draw_channels;
use crate::phy;
use crate::scenario::{build_topology, ScenarioConfig};

/// Salt mixed into the seed for the channel stream so that topology and
/// fading draws are independent.
const CHANNEL_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Default outage weighting when no sweep over the weight is requested.
const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },
}

// ---------------------------------------------------------------------------
// Metrics

/// Fraction of users whose summed rate misses their requirement.
pub fn rate_outage(user_rates: &[f64], requirements: &[f64]) -> f64 {
    assert_eq!(user_rates.len(), requirements.len());
    assert!(!user_rates.is_empty());
    let satisfied = user_rates
        .iter()
        .zip(requirements)
        .filter(|(r, req)| r >= req)
        .count();
    1.0 - satisfied as f64 / user_rates.len() as f64
}

/// Fraction of users whose mean symbol latency misses their requirement;
/// unserved users (no latency defined) count as violating.
pub fn latency_outage(user_latencies: &[Option<f64>], requirements: &[f64]) -> f64 {
    assert_eq!(user_latencies.len(), requirements.len());
    assert!(!user_latencies.is_empty());
    let satisfied = user_latencies
        .iter()
        .zip(requirements)
        .filter(|(l, req)| matches!(l, Some(v) if v <= *req))
        .count();
    1.0 - satisfied as f64 / user_latencies.len() as f64
}

/// Convex combination of the two outages:
/// `(1 - alpha) * rate_outage + alpha * latency_outage`.
pub fn satisfaction(rate_out: f64, lat_out: f64, alpha: f64) -> Result<f64, HarnessError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(HarnessError::InvalidArg(format!("alpha out of [0,1]: {alpha}")));
    }
    Ok((1.0 - alpha) * rate_out + alpha * lat_out)
}

// ---------------------------------------------------------------------------
// Single runs

/// One row of experiment output.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub preset: String,
    pub scheme: Scheme,
    pub comp: bool,
    pub multi_numerology: bool,
    /// Swept parameter name ("none" for single-point runs).
    pub sweep: String,
    pub sweep_value: f64,
    pub seed: u64,
    pub alpha: f64,
    pub sum_rate: f64,
    pub rate_outage: f64,
    pub latency_outage: f64,
    pub satisfaction: f64,
    pub iterations: usize,
    pub status: String,
    pub user_rates: Vec<f64>,
    pub user_latencies: Vec<Option<f64>>,
    /// Per-iteration sum rates of the optimizer.
    pub trace: Vec<f64>,
}

/// Run one scheme on one seeded channel realization and score it.
pub fn run_single(
    config: &ScenarioConfig,
    scheme: Scheme,
    seed: u64,
) -> Result<RunResult, HarnessError> {
    let mut topo_rng = ChaCha8Rng::seed_from_u64(seed);
    let topology = build_topology(config, &mut topo_rng);
    let mut channel_rng = ChaCha8Rng::seed_from_u64(seed ^ CHANNEL_SALT);
    let h = draw_channels(&topology, config, &mut channel_rng);
    let mask = comp_associate(&h, &config.comp_threshold, config.association);

    let noise = config.noise_w();
    let (status, iterations, trace, user_rates, user_latencies, sum) =
        match run_scheme(scheme, config, &h, &mask, seed) {
            Ok(solution) => {
                let rates: Vec<f64> = (0..config.num_users)
                    .map(|m| {
                        phy::user_rate(
                            &solution.power,
                            &solution.assignment,
                            &h,
                            &config.grid,
                            noise,
                            m,
                        )
                    })
                    .collect();
                let lats: Vec<Option<f64>> = (0..config.num_users)
                    .map(|m| phy::avg_latency(&solution.assignment, &config.grid, m))
                    .collect();
                (
                    solution.status.to_string(),
                    solution.history.len(),
                    solution.rate_trace(),
                    rates,
                    lats,
                    solution.sum_rate,
                )
            }
            Err(err) => (
                format!("error: {err}"),
                0,
                Vec::new(),
                vec![0.0; config.num_users],
                vec![None; config.num_users],
                0.0,
            ),
        };

    let r_out = rate_outage(&user_rates, &config.rate_req);
    let l_out = latency_outage(&user_latencies, &config.latency_req_ms);
    let sf = satisfaction(r_out, l_out, DEFAULT_ALPHA)?;
    Ok(RunResult {
        preset: "none".into(),
        scheme,
        comp: true,
        multi_numerology: config.grid.count() > 1,
        sweep: "none".into(),
        sweep_value: 0.0,
        seed,
        alpha: DEFAULT_ALPHA,
        sum_rate: sum,
        rate_outage: r_out,
        latency_outage: l_out,
        satisfaction: sf,
        iterations,
        status,
        user_rates,
        user_latencies,
        trace,
    })
}

/// Run one `(config, scheme)` point over a list of seeds on the worker
/// pool. Per-seed failures become rows with an `error:` status; the run
/// continues. Row order follows the seed list.
pub fn run_experiment(
    config: &ScenarioConfig,
    scheme: Scheme,
    seeds: &[u64],
) -> Result<Vec<RunResult>, HarnessError> {
    let results: Vec<RunResult> = seeds
        .par_iter()
        .map(|&seed| {
            run_single(config, scheme, seed).unwrap_or_else(|err| RunResult {
                preset: "none".into(),
                scheme,
                comp: true,
                multi_numerology: config.grid.count() > 1,
                sweep: "none".into(),
                sweep_value: 0.0,
                seed,
                alpha: DEFAULT_ALPHA,
                sum_rate: 0.0,
                rate_outage: 1.0,
                latency_outage: 1.0,
                satisfaction: 1.0,
                iterations: 0,
                status: format!("error: {err}"),
                user_rates: vec![0.0; config.num_users],
                user_latencies: vec![None; config.num_users],
                trace: Vec::new(),
            })
        })
        .collect();
    Ok(results)
}

// ---------------------------------------------------------------------------
// Presets

/// Predeclared sweeps, one per headline experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Optimizer trace at several power budgets.
    Convergence,
    /// Sum rate versus the BS power budget.
    RateVsPower,
    /// Rate outage versus the per-user rate requirement.
    OutageVsQos,
    /// CoMP against strongest-BS-only association over rate requirements.
    CompVsNoncomp,
    /// Two coexisting numerologies against one over rate requirements.
    MnVsSn,
    /// Satisfaction metric versus the outage weighting.
    SfVsAlpha,
    /// All schemes side by side at fixed settings.
    BenchmarkCompare,
}

impl Preset {
    pub fn id(&self) -> &'static str {
        match self {
            Preset::Convergence => "convergence",
            Preset::RateVsPower => "rate-vs-power",
            Preset::OutageVsQos => "outage-vs-qos",
            Preset::CompVsNoncomp => "comp-vs-noncomp",
            Preset::MnVsSn => "mn-vs-sn",
            Preset::SfVsAlpha => "sf-vs-alpha",
            Preset::BenchmarkCompare => "benchmark-compare",
        }
    }

    pub fn parse(text: &str) -> Option<Preset> {
        Preset::all().into_iter().find(|p| p.id() == text)
    }

    pub fn all() -> [Preset; 7] {
        [
            Preset::Convergence,
            Preset::RateVsPower,
            Preset::OutageVsQos,
            Preset::CompVsNoncomp,
            Preset::MnVsSn,
            Preset::SfVsAlpha,
            Preset::BenchmarkCompare,
        ]
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Options for a preset run.
#[derive(Debug, Clone)]
pub struct PresetOptions {
    pub scheme: Scheme,
    pub comp: bool,
    pub multi_numerology: bool,
    pub num_seeds: usize,
    /// Base seed; seeds are `base..base + num_seeds`. Defaults to the
    /// config's seed.
    pub base_seed: Option<u64>,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions {
            scheme: Scheme::FullCesp,
            comp: true,
            multi_numerology: true,
            num_seeds: 20,
            base_seed: None,
        }
    }
}

/// Set both power limits (per-BS budget and per-subcarrier cap) to the
/// same dBm value, the sweep convention for power axes.
pub fn with_power_dbm(config: &ScenarioConfig, dbm: f64) -> ScenarioConfig {
    let mut out = config.clone();
    out.per_bs_cap_dbm = vec![dbm; config.num_bs];
    out.per_subcarrier_cap_dbm = dbm;
    out
}

pub fn with_rate_req(config: &ScenarioConfig, req: f64) -> ScenarioConfig {
    let mut out = config.clone();
    out.rate_req = vec![req; config.num_users];
    out
}

pub const POWER_AXIS_SHORT: [f64; 3] = [23.0, 26.0, 30.0];
pub const POWER_AXIS: [f64; 4] = [23.0, 26.0, 30.0, 36.0];
pub const RATE_REQ_AXIS: [f64; 5] = [0.0, 1.0, 3.0, 5.0, 7.0];
pub const ALPHA_AXIS: [f64; 7] = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0];

/// Execute a preset: run every point of its sweep over the seed list and
/// tag the rows.
pub fn run_preset_rows(
    preset: Preset,
    base: &ScenarioConfig,
    opts: &PresetOptions,
) -> Result<Vec<RunResult>, HarnessError> {
    let base_seed = opts.base_seed.unwrap_or(base.rng_seed);
    let seeds: Vec<u64> = (0..opts.num_seeds as u64).map(|s| base_seed + s).collect();
    let mut rows: Vec<RunResult> = Vec::new();

    let tag = |mut row: RunResult, sweep: &str, value: f64, comp: bool, mn: bool| {
        row.preset = preset.id().into();
        row.sweep = sweep.into();
        row.sweep_value = value;
        row.comp = comp;
        row.multi_numerology = mn;
        row
    };

    match preset {
        Preset::Convergence => {
            for &dbm in &POWER_AXIS_SHORT {
                let config = apply_mode(&with_power_dbm(base, dbm), opts.comp, opts.multi_numerology);
                for row in run_experiment(&config, opts.scheme, &seeds)? {
                    rows.push(tag(row, "p_max_dbm", dbm, opts.comp, opts.multi_numerology));
                }
            }
        }
        Preset::RateVsPower => {
            for &dbm in &POWER_AXIS {
                let config = apply_mode(&with_power_dbm(base, dbm), opts.comp, opts.multi_numerology);
                for row in run_experiment(&config, opts.scheme, &seeds)? {
                    rows.push(tag(row, "p_max_dbm", dbm, opts.comp, opts.multi_numerology));
                }
            }
        }
        Preset::OutageVsQos => {
            for &req in &RATE_REQ_AXIS {
                let config = apply_mode(&with_rate_req(base, req), opts.comp, opts.multi_numerology);
                for row in run_experiment(&config, opts.scheme, &seeds)? {
                    rows.push(tag(row, "rate_req", req, opts.comp, opts.multi_numerology));
                }
            }
        }
        Preset::CompVsNoncomp => {
            for comp in [true, false] {
                for &req in &RATE_REQ_AXIS {
                    let config = apply_mode(&with_rate_req(base, req), comp, opts.multi_numerology);
                    for row in run_experiment(&config, opts.scheme, &seeds)? {
                        rows.push(tag(row, "rate_req", req, comp, opts.multi_numerology));
                    }
                }
            }
        }
        Preset::MnVsSn => {
            for mn in [true, false] {
                for &req in &RATE_REQ_AXIS {
                    let config = apply_mode(&with_rate_req(base, req), opts.comp, mn);
                    for row in run_experiment(&config, opts.scheme, &seeds)? {
                        rows.push(tag(row, "rate_req", req, opts.comp, mn));
                    }
                }
            }
        }
        Preset::SfVsAlpha => {
            let config = apply_mode(base, opts.comp, opts.multi_numerology);
            let base_rows = run_experiment(&config, opts.scheme, &seeds)?;
            for &alpha in &ALPHA_AXIS {
                for row in &base_rows {
                    let mut row = row.clone();
                    row.alpha = alpha;
                    row.satisfaction = satisfaction(row.rate_outage, row.latency_outage, alpha)?;
                    rows.push(tag(row, "alpha", alpha, opts.comp, opts.multi_numerology));
                }
            }
        }
        Preset::BenchmarkCompare => {
            for (index, scheme) in Scheme::all().into_iter().enumerate() {
                let config = apply_mode(base, opts.comp, opts.multi_numerology);
                for row in run_experiment(&config, scheme, &seeds)? {
                    rows.push(tag(
                        row,
                        "scheme_index",
                        index as f64,
                        opts.comp,
                        opts.multi_numerology,
                    ));
                }
            }
        }
    }
    Ok(rows)
}

/// Files produced by a preset run.
#[derive(Debug, Clone)]
pub struct PresetOutput {
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
    pub rows: Vec<RunResult>,
}

/// Run a preset and emit `<preset>.csv` and `<preset>.summary.json` under
/// `out_dir`.
pub fn run_preset(
    preset: Preset,
    base: &ScenarioConfig,
    opts: &PresetOptions,
    out_dir: &Path,
) -> Result<PresetOutput, HarnessError> {
    let rows = run_preset_rows(preset, base, opts)?;
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", preset.id()));
    let summary_path = out_dir.join(format!("{}.summary.json", preset.id()));
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv)?;
    std::fs::write(&csv_path, &csv)?;
    let summary = summarize(preset.id(), base, &rows);
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| HarnessError::Io(std::io::Error::other(e)))?;
    std::fs::write(&summary_path, json + "\n")?;
    Ok(PresetOutput {
        csv_path,
        summary_path,
        rows,
    })
}

// ---------------------------------------------------------------------------
// CSV emission and parsing

pub const CSV_HEADER: &str = "preset,scheme,comp,numerology,sweep,sweep_value,seed,alpha,sum_rate,rate_outage,latency_outage,satisfaction,iterations,status,user_rates,user_latencies,trace";

fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn join_opt(values: &[Option<f64>]) -> String {
    values
        .iter()
        .map(|v| v.map(|x| x.to_string()).unwrap_or_default())
        .collect::<Vec<_>>()
        .join(";")
}

/// Write rows as CSV (one row per seed per sweep point).
pub fn write_csv<W: Write>(rows: &[RunResult], mut w: W) -> Result<(), HarnessError> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.preset,
            r.scheme.id(),
            r.comp,
            if r.multi_numerology { "mn" } else { "sn" },
            r.sweep,
            r.sweep_value,
            r.seed,
            r.alpha,
            r.sum_rate,
            r.rate_outage,
            r.latency_outage,
            r.satisfaction,
            r.iterations,
            r.status,
            join_f64(&r.user_rates),
            join_opt(&r.user_latencies),
            join_f64(&r.trace),
        )?;
    }
    Ok(())
}

/// Parse CSV text produced by [`write_csv`] back into rows.
pub fn parse_csv(text: &str) -> Result<Vec<RunResult>, HarnessError> {
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        _ => {
            return Err(HarnessError::CsvParse {
                line: 1,
                message: "missing or unexpected header".into(),
            })
        }
    }
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 17 {
            return Err(HarnessError::CsvParse {
                line: idx + 1,
                message: format!("expected 17 fields, got {}", fields.len()),
            });
        }
        let err = |message: String| HarnessError::CsvParse {
            line: idx + 1,
            message,
        };
        let parse_f64 =
            |s: &str| -> Result<f64, HarnessError> { s.parse().map_err(|e| err(format!("{e}: {s}"))) };
        let parse_list = |s: &str| -> Result<Vec<f64>, HarnessError> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(';').map(parse_f64).collect()
        };
        let parse_opt_list = |s: &str| -> Result<Vec<Option<f64>>, HarnessError> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(';')
                .map(|v| if v.is_empty() { Ok(None) } else { parse_f64(v).map(Some) })
                .collect()
        };
        rows.push(RunResult {
            preset: fields[0].into(),
            scheme: Scheme::parse(fields[1]).ok_or_else(|| err(format!("bad scheme {}", fields[1])))?,
            comp: fields[2]
                .parse()
                .map_err(|_| err(format!("bad bool {}", fields[2])))?,
            multi_numerology: fields[3] == "mn",
            sweep: fields[4].into(),
            sweep_value: parse_f64(fields[5])?,
            seed: fields[6]
                .parse()
                .map_err(|_| err(format!("bad seed {}", fields[6])))?,
            alpha: parse_f64(fields[7])?,
            sum_rate: parse_f64(fields[8])?,
            rate_outage: parse_f64(fields[9])?,
            latency_outage: parse_f64(fields[10])?,
            satisfaction: parse_f64(fields[11])?,
            iterations: fields[12]
                .parse()
                .map_err(|_| err(format!("bad iterations {}", fields[12])))?,
            status: fields[13].into(),
            user_rates: parse_list(fields[14])?,
            user_latencies: parse_opt_list(fields[15])?,
            trace: parse_list(fields[16])?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Summaries

#[derive(Debug, Clone, Serialize)]
pub struct SummaryPoint {
    pub scheme: String,
    pub comp: bool,
    pub numerology: String,
    pub sweep: String,
    pub sweep_value: f64,
    pub alpha: f64,
    pub n_seeds: usize,
    pub mean_sum_rate: f64,
    pub std_sum_rate: f64,
    pub mean_rate_outage: f64,
    pub mean_latency_outage: f64,
    pub mean_satisfaction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub preset: String,
    pub code_version: String,
    pub config: ScenarioConfig,
    pub points: Vec<SummaryPoint>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    (values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Aggregate rows into per-point means and deviations. Rows are grouped by
/// `(scheme, comp, numerology, sweep_value, alpha)` and each group is
/// sorted by seed before reduction, so aggregates do not depend on the
/// order seeds were run in.
pub fn summarize(preset: &str, config: &ScenarioConfig, rows: &[RunResult]) -> Summary {
    let mut keys: Vec<(String, bool, bool, u64, u64)> = rows
        .iter()
        .map(|r| {
            (
                r.scheme.id().to_string(),
                r.comp,
                r.multi_numerology,
                r.sweep_value.to_bits(),
                r.alpha.to_bits(),
            )
        })
        .collect();
    keys.sort();
    keys.dedup();

    let mut points = Vec::new();
    for key in keys {
        let mut group: Vec<&RunResult> = rows
            .iter()
            .filter(|r| {
                r.scheme.id() == key.0
                    && r.comp == key.1
                    && r.multi_numerology == key.2
                    && r.sweep_value.to_bits() == key.3
                    && r.alpha.to_bits() == key.4
            })
            .collect();
        group.sort_by_key(|r| r.seed);
        let rates: Vec<f64> = group.iter().map(|r| r.sum_rate).collect();
        let r_out: Vec<f64> = group.iter().map(|r| r.rate_outage).collect();
        let l_out: Vec<f64> = group.iter().map(|r| r.latency_outage).collect();
        let sf: Vec<f64> = group.iter().map(|r| r.satisfaction).collect();
        points.push(SummaryPoint {
            scheme: key.0,
            comp: key.1,
            numerology: if key.2 { "mn" } else { "sn" }.into(),
            sweep: group[0].sweep.clone(),
            sweep_value: f64::from_bits(key.3),
            alpha: f64::from_bits(key.4),
            n_seeds: group.len(),
            mean_sum_rate: mean(&rates),
            std_sum_rate: sample_std(&rates),
            mean_rate_outage: mean(&r_out),
            mean_latency_outage: mean(&l_out),
            mean_satisfaction: mean(&sf),
        });
    }

    Summary {
        preset: preset.into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin_default;

    #[test]
    fn rate_outage_counts() {
        let req = vec![1.0; 8];
        assert_eq!(rate_outage(&[2.0; 8], &req), 0.0);
        assert_eq!(rate_outage(&[0.5; 8], &req), 1.0);
        let mut rates = vec![2.0; 8];
        rates[0] = 0.0;
        rates[3] = 0.5;
        rates[7] = 0.9;
        assert!((rate_outage(&rates, &req) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn latency_outage_counts() {
        let req = vec![0.75; 8];
        assert_eq!(latency_outage(&[Some(0.5); 8], &req), 0.0);
        assert_eq!(latency_outage(&[Some(1.0); 8], &req), 1.0);
        let mut lats = vec![Some(0.5); 8];
        lats[2] = Some(0.9);
        lats[5] = None; // unserved counts as violating
        assert!((latency_outage(&lats, &req) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn satisfaction_is_convex_combination() {
        assert_eq!(satisfaction(0.4, 0.2, 0.0).unwrap(), 0.4);
        assert_eq!(satisfaction(0.4, 0.2, 1.0).unwrap(), 0.2);
        assert!((satisfaction(0.4, 0.2, 0.5).unwrap() - 0.3).abs() < 1e-15);
        assert!(satisfaction(0.4, 0.2, 1.5).is_err());
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let sf = satisfaction(0.7, 0.1, alpha).unwrap();
            assert!((0.1..=0.7).contains(&sf));
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let rows = vec![
            RunResult {
                preset: "convergence".into(),
                scheme: Scheme::FullCesp,
                comp: true,
                multi_numerology: true,
                sweep: "p_max_dbm".into(),
                sweep_value: 23.0,
                seed: 42,
                alpha: 0.5,
                sum_rate: 123.456789012345,
                rate_outage: 0.125,
                latency_outage: 0.0,
                satisfaction: 0.0625,
                iterations: 6,
                status: "converged".into(),
                user_rates: vec![1.5, 2.25e-3, 17.0],
                user_latencies: vec![Some(0.75), None, Some(0.5)],
                trace: vec![10.0, 120.5, 123.456789012345],
            },
            RunResult {
                preset: "convergence".into(),
                scheme: Scheme::RelaxRound,
                comp: false,
                multi_numerology: false,
                sweep: "p_max_dbm".into(),
                sweep_value: 26.0,
                seed: 43,
                alpha: 0.0,
                sum_rate: 0.0,
                rate_outage: 1.0,
                latency_outage: 1.0,
                satisfaction: 1.0,
                iterations: 0,
                status: "max_iter".into(),
                user_rates: vec![],
                user_latencies: vec![],
                trace: vec![],
            },
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.trim_end(), CSV_HEADER);
        assert!(parse_csv(&text).unwrap().is_empty());
    }

    #[test]
    fn aggregation_ignores_seed_order() {
        let config = builtin_default();
        let make = |seed: u64, rate: f64| RunResult {
            preset: "x".into(),
            scheme: Scheme::FullCesp,
            comp: true,
            multi_numerology: true,
            sweep: "none".into(),
            sweep_value: 0.0,
            seed,
            alpha: 0.5,
            sum_rate: rate,
            rate_outage: 0.0,
            latency_outage: 0.0,
            satisfaction: 0.0,
            iterations: 1,
            status: "converged".into(),
            user_rates: vec![],
            user_latencies: vec![],
            trace: vec![],
        };
        let rows_a = vec![make(1, 0.1), make(2, 0.3), make(3, 0.7)];
        let rows_b = vec![make(3, 0.7), make(1, 0.1), make(2, 0.3)];
        let sa = summarize("x", &config, &rows_a);
        let sb = summarize("x", &config, &rows_b);
        assert_eq!(
            sa.points[0].mean_sum_rate.to_bits(),
            sb.points[0].mean_sum_rate.to_bits()
        );
        assert_eq!(
            sa.points[0].std_sum_rate.to_bits(),
            sb.points[0].std_sum_rate.to_bits()
        );
    }
}
