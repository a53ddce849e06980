//! Run configuration and deterministic scenario construction.
//!
//! A scenario is described by a TOML document (see the repository README for
//! the exact schema). [`load_config`] parses and validates it into a
//! [`ScenarioConfig`]; [`build_topology`] then places base stations on a line
//! and draws user positions from a seeded generator, splitting users between
//! an inner disc and a cell-edge annulus.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

use crate::units::dbm_to_watts;

/// Subcarrier-spacing base step in kHz; numerology `mu` spaces carriers at
/// `2^mu` times this value.
pub const BASE_SCS_KHZ: f64 = 15.0;

/// Fraction of the cell radius that separates inner ("uniform") users from
/// cell-edge users.
pub const EDGE_BAND_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {message} (got {value})")]
    Invariant {
        field: &'static str,
        message: &'static str,
        value: String,
    },
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
}

fn invariant(field: &'static str, message: &'static str, value: impl fmt::Display) -> ConfigError {
    ConfigError::Invariant {
        field,
        message,
        value: value.to_string(),
    }
}

/// One numerology of the frame structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumerologySpec {
    /// Exponent of the spacing ladder, in `0..=5`.
    pub mu: u8,
    /// Number of subcarriers this numerology owns.
    pub subcarriers: usize,
    /// Over-the-air latency of one symbol, in milliseconds.
    pub symbol_latency_ms: f64,
}

impl NumerologySpec {
    /// Subcarrier spacing in kHz: `2^mu * 15`.
    pub fn subcarrier_spacing_khz(&self) -> f64 {
        BASE_SCS_KHZ * f64::from(1u32 << self.mu)
    }

    /// OFDM symbol duration in ms (inverse of the spacing).
    pub fn symbol_duration_ms(&self) -> f64 {
        1.0 / self.subcarrier_spacing_khz()
    }
}

/// The frame structure: one or two numerologies ordered by increasing
/// subcarrier spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumerologyGrid {
    specs: Vec<NumerologySpec>,
}

impl NumerologyGrid {
    pub fn new(specs: Vec<NumerologySpec>) -> Result<Self, ConfigError> {
        if specs.is_empty() {
            return Err(invariant("numerology", "at least one numerology required", 0));
        }
        if specs.len() > 2 {
            return Err(invariant(
                "numerology",
                "the interference model supports at most two numerologies",
                specs.len(),
            ));
        }
        for s in &specs {
            if s.mu > 5 {
                return Err(invariant("numerology.mu", "must be in 0..=5", s.mu));
            }
            if s.subcarriers == 0 {
                return Err(invariant("numerology.subcarriers", "must be positive", 0));
            }
            if !(s.symbol_latency_ms > 0.0) {
                return Err(invariant(
                    "numerology.symbol_latency_ms",
                    "must be positive",
                    s.symbol_latency_ms,
                ));
            }
        }
        if specs.len() == 2 && specs[1].mu <= specs[0].mu {
            return Err(invariant(
                "numerology.mu",
                "numerologies must be listed with strictly increasing spacing",
                format!("{} then {}", specs[0].mu, specs[1].mu),
            ));
        }
        Ok(NumerologyGrid { specs })
    }

    /// Shorthand constructor for the common two-numerology grid.
    pub fn two_numerology(
        mu1: u8,
        n1: usize,
        latency1_ms: f64,
        mu2: u8,
        n2: usize,
        latency2_ms: f64,
    ) -> Result<Self, ConfigError> {
        NumerologyGrid::new(vec![
            NumerologySpec {
                mu: mu1,
                subcarriers: n1,
                symbol_latency_ms: latency1_ms,
            },
            NumerologySpec {
                mu: mu2,
                subcarriers: n2,
                symbol_latency_ms: latency2_ms,
            },
        ])
    }

    pub fn count(&self) -> usize {
        self.specs.len()
    }

    pub fn spec(&self, i: usize) -> &NumerologySpec {
        &self.specs[i]
    }

    pub fn subcarriers(&self, i: usize) -> usize {
        self.specs[i].subcarriers
    }

    pub fn total_subcarriers(&self) -> usize {
        self.specs.iter().map(|s| s.subcarriers).sum()
    }

    pub fn latency_ms(&self, i: usize) -> f64 {
        self.specs[i].symbol_latency_ms
    }

    /// Spacing ratio `Q` between the widest and narrowest numerology;
    /// a power of two by construction, and 1 for a single numerology.
    pub fn ratio(&self) -> usize {
        if self.specs.len() < 2 {
            1
        } else {
            1usize << (self.specs[1].mu - self.specs[0].mu)
        }
    }
}

/// Scalar applied to everyone, or one value per entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    PerEntity(Vec<f64>),
}

impl ScalarOrVec {
    fn expand(&self, len: usize, field: &'static str) -> Result<Vec<f64>, ConfigError> {
        match self {
            ScalarOrVec::Scalar(v) => Ok(vec![*v; len]),
            ScalarOrVec::PerEntity(v) => {
                if v.len() == len {
                    Ok(v.clone())
                } else {
                    Err(invariant(field, "per-entity list has wrong length", v.len()))
                }
            }
        }
    }
}

/// Genetic-assignment hyperparameters for the GSA baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub tournament: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population: 40,
            generations: 200,
            mutation_rate: 0.05,
            crossover_rate: 0.8,
            tournament: 3,
        }
    }
}

/// How per-BS channel strength is summarized when deciding CoMP eligibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrengthSummary {
    /// Fading-averaged: compare squared large-scale gains only (default).
    LargeScale,
    /// Compare the mean instantaneous gain over all subcarriers.
    Instantaneous,
}

/// A fully validated run configuration. Power-type fields keep their
/// dB/dBm units from the document; use the `*_w` accessors for linear watts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub num_bs: usize,
    pub num_users: usize,
    pub grid: NumerologyGrid,
    pub cell_radius_m: f64,
    pub inter_bs_distance_m: f64,
    /// Fraction of users placed in the cell-edge annulus.
    pub edge_ratio: f64,
    pub noise_dbm: f64,
    /// Per-subcarrier transmit power cap, dBm.
    pub per_subcarrier_cap_dbm: f64,
    /// Per-BS transmit power budget, dBm, one entry per BS.
    pub per_bs_cap_dbm: Vec<f64>,
    /// Minimum per-user rate requirement, b/s/Hz, one entry per user.
    pub rate_req: Vec<f64>,
    /// Per-user latency requirement, ms.
    pub latency_req_ms: Vec<f64>,
    /// Per-user CoMP channel-level-difference threshold (>= 1).
    pub comp_threshold: Vec<f64>,
    /// Binarization penalty weight for the assignment solve.
    pub penalty: f64,
    /// Outer-loop stop threshold on the sum-rate change, b/s/Hz.
    pub convergence_threshold: f64,
    pub max_iterations: usize,
    pub rng_seed: u64,
    /// Surrogate re-expansion steps inside each assignment solve; the
    /// penalty weight ramps from 0 to `penalty` across them.
    pub inner_sca_repeats: usize,
    /// Double the penalty until the relaxed assignment is near-binary
    /// instead of using the fixed `penalty` value.
    pub lambda_escalation: bool,
    pub association: StrengthSummary,
    pub ga: GaParams,
}

impl ScenarioConfig {
    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    pub fn subcarrier_cap_w(&self) -> f64 {
        dbm_to_watts(self.per_subcarrier_cap_dbm)
    }

    pub fn bs_cap_w(&self, k: usize) -> f64 {
        dbm_to_watts(self.per_bs_cap_dbm[k])
    }

    /// Radius separating inner users from edge users.
    pub fn edge_inner_radius_m(&self) -> f64 {
        EDGE_BAND_FRACTION * self.cell_radius_m
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.num_bs == 0 {
            return Err(invariant("num_bs", "must be at least 1", 0));
        }
        if self.num_users == 0 {
            return Err(invariant("num_users", "must be at least 1", 0));
        }
        if !(self.cell_radius_m > 0.0) {
            return Err(invariant("cell_radius_m", "must be positive", self.cell_radius_m));
        }
        if self.num_bs > 1 && self.inter_bs_distance_m < 2.0 * self.cell_radius_m {
            return Err(invariant(
                "inter_bs_distance_m",
                "must be at least twice the cell radius so cells do not overlap",
                self.inter_bs_distance_m,
            ));
        }
        if !(0.0..=1.0).contains(&self.edge_ratio) {
            return Err(invariant("edge_ratio", "out of [0,1]", self.edge_ratio));
        }
        if !self.noise_dbm.is_finite() {
            return Err(invariant("noise_dbm", "must be finite", self.noise_dbm));
        }
        if !self.per_subcarrier_cap_dbm.is_finite() {
            return Err(invariant(
                "per_subcarrier_cap_dbm",
                "must be finite",
                self.per_subcarrier_cap_dbm,
            ));
        }
        if self.per_bs_cap_dbm.len() != self.num_bs {
            return Err(invariant(
                "per_bs_cap_dbm",
                "needs one entry per BS",
                self.per_bs_cap_dbm.len(),
            ));
        }
        for &v in &self.per_bs_cap_dbm {
            if !v.is_finite() {
                return Err(invariant("per_bs_cap_dbm", "must be finite", v));
            }
        }
        for &r in &self.rate_req {
            if !(r >= 0.0) {
                return Err(invariant("rate_req", "must be non-negative", r));
            }
        }
        for &l in &self.latency_req_ms {
            if !(l > 0.0) {
                return Err(invariant("latency_req_ms", "must be positive", l));
            }
        }
        for &s in &self.comp_threshold {
            if !(s >= 1.0) {
                return Err(invariant("comp_threshold", "must be >= 1", s));
            }
        }
        if !(self.penalty >= 0.0) {
            return Err(invariant("penalty", "must be non-negative", self.penalty));
        }
        if !(self.convergence_threshold > 0.0) {
            return Err(invariant(
                "convergence_threshold",
                "must be positive",
                self.convergence_threshold,
            ));
        }
        if self.max_iterations == 0 {
            return Err(invariant("max_iterations", "must be at least 1", 0));
        }
        if self.inner_sca_repeats == 0 {
            return Err(invariant("inner_sca_repeats", "must be at least 1", 0));
        }
        if self.ga.population == 0 {
            return Err(invariant("ga.population", "must be positive", 0));
        }
        if self.ga.tournament == 0 {
            return Err(invariant("ga.tournament", "must be positive", 0));
        }
        if !(0.0..=1.0).contains(&self.ga.mutation_rate) {
            return Err(invariant("ga.mutation_rate", "out of [0,1]", self.ga.mutation_rate));
        }
        if !(0.0..=1.0).contains(&self.ga.crossover_rate) {
            return Err(invariant("ga.crossover_rate", "out of [0,1]", self.ga.crossover_rate));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Document schema

#[derive(Deserialize)]
struct ConfigDoc {
    cells: CellsDoc,
    numerology: Vec<NumerologySpec>,
    power: PowerDoc,
    qos: QosDoc,
    algorithm: AlgorithmDoc,
    #[serde(default)]
    ga: GaParams,
}

#[derive(Deserialize)]
struct CellsDoc {
    num_bs: usize,
    num_users: usize,
    cell_radius_m: f64,
    inter_bs_distance_m: f64,
    #[serde(default = "default_edge_ratio")]
    edge_ratio: f64,
}

fn default_edge_ratio() -> f64 {
    0.5
}

#[derive(Deserialize)]
struct PowerDoc {
    noise_dbm: f64,
    per_subcarrier_cap_dbm: f64,
    per_bs_cap_dbm: ScalarOrVec,
}

#[derive(Deserialize)]
struct QosDoc {
    #[serde(default = "default_rate_req")]
    rate_req: ScalarOrVec,
    latency_req_ms: ScalarOrVec,
    #[serde(default = "default_comp_threshold")]
    comp_threshold: ScalarOrVec,
}

fn default_rate_req() -> ScalarOrVec {
    ScalarOrVec::Scalar(0.0)
}

fn default_comp_threshold() -> ScalarOrVec {
    ScalarOrVec::Scalar(100.0)
}

#[derive(Deserialize)]
struct AlgorithmDoc {
    penalty: f64,
    convergence_threshold: f64,
    max_iterations: usize,
    #[serde(default = "default_seed")]
    rng_seed: u64,
    #[serde(default = "default_inner_repeats")]
    inner_sca_repeats: usize,
    #[serde(default)]
    lambda_escalation: bool,
    #[serde(default = "default_association")]
    association: StrengthSummary,
}

fn default_seed() -> u64 {
    1
}

fn default_inner_repeats() -> usize {
    5
}

fn default_association() -> StrengthSummary {
    StrengthSummary::LargeScale
}

/// Parse and validate a configuration document from a TOML string.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let doc: ConfigDoc = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let num_bs = doc.cells.num_bs;
    let num_users = doc.cells.num_users;
    let config = ScenarioConfig {
        num_bs,
        num_users,
        grid: NumerologyGrid::new(doc.numerology)?,
        cell_radius_m: doc.cells.cell_radius_m,
        inter_bs_distance_m: doc.cells.inter_bs_distance_m,
        edge_ratio: doc.cells.edge_ratio,
        noise_dbm: doc.power.noise_dbm,
        per_subcarrier_cap_dbm: doc.power.per_subcarrier_cap_dbm,
        per_bs_cap_dbm: doc.power.per_bs_cap_dbm.expand(num_bs, "per_bs_cap_dbm")?,
        rate_req: doc.qos.rate_req.expand(num_users, "rate_req")?,
        latency_req_ms: doc.qos.latency_req_ms.expand(num_users, "latency_req_ms")?,
        comp_threshold: doc.qos.comp_threshold.expand(num_users, "comp_threshold")?,
        penalty: doc.algorithm.penalty,
        convergence_threshold: doc.algorithm.convergence_threshold,
        max_iterations: doc.algorithm.max_iterations,
        rng_seed: doc.algorithm.rng_seed,
        inner_sca_repeats: doc.algorithm.inner_sca_repeats,
        lambda_escalation: doc.algorithm.lambda_escalation,
        association: doc.algorithm.association,
        ga: doc.ga,
    };
    config.validate()?;
    Ok(config)
}

/// Load and validate a configuration document from disk.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// The bundled two-cell, eight-user benchmark scenario used by the presets
/// and runnable examples (identical to `configs/default.toml`).
pub fn builtin_default() -> ScenarioConfig {
    parse_config(include_str!("../configs/default.toml")).expect("bundled default config is valid")
}

// ---------------------------------------------------------------------------
// Topology

/// Distance band a user was placed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserClass {
    Uniform,
    Edge,
}

/// Base-station and user placement in the plane, with per-user class tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub bs_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    pub user_class: Vec<UserClass>,
}

impl Topology {
    pub fn distance(&self, k: usize, m: usize) -> f64 {
        let b = self.bs_positions[k];
        let u = self.user_positions[m];
        ((b[0] - u[0]).powi(2) + (b[1] - u[1]).powi(2)).sqrt()
    }

    pub fn nearest_bs(&self, m: usize) -> usize {
        (0..self.bs_positions.len())
            .min_by(|&a, &b| self.distance(a, m).total_cmp(&self.distance(b, m)))
            .unwrap()
    }
}

/// Place BSs on a line with the configured spacing and draw user positions.
///
/// The first `round(edge_ratio * num_users)` users land in the edge annulus
/// `(0.8 R, R]` of a uniformly chosen home BS; the remainder land in the
/// inner disc `(0, 0.8 R]`. Radial placement is uniform in area, angular
/// placement uniform in `[0, 2pi)`. Identical `(config, rng state)` inputs
/// reproduce the topology bit for bit.
pub fn build_topology<R: Rng>(config: &ScenarioConfig, rng: &mut R) -> Topology {
    let bs_positions: Vec<[f64; 2]> = (0..config.num_bs)
        .map(|k| [k as f64 * config.inter_bs_distance_m, 0.0])
        .collect();

    let num_edge = (config.edge_ratio * config.num_users as f64).round() as usize;
    let inner = config.edge_inner_radius_m();
    let outer = config.cell_radius_m;

    let mut user_positions = Vec::with_capacity(config.num_users);
    let mut user_class = Vec::with_capacity(config.num_users);
    for m in 0..config.num_users {
        let (lo, hi, class) = if m < num_edge {
            (inner, outer, UserClass::Edge)
        } else {
            (0.0, inner, UserClass::Uniform)
        };
        let home = rng.random_range(0..config.num_bs);
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        // uniform in area within the band; the open lower end has measure zero
        let u: f64 = rng.random();
        let radius = (lo * lo + u * (hi * hi - lo * lo)).sqrt();
        let b = bs_positions[home];
        user_positions.push([b[0] + radius * angle.cos(), b[1] + radius * angle.sin()]);
        user_class.push(class);
    }

    Topology {
        bs_positions,
        user_positions,
        user_class,
    }
}
