//! System-level simulator and optimization library for coordinated-multipoint
//! (CoMP) downlink networks running two coexisting OFDM numerologies.
//!
//! The library builds seeded topologies and Rayleigh channels, models the
//! closed-form physical layer (inter-numerology and inter-cell interference,
//! SINR, spectral efficiency, symbol latency), and solves the joint subcarrier
//! assignment and power allocation problem with an alternating
//! difference-of-concave (CESP) optimizer. Baseline schemes (equal power,
//! genetic assignment, relax-and-round) and a Monte-Carlo experiment harness
//! with CSV/JSON emission round out the toolkit.
//!
//! Modules follow the pipeline order:
//!
//! - [`scenario`] — run configuration, numerology grid, topology generation
//! - [`channel`] — pathloss and small-scale fading tensors
//! - [`phy`] — interference, SINR, rate, and latency formulas
//! - [`association`] — CoMP serving-set eligibility
//! - [`solver`] — projected-gradient engine for smooth concave programs
//! - [`cesp`] — the alternating surrogate optimizer
//! - [`baselines`] — comparison schemes and mode switches
//! - [`harness`] — seeded experiment driver, metrics, and file emission
//!
//! # Quick start
//!
//! ```
//! use mncomp::prelude::*;
//! use rand::SeedableRng;
//!
//! let config = mncomp::scenario::builtin_default();
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.rng_seed);
//! let topology = build_topology(&config, &mut rng);
//! let channels = draw_channels(&topology, &config, &mut rng);
//! let mask = comp_associate(&channels, &config.comp_threshold, config.association);
//! assert!(mask.eligible_count(0) >= 1);
//! ```
//!
//! The runnable examples under `examples/` drive the full optimizer; see
//! the README for the preset catalogue and the `mncomp run` CLI.

pub mod association;
pub mod baselines;
pub mod cesp;
pub mod channel;
pub mod harness;
pub mod phy;
pub mod scenario;
pub mod solver;
pub mod tensor;
pub mod units;

/// Convenience re-exports for downstream code and the runnable examples.
pub mod prelude {
    pub use crate::association::{comp_associate, EligibilityMask, StrengthSummary};
    pub use crate::baselines::{run_scheme, Scheme};
    pub use crate::cesp::{run_cesp, CespSolution, RunStatus};
    pub use crate::channel::{draw_channels, pathloss_db, ChannelTensor};
    pub use crate::harness::{run_experiment, run_preset, Preset, RunResult};
    pub use crate::phy::{AssignTensor, PowerAlloc};
    pub use crate::scenario::{build_topology, load_config, NumerologyGrid, ScenarioConfig, Topology};
    pub use crate::solver::{ConvexProgram, SolveReport, SolveStatus};
}
