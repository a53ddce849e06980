//! Comparison schemes: equal power allocation (EPA), genetic subcarrier
//! assignment (GSA), relax-and-round assignment without the binarization
//! penalty, plus the non-CoMP and single-numerology mode switches.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::association::EligibilityMask;
use crate::cesp::{self, CespError, CespSolution, SlotPowers};
use crate::channel::ChannelTensor;
use crate::phy::{self, AssignMode, AssignTensor, PowerAlloc};
use crate::scenario::{NumerologyGrid, NumerologySpec, ScenarioConfig};

/// Allocation scheme identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Alternating surrogate optimizer for both sub-problems.
    FullCesp,
    /// Equal power plus relax-and-round assignment (no binarization
    /// penalty).
    RelaxRound,
    /// Equal power plus the penalized assignment solve.
    EpaCespSa,
    /// Surrogate power solve plus genetic assignment.
    CespPaGsa,
}

impl Scheme {
    pub fn id(&self) -> &'static str {
        match self {
            Scheme::FullCesp => "full_cesp",
            Scheme::RelaxRound => "relax_round",
            Scheme::EpaCespSa => "epa_cesp_sa",
            Scheme::CespPaGsa => "cesp_pa_gsa",
        }
    }

    pub fn parse(text: &str) -> Option<Scheme> {
        match text {
            "full_cesp" => Some(Scheme::FullCesp),
            "relax_round" => Some(Scheme::RelaxRound),
            "epa_cesp_sa" => Some(Scheme::EpaCespSa),
            "cesp_pa_gsa" => Some(Scheme::CespPaGsa),
            _ => None,
        }
    }

    pub fn all() -> [Scheme; 4] {
        [
            Scheme::FullCesp,
            Scheme::RelaxRound,
            Scheme::EpaCespSa,
            Scheme::CespPaGsa,
        ]
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Equal power allocation: each BS splits its budget evenly over its
/// assigned slots, capped per subcarrier. A BS with nothing assigned spends
/// nothing.
pub fn epa(x: &AssignTensor, config: &ScenarioConfig) -> PowerAlloc {
    debug_assert_eq!(x.mode(), AssignMode::Binary);
    let mut p = PowerAlloc::zeros(config.num_bs, config.num_users, &config.grid);
    let cap = config.subcarrier_cap_w();
    for k in 0..config.num_bs {
        let assigned: Vec<(usize, usize, usize)> = x
            .tensor()
            .slots()
            .filter(|&(sk, i, n)| sk == k && x.assigned_user(sk, i, n).is_some())
            .collect();
        if assigned.is_empty() {
            continue;
        }
        let share = (config.bs_cap_w(k) / assigned.len() as f64).min(cap);
        for (k, i, n) in assigned {
            let m = x.assigned_user(k, i, n).unwrap();
            p.set(k, m, i, n, share);
        }
    }
    p
}

/// Genome: one gene per `(k, i, n)` slot holding the served user (or none).
type Genome = Vec<Option<usize>>;

struct GaProblem<'a> {
    config: &'a ScenarioConfig,
    h: &'a ChannelTensor,
    q: SlotPowers,
    slots: Vec<(usize, usize, usize)>,
    /// Users selectable per slot (eligibility mask).
    choices: Vec<Vec<usize>>,
    noise: f64,
}

impl GaProblem<'_> {
    fn decode(&self, genome: &Genome) -> AssignTensor {
        let mut x = AssignTensor::zeros(
            self.config.num_bs,
            self.config.num_users,
            &self.config.grid,
            AssignMode::Binary,
        );
        for (g, &(k, i, n)) in genome.iter().zip(&self.slots) {
            if let Some(m) = *g {
                x.set(k, m, i, n, 1.0);
            }
        }
        x
    }

    /// Sum rate minus quadratic penalties for budget, rate, and latency
    /// violations. Power follows the slot: a reassigned slot hands its
    /// power to the new user.
    fn fitness(&self, genome: &Genome) -> f64 {
        let x = self.decode(genome);
        let p = self.q.attribute(&x, &self.config.grid);
        let mut fitness = phy::sum_rate(&p, &x, self.h, &self.config.grid, self.noise);
        let penalty_weight = 10.0;
        for k in 0..self.config.num_bs {
            let over = (p.assigned_sum(&x, k) - self.config.bs_cap_w(k)).max(0.0);
            fitness -= penalty_weight * over * over;
        }
        for m in 0..self.config.num_users {
            let rate = phy::user_rate(&p, &x, self.h, &self.config.grid, self.noise, m);
            let deficit = (self.config.rate_req[m] - rate).max(0.0);
            fitness -= penalty_weight * deficit * deficit;
            let excess = match phy::avg_latency(&x, &self.config.grid, m) {
                Some(l) => (l - self.config.latency_req_ms[m]).max(0.0),
                None => self.config.latency_req_ms[m],
            };
            fitness -= penalty_weight * excess * excess;
        }
        fitness
    }
}

/// Genetic subcarrier assignment over binary genomes respecting the
/// single-user-per-slot rule and the eligibility mask.
///
/// The population is seeded with the greedy assignment; selection is by
/// tournament, recombination by single-point crossover, and mutation
/// re-rolls a gene to a random eligible user or none. Deterministic for a
/// given seed. Returns the fittest individual ever seen.
pub fn gsa(
    p: &PowerAlloc,
    config: &ScenarioConfig,
    h: &ChannelTensor,
    mask: &EligibilityMask,
    seed: u64,
) -> AssignTensor {
    let slots: Vec<(usize, usize, usize)> = p.tensor().slots().collect();
    let choices: Vec<Vec<usize>> = slots
        .iter()
        .map(|&(k, _, _)| {
            (0..config.num_users)
                .filter(|&m| mask.is_eligible(k, m))
                .collect()
        })
        .collect();
    let problem = GaProblem {
        config,
        h,
        q: SlotPowers::from_power(p),
        slots,
        choices,
        noise: config.noise_w(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ga = &config.ga;

    // greedy seed individual
    let greedy = cesp::initial_assignment(config, h, mask);
    let greedy_genome: Genome = problem
        .slots
        .iter()
        .map(|&(k, i, n)| greedy.assigned_user(k, i, n))
        .collect();

    let mut population: Vec<Genome> = Vec::with_capacity(ga.population);
    population.push(greedy_genome);
    while population.len() < ga.population {
        let genome: Genome = problem
            .choices
            .iter()
            .map(|users| {
                if users.is_empty() || rng.random::<f64>() < 0.2 {
                    None
                } else {
                    users.choose(&mut rng).copied()
                }
            })
            .collect();
        population.push(genome);
    }

    let mut scores: Vec<f64> = population.iter().map(|g| problem.fitness(g)).collect();
    let mut best_idx = argmax(&scores);
    let mut best = (population[best_idx].clone(), scores[best_idx]);

    for _generation in 0..ga.generations {
        let mut next: Vec<Genome> = Vec::with_capacity(ga.population);
        // elitism: carry the incumbent best
        next.push(best.0.clone());
        while next.len() < ga.population {
            let a = tournament(&scores, ga.tournament, &mut rng);
            let b = tournament(&scores, ga.tournament, &mut rng);
            let mut child = if rng.random::<f64>() < ga.crossover_rate && !problem.slots.is_empty() {
                let cut = rng.random_range(0..problem.slots.len());
                let mut child = population[a][..cut].to_vec();
                child.extend_from_slice(&population[b][cut..]);
                child
            } else {
                population[a].clone()
            };
            for (gene, users) in child.iter_mut().zip(&problem.choices) {
                if rng.random::<f64>() < ga.mutation_rate {
                    *gene = if users.is_empty() || rng.random::<f64>() < 1.0 / (users.len() + 1) as f64
                    {
                        None
                    } else {
                        users.choose(&mut rng).copied()
                    };
                }
            }
            next.push(child);
        }
        population = next;
        scores = population.iter().map(|g| problem.fitness(g)).collect();
        best_idx = argmax(&scores);
        if scores[best_idx] > best.1 {
            best = (population[best_idx].clone(), scores[best_idx]);
        }
    }

    problem.decode(&best.0)
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn tournament<R: Rng>(scores: &[f64], size: usize, rng: &mut R) -> usize {
    let mut winner = rng.random_range(0..scores.len());
    for _ in 1..size {
        let challenger = rng.random_range(0..scores.len());
        if scores[challenger] > scores[winner] {
            winner = challenger;
        }
    }
    winner
}

/// Relax-and-round assignment: the same relaxed surrogate machinery with
/// the binarization penalty off, then argmax rounding at 0.5.
pub fn relax_round(
    config: &ScenarioConfig,
    h: &ChannelTensor,
    mask: &EligibilityMask,
    p: &PowerAlloc,
    x_prev: &AssignTensor,
) -> Result<cesp::SaOutcome, CespError> {
    cesp::solve_sa(config, h, mask, p, x_prev, 0.0)
}

/// Apply mode switches to a configuration.
///
/// `comp = false` tightens every user's threshold to 1 so only the
/// strongest BS is eligible. `single_numerology = true` collapses the grid
/// to one numerology at the base spacing carrying the same total subcarrier
/// count, with the narrow numerology's symbol latency.
pub fn apply_mode(config: &ScenarioConfig, comp: bool, multi_numerology: bool) -> ScenarioConfig {
    let mut out = config.clone();
    if !comp {
        out.comp_threshold = vec![1.0; config.num_users];
    }
    if !multi_numerology {
        let total = config.grid.total_subcarriers();
        let narrow = config.grid.spec(0).clone();
        out.grid = NumerologyGrid::new(vec![NumerologySpec {
            mu: narrow.mu,
            subcarriers: total,
            symbol_latency_ms: narrow.symbol_latency_ms,
        }])
        .expect("single-numerology grid");
    }
    out
}

/// Run one scheme end to end on prepared channels.
pub fn run_scheme(
    scheme: Scheme,
    config: &ScenarioConfig,
    h: &ChannelTensor,
    mask: &EligibilityMask,
    seed: u64,
) -> Result<CespSolution, CespError> {
    use cesp::{PaStep, SaStep};
    let (pa, sa) = match scheme {
        Scheme::FullCesp => (PaStep::Surrogate, SaStep::Surrogate { lambda_override: None }),
        Scheme::RelaxRound => (
            PaStep::EqualPower,
            SaStep::Surrogate {
                lambda_override: Some(0.0),
            },
        ),
        Scheme::EpaCespSa => (PaStep::EqualPower, SaStep::Surrogate { lambda_override: None }),
        Scheme::CespPaGsa => (
            PaStep::Surrogate,
            SaStep::Genetic {
                seed: seed ^ 0x6761_7365,
            },
        ),
    };
    cesp::run_alternation(config, h, mask, pa, sa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::comp_associate;
    use crate::channel::draw_channels;
    use crate::scenario::{build_topology, parse_config};

    fn config4() -> ScenarioConfig {
        parse_config(
            r#"
            [cells]
            num_bs = 1
            num_users = 2
            cell_radius_m = 100.0
            inter_bs_distance_m = 200.0
            edge_ratio = 0.0

            [[numerology]]
            mu = 0
            subcarriers = 2
            symbol_latency_ms = 1.0

            [[numerology]]
            mu = 1
            subcarriers = 2
            symbol_latency_ms = 0.5

            [power]
            noise_dbm = -117.0
            # budget 4 W, cap above the equal share
            per_subcarrier_cap_dbm = 31.0
            per_bs_cap_dbm = 36.02059991327962

            [qos]
            rate_req = 0.0
            latency_req_ms = 10.0

            [algorithm]
            penalty = 50.0
            convergence_threshold = 0.1
            max_iterations = 20
            "#,
        )
        .unwrap()
    }

    fn bench_config() -> ScenarioConfig {
        crate::scenario::builtin_default()
    }

    fn full_assignment(config: &ScenarioConfig) -> AssignTensor {
        let mut x =
            AssignTensor::zeros(config.num_bs, config.num_users, &config.grid, AssignMode::Binary);
        for (k, i, n) in x.tensor().slots().collect::<Vec<_>>() {
            x.set(k, 0, i, n, 1.0);
        }
        x
    }

    #[test]
    fn epa_splits_budget_evenly() {
        let config = config4();
        let x = full_assignment(&config);
        let p = epa(&x, &config);
        // 4 W over 4 assigned slots with a higher cap: 1 W each
        for (k, i, n) in x.tensor().slots() {
            assert!((p.get(k, 0, i, n) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn epa_respects_subcarrier_cap() {
        let mut config = config4();
        config.per_subcarrier_cap_dbm = 20.0; // 0.1 W < 1 W share
        let x = full_assignment(&config);
        let p = epa(&x, &config);
        for (k, i, n) in x.tensor().slots() {
            assert!((p.get(k, 0, i, n) - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn epa_never_exceeds_budget() {
        let config = config4();
        let x = full_assignment(&config);
        let p = epa(&x, &config);
        assert!(p.assigned_sum(&x, 0) <= config.bs_cap_w(0) + 1e-9);
        // nothing assigned -> zero power
        let empty =
            AssignTensor::zeros(config.num_bs, config.num_users, &config.grid, AssignMode::Binary);
        let p0 = epa(&empty, &config);
        assert_eq!(p0.max_entry(), 0.0);
    }

    fn scene(config: &ScenarioConfig, seed: u64) -> (ChannelTensor, EligibilityMask) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = build_topology(config, &mut rng);
        let mut ch_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let h = draw_channels(&topo, config, &mut ch_rng);
        let mask = comp_associate(&h, &config.comp_threshold, config.association);
        (h, mask)
    }

    #[test]
    fn degenerate_ga_returns_greedy_seed() {
        let mut config = config4();
        config.ga.population = 1;
        config.ga.generations = 0;
        let (h, mask) = scene(&config, 5);
        let x = cesp::initial_assignment(&config, &h, &mask);
        let p = epa(&x, &config);
        let got = gsa(&p, &config, &h, &mask, 99);
        assert_eq!(got, x);
    }

    #[test]
    fn ga_is_deterministic_for_a_seed() {
        let mut config = config4();
        config.ga.population = 8;
        config.ga.generations = 10;
        let (h, mask) = scene(&config, 6);
        let x = cesp::initial_assignment(&config, &h, &mask);
        let p = epa(&x, &config);
        let a = gsa(&p, &config, &h, &mask, 7);
        let b = gsa(&p, &config, &h, &mask, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn non_comp_mode_shrinks_eligibility_to_one() {
        let config = apply_mode(&bench_config(), false, true);
        let (_h, mask) = scene(&config, 3);
        for m in 0..config.num_users {
            assert_eq!(mask.eligible_count(m), 1, "user {m}");
        }
    }

    #[test]
    fn single_numerology_mode_collapses_grid() {
        let config = bench_config();
        let sn = apply_mode(&config, true, false);
        assert_eq!(sn.grid.count(), 1);
        assert_eq!(sn.grid.total_subcarriers(), config.grid.total_subcarriers());
        assert_eq!(sn.grid.latency_ms(0), 1.0);
        assert_eq!(sn.grid.spec(0).subcarrier_spacing_khz(), 15.0);
        // any served user sits at the narrow numerology's latency
        let mut x = AssignTensor::zeros(sn.num_bs, sn.num_users, &sn.grid, AssignMode::Binary);
        x.set(0, 3, 0, 5, 1.0);
        assert_eq!(phy::avg_latency(&x, &sn.grid, 3), Some(1.0));
    }

    #[test]
    fn single_numerology_has_zero_leakage() {
        let config = apply_mode(&bench_config(), true, false);
        let mut p = PowerAlloc::zeros(config.num_bs, config.num_users, &config.grid);
        for (k, i, n) in p.tensor().slots().collect::<Vec<_>>() {
            p.set(k, 0, i, n, 0.01);
        }
        for n in 0..config.grid.subcarriers(0) {
            assert_eq!(phy::ini_term(&p, &config.grid, 0, 0, 0, n), 0.0);
        }
    }
}
