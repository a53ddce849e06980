//! Channel generation: log-distance pathloss plus i.i.d. Rayleigh fading.
//!
//! The squared channel magnitude factors into a distance-driven large-scale
//! amplitude `g` and a unit-mean exponential small-scale power `|beta|^2`,
//! drawn independently per (BS, user, numerology, subcarrier).

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use std::io::Write;
use thiserror::Error;

use crate::scenario::{ScenarioConfig, Topology};
use crate::tensor::GridTensor;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("pathloss requires a positive distance (got {0} m)")]
    NonpositiveDistance(f64),
}

/// Log-distance pathloss in dB: `61.4 + 34.1 log10(d)` for `d` in meters.
pub fn pathloss_db(d_m: f64) -> Result<f64, ChannelError> {
    if !(d_m > 0.0) {
        return Err(ChannelError::NonpositiveDistance(d_m));
    }
    Ok(61.4 + 34.1 * d_m.log10())
}

/// Per-link squared channel gains split into large- and small-scale parts.
///
/// Invariant: `gain_sq[k,m,i,n] = large_scale[k][m]^2 * small_scale_sq[k,m,i,n]`,
/// everything strictly positive and finite. Immutable after creation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    gain_sq: GridTensor,
    /// Amplitude ratio `g = 10^(-PL/20)` per (k, m).
    large_scale: Vec<Vec<f64>>,
    small_scale_sq: GridTensor,
}

impl ChannelTensor {
    /// Build a tensor directly from squared gains, with a unit large-scale
    /// part. Intended for synthetic scenarios and oracle tests.
    pub fn from_gain_sq(gain_sq: GridTensor) -> Self {
        assert!(
            gain_sq.as_slice().iter().all(|&v| v > 0.0 && v.is_finite()),
            "channel gains must be strictly positive and finite"
        );
        let large_scale = vec![vec![1.0; gain_sq.num_users()]; gain_sq.num_bs()];
        ChannelTensor {
            small_scale_sq: gain_sq.clone(),
            gain_sq,
            large_scale,
        }
    }

    #[inline]
    pub fn gain_sq(&self, k: usize, m: usize, i: usize, n: usize) -> f64 {
        self.gain_sq.get(k, m, i, n)
    }

    pub fn large_scale(&self, k: usize, m: usize) -> f64 {
        self.large_scale[k][m]
    }

    pub fn small_scale_sq(&self, k: usize, m: usize, i: usize, n: usize) -> f64 {
        self.small_scale_sq.get(k, m, i, n)
    }

    pub fn tensor(&self) -> &GridTensor {
        &self.gain_sq
    }

    /// Dump `(k, m, i, n, gain_sq)` rows as whitespace-separated text, for
    /// cross-implementation comparison.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# k m i n gain_sq")?;
        for (k, m, i, n) in self.gain_sq.indices() {
            writeln!(w, "{} {} {} {} {}", k, m, i, n, self.gain_sq.get(k, m, i, n))?;
        }
        Ok(())
    }
}

/// Draw the full channel tensor for a topology.
///
/// Large-scale amplitudes come from the pathloss model,
/// `g = 10^(-PL(d)/20)`; small-scale powers are Exp(1) samples drawn in a
/// fixed `(k, m, i, n)` order, so the result is deterministic for a given
/// generator state.
pub fn draw_channels<R: Rng>(
    topology: &Topology,
    config: &ScenarioConfig,
    rng: &mut R,
) -> ChannelTensor {
    let k_count = config.num_bs;
    let m_count = config.num_users;
    let mut large_scale = vec![vec![0.0; m_count]; k_count];
    for (k, row) in large_scale.iter_mut().enumerate() {
        for (m, g) in row.iter_mut().enumerate() {
            let pl = pathloss_db(topology.distance(k, m)).expect("positive distance");
            *g = 10f64.powf(-pl / 20.0);
        }
    }

    let mut small = GridTensor::zeros(k_count, m_count, &config.grid);
    let mut gain = GridTensor::zeros(k_count, m_count, &config.grid);
    for k in 0..k_count {
        for m in 0..m_count {
            let g_sq = large_scale[k][m] * large_scale[k][m];
            for i in 0..config.grid.count() {
                for n in 0..config.grid.subcarriers(i) {
                    let beta_sq: f64 = Exp1.sample(rng);
                    // clamp away exact zeros so gains stay strictly positive
                    let beta_sq = beta_sq.max(f64::MIN_POSITIVE);
                    small.set(k, m, i, n, beta_sq);
                    gain.set(k, m, i, n, g_sq * beta_sq);
                }
            }
        }
    }

    ChannelTensor {
        gain_sq: gain,
        large_scale,
        small_scale_sq: small,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_topology, parse_config};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config() -> crate::scenario::ScenarioConfig {
        parse_config(include_str!("../configs/default.toml")).unwrap()
    }

    #[test]
    fn pathloss_reference_points() {
        assert!((pathloss_db(1.0).unwrap() - 61.4).abs() < 1e-12);
        assert!((pathloss_db(10.0).unwrap() - 95.5).abs() < 1e-12);
        assert!((pathloss_db(100.0).unwrap() - 129.6).abs() < 1e-12);
    }

    #[test]
    fn pathloss_rejects_nonpositive_distance() {
        assert!(pathloss_db(0.0).is_err());
        assert!(pathloss_db(-3.0).is_err());
    }

    #[test]
    fn gain_at_100m_with_unit_fading() {
        // |h|^2 = 10^(-129.6/10) when beta^2 = 1
        let g = 10f64.powf(-pathloss_db(100.0).unwrap() / 20.0);
        assert!((g * g - 10f64.powf(-12.96)).abs() / 10f64.powf(-12.96) < 1e-12);
    }

    #[test]
    fn fading_power_has_unit_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let s: f64 = Exp1.sample(&mut rng);
                s
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean was {mean}");
    }

    #[test]
    fn tensor_product_structure_holds() {
        let c = config();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let topo = build_topology(&c, &mut rng);
        let h = draw_channels(&topo, &c, &mut rng);
        for (k, m, i, n) in h.tensor().indices() {
            let g = h.large_scale(k, m);
            let expect = g * g * h.small_scale_sq(k, m, i, n);
            let got = h.gain_sq(k, m, i, n);
            assert!(got > 0.0 && got.is_finite());
            assert!((got - expect).abs() <= 1e-18 + 1e-12 * expect);
        }
    }

    #[test]
    fn identical_seeds_give_identical_tensors() {
        let c = config();
        let topo = build_topology(&c, &mut ChaCha8Rng::seed_from_u64(7));
        let h1 = draw_channels(&topo, &c, &mut ChaCha8Rng::seed_from_u64(99));
        let h2 = draw_channels(&topo, &c, &mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(h1, h2);
    }

    #[test]
    fn gain_is_monotone_in_distance_for_fixed_fading() {
        for d in [1.0, 5.0, 20.0, 80.0, 150.0, 400.0].windows(2) {
            let g_near = 10f64.powf(-pathloss_db(d[0]).unwrap() / 10.0);
            let g_far = 10f64.powf(-pathloss_db(d[1]).unwrap() / 10.0);
            assert!(g_far < g_near);
        }
    }

    #[test]
    fn kolmogorov_smirnov_against_unit_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000usize;
        let mut samples: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
        samples.sort_by(f64::total_cmp);
        let mut d_stat: f64 = 0.0;
        for (idx, &x) in samples.iter().enumerate() {
            let cdf = 1.0 - (-x).exp();
            let lo = idx as f64 / n as f64;
            let hi = (idx + 1) as f64 / n as f64;
            d_stat = d_stat.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        // asymptotic critical value at significance 0.01
        let critical = 1.6276 / (n as f64).sqrt();
        assert!(d_stat < critical, "KS statistic {d_stat} >= {critical}");
    }

    #[test]
    fn dump_is_parseable_and_complete() {
        let c = config();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let topo = build_topology(&c, &mut rng);
        let h = draw_channels(&topo, &c, &mut rng);
        let mut buf = Vec::new();
        h.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 2 * 8 * 16);
        for row in rows {
            let parts: Vec<&str> = row.split_whitespace().collect();
            assert_eq!(parts.len(), 5);
            let k: usize = parts[0].parse().unwrap();
            let m: usize = parts[1].parse().unwrap();
            let i: usize = parts[2].parse().unwrap();
            let n: usize = parts[3].parse().unwrap();
            let v: f64 = parts[4].parse().unwrap();
            assert_eq!(v, h.gain_sq(k, m, i, n));
        }
    }
}
