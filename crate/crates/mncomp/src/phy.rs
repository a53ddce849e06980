//! Closed-form physical-layer math: inter-numerology interference (INI),
//! inter-cell interference (ICI), SINR under joint transmission, per-link
//! spectral efficiency, network sum rate, and assignment-weighted latency.
//!
//! Conventions: all indices are 0-based, powers are watts, channel gains are
//! linear power ratios, rates are b/s/Hz. Numerology 0 is the narrow spacing,
//! numerology 1 (when present) the wide one, with integer spacing ratio `Q`.

use std::io::Write;

use crate::channel::ChannelTensor;
use crate::scenario::NumerologyGrid;
use crate::tensor::GridTensor;

/// Below this magnitude the kernel's denominator sine is treated as zero and
/// the ratio is evaluated by its analytic limit.
const SINGULAR_EPS: f64 = 1e-12;

/// Non-negative transmit powers over `(k, m, i, n)`, watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAlloc {
    t: GridTensor,
}

impl PowerAlloc {
    pub fn zeros(num_bs: usize, num_users: usize, grid: &NumerologyGrid) -> Self {
        PowerAlloc {
            t: GridTensor::zeros(num_bs, num_users, grid),
        }
    }

    #[inline]
    pub fn get(&self, k: usize, m: usize, i: usize, n: usize) -> f64 {
        self.t.get(k, m, i, n)
    }

    pub fn set(&mut self, k: usize, m: usize, i: usize, n: usize, watts: f64) {
        assert!(watts >= 0.0 && watts.is_finite(), "power must be finite and >= 0, got {watts}");
        self.t.set(k, m, i, n, watts);
    }

    pub fn tensor(&self) -> &GridTensor {
        &self.t
    }

    pub fn tensor_mut(&mut self) -> &mut GridTensor {
        &mut self.t
    }

    pub fn max_entry(&self) -> f64 {
        self.t.as_slice().iter().fold(0.0f64, |a, &b| a.max(b))
    }

    /// Total power BS `k` spends on entries selected by `x` (the per-BS
    /// budget quantity).
    pub fn assigned_sum(&self, x: &AssignTensor, k: usize) -> f64 {
        let mut total = 0.0;
        for m in 0..self.t.num_users() {
            for i in 0..self.t.num_numerologies() {
                for n in 0..self.t.subcarriers(i) {
                    total += self.get(k, m, i, n) * x.get(k, m, i, n);
                }
            }
        }
        total
    }
}

/// Whether an assignment tensor carries exact binary decisions or a relaxed
/// point in the unit box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignMode {
    Binary,
    Relaxed,
}

/// Subcarrier-assignment tensor over `(k, m, i, n)`.
///
/// In binary mode every entry is exactly 0 or 1 and each `(k, i, n)` slot
/// serves at most one user; in relaxed mode entries live in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignTensor {
    t: GridTensor,
    mode: AssignMode,
}

impl AssignTensor {
    pub fn zeros(num_bs: usize, num_users: usize, grid: &NumerologyGrid, mode: AssignMode) -> Self {
        AssignTensor {
            t: GridTensor::zeros(num_bs, num_users, grid),
            mode,
        }
    }

    pub fn mode(&self) -> AssignMode {
        self.mode
    }

    #[inline]
    pub fn get(&self, k: usize, m: usize, i: usize, n: usize) -> f64 {
        self.t.get(k, m, i, n)
    }

    pub fn set(&mut self, k: usize, m: usize, i: usize, n: usize, value: f64) {
        match self.mode {
            AssignMode::Binary => {
                assert!(
                    value == 0.0 || value == 1.0,
                    "binary assignment entries must be exactly 0 or 1, got {value}"
                );
            }
            AssignMode::Relaxed => {
                assert!(
                    (-1e-12..=1.0 + 1e-12).contains(&value),
                    "relaxed assignment entries must lie in [0,1], got {value}"
                );
            }
        }
        self.t.set(k, m, i, n, value.clamp(0.0, 1.0));
    }

    pub fn tensor(&self) -> &GridTensor {
        &self.t
    }

    pub fn tensor_mut(&mut self) -> &mut GridTensor {
        &mut self.t
    }

    /// The user served on slot `(k, i, n)`, if any (binary mode).
    pub fn assigned_user(&self, k: usize, i: usize, n: usize) -> Option<usize> {
        debug_assert_eq!(self.mode, AssignMode::Binary);
        (0..self.t.num_users()).find(|&m| self.get(k, m, i, n) == 1.0)
    }

    /// Sum of entries over users for slot `(k, i, n)`.
    pub fn slot_load(&self, k: usize, i: usize, n: usize) -> f64 {
        (0..self.t.num_users()).map(|m| self.get(k, m, i, n)).sum()
    }

    /// True when every `(k, i, n)` slot carries total user weight <= 1 + tol.
    pub fn single_user_per_slot(&self, tol: f64) -> bool {
        self.t.slots().all(|(k, i, n)| self.slot_load(k, i, n) <= 1.0 + tol)
    }

    /// Number of slots assigned to user `m` (binary) or its total weight
    /// (relaxed).
    pub fn user_load(&self, m: usize) -> f64 {
        let mut total = 0.0;
        for k in 0..self.t.num_bs() {
            for i in 0..self.t.num_numerologies() {
                for n in 0..self.t.subcarriers(i) {
                    total += self.get(k, m, i, n);
                }
            }
        }
        total
    }

    /// Largest distance of any entry from the binary set {0, 1}.
    pub fn near_binariness(&self) -> f64 {
        self.t
            .as_slice()
            .iter()
            .map(|&v| v.min(1.0 - v))
            .fold(0.0f64, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Inter-numerology interference

/// Leakage coefficient coupling the power on the *other* numerology's
/// subcarrier `v` into the interference seen on numerology `i`'s subcarrier
/// `n`. Dimensionless and non-negative.
///
/// For the wide numerology the target index wraps periodically:
/// `n` beyond its count is folded back modulo the wide count.
/// Coincident zeros of the sine ratio are evaluated by their analytic limit.
pub fn ini_coupling(grid: &NumerologyGrid, i: usize, n: usize, v: usize) -> f64 {
    if grid.count() < 2 {
        return 0.0;
    }
    let n1 = grid.subcarriers(0) as f64;
    let q = grid.ratio() as f64;
    let num_slope = std::f64::consts::PI / q;
    let den_slope = std::f64::consts::PI / (2.0 * n1);
    match i {
        0 => {
            // narrow target, wide source
            assert!(n < grid.subcarriers(0), "subcarrier index {n} out of range");
            assert!(v < grid.subcarriers(1), "source subcarrier index {v} out of range");
            let u = q * v as f64 - n as f64;
            let num_arg = num_slope * u;
            let den_arg = den_slope * (u + n1);
            sine_ratio_sq(num_arg, den_arg, num_slope, den_slope) / (n1 * n1)
        }
        1 => {
            // wide target (periodic in n), narrow source
            assert!(v < grid.subcarriers(0), "source subcarrier index {v} out of range");
            let n_wrapped = (n % grid.subcarriers(1)) as f64;
            let u = v as f64 - q * n_wrapped;
            let num_arg = num_slope * u;
            let den_arg = den_slope * (u - n1);
            sine_ratio_sq(num_arg, den_arg, num_slope, den_slope) / (2.0 * n1 * n1)
        }
        _ => panic!("numerology index {i} out of range"),
    }
}

#[inline]
fn sine_ratio_sq(num_arg: f64, den_arg: f64, num_slope: f64, den_slope: f64) -> f64 {
    let den = den_arg.sin();
    let ratio = if den.abs() < SINGULAR_EPS {
        // numerator and denominator share the zero on commensurate grids
        (num_slope * num_arg.cos()) / (den_slope * den_arg.cos())
    } else {
        num_arg.sin() / den
    };
    ratio * ratio
}

/// Interference leaking into `(k, m)`'s link on numerology `i`, subcarrier
/// `n`, from the power BS `k` spends on the same user over the other
/// numerology. Watts; zero for a single-numerology grid.
pub fn ini_term(
    p: &PowerAlloc,
    grid: &NumerologyGrid,
    k: usize,
    m: usize,
    i: usize,
    n: usize,
) -> f64 {
    if grid.count() < 2 {
        return 0.0;
    }
    let other = 1 - i;
    (0..grid.subcarriers(other))
        .map(|v| ini_coupling(grid, i, n, v) * p.get(k, m, other, v))
        .sum()
}

/// Co-channel interference at `(k, m, i, n)` from other base stations
/// serving other users on the same numerology and subcarrier. Watts.
pub fn ici_term(
    p: &PowerAlloc,
    x: &AssignTensor,
    h: &ChannelTensor,
    k: usize,
    m: usize,
    i: usize,
    n: usize,
) -> f64 {
    let mut total = 0.0;
    for kp in 0..p.tensor().num_bs() {
        if kp == k {
            continue;
        }
        for mp in 0..p.tensor().num_users() {
            if mp == m {
                continue;
            }
            total += p.get(kp, mp, i, n) * x.get(kp, mp, i, n) * h.gain_sq(kp, mp, i, n);
        }
    }
    total
}

/// Jointly transmitted signal power received by user `m` on `(i, n)`:
/// the sum over all base stations of `p * x * |h|^2`.
pub fn received_signal(
    p: &PowerAlloc,
    x: &AssignTensor,
    h: &ChannelTensor,
    m: usize,
    i: usize,
    n: usize,
) -> f64 {
    (0..p.tensor().num_bs())
        .map(|kp| p.get(kp, m, i, n) * x.get(kp, m, i, n) * h.gain_sq(kp, m, i, n))
        .sum()
}

/// Combined gain of user `m`'s links from base stations other than `k`:
/// `sum_{j != k} x * |h|^2`. This factor scales the INI term in the SINR
/// denominator.
pub fn neighbor_gain(
    x: &AssignTensor,
    h: &ChannelTensor,
    k: usize,
    m: usize,
    i: usize,
    n: usize,
) -> f64 {
    (0..x.tensor().num_bs())
        .filter(|&j| j != k)
        .map(|j| x.get(j, m, i, n) * h.gain_sq(j, m, i, n))
        .sum()
}

/// Total interference-plus-noise floor of the `(k, m, i, n)` link.
pub fn interference_floor(
    p: &PowerAlloc,
    x: &AssignTensor,
    h: &ChannelTensor,
    grid: &NumerologyGrid,
    noise_w: f64,
    k: usize,
    m: usize,
    i: usize,
    n: usize,
) -> f64 {
    neighbor_gain(x, h, k, m, i, n) * ini_term(p, grid, k, m, i, n)
        + ici_term(p, x, h, k, m, i, n)
        + noise_w
}

/// SINR of the `(k, m, i, n)` link under joint transmission.
pub fn sinr(
    p: &PowerAlloc,
    x: &AssignTensor,
    h: &ChannelTensor,
    grid: &NumerologyGrid,
    noise_w: f64,
    k: usize,
    m: usize,
    i: usize,
    n: usize,
) -> f64 {
    assert!(noise_w > 0.0, "noise power must be positive");
    received_signal(p, x, h, m, i, n) / interference_floor(p, x, h, grid, noise_w, k, m, i, n)
}

/// Spectral efficiency of one link: `log2(1 + SINR)`, b/s/Hz.
pub fn link_rate(
    p: &PowerAlloc,
    x: &AssignTensor,
    h: &ChannelTensor,
    grid: &NumerologyGrid,
    noise_w: f64,
    k: usize,
    m: usize,
    i: usize,
    n: usize,
) -> f64 {
    (1.0 + sinr(p, x, h, grid, noise_w, k, m, i, n)).log2()
}

/// Network sum rate: the sum of `link_rate` over every `(k, m, i, n)`.
pub fn sum_rate(
    p: &PowerAlloc,
    x: &AssignTensor,
    h: &ChannelTensor,
    grid: &NumerologyGrid,
    noise_w: f64,
) -> f64 {
    let mut total = 0.0;
    for (k, m, i, n) in p.tensor().indices() {
        total += link_rate(p, x, h, grid, noise_w, k, m, i, n);
    }
    total
}

/// Rate of a single user: the sum of its link rates over `(k, i, n)`.
pub fn user_rate(
    p: &PowerAlloc,
    x: &AssignTensor,
    h: &ChannelTensor,
    grid: &NumerologyGrid,
    noise_w: f64,
    m: usize,
) -> f64 {
    let mut total = 0.0;
    for k in 0..p.tensor().num_bs() {
        for i in 0..grid.count() {
            for n in 0..grid.subcarriers(i) {
                total += link_rate(p, x, h, grid, noise_w, k, m, i, n);
            }
        }
    }
    total
}

/// Assignment-weighted mean symbol latency of user `m`, ms.
///
/// `None` when the user holds no subcarrier weight; the caller decides how
/// an unserved user is scored.
pub fn avg_latency(x: &AssignTensor, grid: &NumerologyGrid, m: usize) -> Option<f64> {
    let mut weight = 0.0;
    let mut weighted = 0.0;
    for k in 0..x.tensor().num_bs() {
        for i in 0..grid.count() {
            let l = grid.latency_ms(i);
            for n in 0..grid.subcarriers(i) {
                let v = x.get(k, m, i, n);
                weight += v;
                weighted += v * l;
            }
        }
    }
    if weight > 0.0 {
        Some(weighted / weight)
    } else {
        None
    }
}

/// Dump the INI value of every `(k, m, i, n)` link as columnar text.
pub fn write_ini_table<W: Write>(
    p: &PowerAlloc,
    grid: &NumerologyGrid,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "# k m i n ini_watts")?;
    for (k, m, i, n) in p.tensor().indices() {
        writeln!(w, "{} {} {} {} {}", k, m, i, n, ini_term(p, grid, k, m, i, n))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::NumerologyGrid;

    fn grid42() -> NumerologyGrid {
        NumerologyGrid::two_numerology(0, 4, 1.0, 1, 2, 0.5).unwrap()
    }

    /// Independent literal transcription of the two-branch leakage sum,
    /// written in 1-based index arithmetic. Kept free of any shared helper
    /// so it can serve as an oracle for `ini_term`.
    fn ini_direct_1based(
        powers_other: &[f64],
        i_1b: usize,
        n_1b: usize,
        n1: usize,
        n2: usize,
        q: usize,
    ) -> f64 {
        use std::f64::consts::PI;
        let n1f = n1 as f64;
        let qf = q as f64;
        match i_1b {
            1 => (1..=n2)
                .map(|v| {
                    let a = (qf * (v as f64 - 1.0)) - (n_1b as f64 - 1.0);
                    let num = (PI / qf * a).sin();
                    let den = (PI / (2.0 * n1f) * (a + n1f)).sin();
                    powers_other[v - 1] / (n1f * n1f) * (num / den).powi(2)
                })
                .sum(),
            2 => {
                let mut nh = n_1b % n2;
                if nh == 0 {
                    nh = n2;
                }
                (1..=n1)
                    .map(|v| {
                        let a = (v as f64 - 1.0) - qf * (nh as f64 - 1.0);
                        let num = (PI / qf * a).sin();
                        let den = (PI / (2.0 * n1f) * (a - n1f)).sin();
                        powers_other[v - 1] / (2.0 * n1f * n1f) * (num / den).powi(2)
                    })
                    .sum()
            }
            _ => unreachable!(),
        }
    }

    fn unit_powers(grid: &NumerologyGrid) -> PowerAlloc {
        let mut p = PowerAlloc::zeros(1, 1, grid);
        for i in 0..grid.count() {
            for n in 0..grid.subcarriers(i) {
                p.set(0, 0, i, n, 1.0);
            }
        }
        p
    }

    #[test]
    fn ini_zero_when_cross_powers_zero() {
        let g = grid42();
        let p = PowerAlloc::zeros(1, 1, &g);
        for i in 0..2 {
            for n in 0..g.subcarriers(i) {
                assert_eq!(ini_term(&p, &g, 0, 0, i, n), 0.0);
            }
        }
    }

    #[test]
    fn ini_single_numerology_is_exactly_zero() {
        let g = NumerologyGrid::new(vec![crate::scenario::NumerologySpec {
            mu: 0,
            subcarriers: 16,
            symbol_latency_ms: 1.0,
        }])
        .unwrap();
        let p = unit_powers(&g);
        for n in 0..16 {
            assert_eq!(ini_term(&p, &g, 0, 0, 0, n), 0.0);
        }
    }

    #[test]
    fn ini_matches_direct_summation_on_4x2_grid() {
        let g = grid42();
        let p = unit_powers(&g);
        // narrow targets: source powers are the wide numerology's
        let wide: Vec<f64> = (0..2).map(|v| p.get(0, 0, 1, v)).collect();
        for n in 0..4 {
            let got = ini_term(&p, &g, 0, 0, 0, n);
            let want = ini_direct_1based(&wide, 1, n + 1, 4, 2, 2);
            assert!(
                (got - want).abs() <= 1e-10 * want.abs().max(1e-300),
                "narrow n={n}: {got} vs {want}"
            );
        }
        // wide targets
        let narrow: Vec<f64> = (0..4).map(|v| p.get(0, 0, 0, v)).collect();
        for n in 0..2 {
            let got = ini_term(&p, &g, 0, 0, 1, n);
            let want = ini_direct_1based(&narrow, 2, n + 1, 4, 2, 2);
            assert!(
                (got - want).abs() <= 1e-10 * want.abs().max(1e-300),
                "wide n={n}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn ini_wide_numerology_is_periodic() {
        let g = grid42();
        let mut p = unit_powers(&g);
        p.set(0, 0, 0, 1, 0.3);
        p.set(0, 0, 0, 3, 2.5);
        // Q = 2, N2 = 2: indices 2,3 fold onto 0,1
        assert_eq!(
            ini_term(&p, &g, 0, 0, 1, 2),
            ini_term(&p, &g, 0, 0, 1, 0)
        );
        assert_eq!(
            ini_term(&p, &g, 0, 0, 1, 3),
            ini_term(&p, &g, 0, 0, 1, 1)
        );
    }

    #[test]
    fn coupling_is_nonnegative_everywhere() {
        for (n1, n2, mu2) in [(4usize, 2usize, 1u8), (8, 8, 1), (8, 4, 1), (16, 4, 2)] {
            let g = NumerologyGrid::two_numerology(0, n1, 1.0, mu2, n2, 0.5).unwrap();
            for n in 0..n1 {
                for v in 0..n2 {
                    assert!(ini_coupling(&g, 0, n, v) >= 0.0);
                }
            }
            for n in 0..n2 {
                for v in 0..n1 {
                    assert!(ini_coupling(&g, 1, n, v) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn coupling_times_power_reassembles_ini() {
        let g = grid42();
        let mut p = unit_powers(&g);
        p.set(0, 0, 1, 0, 0.7);
        p.set(0, 0, 1, 1, 1.9);
        for n in 0..4 {
            let direct = ini_term(&p, &g, 0, 0, 0, n);
            let recomposed: f64 = (0..2)
                .map(|v| ini_coupling(&g, 0, n, v) * p.get(0, 0, 1, v))
                .sum();
            assert!((direct - recomposed).abs() <= 1e-15 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn singular_kernel_point_matches_epsilon_limit() {
        use std::f64::consts::PI;
        // On an 8+8 grid with Q=2, the narrow-target kernel hits coincident
        // sine zeros at u = 2v - n = 8 (e.g. v=4, n=0).
        let g = NumerologyGrid::two_numerology(0, 8, 1.0, 1, 8, 0.5).unwrap();
        let at_singularity = ini_coupling(&g, 0, 0, 4);
        let n1 = 8.0;
        let ratio_sq = |u: f64| {
            let num = (PI / 2.0 * u).sin();
            let den = (PI / (2.0 * n1) * (u + n1)).sin();
            (num / den).powi(2) / (n1 * n1)
        };
        let mut prev_err = f64::INFINITY;
        for eps in [1e-3, 1e-4, 1e-5] {
            let approx = 0.5 * (ratio_sq(8.0 + eps) + ratio_sq(8.0 - eps));
            let err = (approx - at_singularity).abs();
            assert!(err < prev_err || err < 1e-9, "limit not approached at eps={eps}");
            prev_err = err;
        }
        assert!(prev_err < 1e-6, "limit mismatch: {prev_err}");
        assert!((at_singularity - 1.0).abs() < 1e-12, "expected limit 1.0, got {at_singularity}");
    }

    fn small_scene(
        num_bs: usize,
        num_users: usize,
        grid: &NumerologyGrid,
        gain: f64,
    ) -> (PowerAlloc, AssignTensor, ChannelTensor) {
        let p = PowerAlloc::zeros(num_bs, num_users, grid);
        let x = AssignTensor::zeros(num_bs, num_users, grid, AssignMode::Binary);
        let h = constant_channels(num_bs, num_users, grid, gain);
        (p, x, h)
    }

    /// Build a channel tensor with one constant gain everywhere (test helper).
    fn constant_channels(
        num_bs: usize,
        num_users: usize,
        grid: &NumerologyGrid,
        gain_sq: f64,
    ) -> ChannelTensor {
        let mut t = GridTensor::zeros(num_bs, num_users, grid);
        t.fill(gain_sq);
        ChannelTensor::from_gain_sq(t)
    }

    #[test]
    fn ici_zero_with_single_bs() {
        let g = grid42();
        let (mut p, mut x, h) = small_scene(1, 2, &g, 1.0);
        p.set(0, 0, 0, 0, 1.0);
        x.set(0, 0, 0, 0, 1.0);
        assert_eq!(ici_term(&p, &x, &h, 0, 0, 0, 0), 0.0);
    }

    #[test]
    fn ici_zero_when_other_users_unassigned() {
        let g = grid42();
        let (mut p, x, h) = small_scene(2, 2, &g, 1.0);
        p.set(1, 1, 0, 0, 1.0);
        assert_eq!(ici_term(&p, &x, &h, 0, 0, 0, 0), 0.0);
    }

    #[test]
    fn ici_cross_pair_is_one() {
        let g = grid42();
        let (mut p, mut x, h) = small_scene(2, 2, &g, 1.0);
        // BS 1 serves user 1 on the slot observed by (BS 0, user 0)
        p.set(1, 1, 0, 0, 1.0);
        x.set(1, 1, 0, 0, 1.0);
        assert_eq!(ici_term(&p, &x, &h, 0, 0, 0, 0), 1.0);
    }

    #[test]
    fn sinr_zero_when_silent() {
        let g = grid42();
        let (p, x, h) = small_scene(2, 2, &g, 1.0);
        assert_eq!(sinr(&p, &x, &h, &g, 1e-12, 0, 0, 0, 0), 0.0);
    }

    #[test]
    fn sinr_point_to_point_reduction() {
        let g = grid42();
        let (mut p, mut x, h) = small_scene(1, 1, &g, 0.5);
        p.set(0, 0, 0, 0, 2.0);
        x.set(0, 0, 0, 0, 1.0);
        let noise = 0.25;
        let got = sinr(&p, &x, &h, &g, noise, 0, 0, 0, 0);
        assert!((got - 2.0 * 0.5 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn sinr_joint_transmission_sums_both_legs() {
        let g = grid42();
        let (mut p, mut x, _) = small_scene(2, 1, &g, 1.0);
        let mut gains = GridTensor::zeros(2, 1, &g);
        gains.fill(1.0);
        gains.set(0, 0, 0, 0, 0.2);
        gains.set(1, 0, 0, 0, 0.05);
        let h = ChannelTensor::from_gain_sq(gains);
        p.set(0, 0, 0, 0, 1.5);
        p.set(1, 0, 0, 0, 2.0);
        x.set(0, 0, 0, 0, 1.0);
        x.set(1, 0, 0, 0, 1.0);
        let num = 1.5 * 0.2 + 2.0 * 0.05;
        // no cross powers => INI = 0, single user => ICI = 0
        let noise = 1e-3;
        let got = sinr(&p, &x, &h, &g, noise, 0, 0, 0, 0);
        assert!((got - num / noise).abs() / (num / noise) < 1e-12);
    }

    #[test]
    fn link_rate_reference_points() {
        let g = grid42();
        let (mut p, mut x, h) = small_scene(1, 1, &g, 1.0);
        // silent: SINR 0 -> rate 0
        assert_eq!(link_rate(&p, &x, &h, &g, 1.0, 0, 0, 0, 0), 0.0);
        x.set(0, 0, 0, 0, 1.0);
        p.set(0, 0, 0, 0, 1.0);
        // SINR 1 -> 1 b/s/Hz
        assert!((link_rate(&p, &x, &h, &g, 1.0, 0, 0, 0, 0) - 1.0).abs() < 1e-12);
        // SINR 3 -> 2 b/s/Hz
        p.set(0, 0, 0, 0, 3.0);
        assert!((link_rate(&p, &x, &h, &g, 1.0, 0, 0, 0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sum_rate_trivial_cases() {
        let g = grid42();
        let (p, x, h) = small_scene(1, 1, &g, 1.0);
        assert_eq!(sum_rate(&p, &x, &h, &g, 1.0), 0.0);
        let (mut p, mut x, h) = small_scene(1, 1, &g, 1.0);
        p.set(0, 0, 0, 0, 1.0);
        x.set(0, 0, 0, 0, 1.0);
        // single active link at SINR 1 contributes exactly 1
        assert!((sum_rate(&p, &x, &h, &g, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sum_rate_equals_link_rate_sum() {
        let g = grid42();
        let (mut p, mut x, h) = small_scene(2, 2, &g, 0.3);
        p.set(0, 0, 0, 0, 1.0);
        x.set(0, 0, 0, 0, 1.0);
        p.set(1, 1, 0, 0, 0.8);
        x.set(1, 1, 0, 0, 1.0);
        p.set(0, 0, 1, 0, 0.6);
        x.set(0, 0, 1, 0, 1.0);
        let noise = 1e-2;
        let total = sum_rate(&p, &x, &h, &g, noise);
        let mut by_hand = 0.0;
        for (k, m, i, n) in p.tensor().indices() {
            by_hand += link_rate(&p, &x, &h, &g, noise, k, m, i, n);
        }
        assert_eq!(total, by_hand);
        let per_user: f64 = (0..2).map(|m| user_rate(&p, &x, &h, &g, noise, m)).sum();
        assert!((total - per_user).abs() < 1e-12);
    }

    #[test]
    fn rate_monotone_in_serving_power() {
        let g = grid42();
        let (mut p, mut x, h) = small_scene(2, 2, &g, 0.4);
        x.set(0, 0, 0, 1, 1.0);
        x.set(1, 1, 0, 1, 1.0);
        p.set(1, 1, 0, 1, 0.5);
        let noise = 1e-2;
        let mut prev = -1.0;
        for steps in 0..20 {
            p.set(0, 0, 0, 1, 0.05 * steps as f64);
            let r = link_rate(&p, &x, &h, &g, noise, 0, 0, 0, 1);
            assert!(r >= prev - 1e-15, "rate decreased at step {steps}");
            prev = r;
        }
    }

    #[test]
    fn latency_weighted_mean() {
        let g = grid42(); // narrow 1.0 ms, wide 0.5 ms
        let mut x = AssignTensor::zeros(1, 1, &g, AssignMode::Binary);
        // all slots on the wide numerology
        x.set(0, 0, 1, 0, 1.0);
        x.set(0, 0, 1, 1, 1.0);
        assert_eq!(avg_latency(&x, &g, 0), Some(0.5));
        // equal split across numerologies
        let mut x = AssignTensor::zeros(1, 1, &g, AssignMode::Binary);
        x.set(0, 0, 0, 0, 1.0);
        x.set(0, 0, 1, 0, 1.0);
        assert_eq!(avg_latency(&x, &g, 0), Some(0.75));
        // single narrow subcarrier
        let mut x = AssignTensor::zeros(1, 1, &g, AssignMode::Binary);
        x.set(0, 0, 0, 2, 1.0);
        assert_eq!(avg_latency(&x, &g, 0), Some(1.0));
        // unserved user
        let x = AssignTensor::zeros(1, 1, &g, AssignMode::Binary);
        assert_eq!(avg_latency(&x, &g, 0), None);
    }

    #[test]
    fn latency_stays_within_numerology_range() {
        let g = grid42();
        let mut x = AssignTensor::zeros(2, 1, &g, AssignMode::Relaxed);
        x.set(0, 0, 0, 0, 0.4);
        x.set(1, 0, 1, 1, 0.9);
        x.set(0, 0, 1, 0, 0.1);
        let l = avg_latency(&x, &g, 0).unwrap();
        assert!((0.5..=1.0).contains(&l));
    }

    #[test]
    fn assignment_mode_guards() {
        let g = grid42();
        let mut x = AssignTensor::zeros(1, 1, &g, AssignMode::Relaxed);
        x.set(0, 0, 0, 0, 0.37);
        assert_eq!(x.get(0, 0, 0, 0), 0.37);
        assert!((x.near_binariness() - 0.37).abs() < 1e-15);
        assert!(x.single_user_per_slot(0.0));
    }

    #[test]
    #[should_panic(expected = "binary assignment entries")]
    fn binary_mode_rejects_fractions() {
        let g = grid42();
        let mut x = AssignTensor::zeros(1, 1, &g, AssignMode::Binary);
        x.set(0, 0, 0, 0, 0.5);
    }
}
