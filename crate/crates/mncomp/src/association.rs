//! CoMP serving-set eligibility.
//!
//! Each user ranks base stations by channel strength; a BS may join the
//! user's serving set when the strongest BS's gain exceeds its own by at
//! most the user's channel-level-difference threshold. Downstream solvers
//! force the assignment of ineligible pairs to zero, and only let a
//! non-strongest eligible BS carry an assignment on a slot where the
//! strongest BS does.

pub use crate::scenario::StrengthSummary;
use crate::channel::ChannelTensor;

/// Per-user serving-set eligibility and strength ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibilityMask {
    /// `eligible[k][m]`: may BS `k` serve user `m`.
    eligible: Vec<Vec<bool>>,
    /// `order[m]`: BS indices sorted by descending strength for user `m`
    /// (ties broken by BS index).
    order: Vec<Vec<usize>>,
}

impl EligibilityMask {
    pub fn is_eligible(&self, k: usize, m: usize) -> bool {
        self.eligible[k][m]
    }

    /// The `j`-th strongest BS for user `m` (0-based rank).
    pub fn ranked_bs(&self, m: usize, j: usize) -> usize {
        self.order[m][j]
    }

    /// The strongest BS for user `m`.
    pub fn strongest_bs(&self, m: usize) -> usize {
        self.order[m][0]
    }

    pub fn eligible_count(&self, m: usize) -> usize {
        (0..self.eligible.len()).filter(|&k| self.eligible[k][m]).count()
    }

    pub fn num_bs(&self) -> usize {
        self.eligible.len()
    }

    pub fn num_users(&self) -> usize {
        self.order.len()
    }
}

/// Summarize the strength of the `(k, m)` pair according to the configured
/// summary mode.
fn strength(h: &ChannelTensor, mode: StrengthSummary, k: usize, m: usize) -> f64 {
    match mode {
        StrengthSummary::LargeScale => {
            let g = h.large_scale(k, m);
            g * g
        }
        StrengthSummary::Instantaneous => {
            let t = h.tensor();
            let mut total = 0.0;
            let mut count = 0usize;
            for i in 0..t.num_numerologies() {
                for n in 0..t.subcarriers(i) {
                    total += h.gain_sq(k, m, i, n);
                    count += 1;
                }
            }
            total / count as f64
        }
    }
}

/// Build the CoMP eligibility mask from channel strengths and per-user
/// thresholds (`sigma[m] >= 1`).
///
/// BS `k` is eligible for user `m` when
/// `strength(strongest) / strength(k) <= sigma[m]`; the strongest BS is
/// always eligible.
pub fn comp_associate(
    h: &ChannelTensor,
    sigma: &[f64],
    mode: StrengthSummary,
) -> EligibilityMask {
    let num_bs = h.tensor().num_bs();
    let num_users = h.tensor().num_users();
    assert_eq!(sigma.len(), num_users, "one threshold per user required");
    assert!(sigma.iter().all(|&s| s >= 1.0), "thresholds must be >= 1");

    let mut eligible = vec![vec![false; num_users]; num_bs];
    let mut order = Vec::with_capacity(num_users);
    for m in 0..num_users {
        let strengths: Vec<f64> = (0..num_bs).map(|k| strength(h, mode, k, m)).collect();
        let mut ranked: Vec<usize> = (0..num_bs).collect();
        // stable sort: equal strengths keep ascending BS index
        ranked.sort_by(|&a, &b| strengths[b].total_cmp(&strengths[a]));
        let top = strengths[ranked[0]];
        for &k in &ranked {
            if top / strengths[k] <= sigma[m] {
                eligible[k][m] = true;
            }
        }
        // the strongest BS always serves, regardless of numeric edge cases
        eligible[ranked[0]][m] = true;
        order.push(ranked);
    }

    EligibilityMask { eligible, order }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::NumerologyGrid;
    use crate::tensor::GridTensor;

    fn channels_with_bs_strengths(strengths: &[f64]) -> ChannelTensor {
        let grid = NumerologyGrid::two_numerology(0, 2, 1.0, 1, 2, 0.5).unwrap();
        let mut t = GridTensor::zeros(strengths.len(), 1, &grid);
        for (k, &s) in strengths.iter().enumerate() {
            for i in 0..2 {
                for n in 0..2 {
                    t.set(k, 0, i, n, s);
                }
            }
        }
        ChannelTensor::from_gain_sq(t)
    }

    #[test]
    fn tight_threshold_keeps_only_strongest() {
        let h = channels_with_bs_strengths(&[0.4, 1.0, 0.7]);
        let mask = comp_associate(&h, &[1.0], StrengthSummary::Instantaneous);
        assert_eq!(mask.strongest_bs(0), 1);
        assert_eq!(mask.eligible_count(0), 1);
        assert!(mask.is_eligible(1, 0));
    }

    #[test]
    fn huge_threshold_admits_all() {
        let h = channels_with_bs_strengths(&[0.4, 1.0, 0.7]);
        let mask = comp_associate(&h, &[1e300], StrengthSummary::Instantaneous);
        assert_eq!(mask.eligible_count(0), 3);
    }

    #[test]
    fn threshold_two_admits_within_ratio() {
        let h = channels_with_bs_strengths(&[1.0, 0.6, 0.2]);
        let mask = comp_associate(&h, &[2.0], StrengthSummary::Instantaneous);
        assert!(mask.is_eligible(0, 0)); // ratio 1
        assert!(mask.is_eligible(1, 0)); // 1/0.6 ~ 1.67 <= 2
        assert!(!mask.is_eligible(2, 0)); // 1/0.2 = 5 > 2
        assert_eq!(mask.ranked_bs(0, 0), 0);
        assert_eq!(mask.ranked_bs(0, 1), 1);
        assert_eq!(mask.ranked_bs(0, 2), 2);
    }

    #[test]
    fn eligible_set_is_a_prefix_of_the_ranking() {
        let h = channels_with_bs_strengths(&[0.3, 0.9, 0.5, 0.1]);
        for sigma in [1.0, 1.5, 2.0, 4.0, 10.0] {
            let mask = comp_associate(&h, &[sigma], StrengthSummary::Instantaneous);
            let mut seen_ineligible = false;
            for j in 0..4 {
                let k = mask.ranked_bs(0, j);
                if mask.is_eligible(k, 0) {
                    assert!(!seen_ineligible, "eligible BS after an ineligible one");
                } else {
                    seen_ineligible = true;
                }
            }
        }
    }

    #[test]
    fn shrinking_threshold_never_grows_the_set() {
        let h = channels_with_bs_strengths(&[0.3, 0.9, 0.5, 0.1]);
        let mut prev = usize::MAX;
        for sigma in [10.0, 4.0, 2.0, 1.5, 1.0] {
            let mask = comp_associate(&h, &[sigma], StrengthSummary::Instantaneous);
            let count = mask.eligible_count(0);
            assert!(count <= prev);
            prev = count;
        }
    }

    #[test]
    fn tie_breaks_by_bs_index() {
        let h = channels_with_bs_strengths(&[0.5, 0.5]);
        let mask = comp_associate(&h, &[1.0], StrengthSummary::Instantaneous);
        assert_eq!(mask.strongest_bs(0), 0);
    }

    #[test]
    fn large_scale_mode_ignores_fading() {
        // gains vary per subcarrier, but the large-scale part is unity for
        // synthetic tensors, so every BS ties and all are eligible at any
        // threshold
        let grid = NumerologyGrid::two_numerology(0, 2, 1.0, 1, 2, 0.5).unwrap();
        let mut t = GridTensor::zeros(2, 1, &grid);
        let cells: Vec<_> = t.indices().collect();
        for (k, m, i, n) in cells {
            t.set(k, m, i, n, 1.0 + (k + n) as f64);
        }
        let h = ChannelTensor::from_gain_sq(t);
        let mask = comp_associate(&h, &[1.0], StrengthSummary::LargeScale);
        assert_eq!(mask.eligible_count(0), 2);
    }
}
