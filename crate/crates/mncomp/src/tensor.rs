//! Dense storage for per-link quantities indexed by
//! `(base station, user, numerology, subcarrier)`.
//!
//! The subcarrier axis is ragged: each numerology `i` owns `counts[i]`
//! subcarriers, laid out contiguously. All indices are 0-based.

use crate::scenario::NumerologyGrid;

/// Dense f64 tensor over `(k, m, i, n)` with per-numerology subcarrier counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTensor {
    num_bs: usize,
    num_users: usize,
    counts: Vec<usize>,
    offsets: Vec<usize>,
    slots_per_pair: usize,
    data: Vec<f64>,
}

impl GridTensor {
    pub fn zeros(num_bs: usize, num_users: usize, grid: &NumerologyGrid) -> Self {
        let counts: Vec<usize> = (0..grid.count()).map(|i| grid.subcarriers(i)).collect();
        let mut offsets = Vec::with_capacity(counts.len());
        let mut acc = 0;
        for &c in &counts {
            offsets.push(acc);
            acc += c;
        }
        GridTensor {
            num_bs,
            num_users,
            counts,
            offsets,
            slots_per_pair: acc,
            data: vec![0.0; num_bs * num_users * acc],
        }
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_numerologies(&self) -> usize {
        self.counts.len()
    }

    pub fn subcarriers(&self, i: usize) -> usize {
        self.counts[i]
    }

    /// Number of `(i, n)` slots per `(k, m)` pair.
    pub fn slots_per_pair(&self) -> usize {
        self.slots_per_pair
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, k: usize, m: usize, i: usize, n: usize) -> usize {
        debug_assert!(k < self.num_bs, "base station index {k} out of range");
        debug_assert!(m < self.num_users, "user index {m} out of range");
        debug_assert!(i < self.counts.len(), "numerology index {i} out of range");
        debug_assert!(n < self.counts[i], "subcarrier index {n} out of range for numerology {i}");
        (k * self.num_users + m) * self.slots_per_pair + self.offsets[i] + n
    }

    #[inline]
    pub fn get(&self, k: usize, m: usize, i: usize, n: usize) -> f64 {
        self.data[self.index(k, m, i, n)]
    }

    #[inline]
    pub fn set(&mut self, k: usize, m: usize, i: usize, n: usize, value: f64) {
        let idx = self.index(k, m, i, n);
        self.data[idx] = value;
    }

    #[inline]
    pub fn add(&mut self, k: usize, m: usize, i: usize, n: usize, value: f64) {
        let idx = self.index(k, m, i, n);
        self.data[idx] += value;
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Iterate all `(k, m, i, n)` index tuples in storage order.
    pub fn indices(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let counts = self.counts.clone();
        (0..self.num_bs).flat_map(move |k| {
            let counts = counts.clone();
            (0..self.num_users).flat_map(move |m| {
                let counts = counts.clone();
                (0..counts.len()).flat_map(move |i| {
                    let c = counts[i];
                    (0..c).map(move |n| (k, m, i, n))
                })
            })
        })
    }

    /// Iterate all `(k, i, n)` slot tuples (user axis excluded).
    pub fn slots(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let counts = self.counts.clone();
        (0..self.num_bs).flat_map(move |k| {
            let counts = counts.clone();
            (0..counts.len()).flat_map(move |i| {
                let c = counts[i];
                (0..c).map(move |n| (k, i, n))
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::NumerologyGrid;

    fn grid(n1: usize, n2: usize) -> NumerologyGrid {
        NumerologyGrid::two_numerology(0, n1, 1.0, 1, n2, 0.5).unwrap()
    }

    #[test]
    fn layout_is_ragged_and_contiguous() {
        let t = GridTensor::zeros(2, 3, &grid(4, 2));
        assert_eq!(t.len(), 2 * 3 * 6);
        assert_eq!(t.slots_per_pair(), 6);
        // distinct cells map to distinct flat indices
        let mut seen = std::collections::HashSet::new();
        for (k, m, i, n) in t.indices() {
            assert!(seen.insert(t.index(k, m, i, n)));
        }
        assert_eq!(seen.len(), t.len());
    }

    #[test]
    fn get_set_roundtrip() {
        let mut t = GridTensor::zeros(2, 2, &grid(4, 2));
        t.set(1, 0, 1, 1, 3.25);
        assert_eq!(t.get(1, 0, 1, 1), 3.25);
        t.add(1, 0, 1, 1, 0.75);
        assert_eq!(t.get(1, 0, 1, 1), 4.0);
        assert_eq!(t.get(0, 0, 0, 0), 0.0);
    }

    #[test]
    #[should_panic(expected = "subcarrier index")]
    fn out_of_range_subcarrier_panics_in_debug() {
        let t = GridTensor::zeros(1, 1, &grid(4, 2));
        // numerology 1 has only 2 subcarriers
        let _ = t.get(0, 0, 1, 3);
    }
}
