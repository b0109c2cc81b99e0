//! Momentum lattice 2πℤ³, mode enumeration and compensated lattice sums.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice momentum p = 2π·n.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Momentum {
    pub n: [i32; 3],
}

impl Momentum {
    pub const ZERO: Momentum = Momentum { n: [0, 0, 0] };

    pub fn new(n1: i32, n2: i32, n3: i32) -> Self {
        Momentum { n: [n1, n2, n3] }
    }

    /// |n|², exact.
    pub fn norm_sq_int(&self) -> i64 {
        self.n.iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    /// |p|² = 4π²|n|².
    pub fn norm_sq(&self) -> f64 {
        4.0 * PI * PI * self.norm_sq_int() as f64
    }

    pub fn norm(&self) -> f64 {
        2.0 * PI * (self.norm_sq_int() as f64).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.n == [0, 0, 0]
    }

    pub fn neg(&self) -> Self {
        Momentum { n: [-self.n[0], -self.n[1], -self.n[2]] }
    }

    pub fn add(&self, o: &Momentum) -> Self {
        Momentum { n: [self.n[0] + o.n[0], self.n[1] + o.n[1], self.n[2] + o.n[2]] }
    }

    pub fn sub(&self, o: &Momentum) -> Self {
        Momentum { n: [self.n[0] - o.n[0], self.n[1] - o.n[1], self.n[2] - o.n[2]] }
    }

    /// Cartesian components of p.
    pub fn vector(&self) -> [f64; 3] {
        let s = 2.0 * PI;
        [s * self.n[0] as f64, s * self.n[1] as f64, s * self.n[2] as f64]
    }

    /// Canonical representative of the cubic-group orbit: sorted absolute values, descending.
    pub fn orbit_rep(&self) -> [i32; 3] {
        let mut a = [self.n[0].abs(), self.n[1].abs(), self.n[2].abs()];
        a.sort_unstable_by(|x, y| y.cmp(x));
        a
    }

    fn sort_key(&self) -> (i64, [i32; 3]) {
        (self.norm_sq_int(), self.n)
    }
}

/// Finite, negation-closed subset of Λ*₊ in (|n|², lexicographic n) order.
#[derive(Clone, Debug)]
pub struct ModeSet {
    momenta: Vec<Momentum>,
    cutoff_radius: f64,
    index: HashMap<[i32; 3], usize>,
    neg_index: Vec<usize>,
}

impl ModeSet {
    /// All p ∈ Λ*₊ with |p| ≤ p_max.
    pub fn enumerate_shell(p_max: f64) -> Self {
        let p_max = p_max.max(0.0);
        let m_max = max_shell_index(p_max);
        let r = (m_max as f64).sqrt().floor() as i32 + 1;
        let mut momenta = Vec::new();
        for n1 in -r..=r {
            for n2 in -r..=r {
                for n3 in -r..=r {
                    let m = Momentum::new(n1, n2, n3);
                    let s = m.norm_sq_int();
                    if s > 0 && s <= m_max {
                        momenta.push(m);
                    }
                }
            }
        }
        Self::build(momenta, p_max)
    }

    /// Shell with |n|² ≤ m_max, avoiding floating comparisons.
    pub fn from_max_norm_sq(m_max: i64) -> Self {
        let p = 2.0 * PI * (m_max.max(0) as f64).sqrt();
        let mut set = Self::enumerate_shell(p);
        set.cutoff_radius = p;
        set
    }

    /// Validates an explicit list: no zero, no duplicates, negation-closed.
    pub fn from_momenta(mut momenta: Vec<Momentum>) -> Result<Self> {
        momenta.sort_by_key(|m| m.sort_key());
        momenta.dedup();
        if momenta.iter().any(|m| m.is_zero()) {
            return Err(Error::ZeroMode);
        }
        let keys: std::collections::HashSet<[i32; 3]> = momenta.iter().map(|m| m.n).collect();
        for m in &momenta {
            if !keys.contains(&m.neg().n) {
                return Err(Error::NotNegationClosed(m.n));
            }
        }
        let radius = momenta.iter().map(|m| m.norm()).fold(0.0, f64::max);
        Ok(Self::build(momenta, radius))
    }

    fn build(mut momenta: Vec<Momentum>, cutoff_radius: f64) -> Self {
        momenta.sort_by_key(|m| m.sort_key());
        let index: HashMap<[i32; 3], usize> =
            momenta.iter().enumerate().map(|(i, m)| (m.n, i)).collect();
        let neg_index = momenta.iter().map(|m| index[&m.neg().n]).collect();
        ModeSet { momenta, cutoff_radius, index, neg_index }
    }

    pub fn len(&self) -> usize {
        self.momenta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.momenta.is_empty()
    }

    pub fn momenta(&self) -> &[Momentum] {
        &self.momenta
    }

    pub fn get(&self, i: usize) -> Momentum {
        self.momenta[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Momentum> {
        self.momenta.iter()
    }

    pub fn cutoff_radius(&self) -> f64 {
        self.cutoff_radius
    }

    pub fn index_of(&self, m: &Momentum) -> Option<usize> {
        self.index.get(&m.n).copied()
    }

    pub fn index_of_n(&self, n: [i32; 3]) -> Option<usize> {
        self.index.get(&n).copied()
    }

    pub fn contains(&self, m: &Momentum) -> bool {
        self.index.contains_key(&m.n)
    }

    /// Index of −p for the mode at index i.
    pub fn neg(&self, i: usize) -> usize {
        self.neg_index[i]
    }

    /// Largest |n|² present (0 for the empty set).
    pub fn max_norm_sq_int(&self) -> i64 {
        self.momenta.last().map(|m| m.norm_sq_int()).unwrap_or(0)
    }

    /// Distinct |n|² values in increasing order.
    pub fn distinct_norms(&self) -> Vec<i64> {
        let mut v: Vec<i64> = self.momenta.iter().map(|m| m.norm_sq_int()).collect();
        v.dedup();
        v
    }

    /// Index pairs (i, neg(i)) with i the lexicographically larger member.
    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).filter_map(move |i| {
            let j = self.neg_index[i];
            (self.momenta[i].n > self.momenta[j].n).then_some((i, j))
        })
    }
}

/// Largest integer |n|² with 2π|n| ≤ p_max, tolerant to rounding at exact shells.
pub fn max_shell_index(p_max: f64) -> i64 {
    let x = p_max / (2.0 * PI);
    (x * x * (1.0 + 1e-12) + 1e-12).floor() as i64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    None,
    InverseSquare,
    InverseQuartic,
}

/// Continuum tail model for Σ_{|p|>P} coefficient·|p|^{-s}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub kind: TailKind,
    pub coefficient: f64,
}

impl TailModel {
    pub const NONE: TailModel = TailModel { kind: TailKind::None, coefficient: 0.0 };

    pub fn inverse_quartic(coefficient: f64) -> Self {
        TailModel { kind: TailKind::InverseQuartic, coefficient }
    }

    pub fn inverse_square(coefficient: f64) -> Self {
        TailModel { kind: TailKind::InverseSquare, coefficient }
    }

    /// Estimate of the omitted sum beyond radius p_max.
    ///
    /// A |p|⁻² summand has no finite tail in three dimensions; the estimate is
    /// then infinite unless the coefficient vanishes.
    pub fn estimate(&self, p_max: f64) -> f64 {
        match self.kind {
            TailKind::None => 0.0,
            _ if self.coefficient == 0.0 => 0.0,
            TailKind::InverseSquare => self.coefficient.signum() * f64::INFINITY,
            TailKind::InverseQuartic => {
                if p_max <= 0.0 {
                    return self.coefficient.signum() * f64::INFINITY;
                }
                // 4π ∫_P^∞ r^{-2} dr / (2π)³
                self.coefficient * 4.0 * PI / (p_max * (2.0 * PI).powi(3))
            }
        }
    }
}

/// Compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Kahan sum of a slice in order.
pub fn kahan_sum(xs: &[f64]) -> f64 {
    let mut k = Kahan::new();
    for &x in xs {
        k.add(x);
    }
    k.value()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSum {
    pub value: f64,
    pub tail_estimate: f64,
}

/// Σ_{p∈set} f(p) with a fixed reduction order.
///
/// Summands are evaluated in parallel, then each ±p pair is added first and
/// the pair sums are accumulated with Kahan compensation in set order, so odd
/// functions cancel exactly and the result is independent of thread count.
pub fn lattice_sum<F>(f: F, set: &ModeSet, tail: TailModel) -> Result<LatticeSum>
where
    F: Fn(&Momentum) -> f64 + Sync,
{
    let vals: Vec<f64> = set.momenta.par_iter().map(&f).collect();
    let value = paired_sum(set, &vals)?;
    Ok(LatticeSum { value, tail_estimate: tail.estimate(set.cutoff_radius) })
}

/// Pairwise-then-compensated sum of values aligned with the set.
pub fn paired_sum(set: &ModeSet, vals: &[f64]) -> Result<f64> {
    assert_eq!(vals.len(), set.len());
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(set.momenta[i].n));
    }
    let mut k = Kahan::new();
    for (i, j) in set.pairs() {
        k.add(vals[i] + vals[j]);
    }
    Ok(k.value())
}

/// Continuum estimate (2π)^{-3} ∫_{|q|>P} g(|q|) d³q for a radial summand.
pub fn continuum_tail<G: Fn(f64) -> f64>(g: G, p_max: f64) -> f64 {
    if p_max <= 0.0 {
        return f64::INFINITY;
    }
    // q = P/t maps (P, ∞) onto (0, 1]; dq = P/t² dt.
    let h = |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        let q = p_max / t;
        g(q) * q * q * p_max / (t * t)
    };
    // coarse pass fixes an absolute floor so oscillatory integrands terminate
    let coarse = crate::quad::adaptive(&h, 0.0, 1.0, 1e-4, 0.0, 12);
    let integral = crate::quad::adaptive(&h, 0.0, 1.0, 1e-10, 1e-10 * coarse.abs(), 30);
    integral / (2.0 * PI * PI)
}

/// Number of lattice points n ∈ ℤ³ with |n|² = m, for m = 0..=m_max.
pub fn shell_counts(m_max: i64) -> Vec<u64> {
    let mut counts = vec![0u64; (m_max.max(0) + 1) as usize];
    let r = (m_max.max(0) as f64).sqrt().floor() as i64 + 1;
    for a in -r..=r {
        for b in -r..=r {
            let s2 = a * a + b * b;
            if s2 > m_max {
                continue;
            }
            for c in -r..=r {
                let s = s2 + c * c;
                if s <= m_max {
                    counts[s as usize] += 1;
                }
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_counting() {
        assert_eq!(ModeSet::enumerate_shell(2.0 * PI).len(), 6);
        assert_eq!(ModeSet::enumerate_shell(PI).len(), 0);
        assert_eq!(ModeSet::enumerate_shell(2.0 * PI * 3f64.sqrt()).len(), 26);
        assert_eq!(ModeSet::from_max_norm_sq(3).len(), 26);
    }

    #[test]
    fn brute_force_matches_enumeration() {
        let set = ModeSet::enumerate_shell(2.0 * PI * 3f64.sqrt());
        let mut count = 0;
        for a in -2..=2i32 {
            for b in -2..=2i32 {
                for c in -2..=2i32 {
                    let s = a * a + b * b + c * c;
                    if s > 0 && s <= 3 {
                        count += 1;
                        assert!(set.contains(&Momentum::new(a, b, c)));
                    }
                }
            }
        }
        assert_eq!(count, set.len());
    }

    #[test]
    fn ordering_and_negation() {
        let set = ModeSet::from_max_norm_sq(5);
        for w in set.momenta().windows(2) {
            assert!(w[0].sort_key() < w[1].sort_key());
        }
        for i in 0..set.len() {
            assert_eq!(set.get(set.neg(i)), set.get(i).neg());
        }
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(matches!(
            ModeSet::from_momenta(vec![Momentum::new(1, 0, 0)]),
            Err(Error::NotNegationClosed(_))
        ));
        assert!(matches!(
            ModeSet::from_momenta(vec![Momentum::ZERO]),
            Err(Error::ZeroMode)
        ));
    }

    #[test]
    fn constant_and_odd_sums() {
        let unit = ModeSet::enumerate_shell(2.0 * PI);
        let s = lattice_sum(|_| 1.0, &unit, TailModel::NONE).unwrap();
        assert_eq!(s.value, 6.0);
        assert_eq!(s.tail_estimate, 0.0);

        let set = ModeSet::from_max_norm_sq(30);
        let odd = |p: &Momentum| {
            let v = p.vector();
            v[0].powi(3) * 0.37 + (v[1] * 1.3).sin() - v[2] * v[0] * v[1]
        };
        assert_eq!(lattice_sum(odd, &set, TailModel::NONE).unwrap().value, 0.0);
    }

    #[test]
    fn non_finite_reports_momentum() {
        let set = ModeSet::from_max_norm_sq(2);
        let f = |p: &Momentum| if p.n == [0, 1, 1] { f64::NAN } else { 1.0 };
        match lattice_sum(f, &set, TailModel::NONE) {
            Err(Error::NonFinite(n)) => assert_eq!(n, [0, 1, 1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quartic_tail_covers_gap_to_reference() {
        let f = |p: &Momentum| p.norm_sq().powi(-2);
        let small = ModeSet::from_max_norm_sq(100);
        let big = ModeSet::from_max_norm_sq(1600);
        let s = lattice_sum(f, &small, TailModel::inverse_quartic(1.0)).unwrap();
        let r = lattice_sum(f, &big, TailModel::inverse_quartic(1.0)).unwrap();
        let gap = r.value - s.value;
        assert!(gap > 0.0);
        // the tail beyond the reference cutoff is itself estimated
        let est = s.tail_estimate - r.tail_estimate;
        assert!((gap - est).abs() < 0.05 * est, "gap {gap} est {est}");
    }

    #[test]
    fn continuum_tail_matches_closed_form() {
        let p = 40.0;
        let t = continuum_tail(|q| q.powi(-4), p);
        let exact = TailModel::inverse_quartic(1.0).estimate(p);
        assert!((t - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn shell_counts_small() {
        let c = shell_counts(4);
        assert_eq!(c, vec![1, 6, 12, 8, 6]);
    }
}
