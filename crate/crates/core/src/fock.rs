//! Truncated excitation Fock space over a finite mode set and the exact
//! sparse matrices of the excitation Hamiltonian and the generator B(η).

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::{constant_cn, diag_shift, dispersion, QuadraticCoeffs};
use crate::error::{Error, Result};
use crate::lattice::{ModeSet, Momentum};
use crate::linalg::{self, expm, orthogonality_defect, random_unit, Conjugated, DENSE_EXPM_CAP};
use crate::potential::PotentialSpec;
use crate::sparse::{LinOp, SparseOperator};

/// Default largest basis dimension accepted by `build_basis`.
pub const DEFAULT_DIM_CAP: usize = 20_000;

/// Occupation-number basis with total excitation number ≤ n_max, in graded
/// lexicographic order (by total, then descending occupation vector).
#[derive(Clone, Debug)]
pub struct FockBasis {
    modes: ModeSet,
    n: u64,
    n_max: usize,
    states: Vec<Vec<u8>>,
    totals: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
}

/// C(n_max + M, M), the number of occupation vectors of M modes with total ≤ n_max.
pub fn basis_dimension(modes: usize, n_max: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 1..=modes as u128 {
        c = c * (n_max as u128 + i) / i;
    }
    c
}

pub fn build_basis(modes: &ModeSet, n: u64, n_max: usize) -> Result<FockBasis> {
    build_basis_capped(modes, n, n_max, DEFAULT_DIM_CAP)
}

pub fn build_basis_capped(modes: &ModeSet, n: u64, n_max: usize, cap: usize) -> Result<FockBasis> {
    if n_max as u64 > n {
        return Err(Error::Config(format!("n_max = {n_max} exceeds N = {n}")));
    }
    basis_unchecked(modes, n, n_max, cap)
}

/// Basis with cap n_max + extra, allowed to exceed N; used for intermediate states.
pub fn build_basis_extended(basis: &FockBasis, extra: usize) -> Result<FockBasis> {
    basis_unchecked(&basis.modes, basis.n, basis.n_max + extra, usize::MAX)
}

fn basis_unchecked(modes: &ModeSet, n: u64, n_max: usize, cap: usize) -> Result<FockBasis> {
    if n_max > u8::MAX as usize {
        return Err(Error::Config(format!("n_max = {n_max} exceeds 255")));
    }
    for p in modes.iter() {
        if !modes.contains(&p.neg()) {
            return Err(Error::NotNegationClosed(p.n));
        }
    }
    let m = modes.len();
    let dim = basis_dimension(m, n_max);
    if dim > cap as u128 {
        return Err(Error::DimensionCap { dim: dim.min(usize::MAX as u128) as usize, cap });
    }
    let mut states = Vec::with_capacity(dim as usize);
    let mut totals = Vec::with_capacity(dim as usize);
    let mut cur = vec![0u8; m];
    for t in 0..=n_max {
        compositions(&mut cur, 0, t, &mut |s| {
            states.push(s.to_vec());
            totals.push(t);
        });
    }
    let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    Ok(FockBasis { modes: modes.clone(), n, n_max, states, totals, index })
}

/// Occupations of modes pos.. summing to `left`, first mode largest first.
fn compositions(cur: &mut Vec<u8>, pos: usize, left: usize, emit: &mut dyn FnMut(&[u8])) {
    let m = cur.len();
    if m == 0 {
        if left == 0 {
            emit(cur);
        }
        return;
    }
    if pos == m - 1 {
        cur[pos] = left as u8;
        emit(cur);
        cur[pos] = 0;
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k as u8;
        compositions(cur, pos + 1, left - k, emit);
    }
    cur[pos] = 0;
}

/// Ladder factors understood by the word evaluator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ladder {
    A(usize),
    Ad(usize),
    /// √((N−𝒩₊)/N)·a.
    B(usize),
    /// a*·√((N−𝒩₊)/N).
    Bd(usize),
    /// (N−𝒩₊)/N.
    Shift0,
    /// (N+1−𝒩₊)/N.
    Shift1,
}

impl FockBasis {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i]
    }

    pub fn states(&self) -> &[Vec<u8>] {
        &self.states
    }

    pub fn total(&self, i: usize) -> usize {
        self.totals[i]
    }

    pub fn index_of(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    pub fn mode_index(&self, p: &Momentum) -> Result<usize> {
        self.modes
            .index_of(p)
            .ok_or_else(|| Error::Config(format!("momentum {:?} is not in the mode set", p.n)))
    }

    /// Applies `word` right to left; returns the amplitude, zero if annihilated.
    pub fn apply_word(&self, word: &[Ladder], occ: &mut [i32]) -> f64 {
        let nn = self.n as f64;
        let mut total: i64 = occ.iter().map(|&k| k as i64).sum();
        let mut amp = 1.0;
        let droot = |t: i64| ((nn - t as f64) / nn).max(0.0).sqrt();
        for f in word.iter().rev() {
            match *f {
                Ladder::A(i) | Ladder::B(i) => {
                    if occ[i] == 0 {
                        return 0.0;
                    }
                    amp *= (occ[i] as f64).sqrt();
                    occ[i] -= 1;
                    total -= 1;
                    if matches!(f, Ladder::B(_)) {
                        amp *= droot(total);
                    }
                }
                Ladder::Ad(i) | Ladder::Bd(i) => {
                    if matches!(f, Ladder::Bd(_)) {
                        amp *= droot(total);
                    }
                    occ[i] += 1;
                    total += 1;
                    amp *= (occ[i] as f64).sqrt();
                }
                Ladder::Shift0 => amp *= (nn - total as f64) / nn,
                Ladder::Shift1 => amp *= (nn + 1.0 - total as f64) / nn,
            }
            if amp == 0.0 {
                return 0.0;
            }
        }
        amp
    }

    /// Exact P·(Σ c·word)·P on this basis.
    pub fn words_matrix(&self, words: &[(f64, Vec<Ladder>)]) -> SparseOperator {
        let trip: Vec<(usize, usize, f64)> = (0..self.dim())
            .into_par_iter()
            .flat_map_iter(|col| {
                let base: Vec<i32> = self.states[col].iter().map(|&k| k as i32).collect();
                let mut out = Vec::new();
                let mut occ = base.clone();
                let mut key = vec![0u8; base.len()];
                for (c, w) in words {
                    if *c == 0.0 {
                        continue;
                    }
                    occ.copy_from_slice(&base);
                    let amp = self.apply_word(w, &mut occ);
                    if amp == 0.0 {
                        continue;
                    }
                    let t: i32 = occ.iter().sum();
                    if t as usize > self.n_max {
                        continue;
                    }
                    for (k, &o) in key.iter_mut().zip(&occ) {
                        *k = o as u8;
                    }
                    if let Some(&row) = self.index.get(&key) {
                        out.push((row, col, c * amp));
                    }
                }
                out
            })
            .collect();
        SparseOperator::from_triplets(self.dim(), trip)
    }

    /// Diagonal operator from a function of the occupation vector.
    pub fn diagonal<F: Fn(&[u8]) -> f64 + Sync>(&self, f: F) -> SparseOperator {
        let d: Vec<f64> = self.states.par_iter().map(|s| f(s)).collect();
        SparseOperator::diagonal(&d)
    }
}

pub fn op_a(basis: &FockBasis, p: &Momentum) -> Result<SparseOperator> {
    let i = basis.mode_index(p)?;
    Ok(basis.words_matrix(&[(1.0, vec![Ladder::A(i)])]))
}

pub fn op_adag(basis: &FockBasis, p: &Momentum) -> Result<SparseOperator> {
    Ok(op_a(basis, p)?.transpose())
}

pub fn op_b(basis: &FockBasis, p: &Momentum) -> Result<SparseOperator> {
    let i = basis.mode_index(p)?;
    Ok(basis.words_matrix(&[(1.0, vec![Ladder::B(i)])]))
}

pub fn op_bdag(basis: &FockBasis, p: &Momentum) -> Result<SparseOperator> {
    Ok(op_b(basis, p)?.transpose())
}

/// 𝒩₊.
pub fn number_op(basis: &FockBasis) -> SparseOperator {
    basis.diagonal(|s| s.iter().map(|&k| k as f64).sum())
}

/// 𝒦 = Σ p² a*_p a_p.
pub fn kinetic_op(basis: &FockBasis) -> SparseOperator {
    let p2: Vec<f64> = basis.modes.iter().map(|p| p.norm_sq()).collect();
    basis.diagonal(|s| s.iter().zip(&p2).map(|(&k, e)| k as f64 * e).sum())
}

/// Component `axis` of the total momentum in units of 2π.
pub fn momentum_op(basis: &FockBasis, axis: usize) -> SparseOperator {
    let c: Vec<f64> = basis.modes.iter().map(|p| p.n[axis] as f64).collect();
    basis.diagonal(|s| s.iter().zip(&c).map(|(&k, e)| k as f64 * e).sum())
}

/// Permutation p → −p of mode occupations.
pub fn parity_op(basis: &FockBasis) -> SparseOperator {
    let m = basis.modes.len();
    let neg: Vec<usize> = (0..m).map(|i| basis.modes.neg(i)).collect();
    let trip = (0..basis.dim())
        .map(|col| {
            let s = basis.state(col);
            let mut t = vec![0u8; m];
            for i in 0..m {
                t[neg[i]] = s[i];
            }
            (basis.index_of(&t).expect("parity preserves the basis"), col, 1.0)
        })
        .collect();
    SparseOperator::from_triplets(basis.dim(), trip)
}

/// Excitation Hamiltonian pieces on the truncated space.
#[derive(Clone, Debug)]
pub struct HamiltonianParts {
    pub l0: SparseOperator,
    pub l2: SparseOperator,
    pub l3: SparseOperator,
    pub l4: SparseOperator,
    pub k: SparseOperator,
    pub vn: SparseOperator,
    pub nplus: SparseOperator,
}

impl HamiltonianParts {
    /// ℒ = ℒ⁽⁰⁾ + ℒ⁽²⁾ + ℒ⁽³⁾ + ℒ⁽⁴⁾.
    pub fn total(&self) -> SparseOperator {
        self.l0.add(&self.l2).add(&self.l3).add(&self.l4)
    }
}

fn check_basis_spec(basis: &FockBasis, spec: &PotentialSpec) -> Result<()> {
    spec.validate()?;
    if basis.n != spec.n {
        return Err(Error::Config(format!("basis built for N = {} but potential has N = {}", basis.n, spec.n)));
    }
    Ok(())
}

/// Mode-truncated excitation Hamiltonian; every interaction term carries κ.
///
/// Terms whose creation or annihilation momenta leave the mode set are dropped.
pub fn build_l(basis: &FockBasis, spec: &PotentialSpec) -> Result<HamiltonianParts> {
    check_basis_spec(basis, spec)?;
    let modes = &basis.modes;
    let m = modes.len();
    let kappa = spec.kappa;
    let nn = spec.n_f64();
    let kv0 = kappa * spec.hat_zero();

    let l0 = basis.diagonal(|s| {
        let t: f64 = s.iter().map(|&k| k as f64).sum();
        (nn - 1.0) / (2.0 * nn) * kv0 * (nn - t) + kv0 / (2.0 * nn) * t * (nn - t)
    });
    let k = kinetic_op(basis);
    let nplus = number_op(basis);

    let kv: Vec<f64> = modes.iter().map(|p| kappa * spec.scaled_hat(p)).collect();
    let mut diag_words = Vec::with_capacity(2 * m);
    let mut pair_words = Vec::with_capacity(m);
    for i in 0..m {
        diag_words.push((kv[i], vec![Ladder::Bd(i), Ladder::B(i)]));
        diag_words.push((-kv[i] / nn, vec![Ladder::Ad(i), Ladder::A(i)]));
        pair_words.push((0.5 * kv[i], vec![Ladder::Bd(i), Ladder::Bd(modes.neg(i))]));
    }
    let x2 = basis.words_matrix(&pair_words);
    let l2 = k.add(&basis.words_matrix(&diag_words)).add(&x2.add(&x2.transpose()));

    // b*_{p+q} a*_{−p} a_q with p, q, p+q in the set
    let mut cubic = Vec::new();
    let c3 = kappa / nn.sqrt();
    for (ip, p) in modes.iter().enumerate() {
        for (iq, q) in modes.iter().enumerate() {
            if let Some(is) = modes.index_of(&p.add(q)) {
                cubic.push((c3 * spec.scaled_hat(p), vec![Ladder::Bd(is), Ladder::Ad(modes.neg(ip)), Ladder::A(iq)]));
            }
        }
    }
    let x3 = basis.words_matrix(&cubic);
    let l3 = x3.add(&x3.transpose());

    // a*_{p+r} a*_q a_p a_{q+r}, enumerated by s = p + r
    let mut quartic = Vec::new();
    let c4 = kappa / (2.0 * nn);
    for (ip, p) in modes.iter().enumerate() {
        for (iq, q) in modes.iter().enumerate() {
            for (is, s) in modes.iter().enumerate() {
                let r = s.sub(p);
                if let Some(it) = modes.index_of(&q.add(&r)) {
                    quartic.push((c4 * spec.scaled_hat(&r), vec![Ladder::Ad(is), Ladder::Ad(iq), Ladder::A(ip), Ladder::A(it)]));
                }
            }
        }
    }
    let x4 = basis.words_matrix(&quartic);
    let l4 = x4.add(&x4.transpose()).scale(0.5);
    let vn = l4.clone();
    Ok(HamiltonianParts { l0, l2, l3, l4, k, vn, nplus })
}

fn check_eta(basis: &FockBasis, eta: &[f64]) -> Result<()> {
    let m = basis.modes.len();
    if eta.len() != m {
        return Err(Error::Config(format!("eta has {} entries for {m} modes", eta.len())));
    }
    for i in 0..m {
        let j = basis.modes.neg(i);
        if (eta[i] - eta[j]).abs() > 1e-14 * eta[i].abs().max(eta[j].abs()) {
            return Err(Error::Config(format!("eta is not symmetric under p -> -p at {:?}", basis.modes.get(i).n)));
        }
    }
    Ok(())
}

/// B(η) = ½Σ η_p(b*_p b*_{−p} − b_p b_{−p}), exactly antisymmetric.
pub fn build_b(basis: &FockBasis, eta: &[f64]) -> Result<SparseOperator> {
    check_eta(basis, eta)?;
    let words: Vec<(f64, Vec<Ladder>)> = (0..eta.len())
        .map(|i| (0.5 * eta[i], vec![Ladder::Bd(i), Ladder::Bd(basis.modes.neg(i))]))
        .collect();
    let x = basis.words_matrix(&words);
    Ok(x.sub(&x.transpose()))
}

/// e^B densely, refusing dimensions over the dense cap.
pub fn exp_b(b: &SparseOperator) -> Result<DMatrix<f64>> {
    if b.dim() > DENSE_EXPM_CAP {
        return Err(Error::DenseCap { dim: b.dim(), cap: DENSE_EXPM_CAP });
    }
    Ok(expm(&b.to_dense()))
}

/// e^{−B} L e^{B}, dense or as a Krylov-applied operator.
pub enum Conjugation<'a> {
    Dense { g: SparseOperator, orthogonality_defect: f64 },
    Krylov(Conjugated<'a>),
}

impl LinOp for Conjugation<'_> {
    fn dim(&self) -> usize {
        match self {
            Conjugation::Dense { g, .. } => g.dim(),
            Conjugation::Krylov(c) => c.dim(),
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Conjugation::Dense { g, .. } => g.apply(x, y),
            Conjugation::Krylov(c) => c.apply(x, y),
        }
    }
}

impl Conjugation<'_> {
    pub fn lowest_eigs(&self, m: usize) -> Result<Vec<f64>> {
        match self {
            Conjugation::Dense { g, .. } => linalg::lowest_eigs(g, m),
            Conjugation::Krylov(c) => linalg::lowest_eigs_op(c, m),
        }
    }
}

pub fn exp_conjugate<'a>(l: &'a SparseOperator, b: &'a SparseOperator, krylov: bool) -> Result<Conjugation<'a>> {
    if l.dim() != b.dim() {
        return Err(Error::Config("L and B have different dimensions".into()));
    }
    if b.dim() > DENSE_EXPM_CAP {
        if !krylov {
            return Err(Error::DenseCap { dim: b.dim(), cap: DENSE_EXPM_CAP });
        }
        return Ok(Conjugation::Krylov(Conjugated { l, b, krylov_dim: 40, tol: 1e-13 }));
    }
    let e = exp_b(b)?;
    let g = e.transpose() * l.to_dense() * &e;
    let g = (&g + g.transpose()) * 0.5;
    Ok(Conjugation::Dense { g: SparseOperator::from_dense(&g), orthogonality_defect: orthogonality_defect(&e) })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdRow {
    pub level: usize,
    pub ed: f64,
    pub predicted: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdComparison {
    pub rows: Vec<EdRow>,
    pub lambda0: f64,
    pub c_n: f64,
    pub diag_shift: f64,
    pub predicted_ground: f64,
    pub ground_gap: f64,
    pub dim: usize,
}

/// Σ n_p ε_p over the basis states, ascending.
pub fn predicted_levels(basis: &FockBasis, kv0: f64) -> Vec<f64> {
    let eps: Vec<f64> = basis.modes.iter().map(|p| dispersion(p, kv0)).collect();
    let mut lv: Vec<f64> = basis
        .states
        .iter()
        .map(|s| s.iter().zip(&eps).map(|(&k, e)| k as f64 * e).sum())
        .collect();
    lv.sort_by(|a, b| a.partial_cmp(b).unwrap());
    lv
}

/// ED excitation energies against Σ n_p ε_p, and λ₀ against C_N + diag shift.
pub fn ed_compare(spec: &PotentialSpec, coeffs: &QuadraticCoeffs, basis: &FockBasis, m: usize) -> Result<EdComparison> {
    if m + 1 > basis.dim() {
        return Err(Error::Config(format!("{m} excitation levels need dimension > {m}, basis has {}", basis.dim())));
    }
    let parts = build_l(basis, spec)?;
    let l = parts.total();
    let ev = linalg::lowest_eigs(&l, m + 1)?;
    let kv0 = spec.kappa * spec.hat_zero();
    let pred = predicted_levels(basis, kv0);
    let rows = (1..=m)
        .map(|k| {
            let ed = ev[k] - ev[0];
            EdRow { level: k, ed, predicted: pred[k], gap: (ed - pred[k]).abs() }
        })
        .collect();
    let cn = constant_cn(spec, coeffs, &basis.modes)?;
    let (ds, _) = diag_shift(coeffs, &basis.modes)?;
    let predicted_ground = cn.value + ds;
    Ok(EdComparison {
        rows,
        lambda0: ev[0],
        c_n: cn.value,
        diag_shift: ds,
        predicted_ground,
        ground_gap: (ev[0] - predicted_ground).abs(),
        dim: basis.dim(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioCheck {
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub trials: usize,
    pub seed: u64,
}

/// max ⟨ξ,𝒱_Nξ⟩ / (κN^{β−1}‖(𝒦+1)^{1/2}(𝒩₊+1)^{1/2}ξ‖²) over random unit ξ.
pub fn vn_bound_check(
    basis: &FockBasis,
    spec: &PotentialSpec,
    parts: &HamiltonianParts,
    trials: usize,
    seed: u64,
) -> Result<RatioCheck> {
    check_basis_spec(basis, spec)?;
    if spec.kappa == 0.0 {
        return Ok(RatioCheck { max_ratio: 0.0, min_ratio: 0.0, trials, seed });
    }
    let pref = spec.kappa * spec.n_f64().powf(spec.beta - 1.0);
    let w: Vec<f64> = parts.k.diag().iter().zip(parts.nplus.diag()).map(|(k, n)| (k + 1.0) * (n + 1.0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..trials {
        let xi = random_unit(basis.dim(), &mut rng);
        let num = parts.vn.quadratic_form(&xi);
        let den: f64 = xi.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let r = num / (pref * den);
        max_ratio = max_ratio.max(r);
        min_ratio = min_ratio.min(r);
    }
    Ok(RatioCheck { max_ratio, min_ratio, trials, seed })
}

/// ⟨ξ, e^{−B}(𝒩₊+1)^{n₁}(N+1−𝒩₊)^{n₂}e^{B}ξ⟩ / ⟨ξ, (𝒩₊+1)^{n₁}(N+1−𝒩₊)^{n₂}ξ⟩ over random unit ξ.
pub fn ngrow_check(basis: &FockBasis, eta: &[f64], n1: i32, n2: i32, trials: usize, seed: u64) -> Result<RatioCheck> {
    if n1.abs() > 2 || n2.abs() > 2 {
        return Err(Error::Config(format!("growth exponents must satisfy |n| <= 2, got ({n1}, {n2})")));
    }
    let b = build_b(basis, eta)?;
    let nn = basis.n as f64;
    let w: Vec<f64> = (0..basis.dim())
        .map(|i| {
            let t = basis.total(i) as f64;
            (t + 1.0).powi(n1) * (nn + 1.0 - t).powi(n2)
        })
        .collect();
    let dense = if basis.dim() <= DENSE_EXPM_CAP { Some(exp_b(&b)?) } else { None };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..trials {
        let xi = random_unit(basis.dim(), &mut rng);
        let u: Vec<f64> = match &dense {
            Some(e) => (e * nalgebra::DVector::from_column_slice(&xi)).as_slice().to_vec(),
            None => linalg::expm_action(&b, &xi, 1.0, 40, 1e-13),
        };
        let num: f64 = u.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let den: f64 = xi.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let r = num / den;
        max_ratio = max_ratio.max(r);
        min_ratio = min_ratio.min(r);
    }
    Ok(RatioCheck { max_ratio, min_ratio, trials, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_shell() -> ModeSet {
        ModeSet::from_max_norm_sq(1)
    }

    #[test]
    fn dimensions() {
        let set = unit_shell();
        assert_eq!(build_basis(&set, 10, 4).unwrap().dim(), 210);
        assert_eq!(build_basis(&set, 10, 0).unwrap().dim(), 1);
        assert_eq!(basis_dimension(2, 2), 6);
        assert!(matches!(build_basis_capped(&set, 100, 20, 1000), Err(Error::DimensionCap { .. })));
        assert!(build_basis(&set, 3, 4).is_err());
    }

    #[test]
    fn graded_order() {
        let b = build_basis(&unit_shell(), 10, 2).unwrap();
        assert_eq!(b.total(0), 0);
        for i in 1..b.dim() {
            assert!(b.total(i - 1) <= b.total(i));
            if b.total(i - 1) == b.total(i) {
                assert!(b.state(i - 1) > b.state(i));
            }
        }
        assert_eq!(b.state(1), &[1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn ladder_elements() {
        let set = unit_shell();
        let b = build_basis(&set, 10, 3).unwrap();
        let p = set.get(0);
        let a = op_a(&b, &p).unwrap();
        assert!(a.matvec(&{
            let mut v = vec![0.0; b.dim()];
            v[0] = 1.0;
            v
        })
        .iter()
        .all(|&x| x == 0.0));
        let ad = op_adag(&b, &p).unwrap();
        let one = b.index_of(&[1, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(ad.get(one, 0), 1.0);
        let two = b.index_of(&[2, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(ad.get(two, one), 2f64.sqrt());
        let bd = op_bdag(&b, &p).unwrap();
        assert_eq!(bd.get(one, 0), 1.0);
        assert_eq!(bd.get(two, one), 2f64.sqrt() * (0.9f64).sqrt());
        assert!(op_a(&b, &Momentum::new(2, 0, 0)).is_err());
    }

    #[test]
    fn vacuum_expectation_and_symmetry() {
        let set = unit_shell();
        let b = build_basis(&set, 50, 3).unwrap();
        let spec = PotentialSpec::ball(1.0, 1.0, 0.3, 0.5, 50);
        let parts = build_l(&b, &spec).unwrap();
        let l = parts.total();
        let want = 49.0 * 0.3 * spec.hat_zero() / 2.0;
        assert!((l.get(0, 0) - want).abs() <= 1e-13 * want);
        assert_eq!(l.asymmetry(), 0.0);
        // no p, q, p+q triple lies on the unit shell
        assert_eq!(parts.l3.nnz(), 0);
        assert!(parts.l4.nnz() > 0);
        let set2 = ModeSet::from_max_norm_sq(2);
        let b2 = build_basis(&set2, 50, 2).unwrap();
        let p2 = build_l(&b2, &spec).unwrap();
        assert!(p2.l3.nnz() > 0);
        assert_eq!(p2.total().asymmetry(), 0.0);
    }

    #[test]
    fn free_spectrum() {
        let set = unit_shell();
        let b = build_basis(&set, 10, 2).unwrap();
        let spec = PotentialSpec::ball(1.0, 1.0, 0.0, 0.5, 10);
        let l = build_l(&b, &spec).unwrap().total();
        assert_eq!(l, kinetic_op(&b));
        let ev = linalg::lowest_eigs(&l, 3).unwrap();
        let p2 = 4.0 * std::f64::consts::PI.powi(2);
        assert_eq!(ev[0], 0.0);
        assert!((ev[1] - p2).abs() < 1e-12 && (ev[2] - p2).abs() < 1e-12);
    }

    #[test]
    fn b_generator_is_antisymmetric() {
        let set = unit_shell();
        let b = build_basis(&set, 20, 3).unwrap();
        let gen = build_b(&b, &[0.1; 6]).unwrap();
        assert_eq!(gen.add(&gen.transpose()).nnz(), 0);
        assert_eq!(build_b(&b, &[0.0; 6]).unwrap().nnz(), 0);
        assert!(build_b(&b, &[0.1, 0.2, 0.1, 0.1, 0.1, 0.1]).is_err());
    }
}
