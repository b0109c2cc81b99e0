//! Closed-form Bogoliubov coefficients, the constant C_N, the Born series of
//! the scattering length, the ground state energy and the dispersion ε_p.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{continuum_tail, lattice_sum, paired_sum, Kahan, ModeSet, Momentum, TailModel};
use crate::potential::PotentialSpec;
use crate::scattering::ScatteringSolution;

/// Per-mode coefficients aligned with `modes`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticCoeffs {
    pub modes: Vec<Momentum>,
    pub kappa: f64,
    pub p2: Vec<f64>,
    /// V̂(p/N^β), without κ.
    pub vhat: Vec<f64>,
    pub eta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub gamma: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// Σ_{q∈set} V̂((p−q)/N^β) η_q.
    pub conv_set: Vec<f64>,
    /// S_p = (κ/N) Σ_{q∈set∪{0}} V̂((p−q)/N^β) η̃_q.
    pub conv: Vec<f64>,
    pub conv_tail: f64,
    pub a: Vec<f64>,
    /// |F²−G²−p⁴−2p²κV̂−A| / F².
    pub identity_residual: Vec<f64>,
    pub tau: Vec<f64>,
    pub max_g_over_f: f64,
    pub warnings: Vec<String>,
}

impl QuadraticCoeffs {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// max |γ²−σ²−1|.
    pub fn hyperbolic_defect(&self) -> f64 {
        self.sigma
            .iter()
            .zip(&self.gamma)
            .map(|(s, g)| (g * g - s * s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// max |tanh(2τ) + G/F|.
    pub fn tanh_defect(&self) -> f64 {
        self.tau
            .iter()
            .zip(self.g.iter().zip(&self.f))
            .map(|(t, (g, f))| ((2.0 * t).tanh() + g / f).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.identity_residual.iter().copied().fold(0.0, f64::max)
    }
}

/// V̂(2π√m/N^β) indexed by integer |n|².
pub(crate) struct HatTable {
    vals: Vec<f64>,
}

impl HatTable {
    pub(crate) fn new(spec: &PotentialSpec, m_max: i64) -> Self {
        let ms: Vec<i64> = (0..=m_max.max(0)).collect();
        let vals = ms.par_iter().map(|&m| spec.scaled_hat_norm(2.0 * PI * (m as f64).sqrt())).collect();
        HatTable { vals }
    }

    #[inline]
    pub(crate) fn at(&self, d: [i32; 3]) -> f64 {
        let m = (d[0] as i64).pow(2) + (d[1] as i64).pow(2) + (d[2] as i64).pow(2);
        self.vals[m as usize]
    }
}

fn diff(a: &Momentum, b: &Momentum) -> [i32; 3] {
    [a.n[0] - b.n[0], a.n[1] - b.n[1], a.n[2] - b.n[2]]
}

/// σ, γ, F, G on the set from η and the q=0 inclusive convolution.
pub fn fg_coeffs(spec: &PotentialSpec, sol: &ScatteringSolution, set: &ModeSet) -> Result<QuadraticCoeffs> {
    spec.validate()?;
    let table = sol.eta_table()?;
    let eta = table.on_set(set)?;
    let eta0 = sol.eta_tilde(&Momentum::ZERO)?;
    let kappa = spec.kappa;
    let nn = spec.n_f64();
    let hats = HatTable::new(spec, 4 * set.max_norm_sq_int());
    let modes = set.momenta().to_vec();
    let p2: Vec<f64> = modes.iter().map(|p| p.norm_sq()).collect();
    let vhat: Vec<f64> = modes.iter().map(|p| hats.at(p.n)).collect();
    let conv_set: Vec<f64> = modes
        .par_iter()
        .map(|p| {
            let mut k = Kahan::new();
            for (q, e) in modes.iter().zip(&eta) {
                k.add(hats.at(diff(p, q)) * e);
            }
            k.value()
        })
        .collect();
    let conv: Vec<f64> = conv_set
        .iter()
        .zip(&vhat)
        .map(|(c, v)| kappa / nn * (c + v * eta0))
        .collect();
    let sigma: Vec<f64> = eta.iter().map(|e| e.sinh()).collect();
    let gamma: Vec<f64> = eta.iter().map(|e| e.cosh()).collect();
    let mut f = Vec::with_capacity(modes.len());
    let mut g = Vec::with_capacity(modes.len());
    for i in 0..modes.len() {
        let (s, c) = (sigma[i], gamma[i]);
        let kv = kappa * vhat[i];
        f.push(p2[i] * (s * s + c * c) + kv * (s + c) * (s + c));
        g.push(2.0 * p2[i] * s * c + kv * (s + c) * (s + c) + conv[i]);
    }
    let conv_tail = if kappa == 0.0 {
        0.0
    } else {
        let k3 = spec.scale();
        let tail = continuum_tail(
            |q| {
                let v = spec.fourier_hat(q / k3);
                v * kappa * v / (2.0 * q * q)
            },
            set.cutoff_radius(),
        );
        (kappa / nn * tail).abs()
    };
    Ok(QuadraticCoeffs {
        modes,
        kappa,
        p2,
        vhat,
        eta,
        sigma,
        gamma,
        f,
        g,
        conv_set,
        conv,
        conv_tail,
        a: Vec::new(),
        identity_residual: Vec::new(),
        tau: Vec::new(),
        max_g_over_f: 0.0,
        warnings: Vec::new(),
    })
}

/// A_p = −2[κV̂(γ+σ)² + 2p²γσ]S_p − S_p² and the residual of F²−G² = p⁴+2p²κV̂+A_p.
pub fn ap_defect(mut c: QuadraticCoeffs) -> QuadraticCoeffs {
    let n = c.len();
    c.a = Vec::with_capacity(n);
    c.identity_residual = Vec::with_capacity(n);
    for i in 0..n {
        let (s, g) = (c.sigma[i], c.gamma[i]);
        let kv = c.kappa * c.vhat[i];
        let sp = c.conv[i];
        let a = -2.0 * (kv * (g + s) * (g + s) + 2.0 * c.p2[i] * g * s) * sp - sp * sp;
        let p4 = c.p2[i] * c.p2[i];
        let lhs = c.f[i] * c.f[i] - c.g[i] * c.g[i];
        let res = (lhs - p4 - 2.0 * c.p2[i] * kv - a).abs() / (c.f[i] * c.f[i]);
        c.a.push(a);
        c.identity_residual.push(res);
    }
    c
}

/// τ_p = ¼ log((1−G/F)/(1+G/F)).
pub fn tau_coeffs(mut c: QuadraticCoeffs) -> Result<QuadraticCoeffs> {
    let mut tau = Vec::with_capacity(c.len());
    let mut worst = 0.0f64;
    for i in 0..c.len() {
        let r = c.g[i] / c.f[i];
        if !(r.abs() < 1.0) {
            return Err(Error::NotDiagonalizable { ratio: r.abs(), p: c.modes[i].n });
        }
        worst = worst.max(r.abs());
        // ¼ log((1−r)/(1+r)) = −½ artanh(r)
        tau.push(-0.5 * r.atanh());
    }
    c.tau = tau;
    c.max_g_over_f = worst;
    if worst > 0.5 {
        c.warnings.push(format!("max |G_p|/F_p = {worst:.6} exceeds 1/2"));
    }
    Ok(c)
}

/// fg_coeffs, ap_defect and tau_coeffs in sequence.
pub fn quadratic_coeffs(spec: &PotentialSpec, sol: &ScatteringSolution, set: &ModeSet) -> Result<QuadraticCoeffs> {
    tau_coeffs(ap_defect(fg_coeffs(spec, sol, set)?))
}

/// Tail of Σ s_p beyond the set for summands behaving like s̄ (P/|p|)^α on the last shell.
fn shell_power_tail(set: &ModeSet, vals: &[f64], alpha: f64) -> f64 {
    let m = set.max_norm_sq_int();
    let last: Vec<f64> = set
        .iter()
        .zip(vals)
        .filter(|(p, _)| p.norm_sq_int() == m)
        .map(|(_, v)| *v)
        .collect();
    if last.is_empty() {
        return 0.0;
    }
    let mean = last.iter().sum::<f64>() / last.len() as f64;
    let p = set.cutoff_radius().max(2.0 * PI * (m as f64).sqrt());
    mean * p.powi(3) / (2.0 * PI * PI * (alpha - 3.0))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConstantCN {
    pub value: f64,
    pub truncation: f64,
}

/// C_N = (N−1)κV̂(0)/2 + Σ_p[p²σ² + κV̂(σ²+σγ)] + (κ/2N)Σ_{p,q}V̂((p−q)/N^β)η_pη_q.
pub fn constant_cn(spec: &PotentialSpec, coeffs: &QuadraticCoeffs, set: &ModeSet) -> Result<ConstantCN> {
    check_aligned(coeffs, set)?;
    let kappa = spec.kappa;
    let nn = spec.n_f64();
    let mut vals = Vec::with_capacity(set.len());
    for i in 0..set.len() {
        let (s, g) = (coeffs.sigma[i], coeffs.gamma[i]);
        let kv = kappa * coeffs.vhat[i];
        vals.push(coeffs.p2[i] * s * s + kv * (s * s + s * g) + 0.5 * kappa / nn * coeffs.eta[i] * coeffs.conv_set[i]);
    }
    let sum = paired_sum(set, &vals)?;
    let value = 0.5 * (nn - 1.0) * kappa * spec.hat_zero() + sum;
    let truncation = if kappa == 0.0 {
        0.0
    } else {
        let k3 = spec.scale();
        let last_conv = coeffs.conv_set.last().copied().unwrap_or(0.0);
        continuum_tail(
            |q| {
                let kv = kappa * spec.fourier_hat(q / k3);
                let e = -kv / (2.0 * q * q);
                let (s, g) = (e.sinh(), e.cosh());
                (q * q * s * s + kv * (s * s + s * g)).abs() + (kappa / nn * e * last_conv).abs()
            },
            set.cutoff_radius(),
        )
    };
    Ok(ConstantCN { value, truncation })
}

fn check_aligned(coeffs: &QuadraticCoeffs, set: &ModeSet) -> Result<()> {
    if coeffs.modes.as_slice() != set.momenta() {
        return Err(Error::Config("coefficients were computed on a different mode set".into()));
    }
    Ok(())
}

/// ½Σ[−F + √(F²−G²)] in rationalized form, with a last-shell tail estimate.
pub fn diag_shift(coeffs: &QuadraticCoeffs, set: &ModeSet) -> Result<(f64, f64)> {
    check_aligned(coeffs, set)?;
    let mut vals = Vec::with_capacity(set.len());
    for i in 0..set.len() {
        let (f, g) = (coeffs.f[i], coeffs.g[i]);
        let d = f * f - g * g;
        if d < 0.0 {
            return Err(Error::NotDiagonalizable { ratio: (g / f).abs(), p: coeffs.modes[i].n });
        }
        vals.push(-0.5 * g * g / (f + d.sqrt()));
    }
    let value = paired_sum(set, &vals)?;
    Ok((value, shell_power_tail(set, &vals, 6.0)))
}

/// Largest m with m ≤ 1/(1−β) + min(½, β/(1−β)).
pub fn mbeta(beta: f64) -> Result<usize> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Config(format!("m_beta needs 0 < beta < 1, got {beta}")));
    }
    let bound = 1.0 / (1.0 - beta) + (0.5f64).min(beta / (1.0 - beta));
    Ok((bound + 1e-12).floor() as usize)
}

/// Largest Born order accepted by `born_series`.
pub const BORN_K_MAX: usize = 12;
/// Largest (orbit count × modes) work per kernel application.
pub const BORN_WORK_MAX: f64 = 5e10;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BornSeries {
    pub terms: Vec<f64>,
    pub tails: Vec<f64>,
    pub modes: usize,
    pub orbits: usize,
    pub cutoff: f64,
}

/// Momentum orbits of the cubic group inside the set.
struct Orbits {
    /// Orbit id for each mode.
    of_mode: Vec<usize>,
    /// One representative mode index per orbit.
    reps: Vec<usize>,
}

fn cubic_images(n: [i32; 3]) -> Vec<[i32; 3]> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(48);
    for p in PERMS {
        for s in 0..8 {
            let sg = |b: usize| if s >> b & 1 == 1 { -1 } else { 1 };
            out.push([sg(0) * n[p[0]], sg(1) * n[p[1]], sg(2) * n[p[2]]]);
        }
    }
    out
}

fn orbits(set: &ModeSet) -> Orbits {
    let invariant = set
        .iter()
        .all(|p| cubic_images(p.n).iter().all(|img| set.index_of_n(*img).is_some()));
    if !invariant {
        return Orbits { of_mode: (0..set.len()).collect(), reps: (0..set.len()).collect() };
    }
    let mut ids: HashMap<[i32; 3], usize> = HashMap::new();
    let mut reps = Vec::new();
    let of_mode = set
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let key = p.orbit_rep();
            *ids.entry(key).or_insert_with(|| {
                reps.push(i);
                reps.len() - 1
            })
        })
        .collect();
    Orbits { of_mode, reps }
}

/// Born terms k = 1..=k_max by iterated kernel application.
///
/// K(p,q) = κV̂((p−q)/N^β)/(2Nq²) acts on vectors that are invariant under the
/// cubic group, so each power is evaluated on orbit representatives only.
pub fn born_series(spec: &PotentialSpec, set: &ModeSet, k_max: usize) -> Result<BornSeries> {
    spec.validate()?;
    if k_max == 0 {
        return Err(Error::Config("k_max must be >= 1".into()));
    }
    if k_max > BORN_K_MAX {
        return Err(Error::Resource(format!("k_max = {k_max} exceeds the limit {BORN_K_MAX}")));
    }
    let orb = orbits(set);
    let work = orb.reps.len() as f64 * set.len() as f64;
    if k_max > 1 && work > BORN_WORK_MAX {
        return Err(Error::Resource(format!(
            "Born kernel needs {work:.3e} operations per application (limit {BORN_WORK_MAX:.1e}); lower the cutoff"
        )));
    }
    let kappa = spec.kappa;
    let nn = spec.n_f64();
    let hats = HatTable::new(spec, 4 * set.max_norm_sq_int());
    let modes = set.momenta();
    let v: Vec<f64> = modes.iter().map(|p| kappa * hats.at(p.n)).collect();
    let w: Vec<f64> = modes.iter().map(|p| 1.0 / (2.0 * nn * p.norm_sq())).collect();
    let mut g: Vec<f64> = orb.reps.iter().map(|&i| v[i]).collect();
    let mut terms = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        if k > 1 {
            let wg: Vec<f64> = (0..modes.len()).map(|j| w[j] * g[orb.of_mode[j]]).collect();
            g = orb
                .reps
                .par_iter()
                .map(|&i| {
                    let p = &modes[i];
                    let mut acc = Kahan::new();
                    for (q, x) in modes.iter().zip(&wg) {
                        acc.add(kappa * hats.at(diff(p, q)) * x);
                    }
                    acc.value()
                })
                .collect();
        }
        let vals: Vec<f64> = (0..modes.len()).map(|i| v[i] * w[i] * g[orb.of_mode[i]]).collect();
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        terms.push(sign * paired_sum(set, &vals)?);
    }
    let k3 = spec.scale();
    let tail1 = if kappa == 0.0 {
        0.0
    } else {
        continuum_tail(
            |q| {
                let x = kappa * spec.fourier_hat(q / k3);
                x * x / (2.0 * nn * q * q)
            },
            set.cutoff_radius(),
        )
    };
    let frac = if terms[0] != 0.0 { tail1 / terms[0].abs() } else { 0.0 };
    let tails = terms
        .iter()
        .enumerate()
        .map(|(i, t)| if i == 0 { tail1 } else { (i + 1) as f64 * frac * t.abs() })
        .collect();
    Ok(BornSeries { terms, tails, modes: set.len(), orbits: orb.reps.len(), cutoff: set.cutoff_radius() })
}

/// First Born term as a direct single sum, independent of the kernel path.
pub fn born_first_direct(spec: &PotentialSpec, set: &ModeSet) -> Result<f64> {
    let nn = spec.n_f64();
    let k = spec.kappa;
    let s = lattice_sum(
        |p| {
            let v = spec.scaled_hat(p);
            -(k * k * v * v) / (2.0 * nn * p.norm_sq())
        },
        set,
        TailModel::NONE,
    )?;
    Ok(s.value)
}

/// ε_p = √(|p|⁴ + 2p²κV̂₀).
pub fn dispersion(p: &Momentum, kv0: f64) -> f64 {
    let p2 = p.norm_sq();
    (p2 * p2 + 2.0 * p2 * kv0).sqrt()
}

/// Σ n_p ε_p.
pub fn excitation_levels(occupations: &[(Momentum, i64)], kv0: f64) -> Result<f64> {
    let mut acc = Kahan::new();
    for (p, n) in occupations {
        if *n < 0 {
            return Err(Error::Config(format!("negative occupation {n} at {:?}", p.n)));
        }
        if *n > 0 {
            if p.is_zero() {
                return Err(Error::ZeroMode);
            }
            acc.add(*n as f64 * dispersion(p, kv0));
        }
    }
    Ok(acc.value())
}

/// p² + c − √(p⁴+2p²c) − c²/(2p²) in cancellation-free form.
pub fn asymptotic_summand(p2: f64, c: f64) -> f64 {
    let eps = (p2 * p2 + 2.0 * p2 * c).sqrt();
    -c * c * c * (1.0 + 2.0 * p2 / (p2 + eps)) / (2.0 * p2 * (p2 + c + eps))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyReport {
    pub c_n: f64,
    pub c_n_truncation: f64,
    pub diag_shift: f64,
    pub diag_shift_tail: f64,
    pub e_direct: f64,
    pub m_beta: usize,
    pub born_terms: Vec<f64>,
    pub born_tails: Vec<f64>,
    pub a_n: f64,
    pub asymptotic_sum: f64,
    pub asymptotic_sum_tail: f64,
    pub e_asymptotic: f64,
    pub difference: f64,
    pub dispersion: Vec<(Momentum, f64)>,
    pub warnings: Vec<String>,
}

/// Direct route C_N + diag shift and the asymptotic route 4π(N−1)a_N − ½Σ[...].
pub fn ground_energy(spec: &PotentialSpec, coeffs: &QuadraticCoeffs, set: &ModeSet) -> Result<EnergyReport> {
    let m_beta = mbeta(spec.beta)?;
    ground_energy_with(spec, coeffs, set, m_beta)
}

/// As `ground_energy` with an explicit Born order.
pub fn ground_energy_with(
    spec: &PotentialSpec,
    coeffs: &QuadraticCoeffs,
    set: &ModeSet,
    k_max: usize,
) -> Result<EnergyReport> {
    let m_beta = mbeta(spec.beta)?;
    let mut warnings = coeffs.warnings.clone();
    if k_max < m_beta {
        warnings.push(format!("Born series truncated at k = {k_max} below m_beta = {m_beta}"));
    }
    let cn = constant_cn(spec, coeffs, set)?;
    let (diag, diag_tail) = diag_shift(coeffs, set)?;
    let e_direct = cn.value + diag;
    let born = born_series(spec, set, k_max)?;
    let kv0 = spec.kappa * spec.hat_zero();
    let born_sum: f64 = born.terms.iter().sum();
    let a_n = (kv0 + born_sum) / (8.0 * PI);
    let vals: Vec<f64> = set.iter().map(|p| asymptotic_summand(p.norm_sq(), kv0)).collect();
    let asymptotic_sum = paired_sum(set, &vals)?;
    let asymptotic_sum_tail = if kv0 == 0.0 {
        0.0
    } else {
        0.5 * continuum_tail(|q| asymptotic_summand(q * q, kv0).abs(), set.cutoff_radius())
    };
    let nn = spec.n_f64();
    let e_asymptotic = 4.0 * PI * (nn - 1.0) * a_n - 0.5 * asymptotic_sum;
    let dispersion = set.iter().map(|p| (*p, dispersion(p, kv0))).collect();
    Ok(EnergyReport {
        c_n: cn.value,
        c_n_truncation: cn.truncation,
        diag_shift: diag,
        diag_shift_tail: diag_tail,
        e_direct,
        m_beta,
        born_terms: born.terms,
        born_tails: born.tails,
        a_n,
        asymptotic_sum,
        asymptotic_sum_tail,
        e_asymptotic,
        difference: e_direct - e_asymptotic,
        dispersion,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mbeta_table() {
        assert_eq!(mbeta(0.25).unwrap(), 1);
        assert_eq!(mbeta(0.5).unwrap(), 2);
        assert_eq!(mbeta(0.7).unwrap(), 3);
        assert!(mbeta(0.0).is_err());
        assert!(mbeta(1.0).is_err());
    }

    #[test]
    fn dispersion_values() {
        let p = Momentum::new(1, 0, 0);
        assert_eq!(dispersion(&p, 0.0), p.norm_sq());
        let p2 = 4.0 * PI * PI;
        assert!((dispersion(&p, 1.0) - (p2 * p2 + 2.0 * p2).sqrt()).abs() < 1e-12);
        assert!((dispersion(&p, 1.0) - 40.4660).abs() < 1e-4);
    }

    #[test]
    fn levels() {
        let e1 = Momentum::new(1, 0, 0);
        let e2 = Momentum::new(0, 1, 0);
        assert_eq!(excitation_levels(&[], 1.0).unwrap(), 0.0);
        assert_eq!(excitation_levels(&[(e1, 1)], 0.7).unwrap(), dispersion(&e1, 0.7));
        let v = excitation_levels(&[(e1, 2), (e2, 1)], 0.0).unwrap();
        assert!((v - 3.0 * 4.0 * PI * PI).abs() < 1e-12);
        assert!(excitation_levels(&[(e1, -1)], 0.0).is_err());
    }

    #[test]
    fn tau_closed_form() {
        let r: f64 = 0.6;
        let tau = -0.5 * r.atanh();
        assert!((tau - 0.25 * (0.25f64).ln()).abs() < 1e-15);
        assert!(((2.0 * tau).tanh() + r).abs() < 1e-15);
    }

    #[test]
    fn asymptotic_summand_matches_naive() {
        for &(p2, c) in &[(39.48f64, 0.2f64), (400.0, 1.0), (1.0, 0.3)] {
            let naive = p2 + c - (p2 * p2 + 2.0 * p2 * c).sqrt() - c * c / (2.0 * p2);
            let s = asymptotic_summand(p2, c);
            assert!((naive - s).abs() < 1e-12 * (1.0 + c * c), "{naive} {s}");
        }
    }

    #[test]
    fn cubic_images_cover_orbit() {
        let imgs: std::collections::HashSet<_> = cubic_images([3, 1, 0]).into_iter().collect();
        assert_eq!(imgs.len(), 24);
    }
}
