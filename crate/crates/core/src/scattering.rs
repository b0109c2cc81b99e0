//! Neumann ground state of the scaled potential on the ball of radius ℓ and
//! the correlation coefficients η_p = −N ŵ(p).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Kahan, ModeSet, Momentum};
use crate::potential::{chi_hat, PotentialSpec};
use crate::quad::GaussLegendre;

/// Radial resolution: RK4 steps spent inside the support and outside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mesh {
    pub steps: usize,
}

impl Default for Mesh {
    fn default() -> Self {
        Mesh { steps: 1000 }
    }
}

impl Mesh {
    pub fn doubled(&self) -> Mesh {
        Mesh { steps: 2 * self.steps }
    }
}

/// Linear piece of the scaled potential U on [lo, hi].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub u_lo: f64,
    pub u_hi: f64,
}

impl Piece {
    fn u(&self, r: f64) -> f64 {
        if self.hi == self.lo {
            return self.u_lo;
        }
        self.u_lo + (r - self.lo) / (self.hi - self.lo) * (self.u_hi - self.u_lo)
    }
}

/// Correlation coefficients on a mode set; η depends on |n|² only.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EtaTable {
    pub modes: Vec<Momentum>,
    pub values: Vec<f64>,
    pub by_norm: BTreeMap<i64, f64>,
}

impl EtaTable {
    pub fn get(&self, p: &Momentum) -> Result<f64> {
        self.by_norm.get(&p.norm_sq_int()).copied().ok_or(Error::MissingEta(p.n))
    }

    /// η aligned with the order of `set`.
    pub fn on_set(&self, set: &ModeSet) -> Result<Vec<f64>> {
        set.iter().map(|p| self.get(p)).collect()
    }
}

/// Solution of the Neumann problem. The radial profile is stored through
/// v = u − r with u = r·f̃, f̃(0) = 1; f = f̃/f̃(ℓ) and w = 1 − f.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScatteringSolution {
    pub ell: f64,
    pub lambda: f64,
    pub support: f64,
    pub mesh: Mesh,
    pub grid: Vec<f64>,
    pub v: Vec<f64>,
    pub dv: Vec<f64>,
    /// Piece index of the step [grid[i], grid[i+1]].
    pub step_piece: Vec<usize>,
    pub pieces: Vec<Piece>,
    pub f: Vec<f64>,
    pub w: Vec<f64>,
    pub eta: Option<EtaTable>,
    pub eta0: Option<f64>,
    pub n: u64,
}

impl ScatteringSolution {
    /// v(ℓ)/ℓ.
    fn c_end(&self) -> f64 {
        self.v.last().unwrap() / self.ell
    }

    /// f̃(ℓ) = 1 + v(ℓ)/ℓ.
    fn f_tilde_end(&self) -> f64 {
        1.0 + self.c_end()
    }

    fn locate(&self, r: f64) -> usize {
        let k = self.grid.partition_point(|&x| x <= r);
        k.saturating_sub(1).min(self.grid.len() - 2)
    }

    /// Quintic Hermite interpolant of v on step i.
    fn v_interp(&self, i: usize, r: f64) -> f64 {
        let (r0, r1) = (self.grid[i], self.grid[i + 1]);
        let h = r1 - r0;
        let t = (r - r0) / h;
        let piece = &self.pieces[self.step_piece[i]];
        let d2 = |r: f64, v: f64| (piece.u(r) - self.lambda) * (r + v);
        let (v0, v1) = (self.v[i], self.v[i + 1]);
        let (d0, d1) = (self.dv[i], self.dv[i + 1]);
        let (s0, s1) = (d2(r0, v0), d2(r1, v1));
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
        let h3 = 0.5 * t3 - t4 + 0.5 * t5;
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        h0 * v0 + h1 * h * d0 + h2 * h * h * s0 + h3 * h * h * s1 + h4 * h * d1 + h5 * v1
    }

    /// r·w(r) = (r·v(ℓ)/ℓ − v(r))/f̃(ℓ) on step i.
    fn rw_on_step(&self, i: usize, r: f64) -> f64 {
        (r * self.c_end() - self.v_interp(i, r)) / self.f_tilde_end()
    }

    /// w(r) for 0 ≤ r ≤ ℓ, zero beyond ℓ.
    pub fn w_at(&self, r: f64) -> f64 {
        if r >= self.ell {
            return 0.0;
        }
        if r <= 0.0 {
            return self.c_end() / self.f_tilde_end();
        }
        let i = self.locate(r);
        self.rw_on_step(i, r) / r
    }

    /// f′(ℓ) from the stored derivative.
    pub fn df_end(&self) -> f64 {
        let l = self.ell;
        let u = l + self.v.last().unwrap();
        let du = 1.0 + self.dv.last().unwrap();
        (du * l - u) / (l * l) / self.f_tilde_end()
    }

    /// ∫₀^ℓ g(r)·(r·w(r)) dr with phase-controlled composite Gauss–Legendre.
    fn integrate_rw<G: Fn(f64) -> f64>(&self, g: G, k: f64) -> f64 {
        let gl = GaussLegendre::new(8);
        let mut acc = Kahan::new();
        for i in 0..self.grid.len() - 1 {
            let (a, b) = (self.grid[i], self.grid[i + 1]);
            let panels = ((k * (b - a)) / (0.5 * PI)).ceil().max(1.0) as usize;
            let h = (b - a) / panels as f64;
            for j in 0..panels {
                let lo = a + j as f64 * h;
                acc.add(gl.integrate(|r| g(r) * self.rw_on_step(i, r), lo, lo + h));
            }
        }
        acc.value()
    }

    /// η_k = −N (4π/k) ∫₀^ℓ r w(r) sin(kr) dr for a momentum magnitude k > 0.
    pub fn eta_of_norm(&self, k: f64) -> f64 {
        let nn = self.n as f64;
        if self.lambda == 0.0 && self.v.iter().all(|&x| x == 0.0) {
            return 0.0;
        }
        -nn * 4.0 * PI / k * self.integrate_rw(|r| (k * r).sin(), k)
    }

    /// η̃₀ = −N·4π ∫₀^ℓ r² w(r) dr.
    pub fn eta_zero(&self) -> f64 {
        if self.lambda == 0.0 && self.v.iter().all(|&x| x == 0.0) {
            return 0.0;
        }
        -(self.n as f64) * 4.0 * PI * self.integrate_rw(|r| r, 0.0)
    }

    pub fn eta_table(&self) -> Result<&EtaTable> {
        self.eta.as_ref().ok_or_else(|| Error::Config("scattering solution has no eta coefficients".into()))
    }

    /// η̃_q for q in the set or q = 0.
    pub fn eta_tilde(&self, q: &Momentum) -> Result<f64> {
        if q.is_zero() {
            return self.eta0.ok_or_else(|| Error::Config("scattering solution has no eta0".into()));
        }
        self.eta_table()?.get(q)
    }
}

/// v'' = (U − λ)(r + v) integrated by RK4 over all pieces.
struct Shooter {
    pieces: Vec<Piece>,
    steps: Vec<usize>,
}

impl Shooter {
    fn new(spec: &PotentialSpec, ell: f64, mesh: Mesh) -> Result<(Self, f64)> {
        let inner = spec.scaled_pieces();
        let support = inner.last().map(|p| p.1).unwrap_or(0.0);
        if support >= ell {
            return Err(Error::SupportExceedsEll { support, ell });
        }
        let mut pieces = Vec::new();
        let mut steps = Vec::new();
        for &(lo, hi, u_lo, u_hi) in &inner {
            pieces.push(Piece { lo, hi, u_lo, u_hi });
            let frac = (hi - lo) / support;
            steps.push(((mesh.steps as f64) * frac).ceil().max(4.0) as usize);
        }
        pieces.push(Piece { lo: support, hi: ell, u_lo: 0.0, u_hi: 0.0 });
        steps.push(mesh.steps.max(4));
        Ok((Shooter { pieces, steps }, support))
    }

    fn is_free(&self) -> bool {
        self.pieces.iter().all(|p| p.u_lo == 0.0 && p.u_hi == 0.0)
    }

    /// Integrates from r = 0; records nodes when `out` is given. Returns (v, v') at ℓ.
    fn run(&self, lambda: f64, mut out: Option<&mut Trajectory>) -> (f64, f64) {
        let (mut v, mut dv) = (0.0f64, 0.0f64);
        if let Some(t) = out.as_deref_mut() {
            t.grid.push(0.0);
            t.v.push(0.0);
            t.dv.push(0.0);
        }
        for (k, piece) in self.pieces.iter().enumerate() {
            let n = self.steps[k];
            let h = (piece.hi - piece.lo) / n as f64;
            let acc = |r: f64, v: f64| (piece.u(r) - lambda) * (r + v);
            for j in 0..n {
                let r = piece.lo + j as f64 * h;
                let k1v = dv;
                let k1d = acc(r, v);
                let k2v = dv + 0.5 * h * k1d;
                let k2d = acc(r + 0.5 * h, v + 0.5 * h * k1v);
                let k3v = dv + 0.5 * h * k2d;
                let k3d = acc(r + 0.5 * h, v + 0.5 * h * k2v);
                let k4v = dv + h * k3d;
                let k4d = acc(r + h, v + h * k3v);
                v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                dv += h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
                if let Some(t) = out.as_deref_mut() {
                    let rn = if j + 1 == n { piece.hi } else { piece.lo + (j + 1) as f64 * h };
                    t.grid.push(rn);
                    t.v.push(v);
                    t.dv.push(dv);
                    t.step_piece.push(k);
                }
            }
        }
        (v, dv)
    }

    /// S(λ) = ℓ v′(ℓ) − v(ℓ), proportional to f′(ℓ).
    fn shoot(&self, lambda: f64, ell: f64) -> f64 {
        let (v, dv) = self.run(lambda, None);
        ell * dv - v
    }
}

#[derive(Default)]
struct Trajectory {
    grid: Vec<f64>,
    v: Vec<f64>,
    dv: Vec<f64>,
    step_piece: Vec<usize>,
}

/// Smallest Neumann eigenvalue and its radial profile.
pub fn solve_neumann(spec: &PotentialSpec, ell: f64, mesh: Mesh) -> Result<ScatteringSolution> {
    spec.validate()?;
    if !(ell > 0.0 && ell < 0.5) {
        return Err(Error::Config(format!("ell must lie in (0, 1/2), got {ell}")));
    }
    let (shooter, support) = Shooter::new(spec, ell, mesh)?;
    let lambda = if spec.kappa == 0.0 || shooter.is_free() {
        0.0
    } else {
        find_root(&shooter, spec, ell)?
    };
    let mut traj = Trajectory::default();
    shooter.run(lambda, Some(&mut traj));
    let mut sol = ScatteringSolution {
        ell,
        lambda,
        support,
        mesh,
        grid: traj.grid,
        v: traj.v,
        dv: traj.dv,
        step_piece: traj.step_piece,
        pieces: shooter.pieces,
        f: Vec::new(),
        w: Vec::new(),
        eta: None,
        eta0: None,
        n: spec.n,
    };
    let c = sol.c_end();
    let ft = sol.f_tilde_end();
    sol.w = sol
        .grid
        .iter()
        .zip(&sol.v)
        .map(|(&r, &v)| if r == 0.0 { c / ft } else { (c - v / r) / ft })
        .collect();
    sol.f = sol.w.iter().map(|w| 1.0 - w).collect();
    Ok(sol)
}

fn find_root(sh: &Shooter, spec: &PotentialSpec, ell: f64) -> Result<f64> {
    let s0 = sh.shoot(0.0, ell);
    if !(s0 > 0.0) {
        return Err(Error::NoBracket(0));
    }
    let estimate = 3.0 * spec.kappa * spec.hat_zero() / (8.0 * PI * spec.n_f64() * ell.powi(3));
    let mut lo = 0.0;
    let mut s_lo = s0;
    let mut hi = estimate.max(1e-300);
    let mut s_hi = sh.shoot(hi, ell);
    let mut expansions = 0;
    while s_hi > 0.0 {
        expansions += 1;
        if expansions > 200 || !hi.is_finite() {
            return Err(Error::NoBracket(expansions));
        }
        lo = hi;
        s_lo = s_hi;
        hi *= 2.0;
        s_hi = sh.shoot(hi, ell);
    }
    Ok(brent(|x| sh.shoot(x, ell), lo, hi, s_lo, s_hi, 1e-13))
}

/// Brent's method on a sign-changing bracket.
fn brent<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, rel: f64) -> f64 {
    if fb == 0.0 {
        return b;
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * rel * b.abs();
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol * m.signum() };
        fb = f(b);
    }
    b
}

/// Fills η on `set` (cached by |n|²) and η̃₀.
pub fn eta_coefficients(mut sol: ScatteringSolution, set: &ModeSet) -> Result<ScatteringSolution> {
    if sol.grid.len() < 2 {
        return Err(Error::Config("scattering solution is not solved".into()));
    }
    let norms = set.distinct_norms();
    let vals: Vec<f64> = norms
        .par_iter()
        .map(|&m| sol.eta_of_norm(2.0 * PI * (m as f64).sqrt()))
        .collect();
    let by_norm: BTreeMap<i64, f64> = norms.into_iter().zip(vals).collect();
    let values = set.iter().map(|p| by_norm[&p.norm_sq_int()]).collect();
    sol.eta0 = Some(sol.eta_zero());
    sol.eta = Some(EtaTable { modes: set.momenta().to_vec(), values, by_norm });
    Ok(sol)
}

/// Momentum-space form of the scattering equation evaluated on the truncated set.
pub fn scattering_residual(
    sol: &ScatteringSolution,
    spec: &PotentialSpec,
    p: &Momentum,
    set: &ModeSet,
) -> Result<f64> {
    if !set.contains(p) {
        return Err(Error::Config(format!("momentum {:?} is not in the mode set", p.n)));
    }
    let table = sol.eta_table()?;
    let eta0 = sol.eta_tilde(&Momentum::ZERO)?;
    let nn = spec.n_f64();
    let kappa = spec.kappa;
    let lam = sol.lambda;
    let eta_p = table.get(p)?;
    let mut conv_v = Kahan::new();
    let mut conv_chi = Kahan::new();
    conv_v.add(spec.scaled_hat(p) * eta0);
    conv_chi.add(chi_hat(sol.ell, p.norm()) * eta0);
    for q in set.iter() {
        let d = p.sub(q);
        let eq = table.get(q)?;
        conv_v.add(spec.scaled_hat(&d) * eq);
        conv_chi.add(chi_hat(sol.ell, d.norm()) * eq);
    }
    Ok(p.norm_sq() * eta_p + 0.5 * kappa * spec.scaled_hat(p) + 0.5 * kappa / nn * conv_v.value()
        - nn * lam * chi_hat(sol.ell, p.norm())
        - lam * conv_chi.value())
}

/// Scale of the residual: |p²η_p| + κV̂(0).
pub fn residual_scale(sol: &ScatteringSolution, spec: &PotentialSpec, p: &Momentum) -> Result<f64> {
    Ok((p.norm_sq() * sol.eta_table()?.get(p)?).abs() + spec.kappa * spec.hat_zero())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScatteringBounds {
    pub w_min: f64,
    pub w_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub f_end: f64,
    pub df_end: f64,
    /// sup_r w(r)·N(r + N^{-β})/κ on the grid.
    pub c_w: f64,
    /// sup_p |η_p| p²/κ over the stored set.
    pub c_eta: Option<f64>,
    /// λ·N·8πℓ³/(3κV̂(0)).
    pub lambda_ratio: f64,
}

pub fn bound_diagnostics(sol: &ScatteringSolution, spec: &PotentialSpec) -> ScatteringBounds {
    let nn = spec.n_f64();
    let minmax = |xs: &[f64]| xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (w_min, w_max) = minmax(&sol.w);
    let (f_min, f_max) = minmax(&sol.f);
    let kap = spec.kappa;
    let c_w = if kap > 0.0 {
        sol.grid
            .iter()
            .zip(&sol.w)
            .map(|(&r, &w)| w * nn * (r + 1.0 / spec.scale()) / kap)
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let c_eta = sol.eta.as_ref().map(|t| {
        if kap == 0.0 {
            return 0.0;
        }
        t.by_norm
            .iter()
            .map(|(&m, &e)| (e * 4.0 * PI * PI * m as f64 / kap).abs())
            .fold(0.0, f64::max)
    });
    let denom = 3.0 * kap * spec.hat_zero();
    let lambda_ratio = if denom > 0.0 { sol.lambda * nn * 8.0 * PI * sol.ell.powi(3) / denom } else { 1.0 };
    ScatteringBounds {
        w_min,
        w_max,
        f_min,
        f_max,
        f_end: *sol.f.last().unwrap(),
        df_end: sol.df_end(),
        c_w,
        c_eta,
        lambda_ratio,
    }
}

/// Solves at `mesh` and at twice the resolution; relative λ disagreement.
pub fn mesh_refinement(spec: &PotentialSpec, ell: f64, mesh: Mesh) -> Result<(f64, f64, f64)> {
    let a = solve_neumann(spec, ell, mesh)?.lambda;
    let b = solve_neumann(spec, ell, mesh.doubled())?.lambda;
    let rel = if b == 0.0 { (a - b).abs() } else { ((a - b) / b).abs() };
    Ok((a, b, rel))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PotentialSpec {
        PotentialSpec::ball(1.0, 1.0, 0.05, 0.5, 10_000)
    }

    #[test]
    fn free_problem_is_trivial() {
        let s = PotentialSpec::ball(1.0, 1.0, 0.0, 0.5, 10_000);
        let sol = solve_neumann(&s, 0.4, Mesh::default()).unwrap();
        assert_eq!(sol.lambda, 0.0);
        assert!(sol.w.iter().all(|&w| w == 0.0));
        assert!(sol.f.iter().all(|&f| f == 1.0));
        let sol = eta_coefficients(sol, &ModeSet::from_max_norm_sq(3)).unwrap();
        assert!(sol.eta.unwrap().values.iter().all(|&e| e == 0.0));
        assert_eq!(sol.eta0, Some(0.0));
    }

    #[test]
    fn support_violation() {
        let s = PotentialSpec::ball(1.0, 1.0, 0.05, 0.1, 10);
        match solve_neumann(&s, 0.4, Mesh::default()) {
            Err(Error::SupportExceedsEll { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn neumann_boundary_and_bounds() {
        let sol = solve_neumann(&spec(), 0.4, Mesh::default()).unwrap();
        let b = bound_diagnostics(&sol, &spec());
        assert!((b.f_end - 1.0).abs() < 1e-15);
        assert!(b.df_end.abs() < 1e-10, "f'(l) = {}", b.df_end);
        assert!(b.w_min >= 0.0 && b.w_max <= 1.0);
        assert!((b.lambda_ratio - 1.0).abs() < 0.05);
    }

    #[test]
    fn hermite_interpolant_matches_nodes() {
        let sol = solve_neumann(&spec(), 0.4, Mesh::default()).unwrap();
        for i in [0usize, 10, 500, 1500] {
            let r = sol.grid[i + 1];
            assert!((sol.v_interp(i, r) - sol.v[i + 1]).abs() < 1e-18 + 1e-14 * sol.v[i + 1].abs());
        }
    }

    #[test]
    fn doubled_mesh_agrees() {
        let (_, _, rel) = mesh_refinement(&spec(), 0.4, Mesh::default()).unwrap();
        assert!(rel < 1e-8, "rel {rel}");
    }
}
