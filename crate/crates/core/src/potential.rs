//! Radial interaction potentials and their Fourier transforms.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Momentum;
use crate::quad;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// V = V₀ on |x| < R, zero outside.
    Ball { v0: f64, radius: f64 },
    /// Piecewise-linear V on a radial grid, zero beyond the last node.
    Tabulated { r: Vec<f64>, v: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub shape: Shape,
    pub kappa: f64,
    pub beta: f64,
    pub n: u64,
}

impl PotentialSpec {
    pub fn ball(v0: f64, radius: f64, kappa: f64, beta: f64, n: u64) -> Self {
        PotentialSpec { shape: Shape::Ball { v0, radius }, kappa, beta, n }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::Config(format!("kappa must be finite and >= 0, got {}", self.kappa)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("N must be >= 2, got {}", self.n)));
        }
        match &self.shape {
            Shape::Ball { v0, radius } => {
                if !(v0.is_finite() && *v0 >= 0.0) {
                    return Err(Error::Config(format!("ball V0 must be >= 0, got {v0}")));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Config(format!("ball radius must be > 0, got {radius}")));
                }
            }
            Shape::Tabulated { r, v } => validate_grid(r, v)?,
        }
        Ok(())
    }

    pub fn n_f64(&self) -> f64 {
        self.n as f64
    }

    /// N^β.
    pub fn scale(&self) -> f64 {
        self.n_f64().powf(self.beta)
    }

    /// Radius beyond which V vanishes.
    pub fn support_radius(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => *radius,
            Shape::Tabulated { r, v } => {
                // V vanishes past the last node whose value or left neighbour is nonzero.
                let mut supp = 0.0;
                for i in 0..r.len() {
                    if v[i] != 0.0 {
                        supp = if i + 1 < r.len() { r[i + 1] } else { r[i] };
                    }
                }
                supp
            }
        }
    }

    /// V(r) for the unscaled potential.
    pub fn value(&self, r: f64) -> f64 {
        match &self.shape {
            Shape::Ball { v0, radius } => {
                if r < *radius {
                    *v0
                } else {
                    0.0
                }
            }
            Shape::Tabulated { r: grid, v } => interp_linear(grid, v, r),
        }
    }

    /// V̂(q) = ∫ V(x) e^{-iq·x} dx.
    pub fn fourier_hat(&self, q: f64) -> f64 {
        let q = q.abs();
        match &self.shape {
            Shape::Ball { v0, radius } => v0 * ball_hat(*radius, q),
            Shape::Tabulated { r, v } => tabulated_hat(r, v, q),
        }
    }

    /// V̂(0) = ∫ V.
    pub fn hat_zero(&self) -> f64 {
        self.fourier_hat(0.0)
    }

    /// V̂(|p|/N^β).
    pub fn scaled_hat(&self, p: &Momentum) -> f64 {
        self.scaled_hat_norm(p.norm())
    }

    /// V̂(k/N^β) for a momentum magnitude k.
    pub fn scaled_hat_norm(&self, k: f64) -> f64 {
        if self.beta == 0.0 {
            return self.fourier_hat(k);
        }
        self.fourier_hat(k / self.scale())
    }

    /// Table of V̂(2π√m / N^β) for integer m = 0..=m_max.
    pub fn scaled_hat_table(&self, m_max: i64) -> Vec<f64> {
        (0..=m_max.max(0))
            .map(|m| self.scaled_hat_norm(2.0 * PI * (m as f64).sqrt()))
            .collect()
    }

    /// Piecewise-linear pieces (r_lo, r_hi, U_lo, U_hi) of U(r) = (κ/2)N^{3β−1}V(N^β r) on [0, supp].
    pub fn scaled_pieces(&self) -> Vec<(f64, f64, f64, f64)> {
        let s = self.scale();
        let amp = 0.5 * self.kappa * self.n_f64().powf(3.0 * self.beta - 1.0);
        match &self.shape {
            Shape::Ball { v0, radius } => vec![(0.0, radius / s, amp * v0, amp * v0)],
            Shape::Tabulated { r, v } => {
                let supp = self.support_radius();
                let mut out = Vec::new();
                for i in 0..r.len().saturating_sub(1) {
                    if r[i] >= supp {
                        break;
                    }
                    out.push((r[i] / s, r[i + 1] / s, amp * v[i], amp * v[i + 1]));
                }
                if out.is_empty() && supp > 0.0 {
                    // single nonzero node at the origin followed by nothing
                    out.push((0.0, supp / s, amp * v[0], amp * v[0]));
                }
                out
            }
        }
    }
}

/// Fourier transform of the indicator of a ball of radius R.
pub fn ball_hat(radius: f64, q: f64) -> f64 {
    let x = radius * q;
    if x < 1e-3 {
        let x2 = x * x;
        // (sin x − x cos x)/x³ = 1/3 − x²/30 + x⁴/840 − x⁶/45360
        let s = 1.0 / 3.0 - x2 / 30.0 + x2 * x2 / 840.0 - x2 * x2 * x2 / 45360.0;
        return 4.0 * PI * radius.powi(3) * s;
    }
    4.0 * PI / (q * q) * (x.sin() / q - radius * x.cos())
}

/// χ̂_ℓ(q) for the indicator of the ball of radius ℓ.
pub fn chi_hat(ell: f64, q: f64) -> f64 {
    ball_hat(ell, q.abs())
}

fn validate_grid(r: &[f64], v: &[f64]) -> Result<()> {
    if r.len() != v.len() {
        return Err(Error::Config("tabulated potential: r and V lengths differ".into()));
    }
    if r.is_empty() {
        return Err(Error::Config("tabulated potential: empty grid".into()));
    }
    if r[0] != 0.0 {
        return Err(Error::Config(format!("tabulated potential: grid must start at r = 0, got {}", r[0])));
    }
    for w in r.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Config(format!(
                "tabulated potential: grid not strictly increasing at r = {} -> {}",
                w[0], w[1]
            )));
        }
    }
    if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::Config(format!("tabulated potential: value {bad} is negative or non-finite")));
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("tabulated potential: non-finite grid point".into()));
    }
    Ok(())
}

fn interp_linear(r: &[f64], v: &[f64], x: f64) -> f64 {
    if x < 0.0 || x > *r.last().unwrap() {
        return 0.0;
    }
    let i = match r.partition_point(|&ri| ri <= x) {
        0 => 0,
        k => k - 1,
    };
    if i + 1 >= r.len() {
        return v[r.len() - 1];
    }
    let t = (x - r[i]) / (r[i + 1] - r[i]);
    v[i] + t * (v[i + 1] - v[i])
}

fn tabulated_hat(r: &[f64], v: &[f64], q: f64) -> f64 {
    let mut total = 0.0;
    let mut scale = 0.0f64;
    let mut pieces = Vec::with_capacity(r.len());
    for i in 0..r.len().saturating_sub(1) {
        if v[i] == 0.0 && v[i + 1] == 0.0 {
            continue;
        }
        pieces.push(i);
        scale = scale.max(v[i].max(v[i + 1]) * r[i + 1].powi(3));
    }
    if pieces.is_empty() {
        return 0.0;
    }
    for i in pieces {
        let (a, b) = (r[i], r[i + 1]);
        let (va, vb) = (v[i], v[i + 1]);
        let lin = |x: f64| va + (x - a) / (b - a) * (vb - va);
        let piece = if q == 0.0 {
            quad::adaptive(&|x: f64| x * x * lin(x), a, b, 1e-12, 1e-16 * scale, 30)
        } else {
            quad::adaptive(&|x: f64| x * lin(x) * (q * x).sin() / q, a, b, 1e-12, 1e-16 * scale, 30)
        };
        total += piece;
    }
    4.0 * PI * total
}

/// Reads a two-column (r, V) CSV; a header row is allowed.
pub fn load_tabulated_csv(path: &Path) -> Result<Shape> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("cannot read potential file {}: {e}", path.display())))?;
    let mut r = Vec::new();
    let mut v = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        if rec.len() < 2 {
            return Err(Error::Config(format!("{}: row {} needs two columns", path.display(), line + 1)));
        }
        let (a, b) = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
        match (a, b) {
            (Ok(a), Ok(b)) => {
                r.push(a);
                v.push(b);
            }
            _ if line == 0 => continue,
            _ => {
                return Err(Error::Config(format!("{}: row {} is not numeric", path.display(), line + 1)));
            }
        }
    }
    validate_grid(&r, &v)?;
    Ok(Shape::Tabulated { r, v })
}
