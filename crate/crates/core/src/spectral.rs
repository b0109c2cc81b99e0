//! Born series over a full lattice ball by transform-based convolution.
//!
//! Every vector in the kernel iteration is invariant under coordinate
//! reflections, so it is stored on one octant and the cyclic convolution on a
//! period-L box reduces to three-dimensional DCT-I transforms, each computed
//! with a complex FFT of the even extension.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::bogoliubov::{BornSeries, BORN_K_MAX};
use crate::error::{Error, Result};
use crate::lattice::{continuum_tail, shell_counts, Kahan};
use crate::potential::PotentialSpec;

/// Largest octant edge accepted (memory is about 3·8·(edge+1)³ bytes).
pub const MAX_EDGE: usize = 400;

struct Octant {
    n: usize,
    data: Vec<f64>,
}

impl Octant {
    fn zeros(n: usize) -> Self {
        Octant { n, data: vec![0.0; (n + 1).pow(3)] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.n + 1) + j) * (self.n + 1) + k
    }
}

/// In-place DCT-I, X_k = x_0 + (−1)^k x_n + 2Σ_{j=1}^{n−1} x_j cos(πjk/n), along all three axes.
fn dct1_3d(g: &mut Octant, fft: &Arc<dyn Fft<f64>>) {
    let n = g.n;
    let m = n + 1;
    let line = |vals: &mut [f64], buf: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>| {
        buf.clear();
        buf.extend(vals.iter().map(|&x| Complex64::new(x, 0.0)));
        for j in (1..n).rev() {
            buf.push(Complex64::new(vals[j], 0.0));
        }
        fft.process_with_scratch(buf, scratch);
        for (k, v) in vals.iter_mut().enumerate() {
            *v = buf[k].re;
        }
    };
    let scratch_len = fft.get_inplace_scratch_len();
    // axis 2: contiguous lines
    g.data.par_chunks_mut(m).for_each_init(
        || (Vec::with_capacity(2 * n), vec![Complex64::default(); scratch_len]),
        |(buf, scratch), chunk| line(chunk, buf, scratch),
    );
    // axes 1 and 0: gather, transform, scatter one plane at a time
    for axis in [1usize, 0] {
        let planes: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map_init(
                || (Vec::with_capacity(2 * n), vec![Complex64::default(); scratch_len], vec![0.0; m]),
                |(buf, scratch, tmp), a| {
                    let mut plane = vec![0.0; m * m];
                    for b in 0..m {
                        for c in 0..m {
                            let (i, j, k) = if axis == 1 { (a, c, b) } else { (c, a, b) };
                            tmp[c] = g.data[g.idx(i, j, k)];
                        }
                        line(tmp, buf, scratch);
                        plane[b * m..(b + 1) * m].copy_from_slice(tmp);
                    }
                    plane
                },
            )
            .collect();
        for (a, plane) in planes.iter().enumerate() {
            for b in 0..m {
                for c in 0..m {
                    let (i, j, k) = if axis == 1 { (a, c, b) } else { (c, a, b) };
                    let id = g.idx(i, j, k);
                    g.data[id] = plane[b * m + c];
                }
            }
        }
    }
}

/// Reference radius (in units of 2π) of the self-similar Born cutoff at N = 10³.
pub const BALL_R0: f64 = 4.0;

/// |n|² cutoff R² with R = r0·(N/10³)^β, which keeps the cutoff at a fixed
/// multiple of the potential's momentum scale N^β.
pub fn self_similar_cutoff(n: u64, beta: f64, r0: f64) -> i64 {
    let r = r0 * (n as f64 / 1e3).powf(beta);
    (r * r).floor().max(1.0) as i64
}

/// Number of lattice points represented by an octant point.
#[inline]
fn multiplicity(i: usize, j: usize, k: usize) -> f64 {
    let f = |x: usize| if x == 0 { 1.0 } else { 2.0 };
    f(i) * f(j) * f(k)
}

/// Born terms k = 1..=k_max over all p ∈ Λ*₊ with |n|² ≤ m_max.
///
/// Same sums as `bogoliubov::born_series` on the shell set, evaluated without
/// building the mode list.
pub fn born_series_ball(spec: &PotentialSpec, m_max: i64, k_max: usize) -> Result<BornSeries> {
    spec.validate()?;
    if k_max == 0 {
        return Err(Error::Config("k_max must be >= 1".into()));
    }
    if k_max > BORN_K_MAX {
        return Err(Error::Resource(format!("k_max = {k_max} exceeds the limit {BORN_K_MAX}")));
    }
    if m_max < 1 {
        return Err(Error::Config("Born ball needs m_max >= 1".into()));
    }
    let nm = (m_max as f64).sqrt().floor() as usize;
    // period L = 2n with n ≥ 2·nm + 1 keeps all differences p − q unaliased
    let n = 2 * nm + 1;
    if n > MAX_EDGE {
        return Err(Error::Resource(format!("Born ball edge {n} exceeds {MAX_EDGE}; lower the cutoff")));
    }
    let kappa = spec.kappa;
    let nn = spec.n_f64();
    let scale = spec.scale();
    let two_pi = 2.0 * PI;
    let m = n + 1;
    let r2 = |i: usize, j: usize, k: usize| (i * i + j * j + k * k) as i64;

    // V̂ by integer |d|², shared by the kernel grid and the ball values
    let dmax = 3 * (n * n) as i64;
    let hats: Vec<f64> = (0..=dmax)
        .into_par_iter()
        .map(|s| spec.scaled_hat_norm(two_pi * (s as f64).sqrt()))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(2 * n);

    let mut kern = Octant::zeros(n);
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let id = kern.idx(i, j, k);
                kern.data[id] = kappa * hats[r2(i, j, k) as usize];
            }
        }
    }
    dct1_3d(&mut kern, &fft);

    let in_ball = |i: usize, j: usize, k: usize| {
        let s = r2(i, j, k);
        s > 0 && s <= m_max
    };
    let weight = |i: usize, j: usize, k: usize| 1.0 / (2.0 * nn * two_pi * two_pi * r2(i, j, k) as f64);
    let mut v = Octant::zeros(n);
    for i in 0..=nm {
        for j in 0..=nm {
            for k in 0..=nm {
                if in_ball(i, j, k) {
                    let id = v.idx(i, j, k);
                    v.data[id] = kappa * hats[r2(i, j, k) as usize];
                }
            }
        }
    }

    let norm = 1.0 / ((2 * n) as f64).powi(3);
    let mut g = Octant { n, data: v.data.clone() };
    let mut terms = Vec::with_capacity(k_max);
    for kk in 1..=k_max {
        if kk > 1 {
            let mut x = Octant::zeros(n);
            for i in 0..=nm {
                for j in 0..=nm {
                    for k in 0..=nm {
                        if in_ball(i, j, k) {
                            let id = x.idx(i, j, k);
                            x.data[id] = weight(i, j, k) * g.data[id];
                        }
                    }
                }
            }
            dct1_3d(&mut x, &fft);
            x.data.par_iter_mut().zip(kern.data.par_iter()).for_each(|(a, b)| *a *= b);
            dct1_3d(&mut x, &fft);
            x.data.par_iter_mut().for_each(|a| *a *= norm);
            g = x;
        }
        let mut acc = Kahan::new();
        for i in 0..=nm {
            for j in 0..=nm {
                for k in 0..=nm {
                    if in_ball(i, j, k) {
                        let id = g.idx(i, j, k);
                        acc.add(multiplicity(i, j, k) * v.data[id] * weight(i, j, k) * g.data[id]);
                    }
                }
            }
        }
        let sign = if kk % 2 == 0 { 1.0 } else { -1.0 };
        terms.push(sign * acc.value());
    }

    let cutoff = two_pi * (m_max as f64).sqrt();
    let tail1 = if kappa == 0.0 {
        0.0
    } else {
        continuum_tail(
            |q| {
                let x = kappa * spec.fourier_hat(q / scale);
                x * x / (2.0 * nn * q * q)
            },
            cutoff,
        )
    };
    let frac = if terms[0] != 0.0 { tail1 / terms[0].abs() } else { 0.0 };
    let tails = terms
        .iter()
        .enumerate()
        .map(|(i, t)| if i == 0 { tail1 } else { (i + 1) as f64 * frac * t.abs() })
        .collect();
    let modes = shell_counts(m_max).iter().skip(1).sum::<u64>() as usize;
    Ok(BornSeries { terms, tails, modes, orbits: 0, cutoff })
}

/// First Born term as a radial sum over shells with lattice-point multiplicities.
pub fn born_first_shells(spec: &PotentialSpec, m_max: i64) -> Result<f64> {
    spec.validate()?;
    let counts = shell_counts(m_max);
    let nn = spec.n_f64();
    let kappa = spec.kappa;
    let mut acc = Kahan::new();
    for (s, &c) in counts.iter().enumerate().skip(1) {
        if c == 0 {
            continue;
        }
        let k = 2.0 * PI * (s as f64).sqrt();
        let v = kappa * spec.scaled_hat_norm(k);
        acc.add(-(c as f64) * v * v / (2.0 * nn * k * k));
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bogoliubov::born_series;
    use crate::lattice::ModeSet;

    #[test]
    fn matches_dense_kernel() {
        let spec = PotentialSpec::ball(1.0, 1.0, 0.05, 0.5, 1000);
        let set = ModeSet::from_max_norm_sq(30);
        let dense = born_series(&spec, &set, 4).unwrap();
        let fast = born_series_ball(&spec, 30, 4).unwrap();
        assert_eq!(dense.modes, fast.modes);
        for (a, b) in dense.terms.iter().zip(&fast.terms) {
            assert!((a - b).abs() <= 1e-11 * a.abs(), "{a} {b}");
        }
    }

    #[test]
    fn first_term_by_shells() {
        let spec = PotentialSpec::ball(1.0, 1.0, 0.05, 0.3, 10_000);
        let fast = born_series_ball(&spec, 50, 1).unwrap();
        let shells = born_first_shells(&spec, 50).unwrap();
        assert!((fast.terms[0] - shells).abs() <= 1e-12 * shells.abs());
    }
}
