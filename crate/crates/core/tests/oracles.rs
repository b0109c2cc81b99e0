//! Independent reference computations for derived quantities.

use std::f64::consts::PI;

use bosecond::bogoliubov::{born_first_direct, born_series};
use bosecond::commutator::{evaluate_term, parse_term};
use bosecond::fock::{build_basis, build_l, number_op, op_b, op_bdag};
use bosecond::lattice::{ModeSet, Momentum};
use bosecond::linalg::lowest_eigs;
use bosecond::potential::{PotentialSpec, Shape};
use bosecond::quad::GaussLegendre;
use bosecond::scattering::{eta_coefficients, solve_neumann, Mesh};
use bosecond::sparse::SparseOperator;
use bosecond::spectral::{born_first_shells, born_series_ball};

/// Ball potential: u = r f solved piecewise in closed form.
struct BallNeumann {
    u0: f64,
    rs: f64,
    ell: f64,
    lambda: f64,
}

impl BallNeumann {
    fn u(&self, lambda: f64, r: f64) -> (f64, f64) {
        let q = (self.u0 - lambda).sqrt();
        if r <= self.rs {
            return ((q * r).sinh(), q * (q * r).cosh());
        }
        let k = lambda.sqrt();
        let c2 = (q * self.rs).sinh();
        let c1 = q * (q * self.rs).cosh() / k;
        let t = k * (r - self.rs);
        (c1 * t.sin() + c2 * t.cos(), k * (c1 * t.cos() - c2 * t.sin()))
    }

    /// ℓu′(ℓ) − u(ℓ), expanded so that the leading cancellations are done analytically.
    fn mismatch(&self, lambda: f64) -> f64 {
        let q = (self.u0 - lambda).sqrt();
        let x = q * self.rs;
        let k = lambda.sqrt();
        let t = k * (self.ell - self.rs);
        let cosm1 = -2.0 * (0.5 * t).sin().powi(2);
        let head = if x < 0.1 {
            // x cosh x − sinh x
            let mut term = x * x * x / 6.0;
            let mut s = 0.0;
            for n in 1..12 {
                s += 2.0 * n as f64 * term;
                term *= x * x / ((2 * n + 2) as f64 * (2 * n + 3) as f64);
            }
            s
        } else {
            x * x.cosh() - x.sinh()
        };
        q * x.cosh() * (self.ell * cosm1 - (self.ell - self.rs) * sinc_m1(t))
            - x.sinh() * (self.ell * k * t.sin() + cosm1)
            + head
    }

    fn new(spec: &PotentialSpec, ell: f64) -> Self {
        let (v0, radius) = match spec.shape {
            Shape::Ball { v0, radius } => (v0, radius),
            _ => unreachable!(),
        };
        let nn = spec.n as f64;
        let mut b = BallNeumann {
            u0: 0.5 * spec.kappa * nn.powf(3.0 * spec.beta - 1.0) * v0,
            rs: radius / nn.powf(spec.beta),
            ell,
            lambda: 0.0,
        };
        let mut lo = 1e-300;
        let mut hi = 1e-12;
        while b.mismatch(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if b.mismatch(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        b.lambda = 0.5 * (lo + hi);
        b
    }

    fn w(&self, r: f64) -> f64 {
        let (ue, _) = self.u(self.lambda, self.ell);
        let f = if r == 0.0 {
            (self.u0 - self.lambda).sqrt()
        } else {
            self.u(self.lambda, r).0 / r
        };
        1.0 - f * self.ell / ue
    }

    /// −N ∫_{|x|<ℓ} w(|x|) e^{−ip·x} dx in spherical coordinates.
    fn eta(&self, n: f64, k: f64) -> f64 {
        let gr = GaussLegendre::new(24);
        let gm = GaussLegendre::new(32);
        let mut s = 0.0;
        for (a, b, panels) in [(0.0, self.rs, 8), (self.rs, self.ell, 64)] {
            let h = (b - a) / panels as f64;
            for j in 0..panels {
                let lo = a + j as f64 * h;
                s += gr.integrate(|r| r * r * self.w(r) * gm.integrate(|mu| (k * r * mu).cos(), -1.0, 1.0), lo, lo + h);
            }
        }
        -n * 2.0 * PI * s
    }
}

/// sin(t)/t − 1.
fn sinc_m1(t: f64) -> f64 {
    if t.abs() > 0.1 {
        return t.sin() / t - 1.0;
    }
    let mut term = -t * t / 6.0;
    let mut s = 0.0;
    for n in 1..10 {
        s += term;
        term *= -t * t / ((2 * n + 2) as f64 * (2 * n + 3) as f64);
    }
    s
}

const CASES: [(f64, f64, u64); 4] = [(0.05, 0.5, 1_000), (0.01, 0.3, 10_000), (0.05, 0.7, 1_000), (0.02, 0.5, 100_000)];

#[test]
fn ball_neumann_matches_closed_form() {
    for (kappa, beta, n) in CASES {
        let spec = PotentialSpec::ball(1.0, 1.0, kappa, beta, n);
        let exact = BallNeumann::new(&spec, 0.4);
        let sol = solve_neumann(&spec, 0.4, Mesh { steps: 2000 }).unwrap();
        let rel = (sol.lambda - exact.lambda).abs() / exact.lambda;
        assert!(rel < 1e-9, "κ={kappa} β={beta} N={n}: λ {} vs {} ({rel:.2e})", sol.lambda, exact.lambda);
        let scale = exact.w(0.0).abs();
        for i in 0..=40 {
            let r = 0.4 * i as f64 / 40.0 * 0.999;
            let d = (sol.w_at(r) - exact.w(r)).abs() / scale;
            assert!(d < 1e-8, "w({r}) off by {d:.2e}");
        }
    }
}

#[test]
fn eta_matches_spherical_cubature() {
    for (kappa, beta, n) in CASES {
        let spec = PotentialSpec::ball(1.0, 1.0, kappa, beta, n);
        let exact = BallNeumann::new(&spec, 0.4);
        let set = ModeSet::from_max_norm_sq(9);
        let sol = eta_coefficients(solve_neumann(&spec, 0.4, Mesh { steps: 2000 }).unwrap(), &set).unwrap();
        for m in sol.eta_table().unwrap().by_norm.keys() {
            let k = 2.0 * PI * (*m as f64).sqrt();
            let want = exact.eta(n as f64, k);
            let got = sol.eta_of_norm(k);
            assert!((got - want).abs() <= 1e-7 * want.abs(), "|n|²={m}: {got} vs {want}");
        }
    }
}

#[test]
fn potential_transform_matches_radial_quadrature() {
    let gl = GaussLegendre::new(30);
    let radial = |spec: &PotentialSpec, q: f64, knots: &[f64]| {
        let mut s = 0.0;
        for w in knots.windows(2) {
            s += gl.integrate(|r| 4.0 * PI * r * r * spec.value(r) * if q == 0.0 { 1.0 } else { (q * r).sin() / (q * r) }, w[0], w[1]);
        }
        s
    };
    let ball = PotentialSpec::ball(2.5, 0.7, 0.05, 0.5, 1000);
    let trap = PotentialSpec {
        shape: Shape::Tabulated { r: vec![0.0, 0.5, 1.0], v: vec![2.0, 1.0, 0.0] },
        ..ball.clone()
    };
    for q in [0.0, 1e-4, 0.3, 2.0, 7.5, 20.0] {
        let b_knots: Vec<f64> = (0..=8).map(|i| 0.7 * i as f64 / 8.0).collect();
        let t_knots: Vec<f64> = (0..=16).map(|i| i as f64 / 16.0).collect();
        let (bw, tw) = (radial(&ball, q, &b_knots), radial(&trap, q, &t_knots));
        assert!((ball.fourier_hat(q) - bw).abs() <= 1e-12 * bw.abs().max(1e-3), "ball q={q}");
        assert!((trap.fourier_hat(q) - tw).abs() <= 1e-12 * tw.abs().max(1e-3), "tabulated q={q}");
    }
}

#[test]
fn born_routes_agree() {
    for (kappa, beta, n) in CASES {
        let spec = PotentialSpec::ball(1.0, 1.0, kappa, beta, n);
        for m in [6, 20] {
            let set = ModeSet::from_max_norm_sq(m);
            let a = born_series(&spec, &set, 3).unwrap();
            let b = born_series_ball(&spec, m, 3).unwrap();
            for k in 0..3 {
                assert!((a.terms[k] - b.terms[k]).abs() <= 1e-10 * a.terms[k].abs(), "k={k}");
            }
            let d = born_first_direct(&spec, &set).unwrap();
            let s = born_first_shells(&spec, m).unwrap();
            assert!((d - a.terms[0]).abs() <= 1e-12 * d.abs());
            assert!((s - a.terms[0]).abs() <= 1e-12 * d.abs());
        }
    }
}

#[test]
fn weak_coupling_ground_state_is_second_order() {
    let set = ModeSet::from_max_norm_sq(1);
    for kappa in [1e-4, 2e-4] {
        let spec = PotentialSpec::ball(1.0, 1.0, kappa, 0.5, 100);
        let basis = build_basis(&set, 100, 4).unwrap();
        let parts = build_l(&basis, &spec).unwrap();
        let l = parts.total();
        let w = l.sub(&parts.k);
        let mut e2 = w.get(0, 0);
        for i in 1..basis.dim() {
            let x = w.get(i, 0);
            e2 -= x * x / parts.k.get(i, i);
        }
        let e = lowest_eigs(&l, 1).unwrap()[0];
        let second = e2 - w.get(0, 0);
        assert!(second < 0.0);
        assert!((e - e2).abs() <= 1e-3 * second.abs(), "κ={kappa}: {e} vs {e2}");
    }
}

#[test]
fn evaluated_terms_match_operator_products() {
    let set = ModeSet::from_max_norm_sq(1);
    let basis = build_basis(&set, 4, 4).unwrap();
    let p = Momentum::new(0, 1, 0);
    let eta: Vec<f64> = (0..set.len()).map(|i| 0.05 + 0.01 * i as f64).collect();
    let ip = basis.mode_index(&p).unwrap();
    let nn = basis.n() as f64;
    let nplus = number_op(&basis).diag();
    let d0 = SparseOperator::diagonal(&nplus.iter().map(|x| (nn - x) / nn).collect::<Vec<_>>());
    let d1 = SparseOperator::diagonal(&nplus.iter().map(|x| (nn + 1.0 - x) / nn).collect::<Vec<_>>());

    let t = parse_term("+ D0 D1 P1[a;;+;2]", 2).unwrap();
    let want = d0.matmul(&d1).matmul(&op_b(&basis, &p).unwrap()).scale(eta[ip] * eta[ip]);
    assert!(evaluate_term(&t, &eta, &p, &basis).unwrap().max_abs_diff(&want) < 1e-15);

    let t = parse_term("- D0 P1[c;;-;1]", 1).unwrap();
    let want = d0.matmul(&op_bdag(&basis, &p.neg()).unwrap()).scale(-eta[ip]);
    assert!(evaluate_term(&t, &eta, &p, &basis).unwrap().max_abs_diff(&want) < 1e-15);

    let zero = vec![0.0; set.len()];
    for line in ["- P2[cc;1] P1[c;;-;1]", "+ P1[aacca;1,1;+;0]", "+ D0 D1 P1[a;;+;2]"] {
        let t = parse_term(line, 2).unwrap();
        assert_eq!(evaluate_term(&t, &zero, &p, &basis).unwrap().max_abs(), 0.0, "{line}");
    }
}
