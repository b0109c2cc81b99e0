use std::path::PathBuf;

use bosecond::bogoliubov::{born_series, ground_energy_with, mbeta, quadratic_coeffs, QuadraticCoeffs};
use bosecond::commutator::{expand_ad, to_text, verify_structure};
use bosecond::fit::{power_law, PowerFit};
use bosecond::fock::{build_basis, ed_compare, EdComparison};
use bosecond::lattice::ModeSet;
use bosecond::potential::PotentialSpec;
use bosecond::scattering::{
    bound_diagnostics, eta_coefficients, mesh_refinement, residual_scale, scattering_residual, solve_neumann, Mesh,
    ScatteringBounds, ScatteringSolution,
};
use bosecond::spectral::{born_series_ball, self_similar_cutoff, BALL_R0};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{fmt_f, Writer};
use crate::CliError;

type Out = Result<Vec<PathBuf>, CliError>;

fn solved(cfg: &RunConfig, spec: &PotentialSpec, set: &ModeSet) -> Result<ScatteringSolution, CliError> {
    let sol = solve_neumann(spec, cfg.ell, Mesh { steps: cfg.mesh_steps })?;
    Ok(eta_coefficients(sol, set)?)
}

fn k_max(cfg: &RunConfig) -> Result<(usize, usize), CliError> {
    let m = mbeta(cfg.beta)?;
    Ok((cfg.k_max.unwrap_or(m), m))
}

#[derive(Serialize)]
struct ScatterRow {
    n: u64,
    lambda: f64,
    ell: f64,
    support: f64,
    mesh_steps: usize,
    mesh_relative_change: f64,
    eta0: Option<f64>,
    eta_by_norm_sq: Vec<(i64, f64)>,
    bounds: ScatteringBounds,
}

pub fn scatter(cfg: &RunConfig) -> Out {
    let set = ModeSet::from_max_norm_sq(cfg.cutoff_sq);
    let mut w = Writer::new("scatter", cfg)?;
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for n in cfg.n_values() {
        let spec = cfg.spec(n)?;
        let sol = solved(cfg, &spec, &set)?;
        let (_, _, rel) = mesh_refinement(&spec, cfg.ell, Mesh { steps: cfg.mesh_steps })?;
        let table = sol.eta_table()?;
        // representatives with |p| ≤ P_max/2
        for m in set.distinct_norms() {
            if 4 * m > cfg.cutoff_sq {
                continue;
            }
            let p = *set.iter().find(|p| p.norm_sq_int() == m).unwrap();
            let r = scattering_residual(&sol, &spec, &p, &set)?;
            let s = residual_scale(&sol, &spec, &p)?;
            let relative = if s > 0.0 { r.abs() / s } else { r.abs() };
            rows.push(vec![
                n.to_string(),
                p.n[0].to_string(),
                p.n[1].to_string(),
                p.n[2].to_string(),
                m.to_string(),
                fmt_f(r),
                fmt_f(s),
                fmt_f(relative),
            ]);
        }
        reports.push(ScatterRow {
            n,
            lambda: sol.lambda,
            ell: sol.ell,
            support: sol.support,
            mesh_steps: cfg.mesh_steps,
            mesh_relative_change: rel,
            eta0: sol.eta0,
            eta_by_norm_sq: table.by_norm.iter().map(|(&k, &v)| (k, v)).collect(),
            bounds: bound_diagnostics(&sol, &spec),
        });
    }
    let tails = json!({ "mesh_relative_change": reports.iter().map(|r| r.mesh_relative_change).collect::<Vec<_>>() });
    w.json("scatter.json", &reports, tails.clone(), &[])?;
    w.csv("scatter_residual.csv", &["N", "n1", "n2", "n3", "norm_sq", "residual", "scale", "relative"], &rows, tails, &[])?;
    Ok(w.written)
}

fn coeff_rows(n: u64, c: &QuadraticCoeffs, rows: &mut Vec<Vec<String>>) {
    for i in 0..c.len() {
        let p = c.modes[i];
        rows.push(vec![
            n.to_string(),
            p.n[0].to_string(),
            p.n[1].to_string(),
            p.n[2].to_string(),
            fmt_f(c.p2[i]),
            fmt_f(c.vhat[i]),
            fmt_f(c.eta[i]),
            fmt_f(c.sigma[i]),
            fmt_f(c.gamma[i]),
            fmt_f(c.f[i]),
            fmt_f(c.g[i]),
            fmt_f(c.a[i]),
            fmt_f(c.tau[i]),
            fmt_f(c.identity_residual[i]),
        ]);
    }
}

pub fn coeffs(cfg: &RunConfig) -> Out {
    let set = ModeSet::from_max_norm_sq(cfg.cutoff_sq);
    let mut w = Writer::new("coeffs", cfg)?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut conv_tails = Vec::new();
    for n in cfg.n_values() {
        let spec = cfg.spec(n)?;
        let sol = solved(cfg, &spec, &set)?;
        let c = quadratic_coeffs(&spec, &sol, &set)?;
        warnings.extend(c.warnings.iter().map(|s| format!("N = {n}: {s}")));
        conv_tails.push(c.conv_tail);
        coeff_rows(n, &c, &mut rows);
    }
    let cols = ["N", "n1", "n2", "n3", "p2", "vhat", "eta", "sigma", "gamma", "F", "G", "A", "tau", "identity_residual"];
    w.csv("coeffs.csv", &cols, &rows, json!({ "conv_tail": conv_tails }), &warnings)?;
    Ok(w.written)
}

pub fn energy(cfg: &RunConfig) -> Out {
    let set = ModeSet::from_max_norm_sq(cfg.cutoff_sq);
    let (k, _) = k_max(cfg)?;
    let mut w = Writer::new("energy", cfg)?;
    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    for n in cfg.n_values() {
        let spec = cfg.spec(n)?;
        let sol = solved(cfg, &spec, &set)?;
        let c = quadratic_coeffs(&spec, &sol, &set)?;
        let r = ground_energy_with(&spec, &c, &set, k)?;
        warnings.extend(r.warnings.iter().map(|s| format!("N = {n}: {s}")));
        reports.push(json!({ "n": n, "report": r }));
    }
    let tails: Vec<_> = reports
        .iter()
        .map(|r| {
            let e = &r["report"];
            json!({
                "n": r["n"],
                "c_n_truncation": e["c_n_truncation"],
                "diag_shift_tail": e["diag_shift_tail"],
                "born_tails": e["born_tails"],
                "asymptotic_sum_tail": e["asymptotic_sum_tail"],
            })
        })
        .collect();
    w.json("energy.json", &reports, json!(tails), &warnings)?;
    Ok(w.written)
}

pub fn born(cfg: &RunConfig) -> Out {
    let set = ModeSet::from_max_norm_sq(cfg.cutoff_sq);
    let (k, m) = k_max(cfg)?;
    let mut warnings = Vec::new();
    if k < m {
        warnings.push(format!("k_max = {k} is below m_beta = {m}"));
    }
    let mut w = Writer::new("born", cfg)?;
    let mut rows = Vec::new();
    for n in cfg.n_values() {
        let spec = cfg.spec(n)?;
        let b = born_series(&spec, &set, k)?;
        for (i, (t, tail)) in b.terms.iter().zip(&b.tails).enumerate() {
            rows.push(vec![n.to_string(), (i + 1).to_string(), fmt_f(*t), fmt_f(*tail)]);
        }
    }
    w.csv("born.csv", &["N", "k", "value", "tail"], &rows, json!({ "column": "tail" }), &warnings)?;
    Ok(w.written)
}

pub fn spectrum(cfg: &RunConfig) -> Out {
    let set = ModeSet::from_max_norm_sq(cfg.cutoff_sq);
    let mut w = Writer::new("spectrum", cfg)?;
    let mut rows = Vec::new();
    for n in cfg.n_values() {
        let spec = cfg.spec(n)?;
        let kv0 = spec.kappa * spec.hat_zero();
        let sol = solved(cfg, &spec, &set)?;
        let c = quadratic_coeffs(&spec, &sol, &set)?;
        for (i, p) in set.iter().enumerate() {
            let omega = (c.f[i] * c.f[i] - c.g[i] * c.g[i]).max(0.0).sqrt();
            rows.push(vec![
                n.to_string(),
                p.n[0].to_string(),
                p.n[1].to_string(),
                p.n[2].to_string(),
                fmt_f(p.norm_sq()),
                fmt_f(bosecond::bogoliubov::dispersion(p, kv0)),
                fmt_f(omega),
            ]);
        }
    }
    w.csv("spectrum.csv", &["N", "n1", "n2", "n3", "p2", "eps", "sqrt_f2_minus_g2"], &rows, json!({}), &[])?;
    Ok(w.written)
}

fn ed_one(cfg: &RunConfig, n: u64) -> Result<EdComparison, CliError> {
    let set = ModeSet::from_max_norm_sq(cfg.modes_sq);
    let spec = cfg.spec(n)?;
    let sol = solved(cfg, &spec, &set)?;
    let c = quadratic_coeffs(&spec, &sol, &set)?;
    let basis = build_basis(&set, n, cfg.n_max)?;
    Ok(ed_compare(&spec, &c, &basis, cfg.eigencount)?)
}

pub fn ed(cfg: &RunConfig) -> Out {
    let mut w = Writer::new("ed", cfg)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for n in cfg.n_values() {
        let r = ed_one(cfg, n)?;
        for row in &r.rows {
            rows.push(vec![n.to_string(), row.level.to_string(), fmt_f(row.ed), fmt_f(row.predicted), fmt_f(row.gap)]);
        }
        summary.push(json!({ "n": n, "comparison": r }));
    }
    let tails = json!({ "fock_truncation": { "modes_sq": cfg.modes_sq, "n_max": cfg.n_max } });
    w.csv("ed.csv", &["N", "level", "ed", "predicted", "gap"], &rows, tails.clone(), &[])?;
    w.json("ed.json", &summary, tails, &[])?;
    Ok(w.written)
}

pub fn expand(cfg: &RunConfig) -> Out {
    let terms = expand_ad(cfg.depth)?;
    let report = verify_structure(&terms, cfg.depth);
    let mut w = Writer::new("expand", cfg)?;
    let tails = json!({});
    w.text(&format!("expand_n{}.txt", cfg.depth), &to_text(&terms, cfg.depth), tails.clone())?;
    let doc = json!({
        "depth": report.depth,
        "terms": report.terms,
        "expected": report.expected.to_string(),
        "leading": report.leading,
        "ok": report.is_ok(),
        "violations": report.violations,
    });
    w.json("expand.json", &doc, tails, &[])?;
    if !report.is_ok() {
        return Err(CliError::Numeric(format!("structure check failed: {:?}", report.violations)));
    }
    Ok(w.written)
}

#[derive(Serialize)]
struct Scan {
    values: Vec<f64>,
    fit: Option<PowerFit>,
    expected_exponent: Option<f64>,
}

pub fn study(cfg: &RunConfig) -> Out {
    let ns = if cfg.n_list.is_empty() { vec![1_000, 10_000, 100_000] } else { cfg.n_list.clone() };
    for &n in &ns {
        cfg.spec(n)?;
    }
    let set = ModeSet::from_max_norm_sq(1);
    let (k, m) = k_max(cfg)?;
    let k = k.max(m);
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let mut lam_dev = Vec::new();
    let mut born: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut cutoffs = Vec::new();
    let mut rows = Vec::new();
    for &n in &ns {
        let spec = cfg.spec(n)?;
        let sol = solved(cfg, &spec, &set)?;
        let ratio = bound_diagnostics(&sol, &spec).lambda_ratio;
        lam_dev.push((ratio - 1.0).abs());
        let mm = self_similar_cutoff(n, cfg.beta, BALL_R0);
        cutoffs.push(mm);
        let b = born_series_ball(&spec, mm, k)?;
        for (i, t) in b.terms.iter().enumerate() {
            born[i].push(*t);
        }
        let mut row = vec![n.to_string(), fmt_f(sol.lambda), fmt_f(ratio), mm.to_string()];
        row.extend(b.terms.iter().map(|t| fmt_f(*t)));
        rows.push(row);
    }
    let fit = |ys: &[f64]| if ys.iter().all(|y| *y != 0.0) { power_law(&xs, ys) } else { None };
    let lambda = Scan { fit: fit(&lam_dev), values: lam_dev.clone(), expected_exponent: Some(cfg.beta - 1.0) };
    let born_scans: Vec<Scan> = born
        .iter()
        .enumerate()
        .map(|(i, ys)| Scan { fit: fit(ys), values: ys.clone(), expected_exponent: Some((i + 1) as f64 * (cfg.beta - 1.0)) })
        .collect();
    let mut ed_gap = Vec::new();
    let mut ed_ns = Vec::new();
    for &n in &ns {
        if cfg.n_max as u64 <= n {
            ed_gap.push(ed_one(cfg, n)?.ground_gap);
            ed_ns.push(n as f64);
        }
    }
    let ed_fit = if ed_gap.iter().all(|g| *g > 0.0) { power_law(&ed_ns, &ed_gap) } else { None };
    let doc = json!({
        "n_values": ns,
        "lambda_deviation": lambda,
        "born_terms": born_scans,
        "born_cutoff_sq": cutoffs,
        "ed_ground_gap": Scan { values: ed_gap, fit: ed_fit, expected_exponent: None },
    });
    let tails = json!({ "born_cutoff_rule": format!("R = {BALL_R0}·(N/1e3)^beta"), "m_beta": m });
    let mut w = Writer::new("study", cfg)?;
    w.json("study.json", &doc, tails.clone(), &[])?;
    let mut cols = vec!["N".to_string(), "lambda".into(), "lambda_ratio".into(), "born_cutoff_sq".into()];
    cols.extend((1..=k).map(|i| format!("born_{i}")));
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    w.csv("study.csv", &cols, &rows, tails, &[])?;
    Ok(w.written)
}
