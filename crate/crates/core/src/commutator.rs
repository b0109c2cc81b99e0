//! Symbolic expansion of nested commutators ad^{(n)}_B(b_p) with the
//! generalized Bogoliubov generator B = ½Σ_q η_q(b*_q b*_{−q} − b_q b_{−q}).
//!
//! A term is a sign, a product of Λ factors (number shifts or Π⁽²⁾ chains) and
//! a final Π⁽¹⁾ chain. In a chain the operators are b at the ends and a inside.
//! Consecutive operators 2l−2 and 2l−1 share link variable q_l with weight
//! η_{q_l}^{z_l}; a creation operator in the first slot of a link carries +q,
//! an annihilation −q, and the second slot the opposite. The Π⁽¹⁾ chain ends in
//! an external operator a_{±p} (or b_{±p} at order zero) weighted by η_p^s.
//!
//! Every unit (shift, chain end, inner pair) maps to exactly two terms under
//! [B, ·], so depth n has 2ⁿn! terms. The rules are
//!
//! * [B, D_c] = N⁻¹Σ η_q(b*_q b*_{−q} + b_q b_{−q}), D_c = (N + c − 𝒩₊)/N;
//! * chain start: [B, b_x] = −η_x D₀ b*_{−x} + N⁻¹Σ η_q b*_q a*_{−q} a_x and
//!   [B, b*_x] = −η_x D₁ b_{−x} + N⁻¹Σ η_q b_q a_{−q} a*_x;
//! * chain end: [B, b_x] = −η_x b*_{−x} D₁ + N⁻¹Σ η_q a_x a*_{−q} b*_q and
//!   [B, b*_x] = −η_x b_{−x} D₀ + N⁻¹Σ η_q a*_x a_{−q} b_q;
//! * inner pair: [B, a*_x a_y] = −η_y b*_x b*_{−y} − η_x b_{−x} b_y, which
//!   splits the chain in two.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{build_b, build_basis_extended, exp_b, op_b, FockBasis, Ladder};
use crate::lattice::Momentum;
use crate::sparse::SparseOperator;

/// Deepest commutator expanded term by term.
pub const DEFAULT_DEPTH_CAP: usize = 6;
/// Deepest commutator expanded with identical structures merged.
pub const MERGED_DEPTH_CAP: usize = 10;

const CRE: bool = true;
const ANN: bool = false;

/// Chain of creation (true) / annihilation (false) flags with link exponents.
///
/// As a Π⁽²⁾ factor `daggers.len() == 2·exps.len()`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chain {
    pub daggers: Vec<bool>,
    pub exps: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lambda {
    /// (N + c − 𝒩₊)/N with c ∈ {0, 1}.
    Shift(u8),
    Pi2(Chain),
}

/// Π⁽¹⁾ chain of order k = `exps.len()`; `daggers` has 2k + 1 entries, the last
/// being the external operator with momentum `ext_sign`·p.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pi1 {
    pub daggers: Vec<bool>,
    pub exps: Vec<u32>,
    pub ext_sign: i8,
    pub s: u32,
}

impl Pi1 {
    pub fn order(&self) -> usize {
        self.exps.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SymTerm {
    pub sign: i8,
    pub lambdas: Vec<Lambda>,
    pub pi1: Pi1,
    /// Commutator depth the term came from.
    pub depth: usize,
}

pub type TermList = Vec<SymTerm>;

impl SymTerm {
    /// b_p itself.
    pub fn root() -> Self {
        SymTerm {
            sign: 1,
            lambdas: Vec::new(),
            pi1: Pi1 { daggers: vec![ANN], exps: Vec::new(), ext_sign: 1, s: 0 },
            depth: 0,
        }
    }

    /// Number of shift factors.
    pub fn shifts(&self) -> usize {
        self.lambdas.iter().filter(|l| matches!(l, Lambda::Shift(_))).count()
    }

    /// Orders h_i of the Π⁽²⁾ factors, left to right.
    pub fn pi2_orders(&self) -> Vec<usize> {
        self.lambdas
            .iter()
            .filter_map(|l| match l {
                Lambda::Pi2(c) => Some(c.exps.len()),
                Lambda::Shift(_) => None,
            })
            .collect()
    }

    /// Total power of 1/N: Σh_i + k.
    pub fn inverse_n_power(&self) -> usize {
        self.pi2_orders().iter().sum::<usize>() + self.pi1.order()
    }

    /// m + Σ(h_i + 1) + (k + 1).
    pub fn unit_count(&self) -> usize {
        self.shifts() + self.pi2_orders().iter().map(|h| h + 1).sum::<usize>() + self.pi1.order() + 1
    }

    /// Σ link exponents + s.
    pub fn eta_power(&self) -> u32 {
        let mut t = self.pi1.s + self.pi1.exps.iter().sum::<u32>();
        for l in &self.lambdas {
            if let Lambda::Pi2(c) = l {
                t += c.exps.iter().sum::<u32>();
            }
        }
        t
    }

    pub fn is_leading(&self) -> bool {
        self.pi1.order() == 0 && self.lambdas.iter().all(|l| matches!(l, Lambda::Shift(_)))
    }

    /// All 2(n+1) terms of [B, self], in unit order.
    pub fn children(&self) -> Vec<SymTerm> {
        let mut out = Vec::with_capacity(2 * self.unit_count());
        let depth = self.depth + 1;
        let mk = |sign: i8, lambdas: Vec<Lambda>, pi1: Pi1| SymTerm { sign: self.sign * sign, lambdas, pi1, depth };
        for (i, lam) in self.lambdas.iter().enumerate() {
            let replace = |with: Vec<Lambda>| {
                let mut l = self.lambdas[..i].to_vec();
                l.extend(with);
                l.extend_from_slice(&self.lambdas[i + 1..]);
                l
            };
            match lam {
                Lambda::Shift(_) => {
                    for d in [CRE, ANN] {
                        let c = Chain { daggers: vec![d, d], exps: vec![1] };
                        out.push(mk(1, replace(vec![Lambda::Pi2(c)]), self.pi1.clone()));
                    }
                }
                Lambda::Pi2(c) => {
                    let len = c.exps.len();
                    // start
                    let (flip, grow, shift) = start_rules(&c.daggers, &c.exps);
                    out.push(mk(-1, replace(vec![Lambda::Shift(shift), Lambda::Pi2(Chain { daggers: flip.0, exps: flip.1 })]), self.pi1.clone()));
                    out.push(mk(1, replace(vec![Lambda::Pi2(Chain { daggers: grow.0, exps: grow.1 })]), self.pi1.clone()));
                    // inner pairs
                    for l in 1..len {
                        for (left, right) in split_pair(c, l) {
                            out.push(mk(-1, replace(vec![Lambda::Pi2(left), Lambda::Pi2(right)]), self.pi1.clone()));
                        }
                    }
                    // end
                    let e = 2 * len - 1;
                    let d = c.daggers[e];
                    let mut fd = c.daggers.clone();
                    fd[e] = !d;
                    let mut fe = c.exps.clone();
                    fe[len - 1] += 1;
                    let shift = if d == ANN { 1 } else { 0 };
                    out.push(mk(-1, replace(vec![Lambda::Pi2(Chain { daggers: fd, exps: fe }), Lambda::Shift(shift)]), self.pi1.clone()));
                    let mut gd = c.daggers.clone();
                    gd.extend([!d, !d]);
                    let mut ge = c.exps.clone();
                    ge.push(1);
                    out.push(mk(1, replace(vec![Lambda::Pi2(Chain { daggers: gd, exps: ge })]), self.pi1.clone()));
                }
            }
        }
        let p = &self.pi1;
        let k = p.order();
        // start of Π⁽¹⁾ (the external operator itself at order zero)
        let (flip, grow, shift) = start_rules(&p.daggers, &p.exps);
        let mut lam = self.lambdas.clone();
        lam.push(Lambda::Shift(shift));
        let mut fp = Pi1 { daggers: flip.0, exps: flip.1, ..p.clone() };
        if k == 0 {
            fp.ext_sign = -p.ext_sign;
            fp.s += 1;
        }
        out.push(mk(-1, lam, fp));
        out.push(mk(1, self.lambdas.clone(), Pi1 { daggers: grow.0, exps: grow.1, ..p.clone() }));
        for l in 1..k {
            let c = Chain { daggers: p.daggers.clone(), exps: p.exps.clone() };
            for (left, right) in split_pair(&c, l) {
                let mut lam = self.lambdas.clone();
                lam.push(Lambda::Pi2(left));
                out.push(mk(-1, lam, Pi1 { daggers: right.daggers, exps: right.exps, ..p.clone() }));
            }
        }
        if k >= 1 {
            // last pair (a_x, external)
            let x = 2 * k - 1;
            let dx = p.daggers[x];
            let de = p.daggers[x + 1];
            let flip_left = |lam: &mut Vec<Lambda>| {
                let mut d = p.daggers[..x].to_vec();
                d.push(!dx);
                let mut e = p.exps.clone();
                e[k - 1] += 1;
                lam.push(Lambda::Pi2(Chain { daggers: d, exps: e }));
                Pi1 { daggers: vec![de], exps: Vec::new(), ext_sign: p.ext_sign, s: p.s }
            };
            let flip_right = |lam: &mut Vec<Lambda>| {
                lam.push(Lambda::Pi2(Chain { daggers: p.daggers[..=x].to_vec(), exps: p.exps.clone() }));
                Pi1 { daggers: vec![!de], exps: Vec::new(), ext_sign: -p.ext_sign, s: p.s + 1 }
            };
            let order: [bool; 2] = if dx == CRE { [false, true] } else { [true, false] };
            for left_first in order {
                let mut lam = self.lambdas.clone();
                let pi = if left_first { flip_left(&mut lam) } else { flip_right(&mut lam) };
                out.push(mk(-1, lam, pi));
            }
        }
        out
    }
}

type Flags = (Vec<bool>, Vec<u32>);

/// Start-of-chain rules: (flipped chain, grown chain, inserted shift index).
fn start_rules(daggers: &[bool], exps: &[u32]) -> (Flags, Flags, u8) {
    let d = daggers[0];
    let mut fd = daggers.to_vec();
    fd[0] = !d;
    let mut fe = exps.to_vec();
    if let Some(z) = fe.first_mut() {
        *z += 1;
    }
    let mut gd = vec![!d, !d];
    gd.extend_from_slice(daggers);
    let mut ge = vec![1];
    ge.extend_from_slice(exps);
    let shift = if d == ANN { 0 } else { 1 };
    ((fd, fe), (gd, ge), shift)
}

/// Both splittings of the inner pair at operators (2l−1, 2l); the term from
/// the pair-creation part of B comes first.
fn split_pair(c: &Chain, l: usize) -> Vec<(Chain, Chain)> {
    let x = 2 * l - 1;
    let y = 2 * l;
    let dx = c.daggers[x];
    let flip_left = || {
        let mut d = c.daggers[..x].to_vec();
        d.push(!dx);
        let mut e = c.exps[..l].to_vec();
        e[l - 1] += 1;
        (Chain { daggers: d, exps: e }, Chain { daggers: c.daggers[y..].to_vec(), exps: c.exps[l..].to_vec() })
    };
    let flip_right = || {
        let mut d = vec![!c.daggers[y]];
        d.extend_from_slice(&c.daggers[y + 1..]);
        let mut e = c.exps[l..].to_vec();
        e[0] += 1;
        (Chain { daggers: c.daggers[..=x].to_vec(), exps: c.exps[..l].to_vec() }, Chain { daggers: d, exps: e })
    };
    if dx == CRE {
        vec![flip_right(), flip_left()]
    } else {
        vec![flip_left(), flip_right()]
    }
}

/// 2ⁿn!.
pub fn expected_count(n: usize) -> u128 {
    (1..=n as u128).fold(1u128, |acc, k| acc * 2 * k)
}

/// All terms of ad^{(n)}_B(b_p), duplicates kept.
pub fn expand_ad(n: usize) -> Result<TermList> {
    expand_ad_capped(n, DEFAULT_DEPTH_CAP)
}

pub fn expand_ad_capped(n: usize, cap: usize) -> Result<TermList> {
    if n > cap {
        return Err(Error::Resource(format!(
            "depth {n} exceeds the cap {cap} ({} terms)",
            expected_count(n)
        )));
    }
    let mut level = vec![SymTerm::root()];
    for _ in 0..n {
        level = level.par_iter().flat_map_iter(|t| t.children()).collect();
    }
    Ok(level)
}

/// Same expansion with identical structures merged: (term with sign +1, signed multiplicity).
pub fn expand_merged(n: usize) -> Result<Vec<(SymTerm, i64)>> {
    if n > MERGED_DEPTH_CAP {
        return Err(Error::Resource(format!("merged depth {n} exceeds the cap {MERGED_DEPTH_CAP}")));
    }
    let mut level: BTreeMap<(Vec<Lambda>, Pi1), i64> = BTreeMap::new();
    level.insert((Vec::new(), SymTerm::root().pi1), 1);
    for depth in 0..n {
        let mut next: BTreeMap<(Vec<Lambda>, Pi1), i64> = BTreeMap::new();
        for ((lambdas, pi1), w) in level {
            let t = SymTerm { sign: 1, lambdas, pi1, depth };
            for c in t.children() {
                *next.entry((c.lambdas, c.pi1)).or_insert(0) += w * c.sign as i64;
            }
        }
        level = next;
    }
    Ok(level
        .into_iter()
        .map(|((lambdas, pi1), w)| (SymTerm { sign: 1, lambdas, pi1, depth: n }, w))
        .collect())
}

// ---------------------------------------------------------------------------
// structure checks

#[derive(Clone, Debug, PartialEq)]
pub struct StructureReport {
    pub depth: usize,
    pub terms: usize,
    pub expected: u128,
    pub leading: usize,
    pub violations: Vec<String>,
}

impl StructureReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty() && self.terms as u128 == self.expected && self.leading == 1
    }
}

fn chain_violations(daggers: &[bool], exps: &[u32], what: &str, out: &mut Vec<String>) {
    for (l, &z) in exps.iter().enumerate() {
        if z == 0 {
            out.push(format!("{what}: link {} has exponent 0", l + 1));
        }
        let (a, b) = (daggers[2 * l], daggers[2 * l + 1]);
        if a == ANN && b == CRE && z < 2 {
            out.push(format!("{what}: non-normally ordered link {} has exponent {z} < 2", l + 1));
        }
    }
    // inner pairs conserve particle number
    let mut l = 1;
    while 2 * l < daggers.len() {
        if daggers[2 * l - 1] == daggers[2 * l] {
            out.push(format!("{what}: pair {l} is not number conserving"));
        }
        l += 1;
    }
}

/// Violations of the structural laws for a single term of depth `term.depth`.
pub fn term_violations(t: &SymTerm) -> Vec<String> {
    let n = t.depth;
    let mut v = Vec::new();
    if t.sign != 1 && t.sign != -1 {
        v.push(format!("sign {} is not ±1", t.sign));
    }
    for lam in &t.lambdas {
        match lam {
            Lambda::Shift(c) if *c > 1 => v.push(format!("shift index {c} outside {{0, 1}}")),
            Lambda::Shift(_) => {}
            Lambda::Pi2(c) => {
                if c.exps.is_empty() || c.daggers.len() != 2 * c.exps.len() {
                    v.push(format!("Π2 with {} operators and {} links", c.daggers.len(), c.exps.len()));
                    continue;
                }
                chain_violations(&c.daggers, &c.exps, "Π2", &mut v);
            }
        }
    }
    let p = &t.pi1;
    let k = p.order();
    if p.daggers.len() != 2 * k + 1 {
        v.push(format!("Π1 with {} operators and {k} links", p.daggers.len()));
        return v;
    }
    chain_violations(&p.daggers, &p.exps, "Π1", &mut v);
    let ext = p.daggers[2 * k];
    let parity_ok = if ext == ANN { p.s % 2 == 0 && p.ext_sign == 1 } else { p.s % 2 == 1 && p.ext_sign == -1 };
    if !parity_ok {
        v.push(format!(
            "Π1 external operator ({}, sign {}, s = {}) has the wrong parity",
            if ext == CRE { "creation" } else { "annihilation" },
            p.ext_sign,
            p.s
        ));
    }
    if t.unit_count() != n + 1 {
        v.push(format!("counting law: {} units at depth {n}", t.unit_count()));
    }
    if t.eta_power() as usize != n {
        v.push(format!("exponent law: η power {} at depth {n}", t.eta_power()));
    }
    if t.is_leading() {
        let d0 = t.lambdas.iter().filter(|l| matches!(l, Lambda::Shift(0))).count();
        let d1 = t.shifts() - d0;
        let (e0, e1, sign, dag) = if n % 2 == 0 { (n / 2, n / 2, 1, ANN) } else { ((n + 1) / 2, (n - 1) / 2, -1, CRE) };
        if (d0, d1, t.sign, ext) != (e0, e1, sign, dag) {
            v.push(format!("leading term has shifts ({d0}, {d1}) and sign {}", t.sign));
        }
    }
    v
}

/// Operator and link counts consistent; needed before evaluation.
fn shape_check(t: &SymTerm) -> Result<()> {
    for l in &t.lambdas {
        match l {
            Lambda::Shift(c) if *c > 1 => return Err(Error::Structure(format!("shift index {c} outside {{0, 1}}"))),
            Lambda::Pi2(c) if c.exps.is_empty() || c.daggers.len() != 2 * c.exps.len() => {
                return Err(Error::Structure(format!("Π2 with {} operators and {} links", c.daggers.len(), c.exps.len())))
            }
            _ => {}
        }
    }
    let p = &t.pi1;
    if p.daggers.len() != 2 * p.order() + 1 || p.ext_sign.abs() != 1 {
        return Err(Error::Structure(format!("Π1 with {} operators and {} links", p.daggers.len(), p.order())));
    }
    Ok(())
}

pub fn verify_structure(terms: &[SymTerm], depth: usize) -> StructureReport {
    let mut violations = Vec::new();
    let mut leading = 0;
    for (i, t) in terms.iter().enumerate() {
        if t.depth != depth {
            violations.push(format!("term {i}: depth {} != {depth}", t.depth));
        }
        if t.is_leading() {
            leading += 1;
        }
        for e in term_violations(t) {
            violations.push(format!("term {i}: {e}"));
        }
    }
    StructureReport { depth, terms: terms.len(), expected: expected_count(depth), leading, violations }
}

// ---------------------------------------------------------------------------
// text format: one term per line, e.g. "- D0 P2[cc;1] P1[a;;+;1]"

fn flags_str(d: &[bool]) -> String {
    d.iter().map(|&x| if x { 'c' } else { 'a' }).collect()
}

fn exps_str(e: &[u32]) -> String {
    e.iter().map(|z| z.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for SymTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", if self.sign < 0 { '-' } else { '+' })?;
        for l in &self.lambdas {
            match l {
                Lambda::Shift(c) => write!(f, " D{c}")?,
                Lambda::Pi2(c) => write!(f, " P2[{};{}]", flags_str(&c.daggers), exps_str(&c.exps))?,
            }
        }
        let p = &self.pi1;
        write!(
            f,
            " P1[{};{};{};{}]",
            flags_str(&p.daggers),
            exps_str(&p.exps),
            if p.ext_sign < 0 { '-' } else { '+' },
            p.s
        )
    }
}

fn parse_flags(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            'c' => Ok(CRE),
            'a' => Ok(ANN),
            _ => Err(Error::Config(format!("bad operator flag '{c}'"))),
        })
        .collect()
}

fn parse_exps(s: &str) -> Result<Vec<u32>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|z| z.parse::<u32>().map_err(|e| Error::Config(format!("bad exponent '{z}': {e}"))))
        .collect()
}

fn bracket<'a>(tok: &'a str, head: &str) -> Result<Vec<&'a str>> {
    tok.strip_prefix(head)
        .and_then(|r| r.strip_prefix('['))
        .and_then(|r| r.strip_suffix(']'))
        .map(|r| r.split(';').collect())
        .ok_or_else(|| Error::Config(format!("bad factor '{tok}'")))
}

pub fn parse_term(line: &str, depth: usize) -> Result<SymTerm> {
    let mut toks = line.split_whitespace();
    let sign = match toks.next() {
        Some("+") => 1,
        Some("-") => -1,
        other => return Err(Error::Config(format!("bad sign {other:?}"))),
    };
    let toks: Vec<&str> = toks.collect();
    let (last, rest) = toks.split_last().ok_or_else(|| Error::Config("term without Π1 factor".into()))?;
    let mut lambdas = Vec::new();
    for t in rest {
        match *t {
            "D0" => lambdas.push(Lambda::Shift(0)),
            "D1" => lambdas.push(Lambda::Shift(1)),
            _ => {
                let f = bracket(t, "P2")?;
                if f.len() != 2 {
                    return Err(Error::Config(format!("bad factor '{t}'")));
                }
                lambdas.push(Lambda::Pi2(Chain { daggers: parse_flags(f[0])?, exps: parse_exps(f[1])? }));
            }
        }
    }
    let f = bracket(last, "P1")?;
    if f.len() != 4 {
        return Err(Error::Config(format!("bad factor '{last}'")));
    }
    let ext_sign = match f[2] {
        "+" => 1,
        "-" => -1,
        s => return Err(Error::Config(format!("bad external sign '{s}'"))),
    };
    let s = f[3].parse::<u32>().map_err(|e| Error::Config(format!("bad exponent '{}': {e}", f[3])))?;
    let pi1 = Pi1 { daggers: parse_flags(f[0])?, exps: parse_exps(f[1])?, ext_sign, s };
    Ok(SymTerm { sign, lambdas, pi1, depth })
}

pub fn to_text(terms: &[SymTerm], depth: usize) -> String {
    let mut s = format!("# depth {depth} terms {}\n", terms.len());
    for t in terms {
        s.push_str(&t.to_string());
        s.push('\n');
    }
    s
}

/// Inverse of `to_text`; lines starting with '#' are skipped.
pub fn from_text(text: &str, depth: usize) -> Result<TermList> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| parse_term(l, depth))
        .collect()
}

// ---------------------------------------------------------------------------
// evaluation on a Fock basis

type LinkKey = (bool, bool, bool, bool, u32);

fn ladder(dag: bool, is_b: bool, i: usize) -> Ladder {
    match (dag, is_b) {
        (true, true) => Ladder::Bd(i),
        (true, false) => Ladder::Ad(i),
        (false, true) => Ladder::B(i),
        (false, false) => Ladder::A(i),
    }
}

/// Matrices of symbolic terms for a fixed η and external momentum p.
///
/// Factors are built on a basis one particle larger so that the intermediate
/// state inside an a-pair is never truncated; the product is then restricted
/// to the original basis. This equals P·term·P exactly when n_max = N.
pub struct TermEvaluator {
    dim: usize,
    ext: FockBasis,
    eta: Vec<f64>,
    p: usize,
    cache: std::sync::RwLock<HashMap<LinkKey, SparseOperator>>,
    ext_ops: std::sync::RwLock<HashMap<(bool, bool, i8, u32), SparseOperator>>,
    shifts: [SparseOperator; 2],
}

impl TermEvaluator {
    pub fn new(basis: &FockBasis, eta: &[f64], p: &Momentum) -> Result<Self> {
        let m = basis.modes().len();
        if eta.len() != m {
            return Err(Error::Config(format!("eta has {} entries for {m} modes", eta.len())));
        }
        let p = basis.mode_index(p)?;
        let ext = build_basis_extended(basis, 1)?;
        let shifts = [ext.words_matrix(&[(1.0, vec![Ladder::Shift0])]), ext.words_matrix(&[(1.0, vec![Ladder::Shift1])])];
        Ok(TermEvaluator {
            dim: basis.dim(),
            ext,
            eta: eta.to_vec(),
            p,
            cache: Default::default(),
            ext_ops: Default::default(),
            shifts,
        })
    }

    fn link(&self, key: LinkKey) -> SparseOperator {
        if let Some(m) = self.cache.read().unwrap().get(&key) {
            return m.clone();
        }
        let (d1, d2, b1, b2, z) = key;
        let modes = self.ext.modes();
        let words: Vec<(f64, Vec<Ladder>)> = (0..modes.len())
            .map(|i| {
                let j = modes.neg(i);
                let m1 = if d1 { i } else { j };
                let m2 = if d2 { j } else { i };
                (self.eta[i].powi(z as i32), vec![ladder(d1, b1, m1), ladder(d2, b2, m2)])
            })
            .collect();
        let mat = self.ext.words_matrix(&words);
        self.cache.write().unwrap().insert(key, mat.clone());
        mat
    }

    fn external(&self, dag: bool, is_b: bool, sign: i8, s: u32) -> SparseOperator {
        let key = (dag, is_b, sign, s);
        if let Some(m) = self.ext_ops.read().unwrap().get(&key) {
            return m.clone();
        }
        let i = if sign > 0 { self.p } else { self.ext.modes().neg(self.p) };
        let c = self.eta[self.p].powi(s as i32);
        let mat = self.ext.words_matrix(&[(c, vec![ladder(dag, is_b, i)])]);
        self.ext_ops.write().unwrap().insert(key, mat.clone());
        mat
    }

    fn chain_factors(&self, daggers: &[bool], exps: &[u32], closed: bool, out: &mut Vec<SparseOperator>) {
        let len = exps.len();
        for (l, &z) in exps.iter().enumerate() {
            let last = closed && l + 1 == len;
            out.push(self.link((daggers[2 * l], daggers[2 * l + 1], l == 0, last, z)));
        }
    }

    /// Matrix of `term` on the original basis.
    pub fn evaluate(&self, term: &SymTerm) -> Result<SparseOperator> {
        shape_check(term)?;
        let mut factors = Vec::new();
        for l in &term.lambdas {
            match l {
                Lambda::Shift(c) => factors.push(self.shifts[*c as usize].clone()),
                Lambda::Pi2(c) => self.chain_factors(&c.daggers, &c.exps, true, &mut factors),
            }
        }
        let p = &term.pi1;
        let k = p.order();
        self.chain_factors(&p.daggers, &p.exps, false, &mut factors);
        factors.push(self.external(p.daggers[2 * k], k == 0, p.ext_sign, p.s));
        // multiply right to left: the rightmost factor is the sparsest
        let mut acc = factors.pop().unwrap();
        while let Some(f) = factors.pop() {
            acc = f.matmul(&acc);
        }
        let c = term.sign as f64 * (self.ext.n() as f64).powi(-(term.inverse_n_power() as i32));
        Ok(acc.principal_block(self.dim).scale(c))
    }

    /// Σ w·term as a dense matrix.
    pub fn evaluate_weighted(&self, terms: &[(SymTerm, i64)]) -> Result<DMatrix<f64>> {
        let dim = self.dim;
        terms
            .par_iter()
            .try_fold(
                || DMatrix::zeros(dim, dim),
                |mut acc, (t, w)| {
                    if *w != 0 {
                        for (r, c, v) in self.evaluate(t)?.entries() {
                            acc[(r, c)] += *w as f64 * v;
                        }
                    }
                    Ok(acc)
                },
            )
            .try_reduce(|| DMatrix::zeros(dim, dim), |a, b| Ok(a + b))
    }
}

/// One-shot evaluation of a single term.
pub fn evaluate_term(term: &SymTerm, eta: &[f64], p: &Momentum, basis: &FockBasis) -> Result<SparseOperator> {
    TermEvaluator::new(basis, eta, p)?.evaluate(term)
}

/// ad^{(k)}_B(b_p) for k = 0..=n by direct matrix commutators.
pub fn ad_matrices(basis: &FockBasis, eta: &[f64], p: &Momentum, n: usize) -> Result<Vec<SparseOperator>> {
    let b = build_b(basis, eta)?;
    let mut x = op_b(basis, p)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(x.clone());
    for _ in 0..n {
        x = b.commutator(&x);
        out.push(x.clone());
    }
    Ok(out)
}

/// e^{−B} b_p e^{B}, dense.
pub fn conjugated_annihilator(basis: &FockBasis, eta: &[f64], p: &Momentum) -> Result<DMatrix<f64>> {
    let e = exp_b(&build_b(basis, eta)?)?;
    let bp = op_b(basis, p)?.to_dense();
    Ok(e.transpose() * bp * e)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesCheck {
    /// max |Σ_{k≤n} (−1)^k/k!·ad^{(k)} − e^{−B}b_pe^{B}| for n = 0, 1, ...
    pub residuals: Vec<f64>,
    /// max |symbolic − matrix| of ad^{(k)} at each depth.
    pub engine_vs_matrix: Vec<f64>,
    pub eta_norm: f64,
}

/// Partial sums of the symbolic ad-series against the exact conjugation.
pub fn series_check(basis: &FockBasis, eta: &[f64], p: &Momentum, n_max: usize) -> Result<SeriesCheck> {
    let ev = TermEvaluator::new(basis, eta, p)?;
    let target = conjugated_annihilator(basis, eta, p)?;
    let direct = ad_matrices(basis, eta, p, n_max)?;
    let dim = basis.dim();
    let mut partial = DMatrix::zeros(dim, dim);
    let mut residuals = Vec::with_capacity(n_max + 1);
    let mut engine_vs_matrix = Vec::with_capacity(n_max + 1);
    let mut fact = 1.0;
    for k in 0..=n_max {
        if k > 0 {
            fact *= k as f64;
        }
        let ad = ev.evaluate_weighted(&expand_merged(k)?)?;
        engine_vs_matrix.push((&ad - direct[k].to_dense()).amax());
        let c = if k % 2 == 0 { 1.0 } else { -1.0 } / fact;
        partial += ad * c;
        residuals.push((&partial - &target).amax());
    }
    let eta_norm = eta.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(SeriesCheck { residuals, engine_vs_matrix, eta_norm })
}
