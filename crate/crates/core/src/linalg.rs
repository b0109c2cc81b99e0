//! Matrix exponential, Krylov exponential action and symmetric eigensolvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sparse::{LinOp, SparseOperator};

/// Dimension at or above which `lowest_eigs` switches to Lanczos.
pub const DENSE_EIG_LIMIT: usize = 2000;
/// Largest dimension for dense matrix exponentials.
pub const DENSE_EXPM_CAP: usize = 2000;

const THETA13: f64 = 5.371920351148152;
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols()).map(|c| a.column(c).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// e^A by the degree-13 Padé approximant with scaling and squaring.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let nrm = norm1(a);
    if nrm == 0.0 {
        return DMatrix::identity(n, n);
    }
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a / 2f64.powi(s);
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is singular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// e^{tA} v by Arnoldi projection with sub-stepping.
pub fn expm_action(a: &dyn LinOp, v: &[f64], t: f64, krylov_dim: usize, tol: f64) -> Vec<f64> {
    let n = a.dim();
    let m = krylov_dim.min(n).max(1);
    let mut w: Vec<f64> = v.to_vec();
    let mut remaining = t;
    let mut step = t;
    while remaining.abs() > 0.0 {
        let beta = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if beta == 0.0 {
            return w;
        }
        // Arnoldi basis
        let mut basis: Vec<Vec<f64>> = vec![w.iter().map(|x| x / beta).collect()];
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let mut k_used = m;
        let mut y = vec![0.0; n];
        for j in 0..m {
            a.apply(&basis[j], &mut y);
            for (i, q) in basis.iter().enumerate() {
                let hij: f64 = q.iter().zip(&y).map(|(a, b)| a * b).sum();
                h[(i, j)] = hij;
                y.iter_mut().zip(q).for_each(|(yy, qq)| *yy -= hij * qq);
            }
            for q in basis.iter() {
                let c: f64 = q.iter().zip(&y).map(|(a, b)| a * b).sum();
                y.iter_mut().zip(q).for_each(|(yy, qq)| *yy -= c * qq);
            }
            let hn = y.iter().map(|x| x * x).sum::<f64>().sqrt();
            h[(j + 1, j)] = hn;
            if hn < 1e-14 * beta.max(1.0) {
                k_used = j + 1;
                break;
            }
            basis.push(y.iter().map(|x| x / hn).collect());
        }
        loop {
            let hk = h.view((0, 0), (k_used, k_used)).into_owned();
            let e = expm(&(&hk * step));
            let tail = if k_used < m || k_used == n { 0.0 } else { (h[(k_used, k_used - 1)] * e[(k_used - 1, 0)]).abs() * beta };
            if tail <= tol * beta || step.abs() < 1e-8 * t.abs() {
                let mut out = vec![0.0; n];
                for (j, q) in basis.iter().take(k_used).enumerate() {
                    let c = beta * e[(j, 0)];
                    out.iter_mut().zip(q).for_each(|(o, qq)| *o += c * qq);
                }
                w = out;
                remaining -= step;
                step = if remaining.abs() < step.abs() { remaining } else { step };
                break;
            }
            step *= 0.5;
        }
    }
    w
}

/// Matrix-free e^{-B} L e^{B} for antisymmetric B.
pub struct Conjugated<'a> {
    pub l: &'a SparseOperator,
    pub b: &'a SparseOperator,
    pub krylov_dim: usize,
    pub tol: f64,
}

impl LinOp for Conjugated<'_> {
    fn dim(&self) -> usize {
        self.l.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let u = expm_action(self.b, x, 1.0, self.krylov_dim, self.tol);
        let lu = self.l.matvec(&u);
        let r = expm_action(self.b, &lu, -1.0, self.krylov_dim, self.tol);
        y.copy_from_slice(&r);
    }
}

/// All eigenvalues ascending of a dense symmetric matrix.
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

fn materialize(op: &dyn LinOp) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut y = vec![0.0; n];
    for c in 0..n {
        e[c] = 1.0;
        op.apply(&e, &mut y);
        for r in 0..n {
            m[(r, c)] = y[r];
        }
        e[c] = 0.0;
    }
    // symmetrize rounding noise of matrix-free operators
    (&m + m.transpose()) * 0.5
}

/// The m smallest eigenvalues, ascending.
pub fn lowest_eigs(op: &SparseOperator, m: usize) -> Result<Vec<f64>> {
    check_m(op.dim(), m)?;
    if op.dim() < DENSE_EIG_LIMIT {
        return Ok(dense_eigenvalues(&op.to_dense())[..m].to_vec());
    }
    lanczos(op, m, &LanczosOptions::default())
}

/// As `lowest_eigs` for a matrix-free operator.
pub fn lowest_eigs_op(op: &dyn LinOp, m: usize) -> Result<Vec<f64>> {
    check_m(op.dim(), m)?;
    if op.dim() < DENSE_EIG_LIMIT {
        return Ok(dense_eigenvalues(&materialize(op))[..m].to_vec());
    }
    lanczos(op, m, &LanczosOptions::default())
}

fn check_m(dim: usize, m: usize) -> Result<()> {
    if m > dim {
        return Err(Error::Config(format!("requested {m} eigenvalues of a {dim}-dimensional operator")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    pub max_basis: usize,
    pub tol: f64,
    pub seed: u64,
    pub max_rounds: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { max_basis: 600, tol: 1e-10, seed: 0x5eed_1a2c, max_rounds: 12 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in against {
            let c = dot(q, v);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
}

/// Lanczos with full reorthogonalization and locking of converged pairs.
///
/// Each round runs in the orthogonal complement of the locked vectors, so
/// repeated eigenvalues surface in later rounds.
pub fn lanczos(op: &dyn LinOp, m: usize, opts: &LanczosOptions) -> Result<Vec<f64>> {
    let n = op.dim();
    check_m(n, m)?;
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked_vals: Vec<f64> = Vec::new();
    let mut locked_vecs: Vec<Vec<f64>> = Vec::new();
    let mut last_residuals = Vec::new();
    for _round in 0..opts.max_rounds {
        let room = n - locked_vecs.len();
        if room == 0 {
            break;
        }
        let want = m.min(room);
        let kmax = opts.max_basis.min(room);
        let mut start: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        orthogonalize(&mut start, &locked_vecs);
        let nrm = dot(&start, &start).sqrt();
        start.iter_mut().for_each(|x| *x /= nrm);
        let mut basis = vec![start];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut y = vec![0.0; n];
        let mut found: Option<(Vec<f64>, Vec<Vec<f64>>)> = None;
        for j in 0..kmax {
            op.apply(&basis[j], &mut y);
            let a = dot(&basis[j], &y);
            alpha.push(a);
            let mut all = locked_vecs.clone();
            all.extend(basis.iter().cloned());
            orthogonalize(&mut y, &all);
            let b = dot(&y, &y).sqrt();
            let k = j + 1;
            let breakdown = b < 1e-12;
            let check = breakdown || (k >= want && (k % 5 == 0 || k == kmax));
            let want = want.min(k);
            if check {
                let mut t = DMatrix::zeros(k, k);
                for i in 0..k {
                    t[(i, i)] = alpha[i];
                    if i + 1 < k {
                        t[(i, i + 1)] = beta[i];
                        t[(i + 1, i)] = beta[i];
                    }
                }
                let eig = SymmetricEigen::new(t);
                let mut order: Vec<usize> = (0..k).collect();
                order.sort_by(|&x, &z| eig.eigenvalues[x].partial_cmp(&eig.eigenvalues[z]).unwrap());
                let res: Vec<f64> = order.iter().take(want).map(|&i| (b * eig.eigenvectors[(k - 1, i)]).abs()).collect();
                let ok = order
                    .iter()
                    .take(want)
                    .zip(&res)
                    .all(|(&i, r)| *r <= opts.tol * eig.eigenvalues[i].abs().max(1.0));
                last_residuals = res;
                if ok || b < 1e-12 {
                    let vals: Vec<f64> = order.iter().take(want).map(|&i| eig.eigenvalues[i]).collect();
                    let vecs: Vec<Vec<f64>> = order
                        .iter()
                        .take(want)
                        .map(|&i| {
                            let mut v = vec![0.0; n];
                            for (c, q) in basis.iter().enumerate() {
                                let s = eig.eigenvectors[(c, i)];
                                v.iter_mut().zip(q).for_each(|(x, y)| *x += s * y);
                            }
                            v
                        })
                        .collect();
                    found = Some((vals, vecs));
                    break;
                }
            }
            if b < 1e-12 {
                break;
            }
            beta.push(b);
            basis.push(y.iter().map(|x| x / b).collect());
        }
        let Some((vals, vecs)) = found else {
            return Err(Error::NonConvergence(last_residuals));
        };
        let round_min = vals[0];
        locked_vals.extend(vals);
        locked_vecs.extend(vecs);
        let mut sorted = locked_vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.len() >= m {
            let mth = sorted[m - 1];
            if round_min > mth + opts.tol * mth.abs().max(1.0) || locked_vecs.len() == n {
                return Ok(sorted[..m].to_vec());
            }
        }
    }
    let mut sorted = locked_vals;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.len() >= m && locked_vecs.len() == n {
        return Ok(sorted[..m].to_vec());
    }
    Err(Error::NonConvergence(last_residuals))
}

/// max |Q Qᵀ − I|.
pub fn orthogonality_defect(q: &DMatrix<f64>) -> f64 {
    let n = q.nrows();
    let p = q * q.transpose() - DMatrix::<f64>::identity(n, n);
    p.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Random vector with standard normal entries, normalized.
pub fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let nrm = DVector::from_column_slice(&v).norm();
    v.iter_mut().for_each(|x| *x /= nrm);
    v
}
