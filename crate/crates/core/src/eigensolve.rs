//! Smallest eigenpairs of symmetric positive semidefinite operators.
//!
//! Large problems use shift-invert Lanczos at shift zero: each Lanczos step
//! applies `A^{-1}` through a conjugate-gradient solve, with full
//! reorthogonalization. A known kernel is removed by projecting against the
//! deflation vectors. Converged pairs are locked and the iteration restarts
//! in their orthogonal complement, which recovers repeated eigenvalues one
//! copy at a time. Small problems fall back to a dense decomposition.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 0x5eed_2013;
/// Problems up to this dimension are solved densely under `Method::Auto`.
pub const DENSE_LIMIT: usize = 200;

const CHUNK: usize = 8192;

/// Dot product with a fixed reduction order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() < 2 * CHUNK {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if y.len() < 2 * CHUNK {
        y.iter_mut().zip(x).for_each(|(b, a)| *b += alpha * a);
    } else {
        y.par_chunks_mut(CHUNK)
            .zip(x.par_chunks(CHUNK))
            .for_each(|(yc, xc)| yc.iter_mut().zip(xc).for_each(|(b, a)| *b += alpha * a));
    }
}

fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

/// Anything that can be applied to a vector.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.cols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        SparseOperator::apply(self, x, y)
    }
}

/// In-place projection onto an invariant subspace of the operator.
pub type Projector<'a> = &'a (dyn Fn(&mut [f64]) -> Result<()> + Sync);

/// Orthonormal basis of a subspace, removed from every iterate.
#[derive(Debug, Clone, Default)]
pub struct Deflation {
    basis: Vec<Vec<f64>>,
}

impl Deflation {
    /// Orthonormalizes the given vectors, dropping dependent ones.
    pub fn new(vectors: &[Vec<f64>]) -> Self {
        let mut d = Deflation::default();
        for v in vectors {
            d.push(v.clone());
        }
        d
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn push(&mut self, mut v: Vec<f64>) {
        let n0 = norm(&v);
        if n0 == 0.0 {
            return;
        }
        self.project(&mut v);
        self.project(&mut v);
        let n = norm(&v);
        if n > 1e-10 * n0 {
            scale(1.0 / n, &mut v);
            self.basis.push(v);
        }
    }

    pub fn project(&self, x: &mut [f64]) {
        for q in &self.basis {
            let c = dot(q, x);
            axpy(-c, q, x);
        }
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` on the complement of `deflation` (and the range of
/// `projector`, when given). `A` must be positive definite there.
pub fn conjugate_gradient(
    a: &dyn LinearOperator,
    b: &[f64],
    deflation: &Deflation,
    projector: Option<Projector<'_>>,
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    let n = a.dim();
    let project = |v: &mut [f64]| -> Result<()> {
        if let Some(p) = projector {
            p(v)?;
        }
        deflation.project(v);
        Ok(())
    };
    let mut r = b.to_vec();
    project(&mut r)?;
    let bnorm = norm(&r);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgSolution {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut p = r.clone();
    let mut q = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 1..=max_iter {
        a.apply(&p, &mut q);
        if !deflation.is_empty() {
            deflation.project(&mut q);
        }
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::ConvergenceFailure {
                message: "conjugate gradient breakdown: operator not positive definite".into(),
                iterations: it,
                residual: rr.sqrt() / bnorm,
            });
        }
        let alpha = rr / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * bnorm {
            project(&mut x)?;
            return Ok(CgSolution {
                x,
                iterations: it,
                relative_residual: rr_new.sqrt() / bnorm,
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
    }
    Err(Error::ConvergenceFailure {
        message: "conjugate gradient stagnated".into(),
        iterations: max_iter,
        residual: rr.sqrt() / bnorm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Auto,
    Lanczos,
    Dense,
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub k: usize,
    pub tol: f64,
    pub seed: u64,
    pub method: Method,
    /// Lanczos basis size before an explicit restart.
    pub max_basis: usize,
    pub max_restarts: usize,
    /// Relative residual target of the inner solves.
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            k: 1,
            tol: DEFAULT_TOL,
            seed: DEFAULT_SEED,
            method: Method::Auto,
            max_basis: 120,
            max_restarts: 30,
            inner_tol: 1e-13,
            max_inner: 20_000,
        }
    }
}

impl EigenOptions {
    pub fn with_k(k: usize, tol: f64) -> Self {
        EigenOptions {
            k,
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unit-norm, aligned with `eigenvalues`.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
    pub matvecs: usize,
    /// Iterations of every inner solve, in order.
    pub inner_iterations: Vec<usize>,
    pub seed: u64,
    pub method: Method,
}

struct Counting<'a> {
    op: &'a dyn LinearOperator,
    count: AtomicUsize,
}

impl LinearOperator for Counting<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.op.apply(x, y)
    }
}

/// `P A P` for the orthogonal projector `P` onto the complement of a
/// deflation space.
struct Restricted<'a> {
    op: &'a dyn LinearOperator,
    deflation: &'a Deflation,
}

impl LinearOperator for Restricted<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if self.deflation.is_empty() {
            return self.op.apply(x, y);
        }
        let mut px = x.to_vec();
        self.deflation.project(&mut px);
        self.op.apply(&px, y);
        self.deflation.project(y);
    }
}

pub fn rayleigh_quotient(a: &dyn LinearOperator, x: &[f64]) -> Result<f64> {
    let xx = dot(x, x);
    if xx == 0.0 {
        return Err(Error::InvalidArgument("Rayleigh quotient of zero vector".into()));
    }
    let mut y = vec![0.0; a.dim()];
    a.apply(x, &mut y);
    Ok(dot(x, &y) / xx)
}

/// `||A x - lambda x||`.
pub fn residual(a: &dyn LinearOperator, lambda: f64, x: &[f64]) -> f64 {
    let mut y = vec![0.0; a.dim()];
    a.apply(x, &mut y);
    axpy(-lambda, x, &mut y);
    norm(&y)
}

fn check_request(a: &SparseOperator, k: usize, deflation: &[Vec<f64>], tol: f64) -> Result<()> {
    if a.rows() != a.cols() || !a.is_symmetric() {
        return Err(Error::InvalidArgument("operator is not symmetric".into()));
    }
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} outside (0, 1e-4]")));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if deflation.iter().any(|v| v.len() != a.rows()) {
        return Err(Error::InvalidArgument("deflation vector has wrong length".into()));
    }
    Ok(())
}

/// k smallest eigenpairs of `a` on the orthogonal complement of `deflation`.
pub fn smallest_eigenpairs(
    a: &SparseOperator,
    k: usize,
    deflation: &[Vec<f64>],
    tol: f64,
) -> Result<SpectrumResult> {
    smallest_eigenpairs_with(a, deflation, &EigenOptions::with_k(k, tol))
}

pub fn smallest_eigenpairs_with(
    a: &SparseOperator,
    deflation: &[Vec<f64>],
    opts: &EigenOptions,
) -> Result<SpectrumResult> {
    check_request(a, opts.k, deflation, opts.tol)?;
    solve(a, &Deflation::new(deflation), None, opts)
}

/// k smallest eigenpairs of `a` restricted to the range of `projector`.
///
/// The projector must commute with `a`; it is applied to every Lanczos
/// vector and inner-solve iterate.
pub fn smallest_eigenpairs_projected(
    a: &SparseOperator,
    projector: Projector<'_>,
    deflation: &[Vec<f64>],
    opts: &EigenOptions,
) -> Result<SpectrumResult> {
    check_request(a, opts.k, deflation, opts.tol)?;
    solve(a, &Deflation::new(deflation), Some(projector), opts)
}

fn solve(
    a: &dyn LinearOperator,
    deflation: &Deflation,
    projector: Option<Projector<'_>>,
    opts: &EigenOptions,
) -> Result<SpectrumResult> {
    let n = a.dim();
    let free = n.saturating_sub(deflation.len());
    if opts.k > free {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the active dimension {free}",
            opts.k
        )));
    }
    let dense = match opts.method {
        Method::Dense => true,
        Method::Lanczos => false,
        Method::Auto => n <= DENSE_LIMIT,
    };
    let counting = Counting {
        op: a,
        count: AtomicUsize::new(0),
    };
    let mut result = if dense {
        dense_pairs(&counting, deflation, projector, opts)?
    } else {
        lanczos_pairs(&counting, deflation, projector, opts)?
    };
    result.matvecs = counting.count.load(Ordering::Relaxed);
    Ok(result)
}

fn dense_pairs(
    a: &dyn LinearOperator,
    deflation: &Deflation,
    projector: Option<Projector<'_>>,
    opts: &EigenOptions,
) -> Result<SpectrumResult> {
    let n = a.dim();
    let mut amat = DMatrix::zeros(n, n);
    let mut pmat = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e.fill(0.0);
        e[j] = 1.0;
        a.apply(&e, &mut col);
        amat.set_column(j, &nalgebra::DVector::from_column_slice(&col));
        if let Some(p) = projector {
            p(&mut e)?;
        }
        deflation.project(&mut e);
        pmat.set_column(j, &nalgebra::DVector::from_column_slice(&e));
    }
    let amat = (&amat + amat.transpose()) * 0.5;
    let pmat = (&pmat + pmat.transpose()) * 0.5;
    let peig = SymmetricEigen::new(pmat);
    let keep: Vec<usize> = (0..n).filter(|&i| peig.eigenvalues[i] > 0.5).collect();
    if opts.k > keep.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the active dimension {}",
            opts.k,
            keep.len()
        )));
    }
    let basis = peig.eigenvectors.select_columns(&keep);
    let reduced = basis.transpose() * &amat * &basis;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut out = SpectrumResult {
        eigenvalues: Vec::new(),
        eigenvectors: Vec::new(),
        residuals: Vec::new(),
        converged: Vec::new(),
        matvecs: 0,
        inner_iterations: Vec::new(),
        seed: opts.seed,
        method: Method::Dense,
    };
    for &i in order.iter().take(opts.k) {
        let v = &basis * eig.eigenvectors.column(i);
        let mut x: Vec<f64> = v.iter().copied().collect();
        let nx = norm(&x);
        scale(1.0 / nx, &mut x);
        let lambda = eig.eigenvalues[i];
        let res = residual(&Restricted { op: a, deflation }, lambda, &x);
        out.converged.push(res <= opts.tol * lambda.max(1.0));
        out.eigenvalues.push(lambda);
        out.residuals.push(res);
        out.eigenvectors.push(x);
    }
    Ok(out)
}

fn random_start(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

struct Ritz {
    lambda: f64,
    vector: Vec<f64>,
    residual: f64,
}

fn lanczos_pairs(
    a: &dyn LinearOperator,
    deflation: &Deflation,
    projector: Option<Projector<'_>>,
    opts: &EigenOptions,
) -> Result<SpectrumResult> {
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked = deflation.clone();
    let restricted = Restricted { op: a, deflation };
    let mut out = SpectrumResult {
        eigenvalues: Vec::new(),
        eigenvectors: Vec::new(),
        residuals: Vec::new(),
        converged: Vec::new(),
        matvecs: 0,
        inner_iterations: Vec::new(),
        seed: opts.seed,
        method: Method::Lanczos,
    };
    let project = |v: &mut [f64], locked: &Deflation| -> Result<()> {
        if let Some(p) = projector {
            p(v)?;
        }
        locked.project(v);
        Ok(())
    };

    while out.eigenvalues.len() < opts.k {
        let mut start = random_start(n, &mut rng);
        let mut found = None;
        let mut best: Option<Ritz> = None;
        for _restart in 0..=opts.max_restarts {
            project(&mut start, &locked)?;
            let (ritz, done) = lanczos_run(
                a,
                &restricted,
                &locked,
                projector,
                &start,
                opts,
                &mut out.inner_iterations,
            )?;
            if done {
                found = Some(ritz);
                break;
            }
            start = ritz.vector.clone();
            if best.as_ref().map_or(true, |b| ritz.residual < b.residual) {
                best = Some(ritz);
            }
        }
        let Some(ritz) = found else {
            let b = best.expect("at least one Lanczos run");
            return Err(Error::ConvergenceFailure {
                message: format!(
                    "Lanczos did not converge for eigenpair {} (best lambda {})",
                    out.eigenvalues.len() + 1,
                    b.lambda
                ),
                iterations: opts.max_restarts + 1,
                residual: b.residual,
            });
        };
        locked.push(ritz.vector.clone());
        out.eigenvalues.push(ritz.lambda);
        out.residuals.push(ritz.residual);
        out.converged.push(true);
        out.eigenvectors.push(ritz.vector);
    }

    let mut order: Vec<usize> = (0..out.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| out.eigenvalues[i].total_cmp(&out.eigenvalues[j]));
    out.eigenvalues = order.iter().map(|&i| out.eigenvalues[i]).collect();
    out.residuals = order.iter().map(|&i| out.residuals[i]).collect();
    out.eigenvectors = order.iter().map(|&i| out.eigenvectors[i].clone()).collect();
    Ok(out)
}

/// One Lanczos run on `A^{-1}`. Returns the Ritz pair for the smallest
/// eigenvalue of `A` and whether it met the tolerance.
fn lanczos_run(
    a: &dyn LinearOperator,
    restricted: &dyn LinearOperator,
    locked: &Deflation,
    projector: Option<Projector<'_>>,
    start: &[f64],
    opts: &EigenOptions,
    inner: &mut Vec<usize>,
) -> Result<(Ritz, bool)> {
    let n = a.dim();
    let free = n - locked.len();
    let max_m = opts.max_basis.min(free).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_m);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut v = start.to_vec();
    let nv = norm(&v);
    if nv == 0.0 {
        return Err(Error::ConvergenceFailure {
            message: "start vector vanished after projection".into(),
            iterations: 0,
            residual: f64::NAN,
        });
    }
    scale(1.0 / nv, &mut v);
    basis.push(v);

    loop {
        let j = basis.len() - 1;
        let sol = conjugate_gradient(a, &basis[j], locked, projector, opts.inner_tol, opts.max_inner)?;
        inner.push(sol.iterations);
        let mut w = sol.x;
        if let Some(p) = projector {
            p(&mut w)?;
        }
        let alpha = dot(&w, &basis[j]);
        alphas.push(alpha);
        // Full reorthogonalization, twice.
        for _ in 0..2 {
            locked.project(&mut w);
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let beta = norm(&w);
        let m = basis.len();
        let exhausted = m >= max_m || beta <= 1e-14 * alpha.abs().max(f64::MIN_POSITIVE);
        if (m >= 2 && m % 2 == 0) || exhausted {
            let ritz = smallest_ritz(restricted, &basis, &alphas, &betas)?;
            let ok = ritz.residual <= opts.tol * ritz.lambda.abs().max(1.0);
            if ok || exhausted {
                return Ok((ritz, ok));
            }
        }
        betas.push(beta);
        scale(1.0 / beta, &mut w);
        basis.push(w);
    }
}

/// Ritz pair of `A` for the largest Ritz value of `A^{-1}`.
fn smallest_ritz(
    a: &dyn LinearOperator,
    basis: &[Vec<f64>],
    alphas: &[f64],
    betas: &[f64],
) -> Result<Ritz> {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let top = (0..m)
        .max_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]))
        .unwrap();
    let y = eig.eigenvectors.column(top);
    let n = basis[0].len();
    let mut x = vec![0.0; n];
    for (i, q) in basis.iter().enumerate().take(m) {
        axpy(y[i], q, &mut x);
    }
    let nx = norm(&x);
    scale(1.0 / nx, &mut x);
    let lambda = rayleigh_quotient(a, &x)?;
    let res = residual(a, lambda, &x);
    Ok(Ritz {
        lambda,
        vector: x,
        residual: res,
    })
}

/// All eigenvalues of a small symmetric operator, ascending.
pub fn dense_spectrum(a: &SparseOperator) -> Vec<f64> {
    let d = a.to_dense();
    let d = (&d + d.transpose()) * 0.5;
    let mut v: Vec<f64> = SymmetricEigen::new(d).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}
