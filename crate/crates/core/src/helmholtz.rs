//! Discrete Helmholtz splitting of edge and face fields into a gradient part
//! and a solenoidal part, and the spectra of the two branches.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::complex::OperatorBundle;
use crate::constants::neumann_kernel;
use crate::eigensolve::{
    conjugate_gradient, dot, rayleigh_quotient, smallest_eigenpairs_projected,
    smallest_eigenpairs_with, Deflation, EigenOptions, Projector, SpectrumResult,
};
use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Relative residual of the potential solves.
pub const POTENTIAL_TOL: f64 = 1e-13;
const MAX_CG: usize = 50_000;

#[derive(Debug, Clone)]
pub struct HelmholtzSplit {
    pub field: Vec<f64>,
    pub gradient_part: Vec<f64>,
    pub solenoidal_part: Vec<f64>,
    /// Node potential (tangential) or cell potential (normal).
    pub potential: Vec<f64>,
    /// `|<gradient part, solenoidal part>|`.
    pub orthogonality_defect: f64,
    pub cg_iterations: usize,
}

fn split(
    field: &[f64],
    lift: &SparseOperator,
    divergence: &SparseOperator,
    laplacian: &SparseOperator,
    kernel: &Deflation,
) -> Result<HelmholtzSplit> {
    if field.len() != lift.rows() {
        return Err(Error::InvalidArgument(format!(
            "field has length {}, expected {}",
            field.len(),
            lift.rows()
        )));
    }
    let rhs = divergence.mul_vec(field);
    let sol = conjugate_gradient(laplacian, &rhs, kernel, None, POTENTIAL_TOL, MAX_CG)?;
    let gradient_part = lift.mul_vec(&sol.x);
    let solenoidal_part: Vec<f64> = field.iter().zip(&gradient_part).map(|(e, g)| e - g).collect();
    let orthogonality_defect = dot(&gradient_part, &solenoidal_part).abs();
    Ok(HelmholtzSplit {
        field: field.to_vec(),
        gradient_part,
        solenoidal_part,
        potential: sol.x,
        orthogonality_defect,
        cg_iterations: sol.iterations,
    })
}

/// Splits a tangential-zero edge field `E = G phi + E_rot`.
pub fn split_tangential(field: &[f64], bundle: &OperatorBundle) -> Result<HelmholtzSplit> {
    split(
        field,
        &bundle.g_hat,
        &bundle.g_hat.transpose(),
        &bundle.l_d,
        &Deflation::default(),
    )
}

/// Splits a normal-zero face field `H = D^T u + H_rot`.
pub fn split_normal(field: &[f64], bundle: &OperatorBundle) -> Result<HelmholtzSplit> {
    split(
        field,
        &bundle.d_act.transpose(),
        &bundle.d_act,
        &bundle.l_n,
        &Deflation::new(&[neumann_kernel(bundle)]),
    )
}

/// Projection onto the kernel of the weak divergence `lift^T`.
pub struct SolenoidalProjector {
    lift: SparseOperator,
    divergence: SparseOperator,
    laplacian: SparseOperator,
    kernel: Deflation,
}

impl SolenoidalProjector {
    pub fn tangential(bundle: &OperatorBundle) -> Self {
        SolenoidalProjector {
            lift: bundle.g_hat.clone(),
            divergence: bundle.g_hat.transpose(),
            laplacian: bundle.l_d.clone(),
            kernel: Deflation::default(),
        }
    }

    pub fn normal(bundle: &OperatorBundle) -> Self {
        SolenoidalProjector {
            lift: bundle.d_act.transpose(),
            divergence: bundle.d_act.clone(),
            laplacian: bundle.l_n.clone(),
            kernel: Deflation::new(&[neumann_kernel(bundle)]),
        }
    }

    pub fn project(&self, x: &mut [f64]) -> Result<()> {
        let rhs = self.divergence.mul_vec(x);
        let sol = conjugate_gradient(&self.laplacian, &rhs, &self.kernel, None, POTENTIAL_TOL, MAX_CG)?;
        let g = self.lift.mul_vec(&sol.x);
        x.iter_mut().zip(&g).for_each(|(v, gi)| *v -= gi);
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchMinima {
    /// Smallest Rayleigh quotient over gradient fields.
    pub gradient: f64,
    /// Smallest Rayleigh quotient over solenoidal fields.
    pub solenoidal: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchBounds {
    pub tangential: BranchMinima,
    pub normal: BranchMinima,
}

/// Smallest eigenpairs of `a` on the solenoidal branch, by projected Lanczos.
pub fn solenoidal_eigenpairs(
    a: &SparseOperator,
    projector: &SolenoidalProjector,
    opts: &EigenOptions,
) -> Result<SpectrumResult> {
    let p = |x: &mut [f64]| projector.project(x);
    let p: Projector<'_> = &p;
    smallest_eigenpairs_projected(a, p, &[], opts)
}

/// Minimum Rayleigh quotients of `A_t` and `A_n` on each branch.
///
/// Gradient branches are the lifts of the lowest Dirichlet and nonzero
/// Neumann eigenvectors; solenoidal branches are solved directly.
pub fn branch_rayleigh_bounds(bundle: &OperatorBundle, opts: &EigenOptions) -> Result<BranchBounds> {
    let single = EigenOptions { k: 1, ..opts.clone() };
    let dirichlet = smallest_eigenpairs_with(&bundle.l_d, &[], &single)?;
    let neumann = smallest_eigenpairs_with(&bundle.l_n, &[neumann_kernel(bundle)], &single)?;
    let e = bundle.g_hat.mul_vec(&dirichlet.eigenvectors[0]);
    let h = bundle.d_act.transpose().mul_vec(&neumann.eigenvectors[0]);
    let tangential_grad = rayleigh_quotient(&bundle.a_t, &e)?;
    let normal_grad = rayleigh_quotient(&bundle.a_n, &h)?;
    let tangential_sol =
        solenoidal_eigenpairs(&bundle.a_t, &SolenoidalProjector::tangential(bundle), &single)?;
    let normal_sol = solenoidal_eigenpairs(&bundle.a_n, &SolenoidalProjector::normal(bundle), &single)?;
    Ok(BranchBounds {
        tangential: BranchMinima {
            gradient: tangential_grad,
            solenoidal: tangential_sol.eigenvalues[0],
        },
        normal: BranchMinima {
            gradient: normal_grad,
            solenoidal: normal_sol.eigenvalues[0],
        },
    })
}

/// Full solenoidal-branch spectrum of `a` by dense linear algebra.
///
/// Builds the orthogonal projector `P = I - B B^+` onto `ker B^T`, where `B`
/// is the gradient lift, and returns the spectrum of `P A P` with the
/// `rank(B)` eigenvalues belonging to the gradient range removed. The
/// removed values are returned second; they vanish up to rounding.
pub fn solenoidal_spectrum_dense(
    a: &SparseOperator,
    lift: &SparseOperator,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let b = lift.to_dense();
    let svd = b.clone().svd(true, false);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax).count();
    let u = svd.u.ok_or_else(|| Error::InvalidArgument("SVD failed".into()))?;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
        .collect();
    let ur = u.select_columns(&keep);
    let n = a.rows();
    let p = DMatrix::<f64>::identity(n, n) - &ur * ur.transpose();
    let ad = a.to_dense();
    let pap = &p * ad * &p;
    let pap = (&pap + pap.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(pap).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let rest = eig.split_off(rank);
    Ok((rest, eig))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::assemble_operators;
    use crate::domain::{enumerate_dofs, make_box};
    use crate::eigensolve::norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn bundle(sides: [f64; 3], h: f64) -> OperatorBundle {
        assemble_operators(&enumerate_dofs(&make_box(sides, h).unwrap()).unwrap()).unwrap()
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn pure_gradient_has_no_solenoidal_part() {
        let b = bundle([1.0; 3], 0.25);
        let phi = random(b.g_hat.cols(), 1);
        let e = b.g_hat.mul_vec(&phi);
        let s = split_tangential(&e, &b).unwrap();
        assert!(norm(&s.solenoidal_part) <= 1e-10 * norm(&e));
        let u = random(b.l_n.rows(), 2);
        let h = b.d_act.transpose().mul_vec(&u);
        let s = split_normal(&h, &b).unwrap();
        assert!(norm(&s.solenoidal_part) <= 1e-10 * norm(&h));
    }

    #[test]
    fn pure_solenoidal_has_no_gradient_part() {
        let b = bundle([1.0; 3], 0.25);
        // Curls of face fields are divergence free on interior edges.
        let psi = random(b.w_n.cols(), 3);
        let e = b.w_n.mul_vec(&psi);
        assert!(norm(&b.g_hat.transpose().mul_vec(&e)) <= 1e-12 * norm(&e));
        let s = split_tangential(&e, &b).unwrap();
        assert!(norm(&s.gradient_part) <= 1e-10 * norm(&e));
        let a = random(b.w_n.rows(), 4);
        let h = b.w_n.transpose().mul_vec(&a);
        assert!(norm(&b.d_act.mul_vec(&h)) <= 1e-12 * norm(&h));
        let s = split_normal(&h, &b).unwrap();
        assert!(norm(&s.gradient_part) <= 1e-10 * norm(&h));
    }

    #[test]
    fn random_field_pythagoras() {
        let b = bundle([1.0; 3], 0.25);
        let e = random(b.a_t.rows(), 5);
        let s = split_tangential(&e, &b).unwrap();
        let lhs = dot(&e, &e);
        let rhs = dot(&s.gradient_part, &s.gradient_part) + dot(&s.solenoidal_part, &s.solenoidal_part);
        assert!((lhs - rhs).abs() <= 1e-10 * lhs);
        assert!(s.orthogonality_defect <= 1e-10 * lhs);
        // Divergence moves entirely to the gradient part, curl to the rest.
        let div_rot = b.g_hat.transpose().mul_vec(&s.solenoidal_part);
        assert!(norm(&div_rot) <= 1e-10 * norm(&b.g_hat.transpose().mul_vec(&e)));
        let curl_grad = b.c_t.mul_vec(&s.gradient_part);
        assert!(norm(&curl_grad) <= 1e-10 * norm(&e));
    }

    #[test]
    fn wrong_length_is_rejected() {
        let b = bundle([1.0; 3], 0.5);
        assert!(split_tangential(&[1.0], &b).is_err());
    }

    #[test]
    fn branch_minima_on_cube() {
        let b = bundle([PI; 3], PI / 8.0);
        let bounds = branch_rayleigh_bounds(&b, &EigenOptions::default()).unwrap();
        let h = PI / 8.0;
        let s = (2.0 / h * (h / 2.0).sin()).powi(2);
        let ld = smallest_eigenpairs_with(&b.l_d, &[], &EigenOptions::default()).unwrap();
        assert!((bounds.tangential.gradient - ld.eigenvalues[0]).abs() <= 1e-8 * ld.eigenvalues[0]);
        assert!((bounds.tangential.gradient - 3.0 * s).abs() < 1e-8);
        assert!((bounds.tangential.solenoidal - 2.0 * s).abs() < 1e-8);
        assert!((bounds.normal.gradient - s).abs() < 1e-8);
        assert!((bounds.normal.solenoidal - 2.0 * s).abs() < 1e-8);
    }

    #[test]
    fn dense_solenoidal_spectrum_drops_the_gradient_range() {
        let b = bundle([1.0; 3], 0.25);
        let (sol, dropped) = solenoidal_spectrum_dense(&b.a_t, &b.g_hat).unwrap();
        assert_eq!(dropped.len(), b.l_d.rows());
        assert!(dropped.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(sol.len() + b.l_d.rows(), b.a_t.rows());
        assert!(sol[0] > 1.0);
    }
}
