//! Friedrichs, Poincaré and Maxwell constants from the assembled spectra,
//! plus closed-form values for boxes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::complex::{assemble_operators, OperatorBundle};
use crate::domain::{diameter, enumerate_dofs, DomainKind, DomainSpec};
use crate::eigensolve::{smallest_eigenpairs_with, EigenOptions, SpectrumResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Discrete eigenvalues of the assembled operators.
    Computed,
    /// Closed-form box values; never compared against other oracle values.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Friedrichs constant `1/sqrt(lambda1)`.
    pub cp0: f64,
    /// Poincaré constant `1/sqrt(mu2)`.
    pub cp: f64,
    /// Tangential Maxwell constant.
    pub cmt: f64,
    /// Normal Maxwell constant.
    pub cmn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalues {
    /// First Dirichlet eigenvalue.
    pub lambda1: f64,
    /// Second Neumann eigenvalue.
    pub mu2: f64,
    /// Smallest eigenvalue of the tangential Maxwell operator.
    pub nu_t: f64,
    /// Smallest eigenvalue of the normal Maxwell operator.
    pub nu_n: f64,
}

impl Eigenvalues {
    pub fn constants(&self) -> Constants {
        Constants {
            cp0: 1.0 / self.lambda1.sqrt(),
            cp: 1.0 / self.mu2.sqrt(),
            cmt: 1.0 / self.nu_t.sqrt(),
            cmn: 1.0 / self.nu_n.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub lambda1: f64,
    pub mu2: f64,
    pub nu_t: f64,
    pub nu_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub tol: f64,
    pub seed: u64,
    pub matvecs: usize,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub provenance: Provenance,
    pub domain: String,
    pub kind: DomainKind,
    pub h: Option<f64>,
    pub convex: bool,
    pub constants: Constants,
    pub eigenvalues: Eigenvalues,
    pub diam_over_pi: f64,
    /// Closed-form counterpart for single boxes.
    pub analytic: Option<Box<ConstantsReport>>,
    pub residuals: Option<Residuals>,
    pub solver: Option<SolverInfo>,
}

pub fn payne_weinberger_bound(spec: &DomainSpec) -> f64 {
    diameter(spec) / PI
}

/// Closed-form eigenvalues of a box with the given sides.
///
/// The tangential Maxwell minimum is the lowest cavity mode
/// `pi^2 (1/p^2 + 1/q^2)` over the two longest sides; the normal Maxwell
/// constant equals the Poincaré constant.
pub fn analytic_box_constants(sides: [f64; 3]) -> Result<ConstantsReport> {
    if sides.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("box sides must be positive, got {sides:?}")));
    }
    let mut sorted = sides;
    sorted.sort_by(|a, b| b.total_cmp(a));
    let (p, q) = (sorted[0], sorted[1]);
    let pi2 = PI * PI;
    let lambda1 = pi2 * sides.iter().map(|s| 1.0 / (s * s)).sum::<f64>();
    let mu2 = pi2 / (p * p);
    let nu_t = pi2 * (1.0 / (p * p) + 1.0 / (q * q));
    let eigenvalues = Eigenvalues {
        lambda1,
        mu2,
        nu_t,
        nu_n: mu2,
    };
    let diam = sides.iter().map(|s| s * s).sum::<f64>().sqrt();
    Ok(ConstantsReport {
        provenance: Provenance::Oracle,
        domain: format!("box:{},{},{}", sides[0], sides[1], sides[2]),
        kind: DomainKind::Box3,
        h: None,
        convex: true,
        constants: eigenvalues.constants(),
        eigenvalues,
        diam_over_pi: diam / PI,
        analytic: None,
        residuals: None,
        solver: None,
    })
}

/// Spectra behind one report, kept for callers that need eigenvectors.
#[derive(Debug, Clone)]
pub struct Spectra {
    pub dirichlet: SpectrumResult,
    pub neumann: SpectrumResult,
    pub tangential: SpectrumResult,
    pub normal: SpectrumResult,
}

/// Constant vector on cells, the kernel of the Neumann Laplacian.
pub fn neumann_kernel(bundle: &OperatorBundle) -> Vec<f64> {
    vec![1.0; bundle.l_n.rows()]
}

/// Smallest eigenpairs of the four operators, solved concurrently.
pub fn solve_spectra(bundle: &OperatorBundle, opts: &EigenOptions) -> Result<Spectra> {
    let kernel = [neumann_kernel(bundle)];
    let ((dirichlet, neumann), (tangential, normal)) = rayon::join(
        || {
            rayon::join(
                || smallest_eigenpairs_with(&bundle.l_d, &[], opts),
                || smallest_eigenpairs_with(&bundle.l_n, &kernel, opts),
            )
        },
        || {
            rayon::join(
                || smallest_eigenpairs_with(&bundle.a_t, &[], opts),
                || smallest_eigenpairs_with(&bundle.a_n, &[], opts),
            )
        },
    );
    Ok(Spectra {
        dirichlet: dirichlet?,
        neumann: neumann?,
        tangential: tangential?,
        normal: normal?,
    })
}

pub fn compute_constants(spec: &DomainSpec, tol: f64) -> Result<ConstantsReport> {
    let opts = EigenOptions::with_k(1, tol);
    compute_constants_with(spec, &opts).map(|(r, _)| r)
}

pub fn compute_constants_with(
    spec: &DomainSpec,
    opts: &EigenOptions,
) -> Result<(ConstantsReport, Spectra)> {
    if spec.dim() != 3 {
        return Err(Error::InvalidArgument("constants need a 3D domain".into()));
    }
    let dofs = enumerate_dofs(spec)?;
    let bundle = assemble_operators(&dofs)?;
    let spectra = solve_spectra(&bundle, opts)?;
    let eigenvalues = Eigenvalues {
        lambda1: spectra.dirichlet.eigenvalues[0],
        mu2: spectra.neumann.eigenvalues[0],
        nu_t: spectra.tangential.eigenvalues[0],
        nu_n: spectra.normal.eigenvalues[0],
    };
    if [eigenvalues.lambda1, eigenvalues.mu2, eigenvalues.nu_t, eigenvalues.nu_n]
        .iter()
        .any(|&v| !(v > 0.0))
    {
        return Err(Error::ConvergenceFailure {
            message: format!("non-positive eigenvalue in {eigenvalues:?}"),
            iterations: 0,
            residual: f64::NAN,
        });
    }
    let all = [
        &spectra.dirichlet,
        &spectra.neumann,
        &spectra.tangential,
        &spectra.normal,
    ];
    let analytic = match (spec.kind, spec.box_sides()) {
        (DomainKind::Box3, Some(s)) => Some(Box::new(analytic_box_constants(s)?)),
        _ => None,
    };
    let report = ConstantsReport {
        provenance: Provenance::Computed,
        domain: spec.to_string(),
        kind: spec.kind,
        h: Some(spec.h),
        convex: spec.convex,
        constants: eigenvalues.constants(),
        eigenvalues,
        diam_over_pi: payne_weinberger_bound(spec),
        analytic,
        residuals: Some(Residuals {
            lambda1: spectra.dirichlet.residuals[0],
            mu2: spectra.neumann.residuals[0],
            nu_t: spectra.tangential.residuals[0],
            nu_n: spectra.normal.residuals[0],
        }),
        solver: Some(SolverInfo {
            tol: opts.tol,
            seed: opts.seed,
            matvecs: all.iter().map(|s| s.matvecs).sum(),
            inner_iterations: all.iter().map(|s| s.inner_iterations.iter().sum::<usize>()).sum(),
        }),
    };
    Ok((report, spectra))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_box;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn analytic_cube_pi() {
        let r = analytic_box_constants([PI; 3]).unwrap();
        let c = r.constants;
        assert!(close(c.cp0, 1.0 / 3f64.sqrt(), 1e-14));
        assert!(close(c.cmt, 1.0 / 2f64.sqrt(), 1e-14));
        assert!(close(c.cmn, 1.0, 1e-14));
        assert!(close(c.cp, 1.0, 1e-14));
        assert!(close(r.diam_over_pi, 3f64.sqrt(), 1e-14));
        assert_eq!(r.provenance, Provenance::Oracle);
    }

    #[test]
    fn analytic_brick() {
        let r = analytic_box_constants([1.0, 2.0, 3.0]).unwrap();
        let c = r.constants;
        assert!(close(c.cp0, 6.0 / (7.0 * PI), 1e-14));
        assert!(close(c.cmt, 6.0 / (PI * 13f64.sqrt()), 1e-14));
        assert!(close(c.cp, 3.0 / PI, 1e-14));
        assert_eq!(c.cmn, c.cp);
        assert!(close(r.diam_over_pi, 14f64.sqrt() / PI, 1e-14));
        assert!(analytic_box_constants([1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn analytic_values_scale_linearly() {
        let base = analytic_box_constants([1.0, 1.0, 1.0]).unwrap();
        for a in [0.5, 2.0, 7.0] {
            let r = analytic_box_constants([a; 3]).unwrap();
            assert!(close(r.constants.cp0, a * base.constants.cp0, 1e-14));
            assert!(close(r.constants.cmt, a * base.constants.cmt, 1e-14));
            assert!(close(r.constants.cmn, a * base.constants.cmn, 1e-14));
            assert!(close(r.constants.cp, a * base.constants.cp, 1e-14));
            assert!(close(r.diam_over_pi, a * base.diam_over_pi, 1e-14));
        }
    }

    #[test]
    fn payne_weinberger_values() {
        let c = make_box([PI; 3], PI / 2.0).unwrap();
        assert!(close(payne_weinberger_bound(&c), 3f64.sqrt(), 1e-14));
        let b = make_box([1.0, 2.0, 3.0], 1.0).unwrap();
        assert!(close(payne_weinberger_bound(&b), 14f64.sqrt() / PI, 1e-14));
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let spec = make_box([1.0; 3], 1.0).unwrap();
        assert!(matches!(
            compute_constants(&spec, 1e-8),
            Err(Error::ResolutionTooCoarse(_))
        ));
    }

    #[test]
    fn small_cube_report() {
        let spec = make_box([PI; 3], PI / 8.0).unwrap();
        let r = compute_constants(&spec, 1e-8).unwrap();
        let c = r.constants;
        assert!(c.cp0 < c.cp);
        assert!(c.cp0 <= c.cmt && c.cmt <= c.cmn);
        assert!((c.cmn - c.cp).abs() <= 1e-6 * c.cp);
        // Closed-form discrete spectra: (2/h sin(h/2))^2 per unit mode.
        let h = PI / 8.0;
        let s = (2.0 / h * (h / 2.0).sin()).powi(2);
        assert!(close(r.eigenvalues.lambda1, 3.0 * s, 1e-9));
        assert!(close(r.eigenvalues.mu2, s, 1e-9));
        assert!(close(r.eigenvalues.nu_t, 2.0 * s, 1e-9));
        assert!(r.analytic.is_some());
    }
}
