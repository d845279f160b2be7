//! Discrete de Rham operators on the staggered grid.
//!
//! Gradient, curl and divergence are coboundary maps between nodes, edges,
//! faces and cells. Boundary conditions are imposed by dropping boundary
//! DOFs: tangential-zero edge fields live on interior edges, normal-zero face
//! fields on interior faces, Dirichlet potentials on interior nodes.

use serde::Serialize;

use crate::domain::{degree, DofSets, EntitySet};
use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Active,
    Interior,
}

/// Maps an active index to its position within the selection.
fn selected_index(set: &EntitySet, sel: Selection, active: usize) -> Option<usize> {
    match sel {
        Selection::Active => Some(active),
        Selection::Interior => set.interior_index[active],
    }
}

fn selected_len(set: &EntitySet, sel: Selection) -> usize {
    match sel {
        Selection::Active => set.len(),
        Selection::Interior => set.interior_len(),
    }
}

fn selected_active(set: &EntitySet, sel: Selection) -> Vec<usize> {
    match sel {
        Selection::Active => (0..set.len()).collect(),
        Selection::Interior => set.interior_to_active.clone(),
    }
}

/// Orientation of an entity relative to the cubical convention. 3D faces
/// with a y normal are flipped so that every face is oriented by its normal.
fn orientation(p: [i64; 3], dim: usize) -> i64 {
    if dim == 3 && degree(p) == 2 && p[1] % 2 == 0 {
        -1
    } else {
        1
    }
}

/// Coboundary from k-entities to (k+1)-entities, restricted to the given
/// selections, with coefficients ±1 and metric factor 1/h.
pub fn coboundary(dofs: &DofSets, k: usize, src: Selection, dst: Selection) -> SparseOperator {
    let src_set = &dofs.sets[k];
    let dst_set = &dofs.sets[k + 1];
    let rows = selected_active(dst_set, dst);
    let mut trip = Vec::with_capacity(rows.len() * 2 * (k + 1));
    for (row, &active) in rows.iter().enumerate() {
        let sigma = dst_set.positions[active];
        let o_sigma = orientation(sigma, dofs.dim);
        let mut j = 0;
        for a in 0..dofs.dim {
            if sigma[a] % 2 == 0 {
                continue;
            }
            let sign = if j % 2 == 0 { 1 } else { -1 };
            j += 1;
            for (d, s) in [(1i64, sign), (-1, -sign)] {
                let mut tau = sigma;
                tau[a] += d;
                let Some(ta) = dofs.index_of(tau) else { continue };
                if let Some(col) = selected_index(src_set, src, ta) {
                    trip.push((row, col, s * o_sigma * orientation(tau, dofs.dim)));
                }
            }
        }
    }
    SparseOperator::from_triplets(
        rows.len(),
        selected_len(src_set, src),
        trip,
        1.0 / dofs.h,
    )
}

fn require_3d(dofs: &DofSets) -> Result<()> {
    if dofs.dim != 3 {
        return Err(Error::InvalidArgument("operator needs a 3D grid".into()));
    }
    Ok(())
}

/// Gradient of Dirichlet potentials: interior nodes to interior edges.
pub fn build_gradient(dofs: &DofSets) -> Result<SparseOperator> {
    require_3d(dofs)?;
    if dofs.nodes().interior_len() == 0 {
        return Err(Error::EmptyOperator("no interior nodes".into()));
    }
    Ok(coboundary(dofs, 0, Selection::Interior, Selection::Interior))
}

/// Strong curl of tangential-zero fields (interior edges to all faces) and
/// the weak curl of face fields (interior faces to interior edges).
pub fn build_curl(dofs: &DofSets) -> Result<(SparseOperator, SparseOperator)> {
    require_3d(dofs)?;
    if dofs.edges().interior_len() == 0 {
        return Err(Error::EmptyOperator("no interior edges".into()));
    }
    if dofs.faces().interior_len() == 0 {
        return Err(Error::EmptyOperator("no interior faces".into()));
    }
    let c_t = coboundary(dofs, 1, Selection::Interior, Selection::Active);
    let w_n = c_t.select_rows(&dofs.faces().interior_to_active).transpose();
    Ok((c_t, w_n))
}

/// Strong divergence of normal-zero fields: interior faces to cells.
pub fn build_divergence(dofs: &DofSets) -> Result<SparseOperator> {
    require_3d(dofs)?;
    Ok(coboundary(dofs, 2, Selection::Interior, Selection::Active))
}

/// The four operators whose smallest eigenvalues give the constants,
/// together with the differential operators they are built from.
#[derive(Debug, Clone)]
pub struct OperatorBundle {
    pub g_hat: SparseOperator,
    pub c_t: SparseOperator,
    pub w_n: SparseOperator,
    pub d_act: SparseOperator,
    /// `C_t^T C_t + G G^T` on interior edges.
    pub a_t: SparseOperator,
    /// `W_n^T W_n + D^T D` on interior faces.
    pub a_n: SparseOperator,
    /// Dirichlet Laplacian on interior nodes.
    pub l_d: SparseOperator,
    /// Neumann Laplacian on cells.
    pub l_n: SparseOperator,
}

pub fn assemble_operators(dofs: &DofSets) -> Result<OperatorBundle> {
    require_3d(dofs)?;
    let coarse = |e: Error| match e {
        Error::EmptyOperator(m) => Error::ResolutionTooCoarse(m),
        other => other,
    };
    let g_hat = build_gradient(dofs).map_err(coarse)?;
    let (c_t, w_n) = build_curl(dofs).map_err(coarse)?;
    let d_act = build_divergence(dofs)?;
    let g_t = g_hat.transpose();
    let d_t = d_act.transpose();
    let a_t = c_t.transpose().matmul(&c_t)?.add(&g_hat.matmul(&g_t)?)?;
    let a_n = w_n.transpose().matmul(&w_n)?.add(&d_t.matmul(&d_act)?)?;
    let l_d = g_t.matmul(&g_hat)?;
    let l_n = d_act.matmul(&d_t)?;
    Ok(OperatorBundle {
        g_hat,
        c_t,
        w_n,
        d_act,
        a_t,
        a_n,
        l_d,
        l_n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExactnessReport {
    /// Largest |coefficient| of `C_t G`.
    pub curl_grad: i64,
    /// Largest |coefficient| of `W_n D^T`.
    pub weak_curl_div: i64,
    /// Largest |A - A^T| over the four assembled operators.
    pub asymmetry: i64,
}

/// Verifies the complex identities in integer arithmetic.
pub fn exactness_check(bundle: &OperatorBundle) -> Result<ExactnessReport> {
    let curl_grad = bundle.c_t.matmul(&bundle.g_hat)?.max_abs_coeff();
    let weak_curl_div = bundle.w_n.matmul(&bundle.d_act.transpose())?.max_abs_coeff();
    let asymmetry = [&bundle.a_t, &bundle.a_n, &bundle.l_d, &bundle.l_n]
        .iter()
        .map(|a| a.asymmetry())
        .max()
        .unwrap_or(0);
    if curl_grad != 0 {
        return Err(Error::ExactnessViolation {
            identity: "curl * grad".into(),
            max_abs: curl_grad,
        });
    }
    if weak_curl_div != 0 {
        return Err(Error::ExactnessViolation {
            identity: "weak curl * div^T".into(),
            max_abs: weak_curl_div,
        });
    }
    if asymmetry != 0 {
        return Err(Error::ExactnessViolation {
            identity: "symmetry".into(),
            max_abs: asymmetry,
        });
    }
    Ok(ExactnessReport {
        curl_grad,
        weak_curl_div,
        asymmetry,
    })
}

/// 2D complex on a rectangle.
#[derive(Debug, Clone)]
pub struct Complex2d {
    /// Interior nodes to interior edges.
    pub g2: SparseOperator,
    /// Scalar curl: interior edges to cells.
    pub c2: SparseOperator,
    /// Quarter turn from interior edges to interior faces, `(Ex, Ey) -> (-Ey, Ex)`.
    pub r90: SparseOperator,
    /// Weak divergence: interior faces to cells, the transpose of the
    /// cell-to-face gradient.
    pub d2: SparseOperator,
    /// Doubled position and normal axis of each interior face.
    pub faces: Vec<([i64; 3], usize)>,
}

/// Builds the 2D complex. Faces of a 2D grid sit at edge midpoints: an
/// x-normal face coincides with a y-edge and vice versa.
pub fn build_2d_complex(dofs: &DofSets) -> Result<Complex2d> {
    if dofs.dim != 2 {
        return Err(Error::InvalidArgument("2D complex needs a 2D grid".into()));
    }
    let edges = dofs.edges();
    if dofs.nodes().interior_len() == 0 {
        return Err(Error::EmptyOperator("no interior nodes".into()));
    }
    let g2 = coboundary(dofs, 0, Selection::Interior, Selection::Interior);
    let c2 = coboundary(dofs, 1, Selection::Interior, Selection::Active);

    // x-normal faces first (y-edge carriers), then y-normal faces.
    let mut faces = Vec::new();
    let mut r90_trip = Vec::new();
    for (normal, carrier_axis, sign) in [(0usize, 1usize, -1i64), (1, 0, 1)] {
        for (ii, &active) in edges.interior_to_active.iter().enumerate() {
            let p = edges.positions[active];
            if p[carrier_axis] % 2 == 1 {
                r90_trip.push((faces.len(), ii, sign));
                faces.push((p, normal));
            }
        }
    }
    let n_int = edges.interior_len();
    let r90 = SparseOperator::from_triplets(faces.len(), n_int, r90_trip, 1.0);

    let cells = dofs.cells();
    let mut grad_trip = Vec::new();
    for (row, &(p, normal)) in faces.iter().enumerate() {
        for (d, s) in [(1i64, 1i64), (-1, -1)] {
            let mut q = p;
            q[normal] += d;
            if let Some(c) = dofs.index_of(q) {
                grad_trip.push((row, c, s));
            }
        }
    }
    let grad_dual =
        SparseOperator::from_triplets(faces.len(), cells.len(), grad_trip, 1.0 / dofs.h);
    let d2 = grad_dual.transpose();
    Ok(Complex2d {
        g2,
        c2,
        r90,
        d2,
        faces,
    })
}
