//! Dense reference assemblies over the full hybrid space, for verification
//! on small meshes: the uncondensed bilinear form, the stabilized inner
//! product as a Gram matrix, a direct (uncondensed) solver, and the
//! variational flux formula that needs the full hybrid solution.
//!
//! Hybrid DoFs are laid out cells first (blocks of `dim P^l`), then faces
//! (blocks of `k + 1`).

use crate::biharmonic::{boundary_stab_block, SplitProblem};
use crate::hho::{CondensedSystem, HybridVector, SourceMoments};
use crate::trace::{lift_hybrid, TraceVector};
use nalgebra::{DMatrix, DVector};

/// Total number of hybrid DoFs.
pub fn hybrid_dim(system: &CondensedSystem) -> usize {
    let mesh = system.mesh();
    mesh.n_cells() * system.degrees().cell_dim() + mesh.n_faces() * system.degrees().face_dim()
}

/// Flattens a hybrid vector into the dense layout.
pub fn flatten(u: &HybridVector, system: &CondensedSystem) -> DVector<f64> {
    let nc = system.mesh().n_cells() * system.degrees().cell_dim();
    let mut v = DVector::zeros(hybrid_dim(system));
    v.rows_mut(0, nc).copy_from_slice(&u.cell);
    v.rows_mut(nc, u.face.len()).copy_from_slice(&u.face);
    v
}

/// Inverse of [`flatten`].
pub fn unflatten(v: &DVector<f64>, system: &CondensedSystem) -> HybridVector {
    let mut u = HybridVector::zeros(system.mesh(), system.degrees());
    let (nc, nf) = (u.cell.len(), u.face.len());
    u.cell.copy_from_slice(v.rows(0, nc).as_slice());
    u.face.copy_from_slice(v.rows(nc, nf).as_slice());
    u
}

/// Dense matrix of the full bilinear form `a_h` over all hybrid DoFs.
pub fn dense_ah(system: &CondensedSystem) -> DMatrix<f64> {
    let mesh = system.mesh();
    let (dl, dk) = (system.degrees().cell_dim(), system.degrees().face_dim());
    let nc = mesh.n_cells() * dl;
    let n = hybrid_dim(system);
    let mut a = DMatrix::zeros(n, n);
    for c in 0..mesh.n_cells() {
        let at = &system.local(c).a;
        let faces = &mesh.cell(c).faces;
        let nloc = dl + faces.len() * dk;
        let map = |i: usize| -> usize {
            if i < dl {
                c * dl + i
            } else {
                let rel = i - dl;
                nc + faces[rel / dk] * dk + rel % dk
            }
        };
        for i in 0..nloc {
            for j in 0..nloc {
                a[(map(i), map(j))] += at[(i, j)];
            }
        }
    }
    a
}

/// Dense Gram matrix of the stabilized inner product over all hybrid DoFs.
pub fn dense_inner(problem: &SplitProblem) -> DMatrix<f64> {
    let system = problem.system();
    let mesh = system.mesh();
    let (dl, dk) = (system.degrees().cell_dim(), system.degrees().face_dim());
    let nc = mesh.n_cells() * dl;
    let n = hybrid_dim(system);
    let mut g = DMatrix::zeros(n, n);
    for c in 0..mesh.n_cells() {
        let mass = &system.local(c).mass;
        for i in 0..dl {
            for j in 0..dl {
                g[(c * dl + i, c * dl + j)] += mass[(i, j)];
            }
        }
    }
    for c in 0..mesh.n_cells() {
        let is_boundary = mesh.cell(c).faces.iter().any(|&f| mesh.face(f).is_boundary());
        if !is_boundary {
            continue;
        }
        let ss = boundary_stab_block(system, c);
        let faces = &mesh.cell(c).faces;
        let nloc = dl + faces.len() * dk;
        let map = |i: usize| -> usize {
            if i < dl {
                c * dl + i
            } else {
                let rel = i - dl;
                nc + faces[rel / dk] * dk + rel % dk
            }
        };
        for i in 0..nloc {
            for j in 0..nloc {
                g[(map(i), map(j))] += ss[(i, j)];
            }
        }
    }
    g
}

/// Solves the full (uncondensed) problem directly: all cell DoFs and the
/// interior face DoFs are unknowns, boundary face DoFs carry the given
/// coefficients.
pub fn solve_full(
    system: &CondensedSystem,
    m: &SourceMoments,
    boundary: &[f64],
) -> HybridVector {
    let mesh = system.mesh();
    let dk = system.degrees().face_dim();
    let nc = mesh.n_cells() * system.degrees().cell_dim();
    let n = hybrid_dim(system);
    let a = dense_ah(system);

    // global dense index -> reduced index, or boundary coefficient
    let mut reduced = Vec::new();
    let mut index = vec![-1isize; n];
    let mut bval = vec![0.0; n];
    for i in 0..nc {
        index[i] = reduced.len() as isize;
        reduced.push(i);
    }
    for (f, face) in mesh.faces().iter().enumerate() {
        for mm in 0..dk {
            let g = nc + f * dk + mm;
            if let Some(bpos) = system.mesh().boundary_position(f) {
                debug_assert!(face.is_boundary());
                bval[g] = boundary[bpos * dk + mm];
            } else {
                index[g] = reduced.len() as isize;
                reduced.push(g);
            }
        }
    }

    let nr = reduced.len();
    let mut ar = DMatrix::zeros(nr, nr);
    let mut rhs = DVector::zeros(nr);
    let moments: Vec<f64> = {
        let mut v = vec![0.0; n];
        v[..nc].copy_from_slice(&m.cell);
        v[nc..].copy_from_slice(&m.face);
        v
    };
    for (ri, &gi) in reduced.iter().enumerate() {
        rhs[ri] = moments[gi];
        for gj in 0..n {
            let v = a[(gi, gj)];
            if v != 0.0 {
                match index[gj] {
                    rj if rj >= 0 => ar[(ri, rj as usize)] += v,
                    _ => rhs[ri] -= v * bval[gj],
                }
            }
        }
    }
    let x = ar.lu().solve(&rhs).expect("reduced system is invertible");

    let mut full = DVector::zeros(n);
    for (ri, &gi) in reduced.iter().enumerate() {
        full[gi] = x[ri];
    }
    for g in 0..n {
        if index[g] < 0 && g >= nc {
            full[g] = bval[g];
        }
    }
    unflatten(&full, system)
}

/// Variational flux formula on the full hybrid solution:
/// `<flux, e_i> = a_h(u, H e_i) - F(H e_i)` per boundary basis function,
/// with `H` the recovered lifting. Needs the whole hybrid vector; the
/// condensed formula in [`crate::trace`] is the production path.
pub fn flux_variational(
    u: &HybridVector,
    m: &SourceMoments,
    system: &CondensedSystem,
) -> TraceVector {
    let a = dense_ah(system);
    let uf = flatten(u, system);
    let au = &a * uf;
    let n_b = system.n_boundary_dofs();
    let k = system.degrees().k;
    let mut moments = vec![0.0; n_b];
    for i in 0..n_b {
        let mut e = TraceVector::zeros(system.mesh(), k);
        e.data[i] = 1.0;
        let lift = flatten(&lift_hybrid(&e, system), system);
        let nc = system.mesh().n_cells() * system.degrees().cell_dim();
        let fm: f64 = m
            .cell
            .iter()
            .zip(lift.rows(0, nc).iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + m.face
                .iter()
                .zip(lift.rows(nc, m.face.len()).iter())
                .map(|(a, b)| a * b)
                .sum::<f64>();
        moments[i] = au.dot(&lift) - fm;
    }
    TraceVector {
        k,
        data: system.boundary_mass_solve(&moments),
    }
}
