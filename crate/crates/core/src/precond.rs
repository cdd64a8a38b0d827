//! Patch-based sparse approximation of the trace operator.
//!
//! Column `j` of the approximation solves the two Laplacian subproblems of
//! the trace operator restricted to an `alpha`-layer neighbourhood of the
//! boundary face carrying DoF `j`, with homogeneous Dirichlet data on the
//! part of the patch boundary interior to the domain, and evaluates the
//! normal derivative only on the covered part of the domain boundary; the
//! remaining coefficients are zero. All matrix blocks are extracted from the
//! globally assembled local operators, so no re-integration happens here.
//! The resulting sparse matrix is applied inside the outer iteration by an
//! (unpreconditioned) BiCGSTAB solve.

use crate::biharmonic::{boundary_stab_block, SplitProblem};
use crate::hho::CondensedSystem;
use crate::krylov::{bicgstab, sparse_cholesky, CsrMatrix, LinearOperator, SparseSpd};
use crate::mesh::Patch;
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Patch subsystems switch from dense to sparse factorization above this
/// number of unknowns.
const DENSE_LIMIT: usize = 400;

/// Default cap on inner BiCGSTAB iterations.
pub const DEFAULT_INNER_MAX_ITER: usize = 200;

enum PatchFactor {
    Empty,
    Dense(Cholesky<f64, Dyn>),
    Sparse(SparseSpd),
}

/// One patch with its extracted condensed subsystem.
pub struct PatchSystem {
    pub patch: Patch,
    /// Condensed matrix over all patch face DoFs (patch-local numbering).
    ahat: CsrMatrix,
    /// Patch face DoF -> unknown index (patch-interior DoFs only).
    interior_index: Vec<isize>,
    n_unknowns: usize,
    factor: PatchFactor,
}

impl PatchSystem {
    fn build(system: &CondensedSystem, patch: Patch) -> Result<Self> {
        let dk = system.degrees().face_dim();
        let n_dofs = patch.faces.len() * dk;

        let mut interior_index = vec![-1isize; n_dofs];
        let mut n_unknowns = 0usize;
        for &l in &patch.interior {
            for m in 0..dk {
                interior_index[l * dk + m] = n_unknowns as isize;
                n_unknowns += 1;
            }
        }

        let mut full = Vec::new();
        let mut ii = Vec::new();
        for &c in &patch.cells {
            let ops = system.local(c);
            let faces = &system.mesh().cell(c).faces;
            for (i, &fi) in faces.iter().enumerate() {
                let li = patch.local_face(fi).expect("cell face is in the patch");
                for (j, &fj) in faces.iter().enumerate() {
                    let lj = patch.local_face(fj).expect("cell face is in the patch");
                    for mi in 0..dk {
                        for mj in 0..dk {
                            let v = ops.schur[(i * dk + mi, j * dk + mj)];
                            let (gi, gj) = (li * dk + mi, lj * dk + mj);
                            full.push((gi, gj, v));
                            let (ui, uj) = (interior_index[gi], interior_index[gj]);
                            if ui >= 0 && uj >= 0 {
                                ii.push((ui as usize, uj as usize, v));
                            }
                        }
                    }
                }
            }
        }
        let ahat = CsrMatrix::from_triplets(n_dofs, n_dofs, full);

        let factor = if n_unknowns == 0 {
            PatchFactor::Empty
        } else if n_unknowns <= DENSE_LIMIT {
            let mut dense = DMatrix::zeros(n_unknowns, n_unknowns);
            for &(r, c, v) in &ii {
                dense[(r, c)] += v;
            }
            PatchFactor::Dense(dense.cholesky().ok_or_else(|| {
                Error::Assembly("patch condensed block is not SPD".into())
            })?)
        } else {
            PatchFactor::Sparse(sparse_cholesky(n_unknowns, &ii)?)
        };

        Ok(PatchSystem {
            patch,
            ahat,
            interior_index,
            n_unknowns,
            factor,
        })
    }

    fn solve_interior(&self, rhs: &[f64]) -> Vec<f64> {
        match &self.factor {
            PatchFactor::Empty => Vec::new(),
            PatchFactor::Dense(chol) => {
                let x = chol.solve(&DVector::from_column_slice(rhs));
                x.as_slice().to_vec()
            }
            PatchFactor::Sparse(spd) => spd.solve(rhs),
        }
    }

    /// Applies the patch trace operator to the unit vector on DoF `m` of the
    /// patch-local face `seed_face`, returning `(global row, value)` pairs of
    /// the padded column.
    fn column(
        &self,
        system: &CondensedSystem,
        ss: &HashMap<usize, DMatrix<f64>>,
        seed_face: usize,
        m: usize,
    ) -> Vec<(usize, f64)> {
        let mesh = system.mesh();
        let dk = system.degrees().face_dim();
        let dl = system.degrees().cell_dim();
        let n_dofs = self.patch.faces.len() * dk;
        let dirichlet_dof = seed_face * dk + m;

        // first subproblem: harmonic lift of the boundary unit vector
        let mut omega_faces = vec![0.0; n_dofs];
        omega_faces[dirichlet_dof] = 1.0;
        if self.n_unknowns > 0 {
            let mut rhs = vec![0.0; self.n_unknowns];
            // rhs = -A[interior, dirichlet] e
            for r in 0..n_dofs {
                let ui = self.interior_index[r];
                if ui >= 0 {
                    let (cols, vals) = self.ahat.row(r);
                    if let Ok(pos) = cols.binary_search(&dirichlet_dof) {
                        rhs[ui as usize] = -vals[pos];
                    }
                }
            }
            let x = self.solve_interior(&rhs);
            for r in 0..n_dofs {
                let ui = self.interior_index[r];
                if ui >= 0 {
                    omega_faces[r] = x[ui as usize];
                }
            }
        }

        // cell recovery (zero source) and the stabilized-product moments
        let mut cell_moments = vec![0.0; self.patch.cells.len() * dl];
        let mut face_moments = vec![0.0; n_dofs];
        for (lc, &c) in self.patch.cells.iter().enumerate() {
            let ops = system.local(c);
            let faces = &mesh.cell(c).faces;
            let mut uf = DVector::zeros(faces.len() * dk);
            for (i, &f) in faces.iter().enumerate() {
                let lf = self.patch.local_face(f).expect("in patch");
                uf.rows_mut(i * dk, dk)
                    .copy_from_slice(&omega_faces[lf * dk..(lf + 1) * dk]);
            }
            let ut = &ops.theta * &uf;
            // plain L2 part over the patch cells
            let mt = &ops.mass * &ut;
            cell_moments[lc * dl..(lc + 1) * dl].copy_from_slice(mt.as_slice());
            // boundary-cell stabilization, for patch cells at the patch boundary
            if let Some(ss_block) = ss.get(&c) {
                let mut loc = DVector::zeros(dl + faces.len() * dk);
                loc.rows_mut(0, dl).copy_from(&ut);
                loc.rows_mut(dl, faces.len() * dk).copy_from(&uf);
                let r = ss_block * loc;
                for (j, &val) in r.rows(0, dl).iter().enumerate() {
                    cell_moments[lc * dl + j] += val;
                }
                for (i, &f) in faces.iter().enumerate() {
                    let lf = self.patch.local_face(f).expect("in patch");
                    for mm in 0..dk {
                        face_moments[lf * dk + mm] += r[dl + i * dk + mm];
                    }
                }
            }
        }

        // condensed right-hand side of the second subproblem
        let mut b = face_moments;
        for (lc, &c) in self.patch.cells.iter().enumerate() {
            let ops = system.local(c);
            let rt = DVector::from_column_slice(&cell_moments[lc * dl..(lc + 1) * dl]);
            let contrib = ops.theta.transpose() * rt;
            for (i, &f) in mesh.cell(c).faces.iter().enumerate() {
                let lf = self.patch.local_face(f).expect("in patch");
                for mm in 0..dk {
                    b[lf * dk + mm] += contrib[i * dk + mm];
                }
            }
        }

        // second subproblem: zero trace on the whole patch boundary
        let mut psi_faces = vec![0.0; n_dofs];
        if self.n_unknowns > 0 {
            let rhs: Vec<f64> = (0..n_dofs)
                .filter(|&r| self.interior_index[r] >= 0)
                .map(|r| b[r])
                .collect();
            let y = self.solve_interior(&rhs);
            for r in 0..n_dofs {
                let ui = self.interior_index[r];
                if ui >= 0 {
                    psi_faces[r] = y[ui as usize];
                }
            }
        }

        // flux moments on the covered part of the domain boundary, negated
        let w = self.ahat.matvec(&psi_faces);
        let mut out = Vec::new();
        for &(lf, gbase) in self.patch.boundary_dofs() {
            let bpos = gbase / dk;
            let mut moments = DVector::zeros(dk);
            for mm in 0..dk {
                moments[mm] = -(w[lf * dk + mm] - b[lf * dk + mm]);
            }
            let coeffs = Cholesky::new(system.boundary_mass(bpos).clone())
                .expect("boundary mass is SPD")
                .solve(&moments);
            for mm in 0..dk {
                out.push((gbase + mm, coeffs[mm]));
            }
        }
        out
    }
}

/// The assembled sparse approximation together with its patches.
pub struct PatchPreconditioner {
    alpha: usize,
    ltilde: CsrMatrix,
    patches: Vec<PatchSystem>,
    pub inner_eps: f64,
    pub inner_max_iter: usize,
    applications: AtomicUsize,
}

/// Builds the preconditioner: one patch per boundary face (all DoFs of a face
/// share the patch and its factorization), columns built in parallel.
pub fn build(problem: &SplitProblem, alpha: usize) -> Result<PatchPreconditioner> {
    let system = problem.system();
    let mesh = system.mesh();
    let dk = system.degrees().face_dim();
    let n = system.n_boundary_dofs();

    let results: Vec<(PatchSystem, Vec<(usize, usize, f64)>)> = (0..mesh.n_boundary_faces())
        .into_par_iter()
        .map(|bpos| {
            let patch = mesh.neighborhood(bpos * dk, dk, alpha)?;
            let seed_face = patch
                .local_face(mesh.boundary_faces()[bpos])
                .expect("seed face is in its own patch");
            let ps = PatchSystem::build(system, patch)?;

            // stabilization blocks of the patch's boundary cells
            let mut ss = HashMap::new();
            for &l in &ps.patch.boundary {
                let f = ps.patch.faces[l];
                let face = mesh.face(f);
                for owner in [Some(face.owners.0), face.owners.1].into_iter().flatten() {
                    if ps.patch.contains_cell(owner) {
                        ss.entry(owner)
                            .or_insert_with(|| boundary_stab_block(system, owner));
                    }
                }
            }

            let mut triplets = Vec::new();
            for m in 0..dk {
                let col = bpos * dk + m;
                for (row, v) in ps.column(system, &ss, seed_face, m) {
                    triplets.push((row, col, v));
                }
            }
            Ok((ps, triplets))
        })
        .collect::<Result<_>>()?;

    let mut triplets = Vec::new();
    let mut patches = Vec::with_capacity(results.len());
    for (ps, t) in results {
        triplets.extend(t);
        patches.push(ps);
    }

    Ok(PatchPreconditioner {
        alpha,
        ltilde: CsrMatrix::from_triplets(n, n, triplets),
        patches,
        inner_eps: problem.eps,
        inner_max_iter: DEFAULT_INNER_MAX_ITER,
        applications: AtomicUsize::new(0),
    })
}

impl PatchPreconditioner {
    pub fn alpha(&self) -> usize {
        self.alpha
    }

    /// The assembled sparse matrix.
    pub fn ltilde(&self) -> &CsrMatrix {
        &self.ltilde
    }

    pub fn patches(&self) -> &[PatchSystem] {
        &self.patches
    }

    /// Number of times [`Self::apply`] has been called.
    pub fn applications(&self) -> usize {
        self.applications.load(Ordering::Relaxed)
    }

    /// Approximately solves `ltilde z = r` by BiCGSTAB with the inner
    /// tolerance.
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.applications.fetch_add(1, Ordering::Relaxed);
        let op = LinearOperator::from_csr(&self.ltilde);
        match bicgstab(&op, r, self.inner_eps, self.inner_max_iter) {
            Ok((z, _)) => Ok(z),
            Err(e) => Err(Error::Precond(format!("inner BiCGSTAB failed: {e}"))),
        }
    }
}
