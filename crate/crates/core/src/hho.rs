//! HHO discretization of the Laplacian: local potential reconstruction,
//! stabilization, cell-unknown recovery, static condensation and the global
//! Dirichlet solve.
//!
//! Per cell, the unknowns are a polynomial of degree `l` on the cell and one
//! of degree `k` per face, with `l` in `{k, k+1}`. The local bilinear form is
//! the gradient inner product of degree-(k+1) potential reconstructions plus
//! a face-wise stabilization penalizing the difference operators. Cell
//! unknowns are eliminated cell by cell (Schur complement), the resulting
//! face-only system is factorized once by a sparse Cholesky and reused by
//! every solve against the same mesh and degrees.

use crate::basis::{
    assembly_quad_order, cell_mass, cell_stiffness, cholesky, dim_cell, dim_face, face_cell_mass,
    face_mass, project_cell, project_face, CellBasis, FaceBasis,
};
use crate::krylov::{sparse_cholesky, CsrMatrix, SparseSpd};
use crate::mesh::Mesh;
use crate::quadrature::{polygon_rule, segment_rule};
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Point2};
use rayon::prelude::*;

/// Polynomial degrees of the hybrid space: `k` on faces, `l` on cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Degrees {
    pub k: usize,
    pub l: usize,
}

impl Degrees {
    pub fn new(k: usize, l: usize) -> Result<Self> {
        if l != k && l != k + 1 {
            return Err(Error::Config(format!("l must be k or k+1, got k={k}, l={l}")));
        }
        Ok(Degrees { k, l })
    }

    /// The default choice `l = k`.
    pub fn equal(k: usize) -> Self {
        Degrees { k, l: k }
    }

    pub fn cell_dim(&self) -> usize {
        dim_cell(self.l)
    }

    pub fn face_dim(&self) -> usize {
        dim_face(self.k)
    }

    pub fn recon_dim(&self) -> usize {
        dim_cell(self.k + 1)
    }
}

/// Stabilization choice for the local bilinear form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StabKind {
    /// Difference-operator stabilization, valid for any `l`.
    #[default]
    Classic,
    /// Trace-projection stabilization, valid only for `l = k + 1`.
    Simple,
}

/// Coefficient vector over the hybrid space: one degree-`l` block per cell,
/// one degree-`k` block per face.
#[derive(Debug, Clone)]
pub struct HybridVector {
    pub deg: Degrees,
    pub cell: Vec<f64>,
    pub face: Vec<f64>,
}

impl HybridVector {
    pub fn zeros(mesh: &Mesh, deg: Degrees) -> Self {
        HybridVector {
            deg,
            cell: vec![0.0; mesh.n_cells() * deg.cell_dim()],
            face: vec![0.0; mesh.n_faces() * deg.face_dim()],
        }
    }

    pub fn cell_block(&self, c: usize) -> &[f64] {
        let d = self.deg.cell_dim();
        &self.cell[c * d..(c + 1) * d]
    }

    pub fn cell_block_mut(&mut self, c: usize) -> &mut [f64] {
        let d = self.deg.cell_dim();
        &mut self.cell[c * d..(c + 1) * d]
    }

    pub fn face_block(&self, f: usize) -> &[f64] {
        let d = self.deg.face_dim();
        &self.face[f * d..(f + 1) * d]
    }

    pub fn face_block_mut(&mut self, f: usize) -> &mut [f64] {
        let d = self.deg.face_dim();
        &mut self.face[f * d..(f + 1) * d]
    }

    /// Local vector `(v_T, v_{F_T})` of cell `c`, faces in cell order.
    pub fn local(&self, mesh: &Mesh, c: usize) -> DVector<f64> {
        let dl = self.deg.cell_dim();
        let dk = self.deg.face_dim();
        let faces = &mesh.cell(c).faces;
        let mut v = DVector::zeros(dl + faces.len() * dk);
        v.rows_mut(0, dl).copy_from_slice(self.cell_block(c));
        for (i, &f) in faces.iter().enumerate() {
            v.rows_mut(dl + i * dk, dk).copy_from_slice(self.face_block(f));
        }
        v
    }
}

/// Per-cell operator package: reconstruction, bilinear form, recovery and
/// Schur complement.
#[derive(Debug, Clone)]
pub struct LocalOperators {
    /// Potential reconstruction: hybrid locals -> P^{k+1}(T) coefficients.
    pub recon: DMatrix<f64>,
    /// Local bilinear form (consistency + stabilization).
    pub a: DMatrix<f64>,
    /// Cell recovery: face locals -> cell coefficients.
    pub theta: DMatrix<f64>,
    /// Condensed face block `A_FF - A_FT A_TT^{-1} A_TF`.
    pub schur: DMatrix<f64>,
    /// Cell mass matrix of `P^l(T)`.
    pub mass: DMatrix<f64>,
    att: Cholesky<f64, Dyn>,
}

impl LocalOperators {
    pub fn n_cell(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_face_dofs(&self) -> usize {
        self.theta.ncols()
    }

    /// Solves the cell block: `A_TT x = r`.
    pub fn cell_solve(&self, r: &DVector<f64>) -> DVector<f64> {
        self.att.solve(r)
    }
}

/// Moments of a right-hand-side functional against the hybrid test space:
/// `F(v) = cell . v_cells + face . v_faces`.
#[derive(Debug, Clone)]
pub struct SourceMoments {
    pub cell: Vec<f64>,
    pub face: Vec<f64>,
}

impl SourceMoments {
    pub fn zeros(system: &CondensedSystem) -> Self {
        SourceMoments {
            cell: vec![0.0; system.mesh.n_cells() * system.deg.cell_dim()],
            face: vec![0.0; system.mesh.n_faces() * system.deg.face_dim()],
        }
    }
}

/// Piecewise polynomial field over the cells (one coefficient block each).
#[derive(Debug, Clone)]
pub struct CellField {
    pub degree: usize,
    pub data: Vec<f64>,
}

impl CellField {
    pub fn block(&self) -> usize {
        dim_cell(self.degree)
    }

    pub fn coeffs(&self, c: usize) -> &[f64] {
        let d = self.block();
        &self.data[c * d..(c + 1) * d]
    }

    pub fn value(&self, mesh: &Mesh, c: usize, p: Point2<f64>) -> f64 {
        let basis = CellBasis::for_cell(mesh.cell(c), self.degree);
        basis
            .eval(p)
            .iter()
            .zip(self.coeffs(c))
            .map(|(b, c)| b * c)
            .sum()
    }
}

/// Builds the local reconstruction matrix of one cell (hybrid locals to
/// P^{k+1} coefficients) from the gradient system and the mean constraint.
pub fn local_reconstruction(mesh: &Mesh, c: usize, deg: Degrees) -> Result<DMatrix<f64>> {
    Ok(build_local(mesh, c, deg, StabKind::Classic)?.recon)
}

/// Builds the stabilization part of the local bilinear form.
pub fn local_stab(mesh: &Mesh, c: usize, deg: Degrees, stab: StabKind) -> Result<DMatrix<f64>> {
    let with = build_local(mesh, c, deg, stab)?;
    let consistency = {
        let quad = polygon_rule(&mesh.cell_polygon(c), assembly_quad_order(deg.k))?;
        let basis = CellBasis::for_cell(mesh.cell(c), deg.k + 1);
        let k = cell_stiffness(&basis, &quad);
        with.recon.transpose() * k * &with.recon
    };
    Ok(with.a - consistency)
}

pub(crate) fn build_local(
    mesh: &Mesh,
    c: usize,
    deg: Degrees,
    stab: StabKind,
) -> Result<LocalOperators> {
    if stab == StabKind::Simple && deg.l != deg.k + 1 {
        return Err(Error::Config(
            "simple stabilization requires l = k + 1".into(),
        ));
    }
    let cell = mesh.cell(c);
    let (dl, dk, dr) = (deg.cell_dim(), deg.face_dim(), deg.recon_dim());
    let faces = &cell.faces;
    let nloc = dl + faces.len() * dk;
    let qorder = assembly_quad_order(deg.k);

    let basis = CellBasis::for_cell(cell, deg.k + 1);
    let quad = polygon_rule(&mesh.cell_polygon(c), qorder)?;
    let stiff = cell_stiffness(&basis, &quad);
    let mass = cell_mass(&basis, &basis, &quad);

    // (Delta phi_i, phi_j)_T, test index i in rows
    let mut lap = DMatrix::zeros(dr, dr);
    for (p, w) in quad.points.iter().zip(&quad.weights) {
        let d = basis.laplacian(*p);
        let v = basis.eval(*p);
        lap.ger(*w, &d, &v, 1.0);
    }

    // Gradient system right-hand side, one column per local DoF.
    let mut b = DMatrix::zeros(dr, nloc);
    b.view_mut((0, 0), (dr, dl))
        .copy_from(&(-lap.columns(0, dl)));

    struct FaceBlocks {
        mass: DMatrix<f64>,
        mass_chol: Cholesky<f64, Dyn>,
        trace: DMatrix<f64>,
        trace_gram: DMatrix<f64>,
        h: f64,
    }
    let mut fblocks = Vec::with_capacity(faces.len());
    for (i, &f) in faces.iter().enumerate() {
        let face = mesh.face(f);
        let fb = FaceBasis::new(face, deg.k);
        let (a, bb) = (mesh.vertex(face.vertices[0]), mesh.vertex(face.vertices[1]));
        let fq = segment_rule(a, bb, qorder);
        let sign = mesh.outward_sign(c, f);

        // <psi_m, grad(phi_j) . n_TF>_F
        let mut gn = DMatrix::zeros(dr, dk);
        for (p, w) in fq.points.iter().zip(&fq.weights) {
            let psi = fb.eval(*p);
            let grads = basis.grad(*p);
            for j in 0..dr {
                let gdotn = grads[j].dot(&face.normal) * sign;
                for m in 0..dk {
                    gn[(j, m)] += w * gdotn * psi[m];
                }
            }
        }
        b.view_mut((0, dl + i * dk), (dr, dk)).copy_from(&gn);

        let fmass = face_mass(&fb, &fq);
        let trace = face_cell_mass(&fb, &basis, &fq);
        let mut trace_gram = DMatrix::zeros(dr, dr);
        for (p, w) in fq.points.iter().zip(&fq.weights) {
            let v = basis.eval(*p);
            trace_gram.ger(*w, &v, &v, 1.0);
        }
        fblocks.push(FaceBlocks {
            mass_chol: cholesky(fmass.clone(), "face mass")?,
            mass: fmass,
            trace,
            trace_gram,
            h: face.diameter,
        });
    }

    // Solve the gradient system on the non-constant modes, then fix the
    // constant from the mean constraint.
    let stiff_sub = stiff.view((1, 1), (dr - 1, dr - 1)).into_owned();
    let chol_sub = cholesky(stiff_sub, "reconstruction stiffness")?;
    let mut recon = DMatrix::zeros(dr, nloc);
    recon
        .view_mut((1, 0), (dr - 1, nloc))
        .copy_from(&chol_sub.solve(&b.view((1, 0), (dr - 1, nloc)).into_owned()));
    let measure = mass[(0, 0)];
    for j in 0..nloc {
        let mut mean = 0.0;
        if j < dl {
            mean += mass[(0, j)];
        }
        for i in 1..dr {
            mean -= mass[(0, i)] * recon[(i, j)];
        }
        recon[(0, j)] = mean / measure;
    }

    let mut a = recon.transpose() * &stiff * &recon;

    // Projection of P^{k+1} onto P^l; scaled monomials make P^l the basis
    // prefix, so the mixed mass is a sub-block of `mass`.
    let mass_l = mass.view((0, 0), (dl, dl)).into_owned();
    let mass_l_chol = cholesky(mass_l.clone(), "cell mass")?;

    match stab {
        StabKind::Classic => {
            // delta_T = pi_T^l (p v - v_T)
            let proj_l = mass_l_chol.solve(&mass.view((0, 0), (dl, dr)).into_owned());
            let mut dt = &proj_l * &recon;
            for j in 0..dl {
                dt[(j, j)] -= 1.0;
            }
            for (i, blocks) in fblocks.iter().enumerate() {
                // delta_TF = pi_F^k (p v - v_F)
                let mut df = blocks.mass_chol.solve(&(&blocks.trace * &recon));
                for m in 0..dk {
                    df[(m, dl + i * dk + m)] -= 1.0;
                }
                let trace_l = blocks.trace.columns(0, dl).into_owned();
                let gram_l = blocks.trace_gram.view((0, 0), (dl, dl)).into_owned();
                let cross = df.transpose() * &trace_l * &dt;
                let mut s = df.transpose() * &blocks.mass * &df;
                s -= &cross;
                s -= cross.transpose();
                s += dt.transpose() * gram_l * &dt;
                a += s * (1.0 / blocks.h);
            }
        }
        StabKind::Simple => {
            for (i, blocks) in fblocks.iter().enumerate() {
                // pi_F^k (v_T - v_F)
                let proj_t = blocks
                    .mass_chol
                    .solve(&blocks.trace.columns(0, dl).into_owned());
                let mut cmat = DMatrix::zeros(dk, nloc);
                cmat.view_mut((0, 0), (dk, dl)).copy_from(&proj_t);
                for m in 0..dk {
                    cmat[(m, dl + i * dk + m)] -= 1.0;
                }
                a += cmat.transpose() * &blocks.mass * cmat * (1.0 / blocks.h);
            }
        }
    }

    // Static condensation blocks.
    let nf = nloc - dl;
    let att = cholesky(a.view((0, 0), (dl, dl)).into_owned(), "cell block of a_T")
        .map_err(|_| Error::Assembly(format!("cell block of a_T not SPD on cell {c}")))?;
    let atf = a.view((0, dl), (dl, nf)).into_owned();
    let theta = -att.solve(&atf);
    let mut schur = a.view((dl, dl), (nf, nf)).into_owned();
    schur += a.view((dl, 0), (nf, dl)) * &theta;
    // keep the Schur block exactly symmetric against roundoff
    let schur_t = schur.transpose();
    schur = (schur + schur_t) * 0.5;

    Ok(LocalOperators {
        recon,
        a,
        theta,
        schur,
        mass: mass_l,
        att,
    })
}

/// The statically condensed global system over face unknowns, with the
/// boundary eliminated and the interior block factorized once.
pub struct CondensedSystem {
    mesh: Mesh,
    deg: Degrees,
    stab: StabKind,
    local: Vec<LocalOperators>,
    /// Condensed bilinear form over all face DoFs (for operator application).
    ahat: CsrMatrix,
    /// Interior-interior factorization; `None` when no interior DoF exists.
    chol: Option<SparseSpd>,
    /// Coupling block: interior rows, boundary-DoF columns.
    aib: CsrMatrix,
    interior_index: Vec<isize>,
    interior_dofs: Vec<usize>,
    bmass: Vec<DMatrix<f64>>,
    bmass_chol: Vec<Cholesky<f64, Dyn>>,
}

/// Assembles the condensed system on a mesh. Local operators are built in
/// parallel; the interior face block is factorized by sparse Cholesky.
pub fn assemble(mesh: Mesh, deg: Degrees, stab: StabKind) -> Result<CondensedSystem> {
    let local: Vec<LocalOperators> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| build_local(&mesh, c, deg, stab))
        .collect::<Result<_>>()?;

    let dk = deg.face_dim();
    let n_face_dofs = mesh.n_faces() * dk;
    let mut interior_index = vec![-1isize; n_face_dofs];
    let mut interior_dofs = Vec::new();
    for (f, face) in mesh.faces().iter().enumerate() {
        if !face.is_boundary() {
            for m in 0..dk {
                interior_index[f * dk + m] = interior_dofs.len() as isize;
                interior_dofs.push(f * dk + m);
            }
        }
    }

    let mut full = Vec::new();
    let mut ii = Vec::new();
    let mut ib = Vec::new();
    for (c, ops) in local.iter().enumerate() {
        let faces = &mesh.cell(c).faces;
        for (i, &fi) in faces.iter().enumerate() {
            for (j, &fj) in faces.iter().enumerate() {
                for mi in 0..dk {
                    for mj in 0..dk {
                        let v = ops.schur[(i * dk + mi, j * dk + mj)];
                        let (gi, gj) = (fi * dk + mi, fj * dk + mj);
                        full.push((gi, gj, v));
                        let (li, lj) = (interior_index[gi], interior_index[gj]);
                        match (li >= 0, lj >= 0) {
                            (true, true) => ii.push((li as usize, lj as usize, v)),
                            (true, false) => {
                                let bpos = mesh
                                    .boundary_position(fj)
                                    .expect("non-interior DoF lies on a boundary face");
                                ib.push((li as usize, bpos * dk + mj, v));
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
    }

    let ahat = CsrMatrix::from_triplets(n_face_dofs, n_face_dofs, full);
    let n_interior = interior_dofs.len();
    let n_boundary = mesh.n_boundary_faces() * dk;
    let aib = CsrMatrix::from_triplets(n_interior, n_boundary, ib);
    let chol = if n_interior > 0 {
        Some(
            sparse_cholesky(n_interior, &ii)
                .map_err(|_| Error::Assembly("condensed system is not SPD".into()))?,
        )
    } else {
        None
    };

    let mut bmass = Vec::with_capacity(mesh.n_boundary_faces());
    let mut bmass_chol = Vec::with_capacity(mesh.n_boundary_faces());
    for &f in mesh.boundary_faces() {
        let face = mesh.face(f);
        let fb = FaceBasis::new(face, deg.k);
        let (a, b) = (mesh.vertex(face.vertices[0]), mesh.vertex(face.vertices[1]));
        let quad = segment_rule(a, b, assembly_quad_order(deg.k));
        let m = face_mass(&fb, &quad);
        bmass_chol.push(cholesky(m.clone(), "boundary face mass")?);
        bmass.push(m);
    }

    Ok(CondensedSystem {
        mesh,
        deg,
        stab,
        local,
        ahat,
        chol,
        aib,
        interior_index,
        interior_dofs,
        bmass,
        bmass_chol,
    })
}

impl CondensedSystem {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn degrees(&self) -> Degrees {
        self.deg
    }

    pub fn stab_kind(&self) -> StabKind {
        self.stab
    }

    pub fn local(&self, c: usize) -> &LocalOperators {
        &self.local[c]
    }

    pub fn n_face_dofs(&self) -> usize {
        self.mesh.n_faces() * self.deg.face_dim()
    }

    pub fn n_interior_dofs(&self) -> usize {
        self.interior_dofs.len()
    }

    pub fn n_boundary_dofs(&self) -> usize {
        self.mesh.n_boundary_faces() * self.deg.face_dim()
    }

    /// Mass matrix of one boundary face (by boundary position).
    pub fn boundary_mass(&self, bpos: usize) -> &DMatrix<f64> {
        &self.bmass[bpos]
    }

    /// Moments of a plain source term: `F(v) = (f, v_T)`.
    pub fn source_moments(&self, f: impl Fn(Point2<f64>) -> f64 + Sync) -> Result<SourceMoments> {
        let dl = self.deg.cell_dim();
        let order = assembly_quad_order(self.deg.k);
        let blocks: Vec<DVector<f64>> = (0..self.mesh.n_cells())
            .into_par_iter()
            .map(|c| {
                let basis = CellBasis::for_cell(self.mesh.cell(c), self.deg.l);
                let quad = polygon_rule(&self.mesh.cell_polygon(c), order)?;
                let mut r = DVector::zeros(dl);
                for (p, w) in quad.points.iter().zip(&quad.weights) {
                    r.axpy(*w * f(*p), &basis.eval(*p), 1.0);
                }
                Ok(r)
            })
            .collect::<Result<_>>()?;
        let mut m = SourceMoments::zeros(self);
        for (c, b) in blocks.iter().enumerate() {
            m.cell[c * dl..(c + 1) * dl].copy_from_slice(b.as_slice());
        }
        Ok(m)
    }

    /// Condensed right-hand side over all face DoFs: `F(Theta v)` per test
    /// face function, i.e. `r_F + theta^T r_T` cell by cell.
    pub fn condensed_rhs(&self, m: &SourceMoments) -> Vec<f64> {
        let (dl, dk) = (self.deg.cell_dim(), self.deg.face_dim());
        let mut b = m.face.clone();
        for (c, ops) in self.local.iter().enumerate() {
            let rt = DVector::from_column_slice(&m.cell[c * dl..(c + 1) * dl]);
            let contrib = ops.theta.transpose() * rt;
            for (i, &f) in self.mesh.cell(c).faces.iter().enumerate() {
                for mm in 0..dk {
                    b[f * dk + mm] += contrib[i * dk + mm];
                }
            }
        }
        b
    }

    /// Projects Dirichlet data onto the boundary faces (coefficients in the
    /// boundary numbering).
    pub fn project_boundary(&self, g: impl Fn(Point2<f64>) -> f64) -> Result<Vec<f64>> {
        let dk = self.deg.face_dim();
        let mut out = vec![0.0; self.n_boundary_dofs()];
        for (bpos, &f) in self.mesh.boundary_faces().iter().enumerate() {
            let coeffs = project_face(&self.mesh, f, self.deg.k, assembly_quad_order(self.deg.k), &g)?;
            out[bpos * dk..(bpos + 1) * dk].copy_from_slice(coeffs.as_slice());
        }
        Ok(out)
    }

    /// Solves the condensed problem with the given source functional and
    /// boundary coefficients, then recovers the cell unknowns.
    pub fn solve_with_data(&self, m: &SourceMoments, boundary: &[f64]) -> HybridVector {
        assert_eq!(boundary.len(), self.n_boundary_dofs());
        let (dl, dk) = (self.deg.cell_dim(), self.deg.face_dim());
        let b = self.condensed_rhs(m);

        let mut rhs: Vec<f64> = self.interior_dofs.iter().map(|&g| b[g]).collect();
        let coupling = self.aib.matvec(boundary);
        for (r, c) in rhs.iter_mut().zip(&coupling) {
            *r -= c;
        }
        let x = match &self.chol {
            Some(chol) => chol.solve(&rhs),
            None => Vec::new(),
        };

        let mut u = HybridVector::zeros(&self.mesh, self.deg);
        for (f, face) in self.mesh.faces().iter().enumerate() {
            for mm in 0..dk {
                let g = f * dk + mm;
                u.face[g] = if let Some(bpos) = self.mesh.boundary_position(f) {
                    debug_assert!(face.is_boundary());
                    boundary[bpos * dk + mm]
                } else {
                    x[self.interior_index[g] as usize]
                };
            }
        }

        for c in 0..self.mesh.n_cells() {
            let ops = &self.local[c];
            let rt = DVector::from_column_slice(&m.cell[c * dl..(c + 1) * dl]);
            let faces = &self.mesh.cell(c).faces;
            let mut uf = DVector::zeros(faces.len() * dk);
            for (i, &f) in faces.iter().enumerate() {
                uf.rows_mut(i * dk, dk).copy_from_slice(u.face_block(f));
            }
            let ut = ops.cell_solve(&rt) + &ops.theta * uf;
            u.cell_block_mut(c).copy_from_slice(ut.as_slice());
        }
        u
    }

    /// Solves the Dirichlet Poisson problem with source `f` and boundary
    /// datum `g_d`.
    pub fn solve_poisson(
        &self,
        f: impl Fn(Point2<f64>) -> f64 + Sync,
        g_d: impl Fn(Point2<f64>) -> f64,
    ) -> Result<HybridVector> {
        let m = self.source_moments(f)?;
        let g = self.project_boundary(g_d)?;
        Ok(self.solve_with_data(&m, &g))
    }

    /// Applies the condensed bilinear form to a full face-DoF vector.
    pub fn apply_ahat(&self, face_dofs: &[f64]) -> Vec<f64> {
        self.ahat.matvec(face_dofs)
    }

    /// Extracts the boundary-DoF entries of a full face-DoF vector.
    pub fn boundary_rows(&self, v: &[f64]) -> Vec<f64> {
        let dk = self.deg.face_dim();
        let mut out = vec![0.0; self.n_boundary_dofs()];
        for (bpos, &f) in self.mesh.boundary_faces().iter().enumerate() {
            out[bpos * dk..(bpos + 1) * dk].copy_from_slice(&v[f * dk..(f + 1) * dk]);
        }
        out
    }

    /// Converts boundary moments to coefficients through the face mass
    /// matrices.
    pub fn boundary_mass_solve(&self, moments: &[f64]) -> Vec<f64> {
        let dk = self.deg.face_dim();
        let mut out = vec![0.0; moments.len()];
        for bpos in 0..self.mesh.n_boundary_faces() {
            let b = DVector::from_column_slice(&moments[bpos * dk..(bpos + 1) * dk]);
            let x = self.bmass_chol[bpos].solve(&b);
            out[bpos * dk..(bpos + 1) * dk].copy_from_slice(x.as_slice());
        }
        out
    }

    /// Converts boundary coefficients to moments (the inverse of
    /// [`Self::boundary_mass_solve`]).
    pub fn boundary_mass_apply(&self, coeffs: &[f64]) -> Vec<f64> {
        let dk = self.deg.face_dim();
        let mut out = vec![0.0; coeffs.len()];
        for bpos in 0..self.mesh.n_boundary_faces() {
            let c = DVector::from_column_slice(&coeffs[bpos * dk..(bpos + 1) * dk]);
            let m = &self.bmass[bpos] * c;
            out[bpos * dk..(bpos + 1) * dk].copy_from_slice(m.as_slice());
        }
        out
    }

    /// Post-processing: per-cell potential reconstruction of a hybrid vector.
    pub fn reconstruct(&self, u: &HybridVector) -> CellField {
        let dr = self.deg.recon_dim();
        let mut data = vec![0.0; self.mesh.n_cells() * dr];
        for c in 0..self.mesh.n_cells() {
            let w = &self.local[c].recon * u.local(&self.mesh, c);
            data[c * dr..(c + 1) * dr].copy_from_slice(w.as_slice());
        }
        CellField {
            degree: self.deg.k + 1,
            data,
        }
    }
}

/// Hybrid interpolant of a scalar function: cell blocks are `pi_T^l f`,
/// face blocks are `pi_F^k f`.
pub fn interpolate(
    mesh: &Mesh,
    deg: Degrees,
    f: impl Fn(Point2<f64>) -> f64,
) -> Result<HybridVector> {
    let mut v = HybridVector::zeros(mesh, deg);
    let order = assembly_quad_order(deg.k);
    for c in 0..mesh.n_cells() {
        let coeffs = project_cell(mesh, c, deg.l, order, &f)?;
        v.cell_block_mut(c).copy_from_slice(coeffs.as_slice());
    }
    for fa in 0..mesh.n_faces() {
        let coeffs = project_face(mesh, fa, deg.k, order, &f)?;
        v.face_block_mut(fa).copy_from_slice(coeffs.as_slice());
    }
    Ok(v)
}
