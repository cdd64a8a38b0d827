//! Boundary-polynomial vectors, liftings into the hybrid space and the
//! discrete normal derivative of an HHO solution.
//!
//! The normal derivative is computed from the condensed bilinear form: its
//! moments against every boundary test function are
//! `ahat(u_F, H_F v) - F(Theta H_F v)`, where `H_F` copies boundary values
//! and vanishes on interior faces, and `F` is the right-hand-side functional
//! of the solve that produced `u`. The boundary face mass matrices convert
//! moments into coefficients, so the result is a polynomial on the boundary
//! skeleton.

use crate::hho::{CondensedSystem, HybridVector, SourceMoments};
use crate::mesh::Mesh;
use nalgebra::{DVector, Point2};

/// Coefficient vector over the boundary faces: one degree-`k` block per face
/// of the domain boundary, ordered by boundary position.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceVector {
    pub k: usize,
    pub data: Vec<f64>,
}

impl TraceVector {
    pub fn zeros(mesh: &Mesh, k: usize) -> Self {
        TraceVector {
            k,
            data: vec![0.0; mesh.n_boundary_faces() * (k + 1)],
        }
    }

    pub fn from_data(k: usize, data: Vec<f64>) -> Self {
        TraceVector { k, data }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn block(&self, bpos: usize) -> &[f64] {
        &self.data[bpos * (self.k + 1)..(bpos + 1) * (self.k + 1)]
    }

    pub fn block_mut(&mut self, bpos: usize) -> &mut [f64] {
        &mut self.data[bpos * (self.k + 1)..(bpos + 1) * (self.k + 1)]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Lifts boundary coefficients to a full face-DoF vector: boundary faces copy
/// `v`, interior faces are zero.
pub fn lift_faces(v: &TraceVector, system: &CondensedSystem) -> Vec<f64> {
    let dk = system.degrees().face_dim();
    assert_eq!(v.dim(), system.n_boundary_dofs());
    let mut out = vec![0.0; system.n_face_dofs()];
    for (bpos, &f) in system.mesh().boundary_faces().iter().enumerate() {
        out[f * dk..(f + 1) * dk].copy_from_slice(v.block(bpos));
    }
    out
}

/// Restricts a full face-DoF vector to its boundary blocks (left inverse of
/// [`lift_faces`]).
pub fn restrict_faces(face_dofs: &[f64], system: &CondensedSystem) -> TraceVector {
    TraceVector {
        k: system.degrees().k,
        data: system.boundary_rows(face_dofs),
    }
}

/// Lifts boundary coefficients into the hybrid space: the face part is
/// `lift_faces`, the cell part applies the recovery operator cell by cell
/// (local problems with zero source).
pub fn lift_hybrid(v: &TraceVector, system: &CondensedSystem) -> HybridVector {
    let mesh = system.mesh();
    let deg = system.degrees();
    let dk = deg.face_dim();
    let mut u = HybridVector::zeros(mesh, deg);
    u.face = lift_faces(v, system);
    for c in 0..mesh.n_cells() {
        let ops = system.local(c);
        let faces = &mesh.cell(c).faces;
        let mut uf = DVector::zeros(faces.len() * dk);
        let mut nonzero = false;
        for (i, &f) in faces.iter().enumerate() {
            let block = &u.face[f * dk..(f + 1) * dk];
            nonzero |= block.iter().any(|&x| x != 0.0);
            uf.rows_mut(i * dk, dk).copy_from_slice(block);
        }
        if nonzero {
            let ut = &ops.theta * uf;
            u.cell_block_mut(c).copy_from_slice(ut.as_slice());
        }
    }
    u
}

/// Discrete normal derivative of `u` for a plain source `f`, through the
/// condensed formula. Returns coefficients in `P^k` over the boundary faces.
pub fn normal_derivative(
    u: &HybridVector,
    f: impl Fn(Point2<f64>) -> f64 + Sync,
    system: &CondensedSystem,
) -> crate::Result<TraceVector> {
    let m = system.source_moments(f)?;
    let b = system.condensed_rhs(&m);
    Ok(normal_derivative_condensed(&u.face, &b, system))
}

/// Normal derivative from a face-DoF vector and the condensed right-hand
/// side of the solve that produced it: boundary moments are
/// `[ahat u - b]_B`, converted to coefficients.
pub fn normal_derivative_condensed(
    face_dofs: &[f64],
    condensed_rhs: &[f64],
    system: &CondensedSystem,
) -> TraceVector {
    let w = system.apply_ahat(face_dofs);
    let mut moments = system.boundary_rows(&w);
    let bb = system.boundary_rows(condensed_rhs);
    for (m, b) in moments.iter_mut().zip(&bb) {
        *m -= b;
    }
    TraceVector {
        k: system.degrees().k,
        data: system.boundary_mass_solve(&moments),
    }
}

/// Boundary moments of the functional `F` against lifted test functions:
/// `F(Theta H_F e_i)` for every boundary basis function. Equals the boundary
/// rows of the condensed right-hand side.
pub fn lifted_moments(m: &SourceMoments, system: &CondensedSystem) -> Vec<f64> {
    let b = system.condensed_rhs(m);
    system.boundary_rows(&b)
}
