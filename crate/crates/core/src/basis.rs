//! Scaled monomial bases on cells and faces, with L2-orthogonal projectors.
//!
//! Cell bases are monomials in `((x - x_T)/h_T, (y - y_T)/h_T)` ordered by
//! total degree (constant first); face bases are monomials in the scaled
//! signed arclength `(s - s_F)/h_F` measured from the face midpoint. The
//! scaling keeps Gram matrices uniformly conditioned under mesh refinement,
//! so plain dense Cholesky is enough for every local solve.

use crate::mesh::{Cell, Face, Mesh};
use crate::quadrature::{polygon_rule, segment_rule, Quadrature};
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Point2, Vector2};

/// Dimension of bivariate polynomials of total degree <= m.
pub fn dim_cell(m: usize) -> usize {
    (m + 1) * (m + 2) / 2
}

/// Dimension of univariate polynomials of degree <= k.
pub fn dim_face(k: usize) -> usize {
    k + 1
}

/// Quadrature order used in all bilinear-form and source integrals.
pub fn assembly_quad_order(k: usize) -> usize {
    2 * (k + 2)
}

/// Quadrature order used in error norms.
pub fn error_quad_order(k: usize) -> usize {
    2 * (k + 2) + 2
}

/// Scaled monomial basis of `P^m(T)`.
#[derive(Debug, Clone)]
pub struct CellBasis {
    pub degree: usize,
    pub center: Point2<f64>,
    pub scale: f64,
    exps: Vec<(u32, u32)>,
}

impl CellBasis {
    pub fn new(center: Point2<f64>, diameter: f64, degree: usize) -> Self {
        let mut exps = Vec::with_capacity(dim_cell(degree));
        for d in 0..=degree as u32 {
            for a in (0..=d).rev() {
                exps.push((a, d - a));
            }
        }
        CellBasis {
            degree,
            center,
            scale: diameter,
            exps,
        }
    }

    pub fn for_cell(cell: &Cell, degree: usize) -> Self {
        Self::new(cell.centroid, cell.diameter, degree)
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    fn local(&self, p: Point2<f64>) -> (f64, f64) {
        (
            (p.x - self.center.x) / self.scale,
            (p.y - self.center.y) / self.scale,
        )
    }

    pub fn eval(&self, p: Point2<f64>) -> DVector<f64> {
        let (u, v) = self.local(p);
        DVector::from_iterator(
            self.exps.len(),
            self.exps.iter().map(|&(a, b)| u.powi(a as i32) * v.powi(b as i32)),
        )
    }

    pub fn grad(&self, p: Point2<f64>) -> Vec<Vector2<f64>> {
        let (u, v) = self.local(p);
        let s = 1.0 / self.scale;
        self.exps
            .iter()
            .map(|&(a, b)| {
                let du = if a == 0 {
                    0.0
                } else {
                    a as f64 * u.powi(a as i32 - 1) * v.powi(b as i32)
                };
                let dv = if b == 0 {
                    0.0
                } else {
                    b as f64 * u.powi(a as i32) * v.powi(b as i32 - 1)
                };
                Vector2::new(du * s, dv * s)
            })
            .collect()
    }

    pub fn laplacian(&self, p: Point2<f64>) -> DVector<f64> {
        let (u, v) = self.local(p);
        let s2 = 1.0 / (self.scale * self.scale);
        DVector::from_iterator(
            self.exps.len(),
            self.exps.iter().map(|&(a, b)| {
                let uu = if a >= 2 {
                    (a * (a - 1)) as f64 * u.powi(a as i32 - 2) * v.powi(b as i32)
                } else {
                    0.0
                };
                let vv = if b >= 2 {
                    (b * (b - 1)) as f64 * u.powi(a as i32) * v.powi(b as i32 - 2)
                } else {
                    0.0
                };
                (uu + vv) * s2
            }),
        )
    }

    /// Value of the polynomial with the given coefficients at `p`.
    pub fn value(&self, coeffs: &DVector<f64>, p: Point2<f64>) -> f64 {
        coeffs.dot(&self.eval(p))
    }
}

/// Scaled monomial basis of `P^k(F)` on a straight face.
#[derive(Debug, Clone)]
pub struct FaceBasis {
    pub degree: usize,
    pub midpoint: Point2<f64>,
    pub tangent: Vector2<f64>,
    pub scale: f64,
}

impl FaceBasis {
    pub fn for_face(face: &Face) -> Self {
        FaceBasis {
            degree: 0,
            midpoint: face.midpoint,
            tangent: face.tangent,
            scale: face.diameter,
        }
    }

    pub fn new(face: &Face, degree: usize) -> Self {
        FaceBasis {
            degree,
            ..Self::for_face(face)
        }
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn eval(&self, p: Point2<f64>) -> DVector<f64> {
        let s = (p - self.midpoint).dot(&self.tangent) / self.scale;
        DVector::from_iterator(self.degree + 1, (0..=self.degree).map(|j| s.powi(j as i32)))
    }

    pub fn value(&self, coeffs: &DVector<f64>, p: Point2<f64>) -> f64 {
        coeffs.dot(&self.eval(p))
    }
}

/// Mass matrix between two cell bases on a shared quadrature.
pub fn cell_mass(a: &CellBasis, b: &CellBasis, quad: &Quadrature) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.dim(), b.dim());
    for (p, w) in quad.points.iter().zip(&quad.weights) {
        let fa = a.eval(*p);
        let fb = b.eval(*p);
        m.ger(*w, &fa, &fb, 1.0);
    }
    m
}

/// Stiffness matrix (grad, grad) of a cell basis.
pub fn cell_stiffness(basis: &CellBasis, quad: &Quadrature) -> DMatrix<f64> {
    let n = basis.dim();
    let mut m = DMatrix::zeros(n, n);
    for (p, w) in quad.points.iter().zip(&quad.weights) {
        let g = basis.grad(*p);
        for i in 0..n {
            for j in 0..=i {
                let v = w * g[i].dot(&g[j]);
                m[(i, j)] += v;
                if i != j {
                    m[(j, i)] += v;
                }
            }
        }
    }
    m
}

/// Mass matrix of a face basis.
pub fn face_mass(basis: &FaceBasis, quad: &Quadrature) -> DMatrix<f64> {
    let n = basis.dim();
    let mut m = DMatrix::zeros(n, n);
    for (p, w) in quad.points.iter().zip(&quad.weights) {
        let f = basis.eval(*p);
        m.ger(*w, &f, &f, 1.0);
    }
    m
}

/// Face-trace mass block `<phi_cell_j, psi_face_i>_F`.
pub fn face_cell_mass(fb: &FaceBasis, cb: &CellBasis, quad: &Quadrature) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(fb.dim(), cb.dim());
    for (p, w) in quad.points.iter().zip(&quad.weights) {
        let f = fb.eval(*p);
        let c = cb.eval(*p);
        m.ger(*w, &f, &c, 1.0);
    }
    m
}

pub(crate) fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    m.cholesky()
        .ok_or_else(|| Error::Conditioning(format!("{what}: Gram matrix not SPD")))
}

/// L2-orthogonal projection of `f` onto `P^degree(T)` for cell `c`.
pub fn project_cell(
    mesh: &Mesh,
    c: usize,
    degree: usize,
    quad_order: usize,
    f: impl Fn(Point2<f64>) -> f64,
) -> Result<DVector<f64>> {
    let basis = CellBasis::for_cell(mesh.cell(c), degree);
    let quad = polygon_rule(&mesh.cell_polygon(c), quad_order.max(2 * degree))?;
    let mass = cell_mass(&basis, &basis, &quad);
    let mut rhs = DVector::zeros(basis.dim());
    for (p, w) in quad.points.iter().zip(&quad.weights) {
        rhs.axpy(*w * f(*p), &basis.eval(*p), 1.0);
    }
    Ok(cholesky(mass, "project_cell")?.solve(&rhs))
}

/// L2-orthogonal projection of `g` onto `P^degree(F)` for face `f`.
pub fn project_face(
    mesh: &Mesh,
    f: usize,
    degree: usize,
    quad_order: usize,
    g: impl Fn(Point2<f64>) -> f64,
) -> Result<DVector<f64>> {
    let face = mesh.face(f);
    let basis = FaceBasis::new(face, degree);
    let (a, b) = (mesh.vertex(face.vertices[0]), mesh.vertex(face.vertices[1]));
    let quad = segment_rule(a, b, quad_order.max(2 * degree));
    let mass = face_mass(&basis, &quad);
    let mut rhs = DVector::zeros(basis.dim());
    for (p, w) in quad.points.iter().zip(&quad.weights) {
        rhs.axpy(*w * g(*p), &basis.eval(*p), 1.0);
    }
    Ok(cholesky(mass, "project_face")?.solve(&rhs))
}
