//! Small bivariate polynomials in the monomial basis, used to set up
//! polynomial exactness checks and manufactured data.

use nalgebra::{Point2, Vector2};

/// `sum_i c_i x^{a_i} y^{b_i}`.
#[derive(Debug, Clone, Default)]
pub struct Poly2 {
    pub terms: Vec<(u32, u32, f64)>,
}

impl Poly2 {
    pub fn new(terms: Vec<(u32, u32, f64)>) -> Self {
        Poly2 { terms }
    }

    /// Random polynomial of total degree <= deg with coefficients from `f`.
    pub fn from_coeffs(deg: u32, mut f: impl FnMut() -> f64) -> Self {
        let mut terms = Vec::new();
        for d in 0..=deg {
            for a in 0..=d {
                terms.push((a, d - a, f()));
            }
        }
        Poly2 { terms }
    }

    pub fn eval(&self, p: Point2<f64>) -> f64 {
        self.terms
            .iter()
            .map(|&(a, b, c)| c * p.x.powi(a as i32) * p.y.powi(b as i32))
            .sum()
    }

    pub fn grad(&self, p: Point2<f64>) -> Vector2<f64> {
        let mut g = Vector2::zeros();
        for &(a, b, c) in &self.terms {
            if a > 0 {
                g.x += c * a as f64 * p.x.powi(a as i32 - 1) * p.y.powi(b as i32);
            }
            if b > 0 {
                g.y += c * b as f64 * p.x.powi(a as i32) * p.y.powi(b as i32 - 1);
            }
        }
        g
    }

    pub fn laplacian(&self) -> Poly2 {
        let mut terms = Vec::new();
        for &(a, b, c) in &self.terms {
            if a >= 2 {
                terms.push((a - 2, b, c * (a * (a - 1)) as f64));
            }
            if b >= 2 {
                terms.push((a, b - 2, c * (b * (b - 1)) as f64));
            }
        }
        Poly2 { terms }
    }
}
