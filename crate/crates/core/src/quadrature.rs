//! Numerical integration on segments, triangles and simple polygons.
//!
//! Polygon rules are built by sub-triangulation (fan from the centroid, with
//! an ear-clipping fallback for polygons that are not star-shaped with
//! respect to their centroid) combined with conical-product Gauss rules on
//! each triangle. A rule created with `order = p` integrates bivariate
//! polynomials of total degree `<= p` exactly.

use crate::{Error, Result};
use nalgebra::{Point2, Vector2};

/// A quadrature rule: points paired with weights in area (or length) units.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub points: Vec<Point2<f64>>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Integrates `f` against the rule.
    pub fn integrate(&self, mut f: impl FnMut(Point2<f64>) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }
}

/// Gauss-Legendre nodes and weights on [0, 1], exact up to degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Newton iteration on P_n over [-1, 1], seeded by the Chebyshev guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 0.5 * w;
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn points_for_order(order: usize) -> usize {
    order / 2 + 1
}

/// Rule on the segment [a, b], exact for 1D polynomials of degree <= order
/// along the segment. Weights sum to the segment length.
pub fn segment_rule(a: Point2<f64>, b: Point2<f64>, order: usize) -> Quadrature {
    let (nodes, weights) = gauss_legendre(points_for_order(order));
    let len = (b - a).norm();
    let points = nodes.iter().map(|&t| a + (b - a) * t).collect();
    let weights = weights.iter().map(|&w| w * len).collect();
    Quadrature { points, weights }
}

/// Conical-product rule on the triangle (v0, v1, v2), exact for total degree
/// <= order. The triangle must have positive (counter-clockwise) orientation.
pub fn triangle_rule(
    v0: Point2<f64>,
    v1: Point2<f64>,
    v2: Point2<f64>,
    order: usize,
) -> Quadrature {
    let area2 = cross(v1 - v0, v2 - v0);
    // The collapsed map picks up an extra power of the radial coordinate.
    let (nu, wu) = gauss_legendre(points_for_order(order + 1));
    let (nt, wt) = gauss_legendre(points_for_order(order));
    let mut points = Vec::with_capacity(nu.len() * nt.len());
    let mut weights = Vec::with_capacity(nu.len() * nt.len());
    for (iu, &u) in nu.iter().enumerate() {
        for (it, &t) in nt.iter().enumerate() {
            let p = v0 + ((v1 - v0) * (1.0 - t) + (v2 - v0) * t) * u;
            points.push(p);
            weights.push(wu[iu] * wt[it] * area2 * u);
        }
    }
    Quadrature { points, weights }
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Signed area (shoelace) and centroid of a polygon given as a vertex loop.
pub fn polygon_area_centroid(verts: &[Point2<f64>]) -> (f64, Point2<f64>) {
    let n = verts.len();
    let mut area2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = verts[i];
        let q = verts[(i + 1) % n];
        let c = p.x * q.y - q.x * p.y;
        area2 += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    let area = 0.5 * area2;
    let centroid = if area.abs() > 0.0 {
        Point2::new(cx / (3.0 * area2), cy / (3.0 * area2))
    } else {
        Point2::new(0.0, 0.0)
    };
    (area, centroid)
}

/// Rule on a simple polygon with counter-clockwise vertex loop, exact for
/// total degree <= order. Sub-triangulates by a fan from the centroid;
/// positive weights are guaranteed by falling back to ear clipping when the
/// polygon is not star-shaped with respect to its centroid.
pub fn polygon_rule(verts: &[Point2<f64>], order: usize) -> Result<Quadrature> {
    if verts.len() < 3 {
        return Err(Error::Geometry(format!(
            "polygon needs at least 3 vertices, got {}",
            verts.len()
        )));
    }
    let (area, centroid) = polygon_area_centroid(verts);
    if area <= 0.0 {
        return Err(Error::Geometry(format!(
            "polygon has non-positive area {area:.3e} (vertices must be counter-clockwise)"
        )));
    }
    let n = verts.len();
    let fan_ok = (0..n).all(|i| {
        let v0 = verts[i];
        let v1 = verts[(i + 1) % n];
        cross(v0 - centroid, v1 - centroid) > 1e-14 * area
    });
    let mut points = Vec::new();
    let mut weights = Vec::new();
    if fan_ok {
        for i in 0..n {
            let rule = triangle_rule(centroid, verts[i], verts[(i + 1) % n], order);
            points.extend(rule.points);
            weights.extend(rule.weights);
        }
    } else {
        for [a, b, c] in ear_clip(verts)? {
            let rule = triangle_rule(verts[a], verts[b], verts[c], order);
            points.extend(rule.points);
            weights.extend(rule.weights);
        }
    }
    Ok(Quadrature { points, weights })
}

/// Ear-clipping triangulation of a simple ccw polygon.
fn ear_clip(verts: &[Point2<f64>]) -> Result<Vec<[usize; 3]>> {
    let mut idx: Vec<usize> = (0..verts.len()).collect();
    let mut tris = Vec::with_capacity(verts.len() - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for i in 0..m {
            let (a, b, c) = (idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]);
            if cross(verts[b] - verts[a], verts[c] - verts[a]) <= 0.0 {
                continue;
            }
            let ear_free = idx
                .iter()
                .filter(|&&v| v != a && v != b && v != c)
                .all(|&v| !point_in_triangle(verts[v], verts[a], verts[b], verts[c]));
            if ear_free {
                tris.push([a, b, c]);
                idx.remove(i);
                clipped = true;
                break;
            }
        }
        if !clipped {
            return Err(Error::Geometry(
                "polygon could not be triangulated (non-simple?)".into(),
            ));
        }
    }
    tris.push([idx[0], idx[1], idx[2]]);
    Ok(tris)
}

fn point_in_triangle(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> bool {
    let d1 = cross(b - a, p - a);
    let d2 = cross(c - b, p - b);
    let d3 = cross(a - c, p - c);
    d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0
}
