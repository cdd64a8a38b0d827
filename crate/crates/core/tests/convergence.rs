//! Convergence checks of the Poisson solve and the discrete normal
//! derivative against the manufactured solution `sin(4 pi x) sin(4 pi y)`.

use hhobi::basis::error_quad_order;
use hhobi::hho::{assemble, CondensedSystem, Degrees, StabKind};
use hhobi::mesh::{generate_cartesian, generate_triangular, Mesh};
use hhobi::quadrature::{polygon_rule, segment_rule};
use hhobi::trace::normal_derivative;
use nalgebra::{Point2, Vector2};
use std::f64::consts::PI;

fn u(p: Point2<f64>) -> f64 {
    (4.0 * PI * p.x).sin() * (4.0 * PI * p.y).sin()
}

fn f(p: Point2<f64>) -> f64 {
    32.0 * PI * PI * u(p)
}

fn grad_u(p: Point2<f64>) -> Vector2<f64> {
    Vector2::new(
        4.0 * PI * (4.0 * PI * p.x).cos() * (4.0 * PI * p.y).sin(),
        4.0 * PI * (4.0 * PI * p.x).sin() * (4.0 * PI * p.y).cos(),
    )
}

/// Relative L2(domain) error of the reconstruction.
fn field_error(sys: &CondensedSystem, rec: &hhobi::hho::CellField) -> f64 {
    let mesh = sys.mesh();
    let order = error_quad_order(sys.degrees().k);
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..mesh.n_cells() {
        let quad = polygon_rule(&mesh.cell_polygon(c), order).unwrap();
        num += quad.integrate(|p| (rec.value(mesh, c, p) - u(p)).powi(2));
        den += quad.integrate(|p| u(p).powi(2));
    }
    (num / den).sqrt()
}

/// Relative L2(boundary) error of the discrete normal derivative.
fn flux_error(sys: &CondensedSystem, flux: &hhobi::trace::TraceVector) -> f64 {
    let mesh = sys.mesh();
    let order = error_quad_order(sys.degrees().k);
    let mut num = 0.0;
    let mut den = 0.0;
    for (bpos, &fid) in mesh.boundary_faces().iter().enumerate() {
        let face = mesh.face(fid);
        let fb = hhobi::basis::FaceBasis::new(face, sys.degrees().k);
        let coeffs = nalgebra::DVector::from_column_slice(flux.block(bpos));
        let (a, b) = (mesh.vertex(face.vertices[0]), mesh.vertex(face.vertices[1]));
        let quad = segment_rule(a, b, order);
        num += quad.integrate(|p| {
            let exact = grad_u(p).dot(&face.normal);
            (fb.value(&coeffs, p) - exact).powi(2)
        });
        den += quad.integrate(|p| grad_u(p).dot(&face.normal).powi(2));
    }
    (num / den).sqrt()
}

fn run(mesh: Mesh, k: usize) -> (f64, f64, f64) {
    let sys = assemble(mesh, Degrees::equal(k), StabKind::Classic).unwrap();
    let sol = sys.solve_poisson(f, u).unwrap();
    let rec = sys.reconstruct(&sol);
    let flux = normal_derivative(&sol, f, &sys).unwrap();
    (sys.mesh().h(), field_error(&sys, &rec), flux_error(&sys, &flux))
}

#[test]
fn normal_derivative_first_points_match_reference() {
    // reference values at h = sqrt(2)/16 on the Cartesian mesh
    let (_, _, e0) = run(generate_cartesian(16), 0);
    assert!(
        (e0 / 2.24e-01 - 1.0).abs() < 0.5,
        "k=0 flux error {e0} vs reference 2.24e-01"
    );
    let (_, _, e1) = run(generate_cartesian(16), 1);
    assert!(
        (e1 / 2.96e-02 - 1.0).abs() < 0.5,
        "k=1 flux error {e1} vs reference 2.96e-02"
    );
}

#[test]
fn flux_converges_at_order_k_plus_one() {
    for k in 0..=2usize {
        for generator in [generate_cartesian as fn(usize) -> Mesh, generate_triangular] {
            let mut prev: Option<(f64, f64)> = None;
            let mut slopes = Vec::new();
            for n in [8, 16, 32] {
                let (h, _, e) = run(generator(n), k);
                if let Some((hp, ep)) = prev {
                    slopes.push((ep / e).ln() / (hp / h).ln());
                }
                prev = Some((h, e));
            }
            let last = *slopes.last().unwrap();
            assert!(
                (last - (k as f64 + 1.0)).abs() <= 0.25,
                "flux order {last} for k={k}"
            );
        }
    }
}

#[test]
fn reconstruction_converges_at_order_k_plus_two() {
    for k in 0..=1usize {
        let mut errors = Vec::new();
        let mut hs = Vec::new();
        for n in [8, 16, 32, 64] {
            let (h, e, _) = run(generate_cartesian(n), k);
            hs.push(h);
            errors.push(e);
        }
        // observed slope over the three finest meshes
        let s1 = (errors[1] / errors[2]).ln() / (hs[1] / hs[2]).ln();
        let s2 = (errors[2] / errors[3]).ln() / (hs[2] / hs[3]).ln();
        for s in [s1, s2] {
            assert!(
                s >= k as f64 + 1.8 && s <= k as f64 + 2.3,
                "reconstruction order {s} for k={k}"
            );
        }
    }
}
