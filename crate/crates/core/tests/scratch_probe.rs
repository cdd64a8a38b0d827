//! Temporary probe of the biharmonic pipeline against reference values.

use hhobi::basis::error_quad_order;
use hhobi::biharmonic::{solve, SplitProblem};
use hhobi::hho::{assemble, Degrees, StabKind};
use hhobi::mesh::generate_cartesian;
use hhobi::precond;
use hhobi::quadrature::polygon_rule;
use nalgebra::{Point2, Vector2};
use std::f64::consts::PI;

fn psi(p: Point2<f64>) -> f64 {
    p.x * (PI * p.y).sin() * (-p.x * p.y).exp()
}

fn omega(p: Point2<f64>) -> f64 {
    let (x, y) = (p.x, p.y);
    let s = (PI * y).sin();
    let c = (PI * y).cos();
    (-x.powi(3) * s + 2.0 * PI * c * x * x - x * y * y * s + PI * PI * x * s + 2.0 * y * s)
        * (-x * y).exp()
}

fn f(p: Point2<f64>) -> f64 {
    let (x, y) = (p.x, p.y);
    let s = (PI * y).sin();
    let c = (PI * y).cos();
    (x.powi(5) * s - 4.0 * PI * c * x.powi(4) + 2.0 * x.powi(3) * y * y * s
        - 6.0 * PI * PI * s * x.powi(3)
        - 4.0 * PI * c * x * x * y * y
        - 12.0 * x * x * y * s
        + 4.0 * PI.powi(3) * c * x * x
        + x * y.powi(4) * s
        - 2.0 * PI * PI * x * s * y * y
        + 16.0 * PI * x * y * c
        + 12.0 * x * s
        + PI.powi(4) * x * s
        - 4.0 * y.powi(3) * s
        + 4.0 * PI * PI * y * s
        - 8.0 * PI * c)
        * (-x * y).exp()
}

fn grad_psi(p: Point2<f64>) -> Vector2<f64> {
    let (x, y) = (p.x, p.y);
    let s = (PI * y).sin();
    let c = (PI * y).cos();
    Vector2::new(
        (1.0 - x * y) * (-x * y).exp() * s,
        x * (PI * c - x * s) * (-x * y).exp(),
    )
}

fn rel_err(
    sys: &hhobi::hho::CondensedSystem,
    field: &hhobi::hho::CellField,
    exact: impl Fn(Point2<f64>) -> f64,
) -> f64 {
    let mesh = sys.mesh();
    let order = error_quad_order(sys.degrees().k);
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..mesh.n_cells() {
        let quad = polygon_rule(&mesh.cell_polygon(c), order).unwrap();
        num += quad.integrate(|p| (field.value(mesh, c, p) - exact(p)).powi(2));
        den += quad.integrate(|p| exact(p).powi(2));
    }
    (num / den).sqrt()
}

#[test]
fn probe_fig2_and_table1() {
    // finite-difference sanity of the hardcoded formulas
    let h = 1e-4;
    for &(x, y) in &[(0.3, 0.4), (0.7, 0.2), (0.5, 0.9)] {
        let p = Point2::new(x, y);
        let lap = (psi(Point2::new(x + h, y))
            + psi(Point2::new(x - h, y))
            + psi(Point2::new(x, y + h))
            + psi(Point2::new(x, y - h))
            - 4.0 * psi(p))
            / (h * h);
        assert!(
            (-lap - omega(p)).abs() < 1e-5,
            "omega formula wrong at ({x},{y}): fd {} vs {}",
            -lap,
            omega(p)
        );
        let lap_om = (omega(Point2::new(x + h, y))
            + omega(Point2::new(x - h, y))
            + omega(Point2::new(x, y + h))
            + omega(Point2::new(x, y - h))
            - 4.0 * omega(p))
            / (h * h);
        assert!(
            (-lap_om - f(p)).abs() < 1e-3,
            "f formula wrong at ({x},{y}): fd {} vs {}",
            -lap_om,
            f(p)
        );
    }

    for (n, k) in [(16usize, 0usize), (16, 1), (16, 2), (32, 1)] {
        let sys = assemble(generate_cartesian(n), Degrees::equal(k), StabKind::Classic).unwrap();
        let problem =
            SplitProblem::new(sys, f, psi, |p, nv| grad_psi(p).dot(&nv), 1e-12).unwrap();
        let sol = solve(&problem, None).unwrap();
        let e_psi = rel_err(problem.system(), &sol.psi, psi);
        let e_om = rel_err(problem.system(), &sol.omega, omega);
        println!(
            "n={n} k={k}: err_psi={e_psi:.4e} err_omega={e_om:.4e} iters={}",
            sol.report.iterations
        );
    }

    // Table 1 columns N=32 and N=64
    for n in [32usize, 64] {
        for k in 0..=3usize {
            let sys =
                assemble(generate_cartesian(n), Degrees::equal(k), StabKind::Classic).unwrap();
            let problem =
                SplitProblem::new(sys, f, psi, |p, nv| grad_psi(p).dot(&nv), 1e-8).unwrap();
            let unprec = solve(&problem, None).unwrap();
            let pc = precond::build(&problem, 8).unwrap();
            let prec = solve(&problem, Some(&pc)).unwrap();
            println!(
                "n={n} k={k}: PFCG(8) = {}, unprec = {}",
                prec.report.iterations, unprec.report.iterations
            );
        }
    }
}
