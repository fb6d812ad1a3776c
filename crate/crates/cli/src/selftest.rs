//! Quick invariant checks against the independent oracles in
//! `teng_core::verify`.

use teng_core::ansatz::{init_params, Ansatz, FrozenDifference, Mlp, ModelSpec, ParamVector};
use teng_core::engine::{
    integrate, relative_l2, Collocation, IntegratorConfig, LinearAdapter, Problem, Scheme, StepperConfig,
};
use teng_core::pde::{DirichletBC, HeatOperator};
use teng_core::sampling::{make_grid, sample_disk, SampleSet};
use teng_core::special::{bessel_j, experiment1_expansion, ExactSolution, ModalExpansion};
use teng_core::verify;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

/// Laplacian by Richardson-extrapolated five-point stencils (`h`, `h/2`).
pub fn richardson_laplacian(f: impl Fn(&[f64; 2]) -> f64, p: &[f64; 2], h: f64) -> f64 {
    let coarse = verify::five_point_laplacian(&f, p, h);
    let fine = verify::five_point_laplacian(&f, p, 0.5 * h);
    (4.0 * fine - coarse) / 3.0
}

pub fn bessel_zeros() -> Check {
    let e = experiment1_expansion::<f64>().expect("built-in expansion");
    let mut worst = (0.0f64, 0.0f64);
    for (h, _) in &e.terms {
        let oracle = verify::bessel_zero_bisection(h.m, h.n);
        worst.0 = worst.0.max((h.lambda - oracle).abs());
        worst.1 = worst.1.max(bessel_j(h.m, h.lambda).unwrap_or(f64::NAN).abs());
    }
    Check::new(
        "bessel zeros",
        worst.0 <= 1e-9 && worst.1 <= 1e-12,
        format!("max |λ - oracle| = {:.1e}, max |J_m(λ)| = {:.1e}", worst.0, worst.1),
    )
}

pub fn heat_residual() -> Check {
    let nu = 0.1;
    let sol = ExactSolution::new(experiment1_expansion::<f64>().expect("built-in expansion"), nu);
    let points = sample_disk::<f64>(200, 99).expect("sampling");
    let mut worst = 0.0f64;
    for t in [0.1, 1.0] {
        for p in &points {
            let dudt = verify::central_difference(|s| sol.value(s, p), t, 1e-4);
            worst = worst.max((dudt - nu * sol.laplacian_value(t, p)).abs());
        }
    }
    Check::new("heat residual", worst <= 1e-4, format!("max |u_t - νΔu| = {worst:.1e}"))
}

pub fn network_derivatives() -> Check {
    let spec = ModelSpec::new(vec![8, 8], 11).expect("spec");
    let net = Mlp::new(spec.clone()).expect("net");
    let theta: ParamVector<f64> = init_params(&spec);
    let points = sample_disk::<f64>(10, 12).expect("sampling");
    let jac = net.param_jacobian(&theta, &points);
    let fd = verify::finite_difference_jacobian(|t| net.eval(&ParamVector::new(t.to_vec()), &points), &theta);
    let mut worst_j = 0.0f64;
    for (i, row) in fd.iter().enumerate() {
        for (j, &b) in row.iter().enumerate() {
            let a = jac.get(i, j);
            if a.abs() > 1e-8 {
                worst_j = worst_j.max((a - b).abs() / a.abs());
            }
        }
    }
    let lap = net.laplacian(&theta, &points);
    let mut worst_l = 0.0f64;
    for (p, &a) in points.iter().zip(&lap) {
        let b = richardson_laplacian(|q| net.eval(&theta, &[*q])[0], p, 1e-2);
        if a.abs() > 1e-8 {
            worst_l = worst_l.max((a - b).abs() / a.abs());
        }
    }
    Check::new(
        "network derivatives",
        worst_j <= 1e-5 && worst_l <= 1e-5,
        format!("jacobian rel {worst_j:.1e}, laplacian rel {worst_l:.1e}"),
    )
}

/// Final error of a single-mode linear-adapter run against `exp(-νλ²T)`.
pub fn single_mode_error(scheme: Scheme, dt: f64, t_final: f64) -> f64 {
    let e = ModalExpansion::single_mode(0, 1, 1.0).expect("mode");
    let (adapter, theta) = LinearAdapter::from_expansion(&e);
    let lambda = adapter.basis[0].lambda;
    let collocation = Collocation::Fixed(SampleSet::generate(500, 64, 5).expect("sampling"));
    let bc = DirichletBC::homogeneous(1.0).expect("bc");
    let problem = Problem {
        ansatz: &adapter,
        operator: HeatOperator::new(0.1).expect("operator"),
        bc: &bc,
        collocation: &collocation,
        monitor: None,
    };
    let scfg = StepperConfig { n_it: 1, alpha: 1.0, ridge: 0.0, lambda_d: 1.0 };
    let icfg = IntegratorConfig { dt, t_final, scheme };
    match integrate(&problem, &theta, &scfg, &icfg, None) {
        Ok(out) => (out.theta[0] - (-0.1 * lambda * lambda * t_final).exp()).abs(),
        Err(_) => f64::NAN,
    }
}

pub fn integrator_order() -> Check {
    let mut detail = Vec::new();
    let mut passed = true;
    for (scheme, expect, tol) in [(Scheme::Euler, 1.0, 0.15), (Scheme::Heun, 2.0, 0.2)] {
        let errs: Vec<f64> = [0.05, 0.025, 0.0125].iter().map(|&dt| single_mode_error(scheme, dt, 0.5)).collect();
        for w in errs.windows(2) {
            let order = verify::observed_order(w[0], w[1]);
            passed &= (order - expect).abs() <= tol;
            detail.push(format!("{scheme:?} {order:.3}"));
        }
    }
    Check::new("integrator order", passed, detail.join(", "))
}

pub fn frozen_difference_start() -> Check {
    let e = experiment1_expansion::<f64>().expect("built-in expansion");
    let spec = ModelSpec::new(vec![32, 32], 1234).expect("spec");
    let theta = init_params::<f64>(&spec);
    let fd = FrozenDifference::new(Mlp::new(spec).expect("net"), theta.clone(), e.clone()).expect("ansatz");
    let grid = make_grid::<f64>(64).expect("grid");
    let predicted = fd.eval(&theta, &grid.points);
    let exact = e.eval(&grid.points);
    let err = relative_l2(&predicted, &exact, &vec![1.0; exact.len()]).unwrap_or(f64::NAN);
    Check::new("frozen-difference start", err <= 1e-10, format!("rel L2 at t=0 = {err:.1e}"))
}

pub fn run_all() -> Vec<Check> {
    vec![bessel_zeros(), heat_residual(), network_derivatives(), integrator_order(), frozen_difference_start()]
}
