use teng_core::ansatz::{init_params, Ansatz, Mlp, ModelSpec};
use teng_core::engine::{
    integrate, pretrain, teng_stepper, Collocation, ErrorMonitor, IntegratorConfig, LinearAdapter, Problem, Scheme,
    StepperConfig,
};
use teng_core::pde::{DirichletBC, HeatOperator};
use teng_core::sampling::{make_grid, sample_disk, SampleSet};
use teng_core::special::{experiment1_expansion, ExactSolution, ModalExpansion};
use teng_core::{verify, ParamVector32, SampleSet32, StepperConfig32};

#[test]
fn exact_solution_satisfies_heat_equation() {
    let nu = 0.1;
    let sol = ExactSolution::new(experiment1_expansion::<f64>().unwrap(), nu);
    for t in [0.1, 1.0] {
        for p in sample_disk::<f64>(200, 17).unwrap() {
            let dudt = verify::central_difference(|s| sol.value(s, &p), t, 1e-4);
            assert!((dudt - nu * sol.laplacian_value(t, &p)).abs() <= 1e-4);
        }
    }
}

#[test]
fn single_precision_heun_step() {
    let e = ModalExpansion::<f32>::single_mode(0, 1, 1.0).unwrap();
    let (adapter, theta) = LinearAdapter::from_expansion(&e);
    let collocation = Collocation::Fixed(SampleSet32::generate(400, 50, 3).unwrap());
    let bc = DirichletBC::homogeneous(1.0f32).unwrap();
    let problem = Problem {
        ansatz: &adapter,
        operator: HeatOperator::new(0.1f32).unwrap(),
        bc: &bc,
        collocation: &collocation,
        monitor: None,
    };
    let scfg = StepperConfig32 { ridge: 0.0, ..StepperConfig32::default() };
    let icfg = IntegratorConfig { dt: 0.05f32, t_final: 0.05, scheme: Scheme::Heun };
    let out: ParamVector32 = integrate(&problem, &theta, &scfg, &icfg, None).unwrap().theta;
    let rate = 0.1 * f64::from(adapter.basis[0].lambda).powi(2);
    assert!((f64::from(out[0]) - verify::heun_factor(rate, 0.05)).abs() <= 1e-4);
}

#[test]
fn small_network_tracks_single_mode() {
    let e = ModalExpansion::single_mode(0, 1, 1.0).unwrap();
    let samples = SampleSet::<f64>::generate(1024, 128, 4321).unwrap();
    let bc = DirichletBC::homogeneous(1.0).unwrap();
    let spec = ModelSpec::new(vec![16, 16], 1234).unwrap();
    let net = Mlp::new(spec.clone()).unwrap();
    let rep = pretrain(&net, &init_params(&spec), &e, &samples, &bc, &StepperConfig::pretraining(), 50, 1e-6).unwrap();
    assert!(rep.achieved_loss.total < 1e-4);

    let grid = make_grid::<f64>(32).unwrap();
    let monitor = ErrorMonitor::uniform(ExactSolution::new(e, 0.1), grid.points);
    let collocation = Collocation::Fixed(samples);
    let problem = Problem {
        ansatz: &net,
        operator: HeatOperator::new(0.1).unwrap(),
        bc: &bc,
        collocation: &collocation,
        monitor: Some(&monitor),
    };
    let scfg = StepperConfig { n_it: 2, ..StepperConfig::default() };
    let icfg = IntegratorConfig { dt: 0.01, t_final: 0.1, scheme: Scheme::Heun };
    let out = integrate(&problem, &rep.theta, &scfg, &icfg, None).unwrap();
    assert_eq!(out.trajectory.len(), 11);
    let last = out.trajectory.last().unwrap();
    assert!((last.time - 0.1).abs() < 1e-12);
    assert!(last.rel_l2_error.unwrap() < 5e-2, "{:?}", last.rel_l2_error);
}

#[test]
fn stepper_errors_are_reported_not_panicked() {
    let e = ModalExpansion::single_mode(0, 1, 1.0).unwrap();
    let (adapter, theta) = LinearAdapter::<f64>::from_expansion(&e);
    let samples = SampleSet::<f64>::generate(20, 4, 1).unwrap();
    let bc = DirichletBC::homogeneous(1.0).unwrap();
    let nan_target = vec![f64::NAN; 20];
    assert!(teng_stepper(&adapter, &theta, &nan_target, &samples, &bc, &StepperConfig::default()).is_err());
    assert_eq!(adapter.n_params(), 1);
}
