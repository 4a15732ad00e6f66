use twistprop::hardy::*;
use twistprop::lie::{is_mw, mw_lift, LieAlgebra2Step};
use twistprop::linalg::{c, RMat};
use twistprop::propagate::GaussianSlices;
use twistprop::twisted::{sample, Axis, FieldSpace, Grid, MuGrid};

const S: f64 = 0.5;
const T: f64 = 0.5;
const EPS: f64 = 0.25;

fn heat_data(u_half: f64, x_half: f64) -> ExperimentData {
    let h1 = LieAlgebra2Step::heisenberg(1);
    // Slices decay like e^{-2 pi s |mu|}; mu = 0 stays off the grid and the
    // central period 1/dmu exceeds twice the u-box.
    let dmu = 1.0 / (2.2 * u_half);
    let half = (10.0 / dmu) as usize;
    let mg = MuGrid::new(vec![(half as f64 - 0.5) * dmu], vec![2 * half], 1e-12).unwrap();
    ExperimentData::Gaussian {
        slices: GaussianSlices::heat(S, &h1, &mg).unwrap(),
        x_grid: Grid::uniform(2, x_half, 48).unwrap(),
        u_grid: Grid::uniform(1, u_half, 96).unwrap(),
    }
}

fn run(data: &ExperimentData, a: f64, b: f64, t: f64) -> UniquenessReport {
    let env0 = DecayEnvelope::rate(a, DEFAULT_DELTA).unwrap();
    let env_t = DecayEnvelope::rate(b, DEFAULT_DELTA).unwrap();
    uniqueness_experiment(&LieAlgebra2Step::heisenberg(1), data, &RMat::identity(2, 2), t, env0, env_t, DEFAULT_CEILING)
        .unwrap()
}

#[test]
fn heat_data_never_yields_a_forced_zero() {
    // e^{iTL} h_s decays in x at rate (s^2 + T^2)/s = 2.5 for T = 1.
    let t = 1.0;
    let data = heat_data(25.0, 24.0);
    let a = (1.0 + EPS) * S;
    for b in [0.3, 0.7, 1.0, 1.5, 3.2, 5.0] {
        let r = run(&data, a, b, t);
        println!("b = {b}: {:?} margin {:.3} fit0 {:?} fitT {:?}", r.classification, r.margin, r.fit0, r.fit_t);
        assert_ne!(r.classification, Classification::ForcedZero);
        if a * b < t * t {
            assert_eq!(r.arithmetic, Classification::ForcedZero);
            assert!(r.margin > 0.0);
            assert!(!r.failed.is_empty());
        }
        if b >= a {
            assert!(r.fit0.passed, "{:?}", r.fit0);
            assert_eq!(r.fit_t.passed, b > 2.5, "b = {b}");
        }
    }
}

#[test]
fn case_two_is_case_one_on_reversed_data() {
    let data = heat_data(12.0, 16.0);
    let forward = match &data {
        ExperimentData::Gaussian { slices, x_grid, u_grid } => ExperimentData::Gaussian {
            slices: slices
                .propagate(&twistprop::propagate::PropagatorSpec::new(RMat::identity(2, 2), T).unwrap())
                .unwrap(),
            x_grid: x_grid.clone(),
            u_grid: u_grid.clone(),
        },
        _ => unreachable!(),
    };
    let (a, b) = ((1.0 + EPS) * S, 1.25);
    // f = e^{iTL} h_s with rate b, evolved over -T back to h_s with rate a < b.
    let r2 = run(&forward, b, a, -T);
    let r1 = run(&data, a, b, T);
    assert!(r2.case2 && !r1.case2);
    assert_eq!((r2.a, r2.b, r2.t_big), (r1.a, r1.b, r1.t_big));
    assert_eq!(r2.classification, r1.classification);
    assert_eq!(r2.margin, r1.margin);
    for (x, y) in [(r2.fit0.c_min, r1.fit0.c_min), (r2.fit_t.c_min, r1.fit_t.c_min), (r2.f_norm, r1.f_norm)] {
        assert!((x - y).abs() < 1e-6 * y.abs(), "{x} vs {y}");
    }
}

#[test]
fn zero_data_is_consistent() {
    let g = Grid::group(&Grid::uniform(2, 6.0, 16).unwrap(), &Grid::uniform(1, 6.0, 16).unwrap());
    let data = ExperimentData::Field {
        f: twistprop::twisted::SampledField::zeros(&g, FieldSpace::Group { m: 2 }),
        mu_grid: MuGrid::symmetric(1, 1.0, 8, 1e-6).unwrap(),
        lift: None,
    };
    let r = run(&data, 1.0, 1.0, 1.1);
    assert_eq!(r.classification, Classification::ForcedZero);
    assert!((r.margin - 0.21).abs() < 1e-12);
    assert_eq!(r.f_norm, 0.0);
    assert!(!r.artifact);
}

#[test]
fn lift_transfers_the_envelope_nodewise() {
    let free = LieAlgebra2Step::free(3);
    assert!(!is_mw(&free, 64, 1).is_mw);
    let lift = mw_lift(&free);
    assert!(is_mw(&lift.algebra, 64, 1).is_mw);
    let (a, delta) = (0.8, 0.1);
    let g = Grid::group(&Grid::uniform(3, 3.0, 4).unwrap(), &Grid::uniform(3, 3.0, 4).unwrap());
    let f = sample(
        |p| {
            let x2: f64 = p[..3].iter().map(|v| v * v).sum();
            let u: f64 = p[3..].iter().map(|v| v * v).sum::<f64>().sqrt();
            c((-x2 / (4.0 * a) - delta * u).exp() * (1.0 + 0.3 * p[0].sin()), 0.0)
        },
        &g,
        FieldSpace::Group { m: 3 },
    );
    let c0 = envelope_fit(&f, a, delta, DEFAULT_CEILING).c_min;
    let ax = Axis::new(3.0, 4).unwrap();
    let ft = lift_field(&f, a, delta, &lift, &ax, &ax).unwrap();
    let a1 = lifted_rate(a, delta).unwrap();
    for i in 0..ft.grid.len() {
        let p = ft.grid.point(i);
        let xx: f64 = p[..6].iter().map(|v| v * v).sum();
        let us: f64 = p[6..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = c0 * (-xx / (4.0 * a1) - delta * us).exp();
        assert!(ft.values[i].norm() <= bound * (1.0 + 1e-12), "node {p:?}");
    }
    assert!(envelope_fit(&ft, a1, delta, DEFAULT_CEILING).c_min <= c0 * (1.0 + 1e-6));
}

#[test]
fn lifted_pipeline_propagates_with_a_singular_lifted_a() {
    // Two nodes per axis: this only exercises the plumbing of the lifted run.
    let free = LieAlgebra2Step::free(3);
    let g = Grid::group(&Grid::uniform(3, 1.0, 2).unwrap(), &Grid::uniform(3, 1.0, 2).unwrap());
    let f = sample(|p| c((-p.iter().map(|v| v * v).sum::<f64>()).exp(), 0.0), &g, FieldSpace::Group { m: 3 });
    let ax = Axis::new(1.0, 2).unwrap();
    let data = ExperimentData::Field {
        f,
        mu_grid: MuGrid::symmetric(3, 1.0, 2, 1e-6).unwrap(),
        lift: Some(LiftGrids { xi: ax.clone(), s: ax, mu_grid: MuGrid::symmetric(4, 1.0, 2, 1e-6).unwrap() }),
    };
    let env = DecayEnvelope::rate(0.8, DEFAULT_DELTA).unwrap();
    let r = uniqueness_experiment(&free, &data, &RMat::identity(3, 3), 0.5, env, env, DEFAULT_CEILING).unwrap();
    assert!(r.lifted && !r.case2);
    assert_eq!(r.a, lifted_rate(0.8, DEFAULT_DELTA).unwrap());
    assert!(r.f_norm.is_finite() && r.w_norm.is_finite() && r.w_norm > 0.0);
}
