use std::cell::Cell;

use lodegp::systems::{make_system, BUILTIN};
use lodegp::verify::{ode_residual, rmse, trajectory_eval};
use lodegp::Error;
use proptest::prelude::*;

#[test]
fn reference_solutions_satisfy_their_systems() {
    for name in BUILTIN {
        let spec = make_system(name).unwrap();
        let Some(f) = spec.reference else {
            continue;
        };
        let r = ode_residual(&trajectory_eval(f), &spec, spec.eval_interval, &spec.defaults()).unwrap();
        assert!(r.mean <= 1e-5, "{name}: {}", r.mean);
        assert!(r.per_equation.iter().all(|&e| e >= 0.0));
        let avg = r.per_equation.iter().sum::<f64>() / r.per_equation.len() as f64;
        assert_eq!(r.mean, avg);
    }
}

#[test]
fn first_order_uses_five_hundred_base_points() {
    let spec = make_system("heating").unwrap();
    let r = ode_residual(
        &trajectory_eval(spec.reference.unwrap()),
        &spec,
        spec.eval_interval,
        &spec.defaults(),
    )
    .unwrap();
    assert_eq!(r.point_count, 1000);
    assert_eq!(r.delta, 1e-3);
}

#[test]
fn evaluation_receives_sorted_times() {
    let spec = make_system("bipendulum").unwrap();
    let calls = Cell::new(0);
    let eval = |ts: &[f64]| {
        calls.set(calls.get() + 1);
        assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        Ok(ts.iter().map(|&t| (spec.reference.unwrap())(t)).collect())
    };
    ode_residual(&eval, &spec, spec.eval_interval, &spec.defaults()).unwrap();
    assert_eq!(calls.get(), 1);
}

#[test]
fn rejects_bad_inputs() {
    let spec = make_system("bipendulum").unwrap();
    let f = trajectory_eval(spec.reference.unwrap());
    assert!(ode_residual(&f, &spec, (2.0, 1.0), &spec.defaults()).is_err());
    let mut cubic = spec.clone();
    cubic.matrix = lodegp::OperatorMatrix::from_rows(vec![vec![
        lodegp::opalgebra::parse_operator("D^3").unwrap(),
        lodegp::OperatorPoly::zero(),
        lodegp::OperatorPoly::zero(),
    ]])
    .unwrap();
    assert!(matches!(
        ode_residual(&f, &cubic, (0.0, 1.0), &spec.defaults()),
        Err(Error::UnsupportedOrder(3))
    ));
}

fn grid() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 1..20)
}

proptest! {
    #[test]
    fn rmse_is_a_metric(a in grid(), shift in -5.0f64..5.0, seed in 0usize..1000) {
        let n = a.len();
        let b: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|x| x + shift).collect()).collect();
        let c: Vec<Vec<f64>> = a
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|x| x * 0.5 + ((i * 7 + seed) % 13) as f64).collect())
            .collect();
        prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let ab = rmse(&a, &b).unwrap();
        prop_assert!((ab - rmse(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert!((ab - shift.abs()).abs() <= 1e-9 * (1.0 + shift.abs()));
        let (ac, bc) = (rmse(&a, &c).unwrap(), rmse(&b, &c).unwrap());
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!(ab <= ac + bc + 1e-12);
        prop_assert!(rmse(&a, &a[..n - 1]).is_err() || n == 0);
    }
}
