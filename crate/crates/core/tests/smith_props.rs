use lodegp::opalgebra::{OperatorMatrix, OperatorPoly, Rational};
use lodegp::smith::{is_controllable, smith_normal_form, verify_snf};
use proptest::prelude::*;

fn rational() -> impl Strategy<Value = Rational> {
    (-6i64..=6, 1i64..=4).prop_map(|(p, q)| Rational::new(p.into(), q.into()))
}

fn operator(max_deg: usize) -> impl Strategy<Value = OperatorPoly> {
    prop_oneof![
        1 => Just(OperatorPoly::zero()),
        3 => proptest::collection::vec(rational(), 1..=max_deg + 1)
            .prop_map(|c| OperatorPoly::from_rationals(&c)),
    ]
}

fn matrix() -> impl Strategy<Value = OperatorMatrix> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(m, n)| {
        proptest::collection::vec(operator(3), m * n).prop_map(move |e| {
            OperatorMatrix::from_rows(e.chunks(n).map(|r| r.to_vec()).collect()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn decomposition_identity_holds(a in matrix()) {
        let s = smith_normal_form(&a).unwrap();
        prop_assert!(verify_snf(&a, &s));
        prop_assert!(s.d.is_diagonal());
        prop_assert!(!s.det_u.is_zero() && !s.det_v.is_zero());
        let diag = s.d.diagonal();
        let nonzero: Vec<_> = diag.iter().take_while(|e| !e.is_zero()).collect();
        prop_assert!(diag[nonzero.len()..].iter().all(|e| e.is_zero()));
        for e in &nonzero {
            prop_assert!(e.leading().unwrap().is_one());
        }
        for w in nonzero.windows(2) {
            prop_assert!(w[1].divmod(w[0]).unwrap().1.is_zero());
        }
        prop_assert!(is_controllable(&s.d).is_ok());
    }

    #[test]
    fn normal_form_is_idempotent(a in matrix()) {
        let s = smith_normal_form(&a).unwrap();
        let t = smith_normal_form(&s.d).unwrap();
        prop_assert_eq!(&t.d, &s.d);
    }
}

#[test]
fn parameters_commute_with_decomposition() {
    use lodegp::opalgebra::parse_operator;
    use std::collections::BTreeMap;
    let rows = [["D + a", "-a", "-1"], ["-b", "D + b", "0"]];
    let a = OperatorMatrix::from_rows(
        rows.iter()
            .map(|r| r.iter().map(|s| parse_operator(s).unwrap()).collect())
            .collect(),
    )
    .unwrap();
    let s = smith_normal_form(&a).unwrap();
    for (x, y) in [(3, 1), (2, 5), (-7, 3), (11, 13), (1, 2), (5, -4), (9, 7), (-2, -3), (4, 9), (6, 1)] {
        let env: BTreeMap<String, Rational> = [
            ("a".to_string(), Rational::from_integer(x.into())),
            ("b".to_string(), Rational::from_integer(y.into())),
        ]
        .into();
        let sub = |m: &OperatorMatrix| m.substitute(&env).unwrap();
        let lhs = sub(&s.u).mul(&sub(&a)).unwrap().mul(&sub(&s.v)).unwrap();
        assert_eq!(lhs, sub(&s.d));
    }
}
