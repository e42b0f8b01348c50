use proptest::prelude::*;

use policy_lab::parametrization::{policy_gradient, policy_of, project_simplex, row_policy};
use policy_lab::{ParamKind, PolicyParams, Table};

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn on_simplex(x: &[f64]) -> bool {
    x.iter().all(|&v| v >= 0.0) && (x.iter().sum::<f64>() - 1.0).abs() < 1e-12
}

fn simplex_point(raw: Vec<f64>) -> Vec<f64> {
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

fn vec_pair(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(-5.0..5.0f64, n),
        )
    })
}

proptest! {
    #[test]
    fn projection_is_idempotent_and_lands_on_simplex(x in prop::collection::vec(-10.0..10.0f64, 1..8)) {
        let p = project_simplex(&x);
        prop_assert!(on_simplex(&p));
        let again = project_simplex(&p);
        prop_assert!(norm(&diff(&again, &p)) < 1e-12);
    }

    #[test]
    fn projection_is_nonexpansive((x, y) in vec_pair(1..=7)) {
        let (px, py) = (project_simplex(&x), project_simplex(&y));
        prop_assert!(norm(&diff(&px, &py)) <= norm(&diff(&x, &y)) + 1e-12);
    }

    #[test]
    fn projection_keeps_the_largest_move_largest(
        (raw, delta) in (2usize..=6).prop_flat_map(|n| (
            prop::collection::vec(0.01..1.0f64, n),
            prop::collection::vec(-3.0..3.0f64, n),
        ))
    ) {
        let theta = simplex_point(raw);
        let moved: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + d).collect();
        let p = project_simplex(&moved);
        let best = (0..delta.len()).fold(0, |b, k| if delta[k] > delta[b] { k } else { b });
        let gain = p[best] - theta[best];
        for k in 0..delta.len() {
            prop_assert!(gain >= p[k] - theta[k] - 1e-12);
        }
    }

    #[test]
    fn escort_ignores_signs(row in prop::collection::vec(-4.0..4.0f64, 2..6), p in 1.0..4.0f64) {
        prop_assume!(row.iter().any(|x| x.abs() > 1e-3));
        let kind = ParamKind::Escort { p };
        let flipped: Vec<f64> = row.iter().map(|x| -x).collect();
        let a = policy_of(&PolicyParams::new(Table::from_rows(vec![row.clone()]), kind).unwrap()).unwrap();
        let b = policy_of(&PolicyParams::new(Table::from_rows(vec![flipped]), kind).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn gradients_match_central_differences(
        row in prop::collection::vec(0.2..3.0f64, 2..6),
        signs in prop::collection::vec(any::<bool>(), 6),
        p in 1.0..4.0f64,
        escort in any::<bool>(),
    ) {
        let kind = if escort { ParamKind::Escort { p } } else { ParamKind::Softmax };
        let row: Vec<f64> = row.iter().zip(&signs).map(|(x, &s)| if s { -x } else { *x }).collect();
        let params = PolicyParams::new(Table::from_rows(vec![row.clone()]), kind).unwrap();
        let grad = policy_gradient(&params, 0).unwrap();
        let scale = grad.d_pi.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        let h = 1e-6;
        for w in 0..row.len() {
            let (mut up, mut down) = (row.clone(), row.clone());
            up[w] += h;
            down[w] -= h;
            let (pu, pd) = (row_policy(kind, &up).unwrap(), row_policy(kind, &down).unwrap());
            for a in 0..row.len() {
                let fd = (pu[a] - pd[a]) / (2.0 * h);
                prop_assert!((fd - grad.d_pi[a][w]).abs() <= 1e-5 * scale, "a={} w={} fd={} analytic={}", a, w, fd, grad.d_pi[a][w]);
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(row in prop::collection::vec(-700.0..700.0f64, 1..8)) {
        prop_assert!(on_simplex(&row_policy(ParamKind::Softmax, &row).unwrap()));
    }
}

#[test]
fn initial_rows_are_uniform() {
    for kind in [ParamKind::Softmax, ParamKind::Escort { p: 2.0 }, ParamKind::Direct] {
        let pi = policy_of(&PolicyParams::uniform(kind, 3, 4)).unwrap();
        assert!(pi.table().as_slice().iter().all(|&p| (p - 0.25).abs() < 1e-15), "{kind}");
    }
}

#[test]
fn invalid_rows_are_rejected() {
    let table = |row: Vec<f64>| Table::from_rows(vec![row]);
    assert!(PolicyParams::new(table(vec![0.5, 0.6]), ParamKind::Direct).is_err());
    assert!(PolicyParams::new(table(vec![0.0, 0.0]), ParamKind::Escort { p: 2.0 }).is_err());
    assert!(PolicyParams::new(table(vec![1.0, 1.0]), ParamKind::Escort { p: 0.0 }).is_err());
    assert!(PolicyParams::new(table(vec![f64::NAN, 1.0]), ParamKind::Softmax).is_err());
}
