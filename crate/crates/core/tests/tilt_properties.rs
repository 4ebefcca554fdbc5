use fedtilt::oracle::{direct_tilted_aggregate, finite_diff_grad, relative_error};
use fedtilt::tilt::{global_tilted_loss, tilted_aggregate, tilted_gradient_weights, Distance};
use fedtilt::ParamVector;
use proptest::prelude::*;

fn loss_set() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(-50.0f64..50.0, n),
            prop::collection::vec(0.01f64..10.0, n),
        )
    })
}

fn bounds(losses: &[f64]) -> (f64, f64) {
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn aggregate_within_loss_range((losses, weights) in loss_set(), t in -200.0f64..200.0) {
        let (lo, hi) = bounds(&losses);
        let v = tilted_aggregate(&losses, &weights, t).unwrap();
        prop_assert!(lo <= v && v <= hi, "{v} not in [{lo}, {hi}]");
    }

    #[test]
    fn aggregate_is_monotone_in_tilt((losses, weights) in loss_set(), a in -20.0f64..20.0, b in -20.0f64..20.0) {
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        let vs = tilted_aggregate(&losses, &weights, s).unwrap();
        let vt = tilted_aggregate(&losses, &weights, t).unwrap();
        prop_assert!(vs <= vt + 1e-9 * (1.0 + vt.abs()));
    }

    #[test]
    fn shift_equivariance((losses, weights) in loss_set(), t in -20.0f64..20.0, c in -10.0f64..10.0) {
        let shifted: Vec<f64> = losses.iter().map(|l| l + c).collect();
        let a = tilted_aggregate(&losses, &weights, t).unwrap();
        let b = tilted_aggregate(&shifted, &weights, t).unwrap();
        prop_assert!((a + c - b).abs() < 1e-9 * (1.0 + b.abs()));
    }

    #[test]
    fn continuous_through_zero((losses, weights) in loss_set(), eps in 1e-13f64..1e-10) {
        let zero = tilted_aggregate(&losses, &weights, 0.0).unwrap();
        for t in [eps, -eps] {
            let v = tilted_aggregate(&losses, &weights, t).unwrap();
            prop_assert!((v - zero).abs() < 1e-6);
        }
    }

    #[test]
    fn coefficients_normalized((losses, weights) in loss_set(), t in -1e4f64..1e4) {
        let c = tilted_gradient_weights(&losses, &weights, t).unwrap();
        prop_assert!(c.iter().all(|x| x.is_finite() && *x >= 0.0));
        prop_assert!((c.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn agrees_with_direct_evaluation((losses, weights) in loss_set(), t in -5.0f64..5.0) {
        prop_assume!(t.abs() > 1e-6);
        let small: Vec<f64> = losses.iter().map(|l| l / 10.0).collect();
        let shifted = tilted_aggregate(&small, &weights, t).unwrap();
        let direct = direct_tilted_aggregate(&small, &weights, t);
        prop_assert!((shifted - direct).abs() < 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn coefficients_are_loss_gradient((losses, weights) in loss_set(), t in -3.0f64..3.0) {
        let small: Vec<f64> = losses.iter().map(|l| l / 10.0).collect();
        let x = ParamVector::new(small);
        let c = tilted_gradient_weights(&x, &weights, t).unwrap();
        let fd = finite_diff_grad(|l| tilted_aggregate(l, &weights, t).unwrap(), &x, 1e-6).unwrap();
        prop_assert!(relative_error(&c, &fd, 1e-3) < 1e-6);
    }

    #[test]
    fn global_gradient_matches_differences(
        models in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 1..5),
        w in prop::collection::vec(-2.0f64..2.0, 4),
        q in -2.0f64..2.0,
    ) {
        let models: Vec<ParamVector> = models.into_iter().map(ParamVector::new).collect();
        let w = ParamVector::new(w);
        let analytic = global_tilted_loss(&models, &w, q, Distance::SquaredEuclidean).unwrap();
        let fd = finite_diff_grad(
            |p| global_tilted_loss(&models, p, q, Distance::SquaredEuclidean).unwrap().value,
            &w,
            1e-6,
        )
        .unwrap();
        prop_assert!(relative_error(&analytic.gradient, &fd, 1e-3) < 1e-5);
    }
}

#[test]
fn extreme_tilts_reach_max_and_min() {
    let losses = [0.2, 1.3, 4.0, 2.5];
    let w = [1.0, 2.0, 0.5, 1.0];
    assert!((tilted_aggregate(&losses, &w, 1e3).unwrap() - 4.0).abs() < 1e-2);
    assert!((tilted_aggregate(&losses, &w, -1e3).unwrap() - 0.2).abs() < 1e-2);
}

#[test]
fn far_model_dominates_positive_q() {
    let models = [ParamVector::new(vec![0.1, 0.0]), ParamVector::new(vec![4.0, 3.0])];
    let w_prev = ParamVector::new(vec![0.0, 0.0]);
    let d: Vec<f64> = models.iter().map(|m| m.squared_distance(&w_prev)).collect();
    let c = tilted_gradient_weights(&d, &[1.0, 1.0], 5.0).unwrap();
    assert!(c[1] > 0.9, "{c:?}");
}

#[test]
fn random_five_loss_coefficients() {
    let x = ParamVector::new(vec![0.3, -1.2, 2.2, 0.9, 1.4]);
    let w = [1.0; 5];
    let c = tilted_gradient_weights(&x, &w, 1.7).unwrap();
    let fd = finite_diff_grad(|l| tilted_aggregate(l, &w, 1.7).unwrap(), &x, 1e-6).unwrap();
    assert!(c.iter().zip(fd.iter()).all(|(a, b)| (a - b).abs() < 1e-6));
}
