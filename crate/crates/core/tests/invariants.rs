//! Property tests over random parameters, points and masks.

use nestcop::bell::{log_density, log_density_with, EvalOptions};
use nestcop::generators::{nelsen9_theta_max, Family, GenScalar, Generator};
use nestcop::grad::{finite_difference_gradient, log_likelihood, log_likelihood_with_gradient, max_relative_error};
use nestcop::data::Dataset;
use nestcop::num::{Log, Scalar};
use nestcop::sample::rosenblatt_nested;
use nestcop::tree::{CopulaTree, NodeSpec, ThetaSpec};
use proptest::prelude::*;

/// θ drawn inside each family's domain, away from its edges.
fn theta_for(f: Family, x: f64) -> f64 {
    match f {
        Family::Clayton | Family::Frank | Family::InverseGaussian | Family::Nelsen17 => 0.05 + 8.0 * x,
        Family::Gumbel | Family::Joe | Family::Nelsen12 | Family::Nelsen13 => 1.0 + 5.0 * x,
        Family::Amh => 0.95 * x,
        Family::Nelsen9 => 0.01 + (nelsen9_theta_max(31) - 0.01) * x,
    }
}

fn family() -> impl Strategy<Value = Family> {
    (0..Family::ALL.len()).prop_map(|i| Family::ALL[i])
}

/// Same-family pair with an admissible ordering.
fn ordered_pair(f: Family, a: f64, b: f64) -> (f64, f64) {
    let (x, y) = (theta_for(f, a.min(b)), theta_for(f, a.max(b)));
    if f == Family::Nelsen9 {
        (y, x)
    } else {
        (x, y)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn inverse_round_trip(f in family(), x in 0.0f64..1.0, u in 0.001f64..0.999) {
        let g = Generator::new(f, theta_for(f, x)).unwrap();
        let t = g.psi_inv(u).unwrap();
        prop_assert!((g.psi(t).unwrap() - u).abs() < 1e-10);
    }

    #[test]
    fn generator_jets_alternate_in_sign(f in family(), x in 0.0f64..1.0, lt in -4.0f64..3.0) {
        let g: Generator = Generator::new(f, theta_for(f, x)).unwrap();
        let jet = <Log<f64> as GenScalar<f64>>::generator_jet(&g, &Log::from_raw(lt.exp()), 30);
        for (k, c) in jet.c.iter().enumerate() {
            let s = c.signum();
            prop_assert!(s == 0 || s == if k % 2 == 0 { 1 } else { -1 }, "{f} order {k} sign {s}");
        }
    }

    #[test]
    fn log_and_raw_paths_agree(f in prop::sample::select(vec![Family::Clayton, Family::Gumbel, Family::Frank, Family::Joe, Family::Amh]),
                               a in 0.0f64..1.0, b in 0.0f64..1.0, u in prop::collection::vec(0.02f64..0.98, 5),
                               bits in 0u32..32) {
        let (o, i) = ordered_pair(f, a, b);
        let t = CopulaTree::from_spec(&NodeSpec::two_level_values(f, o, &[i, i], &[2, 3])).unwrap();
        let m: Vec<bool> = (0..5).map(|j| bits >> j & 1 == 1).collect();
        let lg = log_density(&t, &u, &m).unwrap();
        let raw: f64 = log_density_with(&t, t.params(), &u, &m, &EvalOptions::raw()).unwrap();
        prop_assert!((lg - raw).abs() < 1e-10 * lg.abs().max(1.0), "{lg} vs {raw}");
    }

    #[test]
    fn sectors_are_exchangeable(a in 0.0f64..1.0, b in 0.0f64..1.0, u in prop::collection::vec(0.02f64..0.98, 5), bits in 0u32..32) {
        let (o, i) = ordered_pair(Family::Gumbel, a, b);
        let t = CopulaTree::from_spec(&NodeSpec::two_level_values(Family::Gumbel, o, &[i, i], &[2, 3])).unwrap();
        let m: Vec<bool> = (0..5).map(|j| bits >> j & 1 == 1).collect();
        // swap within the second sector, then swap the two sectors' roles via a 3+2 mirror
        let perm = [0, 1, 4, 2, 3];
        let up: Vec<f64> = perm.iter().map(|&j| u[j]).collect();
        let mp: Vec<bool> = perm.iter().map(|&j| m[j]).collect();
        let x = log_density(&t, &u, &m).unwrap();
        let y = log_density(&t, &up, &mp).unwrap();
        prop_assert!((x - y).abs() < 1e-11 * x.abs().max(1.0));
        let mirror = CopulaTree::from_spec(&NodeSpec::two_level_values(Family::Gumbel, o, &[i, i], &[3, 2])).unwrap();
        let order = [2, 3, 4, 0, 1];
        let um: Vec<f64> = order.iter().map(|&j| u[j]).collect();
        let mm: Vec<bool> = order.iter().map(|&j| m[j]).collect();
        let z = log_density(&mirror, &um, &mm).unwrap();
        prop_assert!((x - z).abs() < 1e-11 * x.abs().max(1.0));
    }

    #[test]
    fn densities_are_finite_at_the_corners(f in family(), x in 0.0f64..1.0, corner in prop::collection::vec(prop::bool::ANY, 4), bits in 0u32..16) {
        let t = CopulaTree::from_spec(&NodeSpec::flat(f, theta_for(f, x).min(if f == Family::Nelsen9 { nelsen9_theta_max(4) } else { f64::INFINITY }), 4)).unwrap();
        let u: Vec<f64> = corner.iter().map(|&hi| if hi { 1.0 - 1e-9 } else { 1e-9 }).collect();
        let m: Vec<bool> = (0..4).map(|j| bits >> j & 1 == 1).collect();
        let v = log_density(&t, &u, &m);
        prop_assert!(v.as_ref().is_ok_and(|v| v.is_finite()), "{f} {u:?} {m:?}: {v:?}");
    }

    #[test]
    fn delta_parameterisation_keeps_order(outer in 0.05f64..10.0, delta in -20.0f64..20.0) {
        let spec = NodeSpec::node(
            Family::Clayton,
            ThetaSpec::Value(outer),
            vec![NodeSpec::node(Family::Clayton, ThetaSpec::delta(delta), vec![NodeSpec::leaf(0), NodeSpec::leaf(1)]), NodeSpec::leaf(2)],
        );
        let t = CopulaTree::from_spec(&spec).unwrap();
        let th = t.thetas(t.params());
        prop_assert!(th[1] > th[0]);
        prop_assert!(t.validate().is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gradients_match_differences(f in prop::sample::select(vec![Family::Clayton, Family::Gumbel, Family::Frank, Family::Joe]),
                                   a in 0.1f64..0.9, b in 0.1f64..0.9, seed in 0u64..1000) {
        let (o, i) = ordered_pair(f, a, b);
        prop_assume!(i - o > 0.05);
        let t = CopulaTree::from_spec(&NodeSpec::two_level(f, o, i, &[2, 2])).unwrap();
        let rows = rosenblatt_nested(&t, 20, seed).unwrap();
        let masks: Vec<Vec<bool>> = (0..rows.len()).map(|r| (0..4).map(|j| (r + j) % 3 != 0).collect()).collect();
        let ds = Dataset::with_masks(&rows, &masks).unwrap();
        let p = t.params().to_vec();
        let (_, g) = log_likelihood_with_gradient(&t, &ds, &p).unwrap();
        let fd = finite_difference_gradient(|q| log_likelihood(&t, &ds, q), &p, 1e-5).unwrap();
        prop_assert!(max_relative_error(&g, &fd) < 1e-5, "{g:?} vs {fd:?}");
    }
}
