use fcov::bootstrap::{circular_block_resample, p_value, replicate_rng};
use fcov::fts::{FunctionalSample, GridDomain};
use fcov::pipeline::{prepare_test, sample_scores, Method, TestSettings};
use fcov::scores::{correct_residuals, vech_products, ScoreMatrix, ScoreProductSeries};
use fcov::statistics::partial_sums;
use fcov::Alternative;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn series() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (10usize..60, 1usize..4).prop_flat_map(|(n, p)| (Just(p), prop::collection::vec(-5.0f64..5.0, n * p)))
}

fn curves() -> impl Strategy<Value = FunctionalSample> {
    (24usize..50, 5usize..12).prop_flat_map(|(n, g)| {
        prop::collection::vec(-3.0f64..3.0, n * g).prop_map(move |v| {
            FunctionalSample::new(DMatrix::from_vec(n, g, v), GridDomain::unit_interval(g).unwrap()).unwrap()
        })
    })
}

fn stat(x: &FunctionalSample, method: Method, alternative: Alternative) -> Option<f64> {
    let settings = TestSettings { method, alternative, d: 3, block: Some(3), ..TestSettings::default() };
    let scores = sample_scores(x, &settings).ok()?;
    prepare_test(&scores, &settings).ok()?.statistic().ok().map(|s| s.value)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cusum_ends_at_zero((p, v) in series()) {
        let n = v.len() / p;
        let q = ScoreProductSeries::new(DMatrix::from_vec(n, p, v), (0..p).map(|i| (i, i)).collect()).unwrap();
        let s = partial_sums(&q);
        let scale: f64 = q.values().iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        for i in 0..p {
            prop_assert!(s[(n - 1, i)].abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn vech_has_triangular_dimension(d in 1usize..6, n in 2usize..20) {
        let s = ScoreMatrix::new(DMatrix::from_fn(n, d, |t, l| (t * 7 + l * 3) as f64 % 5.0 - 2.0), "t");
        let q = vech_products(&s);
        prop_assert_eq!(q.dim(), d * (d + 1) / 2);
        for (i, (a, b)) in q.pair_index().iter().enumerate() {
            prop_assert!(a <= b);
            for t in 0..n {
                prop_assert_eq!(q.values()[(t, i)], s.values()[(t, *a)] * s.values()[(t, *b)]);
            }
        }
    }

    #[test]
    fn resample_draws_whole_wrapped_blocks((p, v) in series(), block in 1usize..8, seed in any::<u64>()) {
        let n = v.len() / p;
        let block = block.min(n);
        let q = ScoreProductSeries::new(DMatrix::from_vec(n, p, v), (0..p).map(|i| (i, i)).collect()).unwrap();
        let r = correct_residuals(&q);
        let out = circular_block_resample(&r, block, &mut replicate_rng(seed, 0)).unwrap();
        prop_assert_eq!(out.n(), n);
        // each block of the output is a circular run of consecutive residual rows
        for start in (0..n).step_by(block) {
            let first = out.values().row(start).clone_owned();
            let origin = (0..n).filter(|j| r.values().row(*j) == first).collect::<Vec<_>>();
            prop_assert!(!origin.is_empty());
            let ok = origin.iter().any(|o| {
                (start..(start + block).min(n)).all(|t| out.values().row(t) == r.values().row((o + t - start) % n))
            });
            prop_assert!(ok);
        }
    }

    #[test]
    fn p_value_is_in_unit_interval(reps in prop::collection::vec(0.0f64..10.0, 1..50), obs in 0.0f64..12.0) {
        let p = p_value(&reps, obs);
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert!(p >= 1.0 / (reps.len() + 1) as f64);
        prop_assert!(p_value(&reps, obs + 1.0) <= p);
    }

    #[test]
    fn statistics_ignore_a_common_mean_curve(x in curves(), shift in -10.0f64..10.0) {
        let g = x.grid_len();
        let moved = FunctionalSample::new(
            x.values().map_with_location(|_, j, v| v + shift * (1.0 + j as f64 / g as f64)),
            x.domain().clone(),
        ).unwrap();
        for method in [Method::Multi, Method::Func, Method::Wfunc] {
            for alt in [Alternative::Amoc, Alternative::Epidemic] {
                let (a, b) = (stat(&x, method, alt).unwrap(), stat(&moved, method, alt).unwrap());
                prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-9), "{:?} {:?}: {} vs {}", method, alt, a, b);
            }
        }
    }

    #[test]
    fn statistics_are_nonnegative(x in curves()) {
        for method in Method::ALL {
            let v = stat(&x, method, Alternative::Amoc).unwrap();
            prop_assert!(v >= 0.0 && v.is_finite());
        }
    }
}
