use proptest::prelude::*;

use sample_inflation::combinations::IndexTuples;
use sample_inflation::estimators::{
    combine, convex_error_bound, decomposition_residual, evidence_estimate, resample_indices, self_normalized_estimate,
    standard_estimate, EstimateKind, Identity, Norm,
};
use sample_inflation::experiments::theorems::{check_cache_instance, CacheInstance};
use sample_inflation::factorized::{inflate, plain_factorized_sampler, split_by_combination};
use sample_inflation::{InflationConfig, RandomSource, SampleSet};

const KINDS: [EstimateKind; 2] = [EstimateKind::Standard, EstimateKind::SelfNormalized];

/// Points, log weights at or below 0, and part sizes summing to the total.
fn partitioned() -> impl Strategy<Value = (Vec<SampleSet>, Vec<f64>)> {
    (1usize..200, 1usize..4, 0.0f64..600.0)
        .prop_flat_map(|(n, dim, span)| {
            (
                prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), n),
                prop::collection::vec(-span..=0.0, n),
                prop::collection::vec(0usize..n, 0..8),
                prop::collection::vec(-5.0f64..5.0, dim),
            )
        })
        .prop_map(|(points, lw, mut cuts, reference)| {
            let n = points.len();
            cuts.push(0);
            cuts.push(n);
            cuts.sort_unstable();
            cuts.dedup();
            let sizes: Vec<usize> = cuts.windows(2).map(|w| w[1] - w[0]).collect();
            let set = SampleSet::from_parts(points, lw).unwrap();
            (set.partition(&sizes).unwrap(), reference)
        })
}

proptest! {
    #[test]
    fn decomposition_identity((parts, reference) in partitioned()) {
        let h = Identity(reference.len());
        for kind in KINDS {
            prop_assert!(decomposition_residual(&parts, &h, kind).unwrap() < 1e-10);
        }
    }

    #[test]
    fn convex_error_bound_holds((parts, reference) in partitioned()) {
        let h = Identity(reference.len());
        for kind in KINDS {
            for norm in Norm::ALL {
                let (lhs, rhs) = convex_error_bound(&parts, &h, kind, &reference, norm).unwrap();
                prop_assert!(rhs >= 0.0);
                prop_assert!(lhs >= rhs - 1e-12, "{kind:?} {norm:?}: {lhs} < {rhs}");
            }
        }
    }

    #[test]
    fn self_normalized_is_shift_invariant((parts, reference) in partitioned(), shift in -500.0f64..500.0) {
        let set = combine(&parts);
        let h = Identity(reference.len());
        let shifted = SampleSet::from_parts(
            set.iter().map(|s| s.point.clone()).collect(),
            set.log_weights().iter().map(|l| l + shift).collect(),
        ).unwrap();
        let a = self_normalized_estimate(&set, &h).unwrap().value;
        let b = self_normalized_estimate(&shifted, &h).unwrap().value;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        let ea = evidence_estimate(&set).unwrap().value[0];
        let eb = evidence_estimate(&shifted).unwrap().value[0];
        prop_assert!((eb - ea - shift).abs() <= 1e-9 * shift.abs().max(1.0));
    }

    #[test]
    fn equal_weights_reduce_to_sample_mean(points in prop::collection::vec(-10.0f64..10.0, 1..100), lw in -50.0f64..50.0) {
        let set = SampleSet::from_parts(points.iter().map(|&p| vec![p]).collect(), vec![lw; points.len()]).unwrap();
        let mean = points.iter().sum::<f64>() / points.len() as f64;
        let snis = self_normalized_estimate(&set, &Identity(1)).unwrap().value[0];
        prop_assert!((snis - mean).abs() < 1e-12 * mean.abs().max(1.0) + 1e-12);
        let std = standard_estimate(&set, &Identity(1)).unwrap().value[0];
        prop_assert!((std - lw.exp() * mean).abs() <= 1e-10 * (lw.exp() * mean).abs().max(1e-300) + 1e-300);
    }

    #[test]
    fn inflation_matches_monolithic_oracle(seed in any::<u64>()) {
        let mut rng = RandomSource::new(seed);
        let inst = CacheInstance::random(&mut rng).unwrap();
        let check = check_cache_instance(&inst, &mut rng).unwrap();
        prop_assert!(check.counts_match);
        prop_assert!(check.max_weight_error < 1e-12, "{}", check.max_weight_error);
    }

    #[test]
    fn single_inner_draw_is_plain_sampling(seed in any::<u64>()) {
        let inst = CacheInstance::random(&mut RandomSource::new(seed)).unwrap();
        let m = inst.outer_draws;
        let (inflated, ie) = inflate(&inst.model, &inst.proposal, InflationConfig::new(m, 1), &mut RandomSource::new(seed ^ 1)).unwrap();
        let (plain, pe) = plain_factorized_sampler(&inst.model, &inst.proposal, m, &mut RandomSource::new(seed ^ 1)).unwrap();
        prop_assert_eq!(ie, pe);
        for (a, b) in inflated.iter().zip(plain.iter()) {
            prop_assert_eq!(&a.point, &b.point);
            prop_assert!((a.log_weight() - b.log_weight()).abs() < 1e-12);
        }
    }

    #[test]
    fn combination_slices_hold_one_sample_per_draw(seed in any::<u64>()) {
        let inst = CacheInstance::random(&mut RandomSource::new(seed)).unwrap();
        let cfg = InflationConfig::new(inst.outer_draws, inst.inner_draws);
        let (set, _) = inflate(&inst.model, &inst.proposal, cfg, &mut RandomSource::new(seed)).unwrap();
        let per_draw = cfg.combinations_per_draw(inst.model.block_dims.len()).unwrap();
        let slices = split_by_combination(&set, per_draw).unwrap();
        prop_assert_eq!(slices.len(), per_draw);
        prop_assert!(slices.iter().all(|s| s.len() == inst.outer_draws));
        let h = Identity(set.samples()[0].point.len());
        prop_assert!(decomposition_residual(&slices, &h, EstimateKind::SelfNormalized).unwrap() < 1e-10);
    }

    #[test]
    fn index_tuples_enumerate_in_order(radix in 1usize..5, len in 0usize..5) {
        let all: Vec<Vec<usize>> = IndexTuples::new(radix, len).collect();
        prop_assert_eq!(all.len(), IndexTuples::count(radix, len).unwrap());
        for (i, t) in all.iter().enumerate() {
            prop_assert_eq!(IndexTuples::rank(radix, t), i);
        }
    }

    #[test]
    fn resampling_only_picks_positive_weights(lw in prop::collection::vec(prop_oneof![Just(f64::NEG_INFINITY), -30.0f64..0.0], 1..30), seed in any::<u64>()) {
        prop_assume!(lw.iter().any(|l| l.is_finite()));
        let set = SampleSet::from_parts(vec![vec![0.0]; lw.len()], lw.clone()).unwrap();
        let idx = resample_indices(&set, 200, &mut RandomSource::new(seed)).unwrap();
        prop_assert_eq!(idx.len(), 200);
        prop_assert!(idx.iter().all(|&i| lw[i].is_finite()));
    }
}
