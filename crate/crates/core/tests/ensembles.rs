use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mtw_core::barycenter::{barycenter_with, BarycenterOptions};
use mtw_core::ensemble::{kmeans, sequence_distance, track};
use mtw_core::field::GaussianBump;
use mtw_core::metric::{mt_distance, Executor, Solver};
use mtw_core::preprocess::MetricParams;
use mtw_core::synth::{field_bdt, noisy_mixture, random_bdt};
use mtw_core::tree::{Bdt, TreeKind};

fn trees(seed: u64, n: usize, max_branches: usize) -> Vec<Bdt> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_bdt(&mut rng, TreeKind::Join, max_branches)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn barycenter_ignores_member_order(seed in any::<u64>(), n in 2usize..6) {
        let ens = trees(seed, n, 8);
        let p = MetricParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let shuffled: Vec<Bdt> = perm.iter().map(|&i| ens[i].clone()).collect();
        let init = 0;
        let at = perm.iter().position(|&i| i == init).unwrap();
        let run = |e: &[Bdt], i: usize| {
            let opts = BarycenterOptions { init_index: Some(i), ..Default::default() };
            barycenter_with(e, &p, &opts, &Executor::sequential()).unwrap()
        };
        let (a, b) = (run(&ens, init), run(&shuffled, at));
        prop_assert!((a.energy() - b.energy()).abs() <= 1e-9 * a.energy().max(1.0));
        let d = mt_distance(&a.result, &b.result, &p, Solver::Exact).unwrap().distance;
        prop_assert!(d <= 1e-9 * a.result.range().max(1.0));
    }

    #[test]
    fn kmeans_energy_never_increases(seed in any::<u64>(), k in 1usize..4) {
        let ens = trees(seed, 8, 8);
        let res = kmeans(&ens, k, &MetricParams::default(), seed, Solver::Exact).unwrap();
        for w in res.energy_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", res.energy_trace);
        }
        prop_assert_eq!(res.assignments.len(), 8);
        prop_assert!(res.assignments.iter().all(|&c| c < k));
    }

    #[test]
    fn sequence_distance_is_reversal_symmetric(seed in any::<u64>(), n in 3usize..7) {
        let seq = trees(seed, n, 6);
        let p = MetricParams::default();
        let kept = vec![0, n / 2, n - 1];
        let forward = sequence_distance(&seq, &kept, &p, Solver::Exact).unwrap();
        let rev: Vec<Bdt> = seq.iter().rev().cloned().collect();
        let mut rkept: Vec<usize> = kept.iter().map(|&i| n - 1 - i).collect();
        rkept.sort();
        rkept.dedup();
        let backward = sequence_distance(&rev, &rkept, &p, Solver::Exact).unwrap();
        prop_assert!((forward - backward).abs() <= 1e-9 * forward.max(1.0));
        let all: Vec<usize> = (0..n).collect();
        prop_assert_eq!(sequence_distance(&seq, &all, &p, Solver::Exact).unwrap(), 0.0);
    }

    #[test]
    fn distance_is_a_metric_under_auction(seed in any::<u64>()) {
        let t = trees(seed, 3, 10);
        let p = MetricParams::default();
        let d = |a: &Bdt, b: &Bdt| mt_distance(a, b, &p, Solver::Auction).unwrap().distance;
        let exact = mt_distance(&t[0], &t[1], &p, Solver::Exact).unwrap().distance;
        prop_assert!((d(&t[0], &t[1]) - exact).abs() <= 1e-6 * exact.max(1.0));
        prop_assert!(d(&t[0], &t[2]) <= d(&t[0], &t[1]) + d(&t[1], &t[2]) + 1e-6);
    }
}

#[test]
fn tracking_follows_translated_bumps() {
    let p = MetricParams::default();
    let frames: Vec<Bdt> = (0..6)
        .map(|s| {
            let shift = 3.0 * s as f64;
            let bumps = [
                GaussianBump::new(vec![8.0 + shift, 10.0], 1.0, 3.0),
                GaussianBump::new(vec![40.0 - shift, 22.0], 0.6, 3.0),
            ];
            let f = noisy_mixture(&[48, 32], &bumps, 0.0, 0).unwrap();
            field_bdt(&f, TreeKind::Split, 0.01).unwrap()
        })
        .collect();
    for t in &frames {
        assert_eq!(t.len(), 2);
    }
    for m in track(&frames, &p, Solver::Exact).unwrap() {
        let mut matched = m.matched.clone();
        matched.sort();
        assert_eq!(matched, vec![(0, 0), (1, 1)]);
        assert!(m.destroyed.is_empty() && m.created.is_empty());
    }
}
