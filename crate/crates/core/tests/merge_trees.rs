use proptest::prelude::*;

use mtw_core::field::ScalarField;
use mtw_core::preprocess::{denormalize, normalize};
use mtw_core::synth::random_bdt;
use mtw_core::tree::{bdt_to_merge_tree, build_bdt, compute_merge_tree, elder_pairs, TreeKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Join-tree diagram by brute force: add vertices in order and recount the
/// components of the included set by flood fill after every step.
fn brute_force_diagram(f: &ScalarField) -> Vec<(f64, f64)> {
    let order = f.sorted_vertices();
    let mut included = vec![false; f.len()];
    // Oldest vertex of each live component, keyed by that vertex.
    let mut births: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for &v in &order {
        included[v] = true;
        let mut label = vec![usize::MAX; f.len()];
        let mut comps: Vec<usize> = Vec::new();
        for &s in &order {
            if !included[s] || label[s] != usize::MAX {
                continue;
            }
            // s is the oldest vertex of its component since order is ascending.
            let id = comps.len();
            comps.push(s);
            let mut stack = vec![s];
            label[s] = id;
            while let Some(x) = stack.pop() {
                for y in f.neighbors(x) {
                    if included[y] && label[y] == usize::MAX {
                        label[y] = id;
                        stack.push(y);
                    }
                }
            }
        }
        // Components that lost their identity merged at v.
        for &b in &births {
            if !comps.contains(&b) {
                out.push((f.value(b), f.value(v)));
            }
        }
        births = comps;
    }
    let max = order.last().map(|&v| f.value(v)).unwrap();
    out.push((f.value(births[0]), max));
    out
}

fn sorted(mut p: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    p
}

fn small_field() -> impl Strategy<Value = ScalarField> {
    prop_oneof![
        (2usize..=64).prop_flat_map(|n| prop::collection::vec(0i32..6, n).prop_map(move |v| (vec![n], v))),
        (2usize..=8, 2usize..=8)
            .prop_flat_map(|(w, h)| prop::collection::vec(0i32..6, w * h).prop_map(move |v| (vec![w, h], v))),
        (2usize..=4, 2usize..=4, 2usize..=4).prop_flat_map(|(a, b, c)| {
            prop::collection::vec(0i32..6, a * b * c).prop_map(move |v| (vec![a, b, c], v))
        }),
    ]
    .prop_map(|(dims, v)| ScalarField::new(dims, v.into_iter().map(f64::from).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn join_diagram_matches_flood_fill(f in small_field()) {
        let tree = compute_merge_tree(&f, TreeKind::Join);
        prop_assert_eq!(sorted(elder_pairs(&tree).points()), sorted(brute_force_diagram(&f)));
    }

    #[test]
    fn split_tree_is_join_tree_of_negation(f in small_field()) {
        let neg = ScalarField::new(f.dims().to_vec(), f.values().iter().map(|v| -v).collect()).unwrap();
        let split = build_bdt(&compute_merge_tree(&f, TreeKind::Split));
        let join = build_bdt(&compute_merge_tree(&neg, TreeKind::Join));
        // Index tie-breaks do not flip with the sign, so flat pairs may differ.
        let nonzero = |t: &mtw_core::tree::Bdt| -> Vec<f64> {
            t.branches().iter().map(|b| b.persistence()).filter(|p| *p > 0.0).collect()
        };
        let (mut a, mut b) = (nonzero(&split), nonzero(&join));
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn field_bdt_round_trips_through_merge_tree(f in small_field()) {
        let bdt = build_bdt(&compute_merge_tree(&f, TreeKind::Join));
        let back = build_bdt(&bdt_to_merge_tree(&bdt).unwrap());
        prop_assert_eq!(back.canonical_form(), bdt.canonical_form());
    }

    #[test]
    fn random_bdt_round_trips_through_merge_tree(seed in any::<u64>(), split in any::<bool>()) {
        let kind = if split { TreeKind::Split } else { TreeKind::Join };
        let bdt = random_bdt(&mut ChaCha8Rng::seed_from_u64(seed), kind, 20);
        let back = build_bdt(&bdt_to_merge_tree(&bdt).unwrap());
        prop_assert_eq!(back.canonical_form(), bdt.canonical_form());
    }
}

#[test]
fn normalization_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let t = random_bdt(&mut rng, TreeKind::Join, 15);
        let back = denormalize(&normalize(&t).unwrap());
        for (p, q) in t.pairs().iter().zip(back.pairs()) {
            let scale = t.range().max(1.0);
            assert!((p.0 - q.0).abs() <= 1e-12 * scale && (p.1 - q.1).abs() <= 1e-12 * scale);
        }
    }
}
