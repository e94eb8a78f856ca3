//! Random nested BDTs and synthetic field ensembles.

use rand::Rng;

use crate::error::Result;
use crate::field::{add_uniform_noise, synth_gaussian_mixture, GaussianBump, ScalarField};
use crate::preprocess::denormalized_pairs;
use crate::tree::{build_bdt, compute_merge_tree, simplify, Bdt, Branch, TreeKind};

/// Field → merge tree → simplification → BDT.
pub fn field_bdt(field: &ScalarField, kind: TreeKind, simplify_threshold: f64) -> Result<Bdt> {
    let tree = simplify(&compute_merge_tree(field, kind), simplify_threshold)?;
    Ok(build_bdt(&tree))
}

/// Random shape with `branches` nodes, each non-root node under a uniformly
/// chosen earlier node.
pub fn random_shape<R: Rng>(rng: &mut R, branches: usize) -> Vec<Option<usize>> {
    (0..branches.max(1))
        .map(|i| (i > 0).then(|| rng.gen_range(0..i)))
        .collect()
}

/// Nested BDT on `parent`, values drawn in the normalized unit triangle and
/// mapped into a root interval of random length.
pub fn random_bdt_on<R: Rng>(rng: &mut R, kind: TreeKind, parent: Vec<Option<usize>>) -> Bdt {
    let base = rng.gen_range(-5.0..5.0);
    let span = rng.gen_range(1.0..10.0);
    let coords: Vec<(f64, f64)> = parent
        .iter()
        .map(|p| match p {
            None => (base, base + span),
            Some(_) => {
                let a: f64 = rng.gen();
                let b: f64 = rng.gen();
                (a.min(b), a.max(b))
            }
        })
        .collect();
    let branches = coords.iter().map(|&(x, y)| Branch::new(x, y)).collect();
    let shape = Bdt::unchecked_nesting(kind, branches, parent).expect("random shape is a tree");
    let pairs = denormalized_pairs(&shape, &coords);
    shape.with_pairs(&pairs)
}

/// Random nested BDT with 1 to `max_branches` branches.
pub fn random_bdt<R: Rng>(rng: &mut R, kind: TreeKind, max_branches: usize) -> Bdt {
    let n = rng.gen_range(1..=max_branches.max(1));
    let shape = random_shape(rng, n);
    random_bdt_on(rng, kind, shape)
}

/// Grid of `dims` with the given bumps, uniform noise of `noise` times the
/// clean range, seeded.
pub fn noisy_mixture(dims: &[usize], bumps: &[GaussianBump], noise: f64, seed: u64) -> Result<ScalarField> {
    let clean = synth_gaussian_mixture(dims, bumps)?;
    let amplitude = noise * clean.range();
    add_uniform_noise(&clean, amplitude, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_trees_are_nested() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let t = random_bdt(&mut rng, TreeKind::Join, 12);
            assert!(t.len() <= 12);
            t.check_nesting().unwrap();
        }
    }

    #[test]
    fn pipeline_on_two_bumps() {
        let bumps = [
            GaussianBump::new(vec![3.0, 3.0], 1.0, 1.5),
            GaussianBump::new(vec![12.0, 12.0], 0.6, 1.5),
        ];
        let f = noisy_mixture(&[16, 16], &bumps, 0.0, 0).unwrap();
        let t = field_bdt(&f, TreeKind::Split, 0.0025).unwrap();
        assert_eq!(t.len(), 2);
    }
}
