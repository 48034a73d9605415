//! Property tests over randomly shaped small forests: the overlap
//! recursion against its quadratic oracle, partition identities, and the
//! trajectory interpolation contract.

use brw::forest::{simulate, Forest, SimOptions};
use brw::martingale::{subtree_mass, subtree_mass_beta};
use brw::model::{normalize_boundary, FamilySpec};
use brw::polymer::{leaf_weights, overlap_pair_mass, pair_mass_brute_force};
use brw::stats::kahan_sum;
use proptest::prelude::*;

fn arbitrary_forest(seed: u64, depth: usize, s2: f64, binary: bool) -> Forest {
    let model = if binary {
        normalize_boundary(FamilySpec::BinaryGaussian).unwrap()
    } else {
        normalize_boundary(FamilySpec::PoissonGaussian { s2 }).unwrap()
    };
    simulate(&model, depth, seed, &SimOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overlap_recursion_equals_quadratic_oracle(
        seed in any::<u64>(),
        depth in 2usize..=5,
        s2 in 0.4f64..2.0,
        binary in any::<bool>(),
        delta in 0.05f64..1.2,
    ) {
        let f = arbitrary_forest(seed, depth, s2, binary);
        if f.alive {
            let fast = overlap_pair_mass(&f, delta).pair_mass;
            let slow = pair_mass_brute_force(&f, delta);
            prop_assert!(((fast - slow) / slow).abs() < 1e-12,
                "fast {fast} vs slow {slow}");
        }
    }

    #[test]
    fn subtree_masses_partition_the_leaf_sum(
        seed in any::<u64>(),
        depth in 1usize..=6,
        s2 in 0.4f64..2.0,
        level_frac in 0.0f64..1.0,
    ) {
        let f = arbitrary_forest(seed, depth, s2, false);
        let level = ((depth as f64 * level_frac) as usize).min(f.depth());
        let sm = subtree_mass(&f, level);
        let leaf_sum = kahan_sum(f.leaves().position.iter().map(|&x| (-x).exp()));
        let mass_sum = kahan_sum(sm.masses.iter().copied());
        if leaf_sum > 0.0 {
            prop_assert!(((mass_sum - leaf_sum) / leaf_sum).abs() < 1e-12);
        } else {
            prop_assert_eq!(mass_sum, 0.0);
        }
    }

    #[test]
    fn polymer_weights_normalize(
        seed in any::<u64>(),
        depth in 1usize..=6,
        beta in 0.2f64..1.5,
    ) {
        let f = arbitrary_forest(seed, depth, 1.0, true);
        let w = leaf_weights(&f, beta);
        let total = kahan_sum(w.iter().copied());
        prop_assert!((total - 1.0).abs() < 1e-10);
        // And the beta-tilted masses regroup consistently at every level.
        for level in 0..=f.depth() {
            let sm = subtree_mass_beta(&f, level, beta);
            let leaf_sum = kahan_sum(
                f.leaves().position.iter().map(|&x| (-beta * x).exp()));
            let mass_sum = kahan_sum(sm.masses.iter().copied());
            prop_assert!(((mass_sum - leaf_sum) / leaf_sum).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_interpolation_hits_grid_points(
        seed in any::<u64>(),
        depth in 1usize..=8,
    ) {
        let f = arbitrary_forest(seed, depth, 1.0, true);
        let leaves = f.leaves().len();
        let leaf = (seed % leaves as u64) as usize;
        let t = f.trajectory(depth, leaf).unwrap();
        let scale = (depth as f64).sqrt();
        for i in 0..=depth {
            let v = t.value(i as f64 / depth as f64) * scale;
            prop_assert!((v - t.positions[i]).abs() < 1e-9 * (1.0 + t.positions[i].abs()));
        }
        prop_assert_eq!(t.values().len(), depth);
    }

    #[test]
    fn forest_dump_round_trips(
        seed in any::<u64>(),
        depth in 0usize..=5,
        s2 in 0.4f64..2.0,
    ) {
        let f = arbitrary_forest(seed, depth, s2, false);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let g = Forest::read_binary(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(f.generations.len(), g.generations.len());
        for (a, b) in f.generations.iter().zip(&g.generations) {
            prop_assert_eq!(&a.parent, &b.parent);
            prop_assert_eq!(&a.position, &b.position);
            prop_assert_eq!(&a.path_min, &b.path_min);
        }
        prop_assert_eq!(f.alive, g.alive);
    }
}
