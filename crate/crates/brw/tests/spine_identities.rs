//! Cross-module identities for the conditioned spine: its marginal must
//! match the renewal-transformed walk, and its path expectations must match
//! plain-walk expectations reweighted by the terminal renewal value.

use brw::forest::{simulate, SimOptions};
use brw::model::{normalize_boundary, BoundaryModel, FamilySpec};
use brw::rng::{stream_rng, substream};
use brw::spine::sample_spine_conditioned;
use brw::stats::{diff_z, mean_se, two_sample_ks, weighted_mean_se};
use brw::walk::{
    barrier_weighted_expectation, conditioned_walk, estimate_renewal, ManyToOneLaw, RenewalTable,
};

fn binary() -> BoundaryModel {
    normalize_boundary(FamilySpec::BinaryGaussian).unwrap()
}

fn table(model: &BoundaryModel) -> RenewalTable {
    let law = ManyToOneLaw::from_model(model);
    estimate_renewal(&law, &brw::walk::default_grid(10.0), 60_000, 4_000, 101).unwrap()
}

#[test]
fn spine_marginal_matches_conditioned_walk() {
    let model = binary();
    let law = ManyToOneLaw::from_model(&model);
    let tbl = table(&model);
    let alpha = 2.0;
    let n = 10;
    let draws = 10_000;

    let mut rng = stream_rng(7);
    let spine_ends: Vec<f64> = (0..draws)
        .map(|_| {
            sample_spine_conditioned(&model, &tbl, alpha, n, &mut rng, 64)
                .unwrap()
                .spine[n]
        })
        .collect();
    let mut rng2 = stream_rng(8);
    let walk_ends: Vec<f64> = (0..draws)
        .map(|_| conditioned_walk(&law, &tbl, alpha, n, &mut rng2, 64).unwrap().path[n])
        .collect();
    let ks = two_sample_ks(&spine_ends, &walk_ends);
    assert!(ks < 0.03, "two-sample ks = {ks}");
}

#[test]
fn spine_expectations_match_weighted_plain_walk() {
    // Three path functionals, each compared against the plain-walk
    // estimator weighted by the terminal renewal value on the staying
    // event.
    let model = binary();
    let law = ManyToOneLaw::from_model(&model);
    let tbl = table(&model);
    let alpha = 2.0;
    let n = 10;

    let gs: Vec<(&str, Box<dyn Fn(&[f64]) -> f64 + Sync>)> = vec![
        ("endpoint below 2", Box::new(|p: &[f64]| if p[10] <= 2.0 { 1.0 } else { 0.0 })),
        ("capped endpoint", Box::new(|p: &[f64]| p[10].clamp(0.0, 5.0))),
        (
            "midpoint below 1",
            Box::new(|p: &[f64]| if p[5] <= 1.0 { 1.0 } else { 0.0 }),
        ),
    ];

    let mut rng = stream_rng(9);
    let mut spines: Vec<Vec<f64>> = Vec::with_capacity(15_000);
    let mut weights: Vec<f64> = Vec::with_capacity(15_000);
    for _ in 0..15_000 {
        let s = sample_spine_conditioned(&model, &tbl, alpha, n, &mut rng, 64).unwrap();
        spines.push(s.spine);
        weights.push(s.weight);
    }

    for (name, g) in &gs {
        let lhs_vals: Vec<f64> = spines.iter().map(|s| g(s)).collect();
        let (lhs, lhs_se, _) = weighted_mean_se(&lhs_vals, &weights);
        let (rhs, rhs_se) =
            barrier_weighted_expectation(&law, &tbl, alpha, n, |p| g(p), 300_000, 11);
        let z = diff_z(lhs, lhs_se, rhs, rhs_se);
        assert!(
            z < 3.0,
            "{name}: sampler {lhs}+-{lhs_se} vs weighted walk {rhs}+-{rhs_se} (z={z})"
        );
    }
}

#[test]
fn brother_subtrees_extend_to_unit_martingales() {
    // Brothers root independent unbiased subtrees: extending any of them by
    // plain simulation gives additive martingales with mean one (positions
    // relative to the brother).
    let model = binary();
    let tbl = table(&model);
    let mut rng = stream_rng(13);
    let mut values = Vec::new();
    let sub_depth = 5;
    for i in 0..2_000u64 {
        let s = sample_spine_conditioned(&model, &tbl, 2.0, 4, &mut rng, 64).unwrap();
        // Extend the first brother of a mid level.
        if s.brothers[1].is_empty() {
            continue;
        }
        let f = simulate(
            &model,
            sub_depth,
            substream(1000, i),
            &SimOptions::default(),
        )
        .unwrap();
        // Relative positions of a standard forest are exactly a brother's
        // subtree law; its critical additive martingale has mean one.
        let w: f64 = f
            .leaves()
            .position
            .iter()
            .map(|&x| (-x).exp())
            .sum();
        values.push(w);
    }
    let (m, se) = mean_se(&values);
    assert!((m - 1.0).abs() < 3.0 * se, "{m} +- {se}");
}
