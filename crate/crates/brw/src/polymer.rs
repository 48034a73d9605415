//! The polymer measure on the leaves of a forest: exponential-weight
//! sampling of particles, path functionals, and the pair overlap mass.
//!
//! Sampling walks the tree top-down through precomputed subtree masses, so
//! one draw costs a root-to-leaf descent instead of a scan of every leaf.
//! The overlap statistic aggregates squared level masses, one backward
//! sweep instead of the quadratic double loop (which survives as the test
//! oracle).

use crate::error::{Error, Result};
use crate::forest::{Forest, TrajectoryView};
use crate::martingale::{subtree_mass_beta, subtree_masses_all};
use crate::model::BoundaryModel;
use crate::rng::{stream_rng, substream};
use crate::stats::{kahan_sum, KahanSum};
use rand::Rng;

/// One draw from the polymer measure.
#[derive(Clone, Debug)]
pub struct PolymerDraw {
    pub generation: usize,
    pub index: usize,
    /// Normalized polymer weight of the drawn leaf.
    pub weight: f64,
    pub trajectory: TrajectoryView,
}

/// Draw `count` i.i.d. leaves under the polymer measure at inverse
/// temperature `beta`, each in `O(depth * max brood)`.
pub fn sample_polymer(
    forest: &Forest,
    beta: f64,
    model: &BoundaryModel,
    count: usize,
    seed: u64,
) -> Result<Vec<PolymerDraw>> {
    if !forest.alive {
        return Err(Error::ExtinctForest);
    }
    if !model.in_domain(beta) {
        return Err(Error::BetaOutsideDomain(beta));
    }
    let depth = forest.depth();
    let masses = subtree_masses_all(forest, beta);
    let offsets: Vec<Vec<u32>> = (0..depth).map(|g| forest.child_offsets(g)).collect();
    let phi = model.log_laplace(beta);
    let normalizer = masses[0][0] * (-phi * depth as f64).exp();

    let mut draws = Vec::with_capacity(count);
    for d in 0..count {
        let mut rng = stream_rng(substream(seed, d as u64));
        let mut idx = 0usize;
        for g in 0..depth {
            let start = offsets[g][idx] as usize;
            let end = offsets[g][idx + 1] as usize;
            debug_assert!(start < end, "alive forest has children everywhere");
            let total: f64 = masses[g + 1][start..end].iter().sum();
            let mut pick = rng.random::<f64>() * total;
            let mut next = end - 1;
            for (j, &m) in masses[g + 1][start..end].iter().enumerate() {
                pick -= m;
                if pick <= 0.0 {
                    next = start + j;
                    break;
                }
            }
            idx = next;
        }
        let position = forest.leaves().position[idx];
        let weight = (-beta * position - phi * depth as f64).exp() / normalizer;
        draws.push(PolymerDraw {
            generation: depth,
            index: idx,
            weight,
            trajectory: forest.trajectory(depth, idx)?,
        });
    }
    Ok(draws)
}

/// Exact polymer weights of every leaf at inverse temperature `beta`
/// (normalized). Enumeration support for small trees.
pub fn leaf_weights(forest: &Forest, beta: f64) -> Vec<f64> {
    let leaves = forest.leaves();
    let raw: Vec<f64> = leaves.position.iter().map(|&x| (-beta * x).exp()).collect();
    let total = kahan_sum(raw.iter().copied());
    raw.into_iter().map(|w| w / total).collect()
}

/// Critical polymer expectation of a finite-dimensional path functional:
/// the exponentially weighted average over leaves of `f` applied to the
/// rescaled trajectory at the grid times.
pub fn polymer_functional<F>(forest: &Forest, t_grid: &[f64], f: F) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let depth = forest.depth();
    let leaves = forest.leaves();
    let n = leaves.len();
    let scale = (depth.max(1) as f64).sqrt();

    // Ancestor generations needed per grid time: floor(n t) and its
    // successor, per the trajectory interpolation.
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    let mut coords = vec![0.0; t_grid.len()];
    let mut chain = vec![0.0; depth + 1];
    for leaf in 0..n {
        // Walk the ancestry once, collecting the full position chain.
        let mut level = depth;
        let mut i = leaf;
        while level > 0 {
            chain[level] = forest.generation(level).position[i];
            i = forest.generation(level).parent[i] as usize;
            level -= 1;
        }
        chain[0] = 0.0;
        for (ti, &t) in t_grid.iter().enumerate() {
            let pos = depth as f64 * t;
            let k = (pos.floor() as usize).min(depth);
            let frac = pos - k as f64;
            let v = if frac > 0.0 && k < depth {
                chain[k] + frac * (chain[k + 1] - chain[k])
            } else {
                chain[k]
            };
            coords[ti] = v / scale;
        }
        let w = (-leaves.position[leaf]).exp();
        num.add(w * f(&coords));
        den.add(w);
    }
    num.value() / den.value()
}

/// Pair overlap mass at threshold `delta`.
#[derive(Clone, Debug)]
pub struct OverlapReport {
    pub delta: f64,
    pub depth: usize,
    /// First generation at which overlapping pairs must share an ancestor.
    pub cut_level: usize,
    /// Normalized polymer mass of leaf pairs whose trajectories agree for
    /// at least a `delta` fraction of the depth. Diagonal pairs included.
    pub pair_mass: f64,
}

/// Quadratic-time reference for the overlap pair mass: a double loop over
/// leaf pairs with ancestries walked explicitly. Verification oracle for
/// [`overlap_pair_mass`]; kept free of the level-mass recursion.
pub fn pair_mass_brute_force(forest: &Forest, delta: f64) -> f64 {
    let depth = forest.depth();
    let leaves = forest.leaves();
    let n = leaves.len();
    let cut = (delta * depth as f64).ceil().max(0.0) as usize;
    let ancestries: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut anc = vec![0usize; depth + 1];
            let mut level = depth;
            let mut k = i;
            while level > 0 {
                anc[level] = k;
                k = forest.generation(level).parent[k] as usize;
                level -= 1;
            }
            anc
        })
        .collect();
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    for i in 0..n {
        let wi = (-leaves.position[i]).exp();
        den.add(wi);
        for j in 0..n {
            let wj = (-leaves.position[j]).exp();
            // Most recent common generation.
            let mut common = 0usize;
            for level in (0..=depth).rev() {
                if ancestries[i][level] == ancestries[j][level] {
                    common = level;
                    break;
                }
            }
            if cut <= depth {
                if common >= cut {
                    num.add(wi * wj);
                }
            } else if i == j {
                num.add(wi * wj);
            }
        }
    }
    let w = den.value();
    num.value() / (w * w)
}

/// Endpoint exponential statistic of the critical polymer: the weighted
/// leaf average of `exp(c V / sqrt(n))`, plus its truncated versions
/// restricted to `V / sqrt(n) >= p` for each requested `p` (the mass that
/// the endpoint moment picks up from deep right-tail particles).
pub fn endpoint_exp_statistic(forest: &Forest, c: f64, truncations: &[f64]) -> (f64, Vec<f64>) {
    let depth = forest.depth().max(1) as f64;
    let scale = depth.sqrt();
    let leaves = forest.leaves();
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    let mut trunc = vec![KahanSum::new(); truncations.len()];
    for &x in &leaves.position {
        let w = (-x).exp();
        let rescaled = x / scale;
        let e = w * (c * rescaled).exp();
        num.add(e);
        den.add(w);
        for (k, &p) in truncations.iter().enumerate() {
            if rescaled >= p {
                trunc[k].add(e);
            }
        }
    }
    let w = den.value();
    (
        num.value() / w,
        trunc.into_iter().map(|t| t.value() / w).collect(),
    )
}

/// Compute the overlap pair mass through the level-mass recursion:
/// `sum of squared level masses / squared leaf sum`.
///
/// For continuous displacement laws equal trajectories coincide with equal
/// ancestries almost surely, so common ancestry is what is counted. The
/// cut level is `ceil(delta * depth)`; an integer `delta * depth` is
/// included. `delta > 1` leaves only the diagonal.
pub fn overlap_pair_mass(forest: &Forest, delta: f64) -> OverlapReport {
    let depth = forest.depth();
    let leaves = forest.leaves();
    let w = kahan_sum(leaves.position.iter().map(|&x| (-x).exp()));
    let cut = (delta * depth as f64).ceil().max(0.0) as usize;
    let pair_mass = if cut > depth {
        kahan_sum(leaves.position.iter().map(|&x| (-2.0 * x).exp())) / (w * w)
    } else {
        let sm = subtree_mass_beta(forest, cut, 1.0);
        kahan_sum(sm.masses.iter().map(|&m| m * m)) / (w * w)
    };
    OverlapReport {
        delta,
        depth,
        cut_level: cut.min(depth + 1),
        pair_mass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{simulate, SimOptions};
    use crate::model::{normalize_boundary, FamilySpec};
    use crate::stats::chi_square_p;

    fn binary() -> BoundaryModel {
        normalize_boundary(FamilySpec::BinaryGaussian).unwrap()
    }

    #[test]
    fn recursion_equals_brute_force() {
        let model = binary();
        for seed in 0..30u64 {
            let f = simulate(&model, 5, seed, &SimOptions::default()).unwrap();
            for delta in [0.2, 0.5, 0.8, 1.0] {
                let fast = overlap_pair_mass(&f, delta).pair_mass;
                let slow = pair_mass_brute_force(&f, delta);
                assert!(
                    ((fast - slow) / slow).abs() < 1e-12,
                    "seed {seed} delta {delta}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn overlap_extremes() {
        let model = binary();
        let f = simulate(&model, 6, 3, &SimOptions::default()).unwrap();
        // Zero threshold: every pair shares the root.
        assert_eq!(overlap_pair_mass(&f, 0.0).pair_mass, 1.0);
        // Above one: diagonal only.
        let r = overlap_pair_mass(&f, 1.5);
        let slow = pair_mass_brute_force(&f, 1.5);
        assert!(((r.pair_mass - slow) / slow).abs() < 1e-12);
        // Single-leaf tree: diagonal mass is one.
        let single = simulate(&model, 0, 1, &SimOptions::default()).unwrap();
        assert_eq!(overlap_pair_mass(&single, 1.5).pair_mass, 1.0);
        // Monotone in delta.
        let mut last = f64::INFINITY;
        for delta in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let p = overlap_pair_mass(&f, delta).pair_mass;
            assert!(p <= last + 1e-15);
            last = p;
        }
    }

    #[test]
    fn sampler_respects_leaf_weights() {
        let model = binary();
        let f = simulate(&model, 3, 8, &SimOptions::default()).unwrap();
        let beta = 1.0;
        let probs = leaf_weights(&f, beta);
        let draws = sample_polymer(&f, beta, &model, 100_000, 99).unwrap();
        let mut counts = vec![0u64; probs.len()];
        for d in &draws {
            counts[d.index] += 1;
        }
        let p = chi_square_p(&counts, &probs);
        assert!(p > 0.01, "chi-square p = {p}");
        // Stated draw weights match the enumerated weights.
        for d in draws.iter().take(50) {
            assert!((d.weight - probs[d.index]).abs() < 1e-12);
        }
        // Weights over all leaves sum to one.
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sampler_two_leaves_closed_form() {
        // Hand-built root with two leaves: probabilities are the softmax of
        // the negated positions.
        use crate::forest::{Forest, Generation};
        let f = Forest {
            generations: vec![
                Generation {
                    parent: vec![0],
                    position: vec![0.0],
                    path_min: vec![0.0],
                },
                Generation {
                    parent: vec![0, 0],
                    position: vec![0.4, -0.3],
                    path_min: vec![0.0, -0.3],
                },
            ],
            alive: true,
            seed: 0,
            barrier_alpha: None,
        };
        let model = binary();
        let draws = sample_polymer(&f, 1.0, &model, 40_000, 5).unwrap();
        let p0_expect = (-0.4_f64).exp() / ((-0.4_f64).exp() + (0.3_f64).exp());
        let hits = draws.iter().filter(|d| d.index == 0).count() as f64;
        let freq = hits / draws.len() as f64;
        let se = (p0_expect * (1.0 - p0_expect) / draws.len() as f64).sqrt();
        assert!((freq - p0_expect).abs() < 4.0 * se, "{freq} vs {p0_expect}");
        // Single-leaf degenerate case.
        let single = simulate(&model, 0, 1, &SimOptions::default()).unwrap();
        let d = sample_polymer(&single, 1.0, &model, 3, 1).unwrap();
        assert!(d.iter().all(|x| x.index == 0 && (x.weight - 1.0).abs() < 1e-15));
    }

    #[test]
    fn extinct_forest_is_rejected() {
        use crate::forest::{Forest, Generation};
        let f = Forest {
            generations: vec![
                Generation {
                    parent: vec![0],
                    position: vec![0.0],
                    path_min: vec![0.0],
                },
                Generation::default(),
            ],
            alive: false,
            seed: 0,
            barrier_alpha: None,
        };
        assert!(matches!(
            sample_polymer(&f, 1.0, &binary(), 1, 1),
            Err(Error::ExtinctForest)
        ));
    }

    #[test]
    fn functional_normalization_and_endpoint() {
        let model = binary();
        let f = simulate(&model, 8, 2, &SimOptions::default()).unwrap();
        let one = polymer_functional(&f, &[0.5, 1.0], |_| 1.0);
        assert_eq!(one, 1.0);
        // Endpoint coordinate at t = 1 averages the rescaled positions.
        let mean_end = polymer_functional(&f, &[1.0], |y| y[0]);
        let leaves = f.leaves();
        let num: f64 = leaves
            .position
            .iter()
            .map(|&x| (-x).exp() * x / (8.0_f64).sqrt())
            .sum();
        let den: f64 = leaves.position.iter().map(|&x| (-x).exp()).sum();
        assert!((mean_end - num / den).abs() < 1e-12);
    }

    #[test]
    fn endpoint_statistic_normalization_and_truncation() {
        let model = binary();
        let f = simulate(&model, 10, 4, &SimOptions::default()).unwrap();
        let (one, _) = endpoint_exp_statistic(&f, 0.0, &[]);
        assert_eq!(one, 1.0);
        let (stat, trunc) = endpoint_exp_statistic(&f, 1.0, &[2.0, 4.0]);
        assert!(stat > 0.0);
        // Nested indicators: the deeper truncation keeps less mass.
        assert!(trunc[1] <= trunc[0]);
        assert!(trunc[0] <= stat);
        // Against the generic functional on the same forest.
        let via_functional = polymer_functional(&f, &[1.0], |y| (y[0]).exp());
        assert!((stat - via_functional).abs() < 1e-12);
    }

    // Trend check at desk scale: the overlap mass at fixed threshold
    // shrinks with depth.
    #[test]
    fn pair_mass_median_decreases_with_depth() {
        let model = binary();
        let med = |n: usize, seed: u64| {
            let vals: Vec<f64> = (0..120)
                .map(|r| {
                    let f = simulate(
                        &model,
                        n,
                        crate::rng::substream(seed, r),
                        &SimOptions::default(),
                    )
                    .unwrap();
                    overlap_pair_mass(&f, 0.5).pair_mass
                })
                .collect();
            crate::stats::median(&vals)
        };
        let (m8, m16) = (med(8, 41), med(16, 42));
        assert!(m16 < m8, "median pair mass must fall: {m8} -> {m16}");
    }
}
