//! Finite-dimensional convergence of the critical polymer's rescaled
//! trajectories to the meander: marginal CDF distances on a time grid and
//! the two-functional factorization check.

use brw::forest::Forest;
use brw::meander::marginal_cdf;
use brw::stats::{kahan_sum, mean_se, KahanSum};

use crate::report::{fmt_f64, RunReport, StatLine, Table};
use crate::CliError;

use super::{surviving_forest_stats, Ctx};

/// Per-forest polymer state for the CDF sweep: for each time, the weighted
/// empirical mass of `V_t(u)` at or below each threshold.
fn cdf_masses(forest: &Forest, t_grid: &[f64], thresholds: &[f64]) -> Vec<Vec<f64>> {
    let depth = forest.depth();
    let leaves = forest.leaves();
    let scale = (depth.max(1) as f64).sqrt();
    let mut num = vec![vec![KahanSum::new(); thresholds.len()]; t_grid.len()];
    let mut den = KahanSum::new();
    let mut chain = vec![0.0; depth + 1];
    for leaf in 0..leaves.len() {
        let mut level = depth;
        let mut i = leaf;
        while level > 0 {
            chain[level] = forest.generation(level).position[i];
            i = forest.generation(level).parent[i] as usize;
            level -= 1;
        }
        let w = (-leaves.position[leaf]).exp();
        den.add(w);
        for (ti, &t) in t_grid.iter().enumerate() {
            let pos = depth as f64 * t;
            let k = (pos.floor() as usize).min(depth);
            let frac = pos - k as f64;
            let v = if frac > 0.0 && k < depth {
                chain[k] + frac * (chain[k + 1] - chain[k])
            } else {
                chain[k]
            } / scale;
            // Thresholds ascend: one partition point per leaf and time.
            let cut = thresholds.partition_point(|&x| x < v);
            for acc in num[ti][cut..].iter_mut() {
                acc.add(w);
            }
        }
    }
    let total = den.value();
    num.into_iter()
        .map(|row| row.into_iter().map(|a| a.value() / total).collect())
        .collect()
}

pub fn run(ctx: &Ctx) -> Result<RunReport, CliError> {
    let started = std::time::Instant::now();
    let exp = &ctx.config.experiment;
    let t_grid = exp.t_grid.clone().unwrap_or_else(|| vec![0.25, 0.5, 1.0]);
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config("t_grid must be ascending".into()));
    }
    if !(t_grid[0] > 0.0 && *t_grid.last().unwrap() <= 1.0) {
        return Err(CliError::Config("t_grid must lie in (0, 1]".into()));
    }
    let n = ctx.config.sim.max_gen;
    if n > 22 {
        return Err(CliError::Config(format!("sim.max_gen = {n} > 22")));
    }
    let replicates = ctx.config.sim.replicates;
    let tolerance = exp.tolerance.unwrap_or(0.15);
    let sigma = ctx.model.sigma();
    // Threshold grid spanning the bulk of the scaled meander marginals.
    let thresholds: Vec<f64> = (0..=80).map(|i| i as f64 * 4.0 * sigma / 80.0).collect();

    // Product functional pair: endpoint indicators at one and one and a
    // half sigma.
    let (qa, qb) = (1.0 * sigma, 1.5 * sigma);

    let t_inner = t_grid.clone();
    let th_inner = thresholds.clone();
    let options = ctx.config.sim_options();
    let stats = surviving_forest_stats(
        &ctx.model,
        n,
        ctx.seed(),
        replicates,
        &options,
        move |attempt, forest| {
            let masses = cdf_masses(forest, &t_inner, &th_inner);
            // Endpoint indicator masses for the factorization check.
            let end = masses.last().expect("t grid nonempty");
            let fa = interp_at(&th_inner, end, qa);
            let fb = interp_at(&th_inner, end, qb);
            (attempt, masses, fa, fb)
        },
    )?;

    // Average the per-forest CDFs.
    let reps = stats.len() as f64;
    let mut table = Table::new(&["t", "x", "empirical", "target"]);
    let mut report = RunReport::new(
        "meander_fdd",
        &ctx.hash,
        ctx.seed(),
        serde_json::json!({"t_grid": t_grid, "n": n, "replicates": replicates, "tolerance": tolerance}),
    );
    let mut endpoint_distance = f64::NAN;
    for (ti, &t) in t_grid.iter().enumerate() {
        let mut distance = 0.0_f64;
        for (xi, &x) in thresholds.iter().enumerate() {
            let mean = kahan_sum(stats.iter().map(|(_, m, _, _)| m[ti][xi])) / reps;
            let target = marginal_cdf(t, x / sigma)?;
            distance = distance.max((mean - target).abs());
            table.row(vec![fmt_f64(t), fmt_f64(x), fmt_f64(mean), fmt_f64(target)]);
        }
        if t == 1.0 {
            endpoint_distance = distance;
            report.push(StatLine::checked(
                "endpoint_cdf_distance",
                distance,
                0.0,
                0.0,
                tolerance,
                distance < tolerance,
            ));
        } else {
            report.push(StatLine::info(format!("cdf_distance_t{t}"), distance, 0.0));
        }
    }
    table.write(&ctx.out_dir, "meander_fdd_cdf", ctx.format)?;

    // Factorization: the mean product of two functionals tends to the
    // product of independent meander expectations.
    let prods: Vec<f64> = stats.iter().map(|(_, _, fa, fb)| fa * fb).collect();
    let (prod_mean, prod_se) = mean_se(&prods);
    let target_prod =
        marginal_cdf(1.0, qa / sigma)? * marginal_cdf(1.0, qb / sigma)?;
    let pass = (prod_mean - target_prod).abs() <= 3.0 * prod_se;
    report.push(StatLine::checked(
        "product_factorization",
        prod_mean,
        prod_se,
        target_prod,
        3.0,
        pass,
    ));
    let _ = endpoint_distance;

    report.finalize(started);
    report.write_meta(&ctx.out_dir)?;
    Ok(report)
}

fn interp_at(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let last = grid.len() - 1;
    if x <= grid[0] {
        return values[0];
    }
    if x >= grid[last] {
        return values[last];
    }
    let i = grid.partition_point(|&g| g <= x) - 1;
    let t = (x - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] * (1.0 - t) + values[i + 1] * t
}
