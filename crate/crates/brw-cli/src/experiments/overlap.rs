//! Overlap pair-mass experiment: medians across depths and thresholds,
//! the exact-zero-threshold column, the decreasing-depth trend flag, and
//! the quadratic-oracle equality check on small forests.

use brw::polymer::{overlap_pair_mass, pair_mass_brute_force};
use brw::stats::median;

use crate::report::{fmt_f64, RunReport, StatLine, Table};
use crate::CliError;

use super::{surviving_forest_stats, Ctx};

pub fn run(ctx: &Ctx) -> Result<RunReport, CliError> {
    let started = std::time::Instant::now();
    let exp = &ctx.config.experiment;
    let deltas = exp
        .delta
        .clone()
        .unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75]);
    let n_values = exp.n_values.clone().unwrap_or_else(|| vec![8, 12, 16]);
    let replicates = ctx.config.sim.replicates;
    let options = ctx.config.sim_options();

    let mut rows = Table::new(&["seed", "n", "delta", "pair_mass"]);
    let mut medians = Table::new(&["n", "delta", "median_pair_mass"]);
    let mut report = RunReport::new(
        "overlap",
        &ctx.hash,
        ctx.seed(),
        serde_json::json!({"deltas": deltas, "n_values": n_values, "replicates": replicates}),
    );

    let mut trend_median_at_half: Vec<f64> = Vec::new();
    let mut zero_column_exact = true;
    for (ni, &n) in n_values.iter().enumerate() {
        let deltas_inner = deltas.clone();
        let stats = surviving_forest_stats(
            &ctx.model,
            n,
            ctx.seed() ^ (ni as u64) << 48,
            replicates,
            &options,
            move |attempt, forest| {
                let masses: Vec<f64> = deltas_inner
                    .iter()
                    .map(|&d| overlap_pair_mass(forest, d).pair_mass)
                    .collect();
                (attempt, masses)
            },
        )?;
        for (attempt, masses) in &stats {
            for (di, &d) in deltas.iter().enumerate() {
                rows.row(vec![
                    attempt.to_string(),
                    n.to_string(),
                    fmt_f64(d),
                    fmt_f64(masses[di]),
                ]);
            }
        }
        for (di, &d) in deltas.iter().enumerate() {
            let vals: Vec<f64> = stats.iter().map(|(_, m)| m[di]).collect();
            let med = median(&vals);
            medians.row(vec![n.to_string(), fmt_f64(d), fmt_f64(med)]);
            if d == 0.5 {
                trend_median_at_half.push(med);
            }
            if d == 0.0 {
                zero_column_exact &= vals.iter().all(|&v| v == 1.0);
            }
        }
    }
    rows.write(&ctx.out_dir, "overlap", ctx.format)?;
    medians.write(&ctx.out_dir, "overlap_medians", ctx.format)?;

    if deltas.contains(&0.0) {
        report.push(StatLine::checked(
            "zero_threshold_column_is_one",
            if zero_column_exact { 1.0 } else { 0.0 },
            0.0,
            1.0,
            0.0,
            zero_column_exact,
        ));
    }
    if trend_median_at_half.len() >= 2 {
        let decreasing = trend_median_at_half.windows(2).all(|w| w[1] < w[0]);
        for (i, &n) in n_values.iter().enumerate() {
            report.push(StatLine::info(
                format!("median_pair_mass_delta0.5_n{n}"),
                trend_median_at_half[i],
                0.0,
            ));
        }
        report.push(StatLine::checked(
            "median_pair_mass_strictly_decreasing",
            if decreasing { 1.0 } else { 0.0 },
            0.0,
            1.0,
            0.0,
            decreasing,
        ));
    }

    // Quadratic oracle on 100 small forests.
    let oracle_deltas = [0.2, 0.5, 0.8, 1.0];
    let max_rel: f64 = surviving_forest_stats(
        &ctx.model,
        6,
        ctx.seed() ^ 0x0bac1e,
        100,
        &options,
        move |_, forest| {
            oracle_deltas
                .iter()
                .map(|&d| {
                    let fast = overlap_pair_mass(forest, d).pair_mass;
                    let slow = pair_mass_brute_force(forest, d);
                    ((fast - slow) / slow).abs()
                })
                .fold(0.0_f64, f64::max)
        },
    )?
    .into_iter()
    .fold(0.0_f64, f64::max);
    report.push(StatLine::checked(
        "recursion_vs_quadratic_oracle_max_rel",
        max_rel,
        0.0,
        0.0,
        1e-12,
        max_rel <= 1e-12,
    ));

    report.finalize(started);
    report.write_meta(&ctx.out_dir)?;
    Ok(report)
}
