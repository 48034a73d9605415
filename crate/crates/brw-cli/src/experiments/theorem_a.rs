//! Desk-scale check of the square-root normalization of the critical
//! additive martingale: medians of `sqrt(n) W_n / D_n` against the
//! constant `sqrt(2 / (pi sigma2))`, with a shrinking-error trend flag.

use brw::martingale::compute_series;
use brw::stats::median;

use crate::report::{fmt_f64, RunReport, StatLine, Table};
use crate::CliError;

use super::{surviving_forest_stats, Ctx};

pub fn run(ctx: &Ctx) -> Result<RunReport, CliError> {
    let started = std::time::Instant::now();
    let exp = &ctx.config.experiment;
    let n_values = exp.n_values.clone().unwrap_or_else(|| vec![12, 16, 20]);
    let max_n = *n_values.iter().max().expect("n_values nonempty");
    if max_n > ctx.config.sim.max_gen || ctx.config.sim.max_gen > 22 {
        return Err(CliError::Config(format!(
            "theorem-a needs max(n_values) <= sim.max_gen <= 22; got {n_values:?} vs {}",
            ctx.config.sim.max_gen
        )));
    }
    let replicates = ctx.config.sim.replicates;
    let tolerance = exp.tolerance.unwrap_or(0.35);
    let target = (2.0 / (std::f64::consts::PI * ctx.model.sigma2())).sqrt();

    // One deep simulation per replicate; shallower depths are read off the
    // same series.
    let model = ctx.model.clone();
    let options = ctx.config.sim_options();
    let n_values_inner = n_values.clone();
    let stats = surviving_forest_stats(
        &ctx.model,
        max_n,
        ctx.seed(),
        replicates,
        &options,
        move |attempt, forest| {
            let series = compute_series(forest, &[], &model, None).expect("no betas requested");
            let ratios: Vec<f64> = n_values_inner
                .iter()
                .map(|&n| (n as f64).sqrt() * series.critical[n] / series.derivative[n])
                .collect();
            (attempt, ratios)
        },
    )?;

    let mut rows = Table::new(&["seed", "n", "ratio"]);
    for (attempt, ratios) in &stats {
        for (i, &n) in n_values.iter().enumerate() {
            rows.row(vec![
                attempt.to_string(),
                n.to_string(),
                fmt_f64(ratios[i]),
            ]);
        }
    }
    rows.write(&ctx.out_dir, "theorem_a", ctx.format)?;

    let mut report = RunReport::new(
        "theorem_a",
        &ctx.hash,
        ctx.seed(),
        serde_json::json!({"n_values": n_values, "replicates": replicates, "tolerance": tolerance}),
    );

    let mut medians = Table::new(&["n", "median", "target", "abs_err"]);
    let mut errs = Vec::new();
    for (i, &n) in n_values.iter().enumerate() {
        let vals: Vec<f64> = stats.iter().map(|(_, r)| r[i]).collect();
        let med = median(&vals);
        // Normal-approximation standard error of a median.
        let (_, se_mean) = brw::stats::mean_se(&vals);
        let se_med = 1.2533 * se_mean;
        errs.push((med - target).abs());
        medians.row(vec![
            n.to_string(),
            fmt_f64(med),
            fmt_f64(target),
            fmt_f64((med - target).abs()),
        ]);
        report.push(StatLine::info(format!("median_ratio_n{n}"), med, se_med));
    }
    medians.write(&ctx.out_dir, "theorem_a_medians", ctx.format)?;

    if n_values.len() > 1 {
        let trend_ok = errs.windows(2).all(|w| w[1] <= w[0]);
        report.push(StatLine::checked(
            "abs_error_non_increasing",
            if trend_ok { 1.0 } else { 0.0 },
            0.0,
            1.0,
            0.0,
            trend_ok,
        ));
    }
    let final_rel = errs.last().unwrap() / target;
    report.push(StatLine::checked(
        format!("final_rel_error_n{max_n}"),
        final_rel,
        0.0,
        0.0,
        tolerance,
        final_rel <= tolerance,
    ));

    report.finalize(started);
    report.write_meta(&ctx.out_dir)?;
    Ok(report)
}
