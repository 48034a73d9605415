//! Spinal decomposition checks: weighted conditioned-spine expectations
//! against renewal-weighted plain walks, marginal agreement with the
//! conditioned walk, and the tilted-spine identity against exponentially
//! weighted forests.

use brw::forest::{simulate, SimOptions};
use brw::rng::{stream_rng, substream};
use brw::spine::{sample_spine_conditioned, sample_spine_tilted};
use brw::stats::{diff_z, mean_se, two_sample_ks, weighted_mean_se};
use brw::walk::{
    barrier_weighted_expectation, conditioned_walk, default_grid, estimate_renewal, ManyToOneLaw,
};

use crate::report::{fmt_f64, RunReport, StatLine, Table};
use crate::CliError;

use super::Ctx;

pub fn run(ctx: &Ctx) -> Result<RunReport, CliError> {
    let started = std::time::Instant::now();
    let exp = &ctx.config.experiment;
    let alpha = exp.alpha.unwrap_or(2.0);
    let n = 10usize;
    let draws = exp.samples.unwrap_or(10_000);
    let batch = exp.batch.unwrap_or(64);
    let walks = exp.walks.unwrap_or(60_000);
    let horizon = exp.horizon.unwrap_or(4_000);

    let law = ManyToOneLaw::from_model(&ctx.model);
    let table = estimate_renewal(&law, &default_grid(10.0), walks, horizon, ctx.seed() ^ 0x7777)?;

    let mut report = RunReport::new(
        "spine_check",
        &ctx.hash,
        ctx.seed(),
        serde_json::json!({"alpha": alpha, "n": n, "draws": draws, "batch": batch}),
    );

    // Conditioned-spine draws: spines, weights, effective sample sizes.
    let mut rng = stream_rng(substream(ctx.seed(), 0x51));
    let mut spines = Vec::with_capacity(draws);
    let mut weights = Vec::with_capacity(draws);
    let mut min_ess = f64::INFINITY;
    let mut diag = Table::new(&["draw", "weight", "min_ess"]);
    let mut dump = Table::new(&["level", "spine_V", "n_brothers", "brother_Vs"]);
    for d in 0..draws {
        let s = sample_spine_conditioned(&ctx.model, &table, alpha, n, &mut rng, batch)?;
        let ess = s.ess.iter().copied().fold(f64::INFINITY, f64::min);
        min_ess = min_ess.min(ess);
        if d < 64 {
            diag.row(vec![d.to_string(), fmt_f64(s.weight), fmt_f64(ess)]);
        }
        if d == 0 {
            for level in 0..=n {
                let brothers = if level == 0 {
                    String::new()
                } else {
                    s.brothers[level - 1]
                        .iter()
                        .map(|&b| fmt_f64(b))
                        .collect::<Vec<_>>()
                        .join(";")
                };
                dump.row(vec![
                    level.to_string(),
                    fmt_f64(s.spine[level]),
                    if level == 0 {
                        "0".into()
                    } else {
                        s.brothers[level - 1].len().to_string()
                    },
                    brothers,
                ]);
            }
        }
        spines.push(s.spine);
        weights.push(s.weight);
    }
    dump.write(&ctx.out_dir, "spine_dump", ctx.format)?;
    diag.write(&ctx.out_dir, "spine_diagnostics", crate::report::OutputFormat::Jsonl)?;

    // Identity: weighted spine expectations equal renewal-weighted plain
    // walk expectations, for three path functionals.
    let gs: Vec<(&str, Box<dyn Fn(&[f64]) -> f64 + Sync>)> = vec![
        (
            "endpoint_below_2",
            Box::new(move |p: &[f64]| if p[n] <= 2.0 { 1.0 } else { 0.0 }),
        ),
        (
            "capped_endpoint",
            Box::new(move |p: &[f64]| p[n].clamp(0.0, 5.0)),
        ),
        (
            "midpoint_below_1",
            Box::new(move |p: &[f64]| if p[n / 2] <= 1.0 { 1.0 } else { 0.0 }),
        ),
    ];
    for (name, g) in &gs {
        let vals: Vec<f64> = spines.iter().map(|s| g(s)).collect();
        let (lhs, lhs_se, _) = weighted_mean_se(&vals, &weights);
        let (rhs, rhs_se) = barrier_weighted_expectation(
            &law,
            &table,
            alpha,
            n,
            |p| g(p),
            20 * draws,
            ctx.seed() ^ 0x52,
        );
        let z = diff_z(lhs, lhs_se, rhs, rhs_se);
        report.push(StatLine::checked(
            format!("spine_identity_{name}"),
            lhs,
            lhs_se,
            rhs,
            3.0,
            z < 3.0,
        ));
    }

    // Marginal agreement with the conditioned walk (unweighted: quantifies
    // the resampling bias).
    let mut rng2 = stream_rng(substream(ctx.seed(), 0x53));
    let walk_ends: Vec<f64> = (0..draws)
        .map(|_| {
            conditioned_walk(&law, &table, alpha, n, &mut rng2, batch)
                .map(|cp| cp.path[n])
                .expect("gaussian proposals cannot collapse")
        })
        .collect();
    let spine_ends: Vec<f64> = spines.iter().map(|s| s[n]).collect();
    let ks = two_sample_ks(&spine_ends, &walk_ends);
    report.push(StatLine::checked(
        "spine_vs_walk_marginal_ks",
        ks,
        0.0,
        0.0,
        0.03,
        ks < 0.03,
    ));
    report.push(StatLine::info("min_step_ess", min_ess, 0.0));

    // Tilted spine two-estimator identity at a subcritical temperature.
    let beta = 0.7;
    let depth = 4usize;
    let g_end = |x: f64| if x <= 1.0 { 1.0 } else { 0.0 };
    let mut rng3 = stream_rng(substream(ctx.seed(), 0x54));
    let lhs_vals: Vec<f64> = (0..draws)
        .map(|_| {
            let s = sample_spine_tilted(&ctx.model, beta, depth, &mut rng3, batch)
                .expect("beta in domain");
            g_end(s.spine[depth])
        })
        .collect();
    let (lhs, lhs_se) = mean_se(&lhs_vals);
    let phi = ctx.model.log_laplace(beta);
    let model = ctx.model.clone();
    let rhs_vals: Vec<f64> = (0..2 * draws)
        .map(|r| {
            let f = simulate(
                &model,
                depth,
                substream(ctx.seed() ^ 0x55, r as u64),
                &SimOptions::default(),
            )
            .expect("shallow tree");
            f.leaves()
                .position
                .iter()
                .map(|&x| (-beta * x - phi * depth as f64).exp() * g_end(x))
                .sum()
        })
        .collect();
    let (rhs, rhs_se) = mean_se(&rhs_vals);
    let z = diff_z(lhs, lhs_se, rhs, rhs_se);
    report.push(StatLine::checked(
        "tilted_spine_identity",
        lhs,
        lhs_se,
        rhs,
        3.0,
        z < 3.0,
    ));

    report.finalize(started);
    report.write_meta(&ctx.out_dir)?;
    Ok(report)
}
