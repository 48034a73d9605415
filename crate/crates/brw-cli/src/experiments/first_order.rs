//! First-order transition experiment: near the critical temperature the
//! additive martingale scaled by the distance to criticality approaches
//! twice the derivative martingale. Runs the algebraic two-route
//! recomputation, the rescaled-endpoint statistic against the meander
//! moment, and the deterministic constants chain.

use brw::martingale::{additive_two_routes, compute_series};
use brw::meander::{constants_chain, constants_chain_identity, endpoint_exp_moment};
use brw::polymer::endpoint_exp_statistic;
use brw::stats::median;

use crate::report::{fmt_f64, RunReport, StatLine, Table};
use crate::CliError;

use super::{surviving_forest_stats, Ctx};

pub fn run(ctx: &Ctx) -> Result<RunReport, CliError> {
    let started = std::time::Instant::now();
    let exp = &ctx.config.experiment;
    let betas = exp.beta.clone().unwrap_or_else(|| vec![0.5, 0.6, 0.7]);
    let c = exp.c.unwrap_or(2.0);
    let replicates = ctx.config.sim.replicates;
    let options = ctx.config.sim_options();
    let sigma2 = ctx.model.sigma2();

    let mut report = RunReport::new(
        "first_order",
        &ctx.hash,
        ctx.seed(),
        serde_json::json!({"betas": betas, "C": c, "replicates": replicates}),
    );
    let mut rows = Table::new(&[
        "seed",
        "beta",
        "n",
        "w_beta",
        "d_proxy",
        "scaled_ratio",
        "two_route_rel_gap",
        "endpoint_stat",
        "endpoint_target",
    ]);

    let mut max_gap = 0.0_f64;
    for (bi, &beta) in betas.iter().enumerate() {
        let alpha = 1.0 - beta;
        if !(alpha > 0.0) {
            return Err(CliError::Config(format!("beta {beta} must be below 1")));
        }
        let n = (c / (alpha * alpha)).floor() as usize;
        if n == 0 || n > ctx.config.sim.max_gen {
            return Err(CliError::Config(format!(
                "depth C/(1-beta)^2 = {n} outside 1..={} for beta {beta}",
                ctx.config.sim.max_gen
            )));
        }
        // The floor makes the effective temperature-scale constant
        // slightly smaller than C.
        let c_eff = alpha * alpha * n as f64;
        let target = endpoint_exp_moment(ctx.model.sigma() * c_eff.sqrt());

        let model = ctx.model.clone();
        let stats = surviving_forest_stats(
            &ctx.model,
            n,
            ctx.seed() ^ (bi as u64) << 40,
            replicates,
            &options,
            move |attempt, forest| {
                let (direct, factored) = additive_two_routes(forest, beta, &model);
                let gap = ((direct - factored) / direct).abs();
                let series = compute_series(forest, &[], &model, None).expect("no betas");
                let d_proxy = series.derivative_proxy();
                let (stat, _) = endpoint_exp_statistic(forest, c_eff.sqrt(), &[]);
                (attempt, direct, d_proxy, gap, stat)
            },
        )?;

        let mut ratios = Vec::with_capacity(stats.len());
        let mut endpoint_stats = Vec::with_capacity(stats.len());
        for (attempt, w_beta, d_proxy, gap, stat) in &stats {
            let scaled = w_beta / alpha / (2.0 * d_proxy);
            ratios.push(scaled);
            endpoint_stats.push(*stat);
            max_gap = max_gap.max(*gap);
            rows.row(vec![
                attempt.to_string(),
                fmt_f64(beta),
                n.to_string(),
                fmt_f64(*w_beta),
                fmt_f64(*d_proxy),
                fmt_f64(scaled),
                fmt_f64(*gap),
                fmt_f64(*stat),
                fmt_f64(target),
            ]);
        }
        report.push(StatLine::info(
            format!("median_scaled_ratio_beta{beta}"),
            median(&ratios),
            1.2533 * brw::stats::mean_se(&ratios).1,
        ));
        report.push(StatLine::info(
            format!("median_endpoint_stat_beta{beta}_vs_{target:.4}"),
            median(&endpoint_stats),
            1.2533 * brw::stats::mean_se(&endpoint_stats).1,
        ));
    }
    rows.write(&ctx.out_dir, "first_order", ctx.format)?;

    report.push(StatLine::checked(
        "two_route_recomputation_max_rel_gap",
        max_gap,
        0.0,
        0.0,
        1e-10,
        max_gap <= 1e-10,
    ));

    // Deterministic constants chain: the scaled moment tends to 2, and the
    // direct route agrees with the collapsed closed form.
    let f50 = constants_chain(50.0, sigma2);
    report.push(StatLine::checked(
        "constants_chain_f50",
        f50,
        0.0,
        2.0,
        1e-6,
        (f50 - 2.0).abs() < 1e-6,
    ));
    let max_route_gap = [1.0, 10.0, 50.0]
        .iter()
        .map(|&cc| (constants_chain(cc, sigma2) - constants_chain_identity(cc, sigma2)).abs())
        .fold(0.0_f64, f64::max);
    report.push(StatLine::checked(
        "constants_chain_two_routes",
        max_route_gap,
        0.0,
        0.0,
        1e-6,
        max_route_gap < 1e-6,
    ));

    report.finalize(started);
    report.write_meta(&ctx.out_dir)?;
    Ok(report)
}
