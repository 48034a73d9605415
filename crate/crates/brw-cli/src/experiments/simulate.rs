//! Plain simulation runs: martingale series per replicate as one
//! aggregated table, with an optional binary forest dump for replay
//! debugging.

use brw::martingale::compute_series;
use brw::stats::mean_se;

use crate::report::{fmt_f64, RunReport, StatLine, Table};
use crate::CliError;

use super::{surviving_forest_stats, Ctx};

pub fn run(ctx: &Ctx, dump_forest: bool) -> Result<RunReport, CliError> {
    let started = std::time::Instant::now();
    let exp = &ctx.config.experiment;
    let betas = exp.beta.clone().unwrap_or_else(|| vec![0.5, 1.0]);
    let n = ctx.config.sim.max_gen;
    let replicates = ctx.config.sim.replicates;
    let options = ctx.config.sim_options();
    let barrier = ctx.config.sim.barrier_alpha;

    // The truncated series need a renewal table.
    let table = match barrier {
        Some(_) => {
            let law = brw::walk::ManyToOneLaw::from_model(&ctx.model);
            Some(brw::walk::estimate_renewal(
                &law,
                &brw::walk::default_grid(10.0),
                exp.walks.unwrap_or(50_000),
                exp.horizon.unwrap_or(10_000),
                ctx.seed() ^ 0xbead,
            )?)
        }
        None => None,
    };

    let model = ctx.model.clone();
    let betas_inner = betas.clone();
    let stats = surviving_forest_stats(
        &ctx.model,
        n,
        ctx.seed(),
        replicates,
        &options,
        move |attempt, forest| {
            let barrier_arg = barrier.map(|a| (a, table.as_ref().expect("table built")));
            let s = compute_series(forest, &betas_inner, &model, barrier_arg)
                .expect("betas validated");
            (attempt, s, forest.total_particles())
        },
    )?;

    let mut rows = Table::new(&[
        "seed",
        "generation",
        "beta",
        "W_beta",
        "W",
        "D",
        "W_alpha",
        "D_alpha",
    ]);
    for (attempt, series, _) in &stats {
        for k in 0..series.critical.len() {
            for (bi, &beta) in betas.iter().enumerate() {
                let (wa, da) = match &series.barrier {
                    Some(b) => (fmt_f64(b.additive[k]), fmt_f64(b.derivative[k])),
                    None => (String::new(), String::new()),
                };
                rows.row(vec![
                    attempt.to_string(),
                    k.to_string(),
                    fmt_f64(beta),
                    fmt_f64(series.additive[bi][k]),
                    fmt_f64(series.critical[k]),
                    fmt_f64(series.derivative[k]),
                    wa,
                    da,
                ]);
            }
        }
    }
    rows.write(&ctx.out_dir, "martingales", ctx.format)?;

    if dump_forest {
        let forest = brw::forest::simulate(
            &ctx.model,
            n,
            brw::rng::substream(ctx.seed(), 0),
            &options,
        )?;
        let path = ctx.out_dir.join("forest_attempt0.brw1");
        let mut file = std::fs::File::create(&path)?;
        forest.write_binary(&mut file)?;
    }

    let finals: Vec<f64> = stats.iter().map(|(_, s, _)| s.critical_last()).collect();
    let (w_mean, w_se) = mean_se(&finals);
    let d_finals: Vec<f64> = stats.iter().map(|(_, s, _)| s.derivative_proxy()).collect();
    let (d_mean, d_se) = mean_se(&d_finals);
    let particles: u64 = stats.iter().map(|(_, _, p)| *p).sum();

    let mut report = RunReport::new(
        "simulate",
        &ctx.hash,
        ctx.seed(),
        serde_json::json!({"n": n, "betas": betas, "replicates": replicates, "barrier_alpha": barrier}),
    );
    report.push(StatLine::info("critical_martingale_final_mean", w_mean, w_se));
    report.push(StatLine::info("derivative_proxy_mean", d_mean, d_se));
    report.push(StatLine::info("total_particles", particles as f64, 0.0));
    report.finalize(started);
    report.write_meta(&ctx.out_dir)?;
    Ok(report)
}
