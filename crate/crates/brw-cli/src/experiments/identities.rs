//! The exact-identity suite: every finite-sample identity the toolkit
//! relies on, each as a two-estimator comparison with a z-score. Per
//! identity the flag is the three-standard-error overlap; the suite flag
//! adjusts the threshold for the number of identities (Bonferroni) so seed
//! perturbations do not flip it. This is the continuous-integration gate,
//! and the fault-injection point for the negative control.

use brw::martingale::compute_series;
use brw::rng::{stream_rng, substream};
use brw::spine::sample_spine_conditioned;
use brw::stats::{mean_se, normal_cdf, normal_quantile, weighted_mean_se};
use brw::walk::{
    barrier_weighted_expectation, default_grid, estimate_renewal, harmonicity_check,
    many_to_one_battery, ManyToOneLaw,
};
use rayon::prelude::*;

use crate::report::{fmt_f64, RunReport, StatLine, Table};
use crate::CliError;

use super::Ctx;

#[derive(Clone, Debug)]
pub struct IdentityOutcome {
    pub name: String,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub z: f64,
    pub pass_3se: bool,
    pub pass_familywise: bool,
}

#[derive(Clone, Debug)]
pub struct IdentitySuite {
    pub outcomes: Vec<IdentityOutcome>,
    pub z_familywise: f64,
    pub pass: bool,
}

fn outcome(name: &str, lhs: f64, lhs_se: f64, rhs: f64, rhs_se: f64) -> IdentityOutcome {
    let z = (lhs - rhs).abs() / (lhs_se * lhs_se + rhs_se * rhs_se).sqrt().max(1e-300);
    IdentityOutcome {
        name: name.into(),
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        z,
        pass_3se: z <= 3.0,
        pass_familywise: false,
    }
}

/// Run the whole suite. `corrupt_h0` injects the negative-control fault
/// (origin of the renewal table pinned to 2) before the renewal-dependent
/// identities.
pub fn run_suite(ctx: &Ctx, corrupt_h0: bool) -> Result<IdentitySuite, CliError> {
    let samples = ctx.config.experiment.samples.unwrap_or(100_000);
    let seed = ctx.seed();
    let model = &ctx.model;
    let law = ManyToOneLaw::from_model(model);
    let mut outcomes: Vec<IdentityOutcome> = Vec::new();

    // Particle-sum vs tilted-walk expectations: three bounded functions at
    // three depths. Caps keep the reweighted side's variance finite.
    let g_barrier_cap = |p: &[f64]| {
        let ok = p.iter().all(|&x| x >= -1.0) && *p.last().unwrap() <= 2.0;
        if ok {
            1.0
        } else {
            0.0
        }
    };
    let g_poly = |p: &[f64]| {
        let t = p.last().unwrap() / 3.0;
        (1.0 - t * t).max(0.0)
    };
    let g_gauss = |p: &[f64]| {
        let t: f64 = *p.last().unwrap();
        (-t * t).exp()
    };
    let g_names = ["barrier_cap_indicator", "capped_poly", "gaussian_bump"];
    for &n in &[3usize, 6, 9] {
        let checks = many_to_one_battery(
            model,
            n,
            &[&g_barrier_cap, &g_poly, &g_gauss],
            samples,
            substream(seed, 0x100 + n as u64),
        )?;
        for (gi, check) in checks.iter().enumerate() {
            outcomes.push(outcome(
                &format!("many_to_one_{}_n{}", g_names[gi], n),
                check.lhs,
                check.lhs_se,
                check.rhs,
                check.rhs_se,
            ));
        }
    }

    // Renewal table and its harmonic identity.
    let walks = (samples / 2).max(20_000);
    let mut table = estimate_renewal(&law, &default_grid(10.0), walks, 10_000, substream(seed, 0x200))?;
    if corrupt_h0 {
        table.corrupt_origin();
    }
    for p in harmonicity_check(&law, &table, &[0.5, 1.0, 2.0, 5.0], 2 * samples, substream(seed, 0x201)) {
        outcomes.push(outcome(
            &format!("renewal_harmonicity_u{}", p.u),
            p.lhs,
            0.0,
            p.rhs,
            p.se,
        ));
    }

    // Conditioned-spine identity: weighted spine expectations against
    // renewal-weighted plain walks, three functions at depth 10.
    let alpha = 2.0;
    let n_spine = 10usize;
    let spine_draws = (samples / 10).max(2_000);
    let mut rng = stream_rng(substream(seed, 0x300));
    let mut spines = Vec::with_capacity(spine_draws);
    let mut spine_weights = Vec::with_capacity(spine_draws);
    for _ in 0..spine_draws {
        let s = sample_spine_conditioned(model, &table, alpha, n_spine, &mut rng, 64)?;
        spines.push(s.spine);
        spine_weights.push(s.weight);
    }
    let spine_gs: Vec<(&str, Box<dyn Fn(&[f64]) -> f64 + Sync>)> = vec![
        (
            "endpoint_below_2",
            Box::new(move |p: &[f64]| if p[n_spine] <= 2.0 { 1.0 } else { 0.0 }),
        ),
        (
            "capped_endpoint",
            Box::new(move |p: &[f64]| p[n_spine].clamp(0.0, 5.0)),
        ),
        (
            "midpoint_below_1",
            Box::new(move |p: &[f64]| if p[n_spine / 2] <= 1.0 { 1.0 } else { 0.0 }),
        ),
    ];
    for (name, g) in &spine_gs {
        let vals: Vec<f64> = spines.iter().map(|s| g(s)).collect();
        let (lhs, lhs_se, _) = weighted_mean_se(&vals, &spine_weights);
        let (rhs, rhs_se) = barrier_weighted_expectation(
            &law,
            &table,
            alpha,
            n_spine,
            |p| g(p),
             2 * samples,
            substream(seed, 0x301),
        );
        outcomes.push(outcome(&format!("spine_{name}"), lhs, lhs_se, rhs, rhs_se));
    }

    // Additive martingale means at two temperatures.
    let mart_seeds = (samples / 10).max(2_000);
    let n_mart = 8usize;
    let betas = [0.5, 1.0];
    let model_clone = model.clone();
    let mart_vals: Vec<(f64, f64)> = (0..mart_seeds)
        .into_par_iter()
        .map(|r| {
            let f = brw::forest::simulate(
                &model_clone,
                n_mart,
                substream(seed ^ 0x400, r as u64),
                &brw::forest::SimOptions::default(),
            )
            .expect("shallow tree");
            let s = compute_series(&f, &betas, &model_clone, None).expect("betas in domain");
            (s.additive[0][n_mart], s.additive[1][n_mart])
        })
        .collect();
    for (bi, &beta) in betas.iter().enumerate() {
        let vals: Vec<f64> = mart_vals
            .iter()
            .map(|v| if bi == 0 { v.0 } else { v.1 })
            .collect();
        let (mean, se) = mean_se(&vals);
        outcomes.push(outcome(
            &format!("martingale_mean_beta{beta}"),
            mean,
            se,
            1.0,
            0.0,
        ));
    }

    // Truncated derivative martingale mean equals the shifted renewal value
    // at the origin.
    let d_alpha = 2.0;
    let d_n = 6usize;
    let d_seeds = (samples / 5).max(4_000);
    let opts = brw::forest::SimOptions {
        barrier_alpha: Some(d_alpha),
        max_particles: brw::forest::DEFAULT_MAX_PARTICLES,
    };
    let model_for_d = model.clone();
    let table_for_d = table.clone();
    let d_vals: Vec<f64> = (0..d_seeds)
        .into_par_iter()
        .map(|r| {
            let f = brw::forest::simulate(
                &model_for_d,
                d_n,
                substream(seed ^ 0x500, r as u64),
                &opts,
            )
            .expect("shallow tree");
            let s = compute_series(&f, &[], &model_for_d, Some((d_alpha, &table_for_d)))
                .expect("no betas");
            s.barrier.as_ref().expect("barrier requested").derivative[f.depth().min(d_n)]
        })
        .collect();
    let (d_mean, d_se) = mean_se(&d_vals);
    let h_at_alpha = table.shifted(0.0, d_alpha);
    outcomes.push(outcome(
        "derivative_barrier_mean",
        d_mean,
        d_se,
        h_at_alpha,
        table.se_at(d_alpha),
    ));

    // Familywise threshold: the per-identity level divided by the number
    // of identities.
    let m = outcomes.len() as f64;
    let per_level = 2.0 * (1.0 - normal_cdf(3.0));
    let z_familywise = normal_quantile(1.0 - per_level / (2.0 * m));
    for o in outcomes.iter_mut() {
        o.pass_familywise = o.z <= z_familywise;
    }
    let pass = outcomes.iter().all(|o| o.pass_familywise);
    Ok(IdentitySuite {
        outcomes,
        z_familywise,
        pass,
    })
}

pub fn run(ctx: &Ctx, corrupt_h0: bool) -> Result<RunReport, CliError> {
    let started = std::time::Instant::now();
    let suite = run_suite(ctx, corrupt_h0)?;
    let mut report = RunReport::new(
        "identities",
        &ctx.hash,
        ctx.seed(),
        serde_json::json!({
            "samples": ctx.config.experiment.samples.unwrap_or(100_000),
            "corrupt_h0": corrupt_h0,
            "z_familywise": suite.z_familywise,
        }),
    );
    let mut rows = Table::new(&["name", "lhs", "lhs_se", "rhs", "rhs_se", "z", "pass_3se", "pass_familywise"]);
    for o in &suite.outcomes {
        rows.row(vec![
            o.name.clone(),
            fmt_f64(o.lhs),
            fmt_f64(o.lhs_se),
            fmt_f64(o.rhs),
            fmt_f64(o.rhs_se),
            fmt_f64(o.z),
            o.pass_3se.to_string(),
            o.pass_familywise.to_string(),
        ]);
        report.push(StatLine::checked(
            o.name.clone(),
            o.z,
            0.0,
            0.0,
            suite.z_familywise,
            o.pass_familywise,
        ));
    }
    rows.write(&ctx.out_dir, "identities", ctx.format)?;
    report.finalize(started);
    report.write_meta(&ctx.out_dir)?;
    Ok(report)
}
