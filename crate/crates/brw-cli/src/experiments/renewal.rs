//! Renewal-function estimation: the table itself, its slope and
//! square-root survival constant, and the harmonic identity spot checks.

use brw::walk::{default_grid, estimate_renewal, harmonicity_check, ManyToOneLaw};

use crate::report::{fmt_f64, RunReport, StatLine, Table};
use crate::CliError;

use super::Ctx;

pub fn run(ctx: &Ctx) -> Result<RunReport, CliError> {
    let started = std::time::Instant::now();
    let exp = &ctx.config.experiment;
    let grid = exp.u_grid.clone().unwrap_or_else(|| default_grid(10.0));
    let walks = exp.walks.unwrap_or(50_000);
    let horizon = exp.horizon.unwrap_or(10_000);

    let law = ManyToOneLaw::from_model(&ctx.model);
    let table = estimate_renewal(&law, &grid, walks, horizon, ctx.seed())?;

    let mut rows = Table::new(&["u", "h0", "se", "n_ladders", "bias_bar"]);
    for i in 0..table.u.len() {
        rows.row(vec![
            fmt_f64(table.u[i]),
            fmt_f64(table.h0[i]),
            fmt_f64(table.se[i]),
            table.n_ladders[i].to_string(),
            fmt_f64(table.bias_bar[i]),
        ]);
    }
    rows.write(&ctx.out_dir, "renewal", ctx.format)?;

    let mut report = RunReport::new(
        "renewal",
        &ctx.hash,
        ctx.seed(),
        serde_json::json!({"walks": walks, "horizon": horizon, "grid_points": table.u.len()}),
    );
    report.push(StatLine::info("c0", table.c0, table.c0_se));
    report.push(StatLine::info("theta", table.theta, table.theta_se));
    report.push(StatLine::checked(
        "origin_pinned",
        table.h0[0],
        0.0,
        1.0,
        0.0,
        table.h0[0] == 1.0,
    ));
    let monotone = table.h0.windows(2).all(|w| w[1] >= w[0]);
    report.push(StatLine::checked(
        "non_decreasing",
        if monotone { 1.0 } else { 0.0 },
        0.0,
        1.0,
        0.0,
        monotone,
    ));
    // Linear envelope of the estimate.
    let ratio_lo = table
        .u
        .iter()
        .zip(&table.h0)
        .map(|(&u, &h)| h / (1.0 + u))
        .fold(f64::INFINITY, f64::min);
    let ratio_hi = table
        .u
        .iter()
        .zip(&table.h0)
        .map(|(&u, &h)| h / (1.0 + u))
        .fold(0.0_f64, f64::max);
    report.push(StatLine::checked(
        "linear_envelope_lower",
        ratio_lo,
        0.0,
        0.0,
        0.0,
        ratio_lo > 0.0,
    ));
    report.push(StatLine::info("linear_envelope_upper", ratio_hi, 0.0));

    let points = [0.5, 1.0, 2.0, 5.0];
    let checks = harmonicity_check(&law, &table, &points, 200_000, ctx.seed() ^ 0xa11);
    for p in &checks {
        report.push(StatLine::checked(
            format!("harmonicity_u{}", p.u),
            p.lhs - p.rhs,
            p.se,
            0.0,
            3.0,
            p.z < 3.0,
        ));
    }

    report.finalize(started);
    report.write_meta(&ctx.out_dir)?;
    Ok(report)
}
