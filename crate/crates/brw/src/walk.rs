//! The tilted one-dimensional random walk associated with a boundary-case
//! model, its renewal function, and the walk conditioned to stay above a
//! barrier.
//!
//! The walk's step law is the exponentially weighted one-particle law of
//! the offspring process: `E[f(S_1)] = E[sum f(V(z)) exp(-V(z))]`. It is
//! centered with variance `sigma2`. For the built-in Gaussian families the
//! tilt has a closed form and `S_1` is exactly `N(0, sigma2)`; custom laws
//! fall back to size-biased selection with importance weights.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forest::{simulate, SimOptions};
use crate::model::{BoundaryModel, Family};
use crate::rng::{stream_rng, substream, Stream};
use crate::stats::{mean_se, wls_line, KahanSum};

/// Default candidate-batch size for importance resampling.
pub const DEFAULT_BATCH: usize = 64;

enum StepKind {
    /// `S_1 ~ N(0, sigma2)` exactly.
    Gaussian { sd: f64 },
    /// Size-biased child selection, importance-resampled over a batch.
    /// Bias is O(1/batch).
    SizeBiased { model: BoundaryModel, batch: usize },
    /// Exact user-provided step sampler.
    Exact(std::sync::Arc<dyn Fn(&mut Stream) -> f64 + Send + Sync>),
}

/// Sampler for the tilted walk.
pub struct ManyToOneLaw {
    pub sigma2: f64,
    kind: StepKind,
}

impl ManyToOneLaw {
    pub fn from_model(model: &BoundaryModel) -> Self {
        let sigma2 = model.sigma2();
        match model.family() {
            Family::BinaryGaussian | Family::PoissonGaussian { .. } => ManyToOneLaw {
                sigma2,
                kind: StepKind::Gaussian { sd: sigma2.sqrt() },
            },
            Family::Custom(m) => {
                if let Some(s1) = &m.s1_sampler {
                    ManyToOneLaw {
                        sigma2,
                        kind: StepKind::Exact(s1.clone()),
                    }
                } else {
                    ManyToOneLaw {
                        sigma2,
                        kind: StepKind::SizeBiased {
                            model: model.clone(),
                            batch: DEFAULT_BATCH,
                        },
                    }
                }
            }
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// One step increment.
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match &self.kind {
            StepKind::Gaussian { sd } => {
                let z: f64 = rng.sample(StandardNormal);
                sd * z
            }
            StepKind::Exact(f) => f(rng),
            StepKind::SizeBiased { model, batch } => {
                let mut vals = Vec::with_capacity(*batch);
                let mut weights = Vec::with_capacity(*batch);
                let mut brood = Vec::new();
                for _ in 0..*batch {
                    let (v, w) = size_biased_child(model, rng, &mut brood);
                    vals.push(v);
                    weights.push(w);
                }
                let total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    return 0.0;
                }
                let mut u = rng.random::<f64>() * total;
                for (v, w) in vals.iter().zip(&weights) {
                    u -= w;
                    if u <= 0.0 {
                        return *v;
                    }
                }
                *vals.last().unwrap()
            }
        }
    }

    /// Properly weighted single draw: `(value, weight)` with
    /// `E[f(value) * weight] = E[f(S_1)]` after weight normalization.
    /// Exact samplers return weight 1.
    pub fn sample_weighted(&self, rng: &mut Stream) -> (f64, f64) {
        match &self.kind {
            StepKind::Gaussian { .. } | StepKind::Exact(_) => (self.sample(rng), 1.0),
            StepKind::SizeBiased { model, .. } => {
                let mut brood = Vec::new();
                size_biased_child(model, rng, &mut brood)
            }
        }
    }

    /// Cumulative path `S_1, ..., S_n` into `out` (cleared first).
    pub fn sample_path(&self, n: usize, rng: &mut Stream, out: &mut Vec<f64>) {
        out.clear();
        let mut s = 0.0;
        for _ in 0..n {
            s += self.sample(rng);
            out.push(s);
        }
    }
}

/// Pick one child of a brood with probability proportional to `exp(-V)`;
/// the importance weight is the brood's exponential sum. Empty broods get
/// weight zero.
fn size_biased_child(model: &BoundaryModel, rng: &mut Stream, brood: &mut Vec<f64>) -> (f64, f64) {
    model.sample_offspring_into(rng, brood);
    if brood.is_empty() {
        return (0.0, 0.0);
    }
    let total: f64 = brood.iter().map(|v| (-v).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for &v in brood.iter() {
        u -= (-v).exp();
        if u <= 0.0 {
            return (v, total);
        }
    }
    (*brood.last().unwrap(), total)
}

/// Estimated renewal function of the walk on a grid, with the slope and
/// the square-root survival constant.
#[derive(Clone, Debug)]
pub struct RenewalTable {
    pub u: Vec<f64>,
    pub h0: Vec<f64>,
    pub se: Vec<f64>,
    pub n_ladders: Vec<u64>,
    /// Measured half-horizon vs full-horizon drift per grid point (the
    /// truncation-bias bar).
    pub bias_bar: Vec<f64>,
    /// Asymptotic slope of the renewal function.
    pub c0: f64,
    pub c0_se: f64,
    /// Constant of the square-root survival asymptotics.
    pub theta: f64,
    pub theta_se: f64,
    pub horizon: usize,
    pub walks: usize,
}

impl RenewalTable {
    /// Renewal value at `u >= 0` by linear interpolation; `0` for `u < 0`;
    /// beyond the grid the linear asymptote with slope `c0` continues from
    /// the last grid value.
    pub fn value(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        let last = self.u.len() - 1;
        if u >= self.u[last] {
            return self.h0[last] + self.c0 * (u - self.u[last]);
        }
        let i = self.u.partition_point(|&g| g <= u) - 1;
        let (u0, u1) = (self.u[i], self.u[i + 1]);
        let t = (u - u0) / (u1 - u0);
        self.h0[i] * (1.0 - t) + self.h0[i + 1] * t
    }

    /// Barrier-shifted value `h_alpha(v) = h0(v + alpha)`.
    pub fn shifted(&self, v: f64, alpha: f64) -> f64 {
        self.value(v + alpha)
    }

    /// Interpolated standard error at `u` (clamped to the grid).
    pub fn se_at(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let last = self.u.len() - 1;
        if u >= self.u[last] {
            return self.se[last];
        }
        let i = self.u.partition_point(|&g| g <= u) - 1;
        let t = (u - self.u[i]) / (self.u[i + 1] - self.u[i]);
        self.se[i] * (1.0 - t) + self.se[i + 1] * t
    }

    pub fn mean_se(&self) -> f64 {
        self.se.iter().sum::<f64>() / self.se.len() as f64
    }

    /// Fault injection for the negative control: pins the origin value to
    /// 2 instead of its exact value 1.
    pub fn corrupt_origin(&mut self) {
        self.h0[0] = 2.0;
    }

    /// Exact straight line `h(u) = 1 + c0 u`. Structural-test support; not
    /// harmonic for any actual step law.
    pub fn linear_for_tests(c0: f64) -> RenewalTable {
        let u: Vec<f64> = (0..41).map(|i| i as f64 * 0.5).collect();
        let h0: Vec<f64> = u.iter().map(|&x| 1.0 + c0 * x).collect();
        let n = u.len();
        RenewalTable {
            u,
            h0,
            se: vec![0.0; n],
            n_ladders: vec![0; n],
            bias_bar: vec![0.0; n],
            c0,
            c0_se: 0.0,
            theta: 0.5642,
            theta_se: 0.0,
            horizon: 0,
            walks: 0,
        }
    }
}

/// Graded estimation grid: fine where the renewal function is curved
/// (small arguments), coarser out on the linear asymptote.
pub fn default_grid(u_max: f64) -> Vec<f64> {
    let mut grid = vec![0.0];
    let mut u = 0.0;
    while u < u_max {
        let step = if u < 3.0 {
            0.125
        } else if u < 6.0 {
            0.25
        } else {
            0.5
        };
        u += step;
        grid.push(u.min(u_max));
    }
    grid.dedup();
    grid
}

struct WalkSummary {
    counts_full: Vec<u16>,
    counts_half: Vec<u16>,
    min_full: f64,
    min_half: f64,
    end_full: f64,
    end_half: f64,
}

/// Estimate the renewal function by strict descending ladder epochs.
///
/// The raw estimate (1 + mean ladder count within the horizon) is corrected
/// for the epochs falling beyond the horizon using the renewal identity:
/// a walk ending at `x` with running minimum `m >= -u` contributes
/// `h0(x + u) - h0(x - m)` expected future ladder points above `-u`,
/// solved self-consistently on the ascending grid. Convergence is verified
/// by comparing against the half-horizon estimate; systematic disagreement
/// raises [`Error::HorizonTooSmall`].
pub fn estimate_renewal(
    law: &ManyToOneLaw,
    u_grid: &[f64],
    walks: usize,
    horizon: usize,
    seed: u64,
) -> Result<RenewalTable> {
    if horizon < 1000 {
        return Err(Error::DomainError(format!("horizon {horizon} < 1000")));
    }
    if walks < 100 {
        return Err(Error::DomainError(format!("walks {walks} < 100")));
    }
    let mut grid: Vec<f64> = u_grid.to_vec();
    grid.retain(|&u| u >= 0.0);
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    if grid.first() != Some(&0.0) {
        grid.insert(0, 0.0);
    }
    let g_len = grid.len();
    let half = horizon / 2;

    let summaries: Vec<WalkSummary> = (0..walks)
        .into_par_iter()
        .map(|w| {
            let mut rng = stream_rng(substream(seed, w as u64));
            let mut heights: Vec<f64> = Vec::with_capacity(64);
            let mut s = 0.0;
            let mut min = 0.0;
            let mut n_half = 0usize;
            let mut end_half = 0.0;
            for j in 1..=horizon {
                s += law.sample(&mut rng);
                if s < min {
                    min = s;
                    heights.push(s);
                    if j <= half {
                        n_half += 1;
                    }
                }
                if j == half {
                    end_half = s;
                }
            }
            let count_prefix = |hs: &[f64]| {
                // heights strictly descending; grid u ascending, so the
                // thresholds -u descend: one merged pass.
                let mut counts = vec![0u16; g_len];
                let mut k = 0usize;
                for (gi, &u) in grid.iter().enumerate() {
                    while k < hs.len() && hs[k] >= -u {
                        k += 1;
                    }
                    counts[gi] = k as u16;
                }
                counts
            };
            let counts_full = count_prefix(&heights);
            let counts_half = count_prefix(&heights[..n_half]);
            WalkSummary {
                counts_full,
                counts_half,
                min_full: heights.last().copied().unwrap_or(0.0),
                min_half: if n_half > 0 { heights[n_half - 1] } else { 0.0 },
                end_full: s,
                end_half,
            }
        })
        .collect();

    // Interpolation with a linear continuation beyond the grid (correction
    // arguments reach the walk's terminal position).
    let interp = |grid: &[f64], h: &[f64], slope: f64, u: f64| -> f64 {
        let last = grid.len() - 1;
        if u <= 0.0 {
            return h[0];
        }
        if u >= grid[last] {
            return h[last] + slope * (u - grid[last]);
        }
        let i = grid.partition_point(|&g| g <= u) - 1;
        let t = (u - grid[i]) / (grid[i + 1] - grid[i]);
        h[i] * (1.0 - t) + h[i + 1] * t
    };
    let top_slope = |h: &[f64]| -> f64 {
        let lo = (g_len * 2) / 3;
        let last = g_len - 1;
        if grid[last] > grid[lo] {
            (h[last] - h[lo]) / (grid[last] - grid[lo])
        } else {
            1.0
        }
    };
    // Expected future ladder points above -u for a walk ending at `x` with
    // running minimum `m >= -u`.
    let tail = |h: &[f64], slope: f64, u: f64, m: f64, x: f64| -> f64 {
        interp(&grid, h, slope, x + u) - interp(&grid, h, slope, x - m)
    };

    // Self-consistent tail correction, iterated to its fixed point.
    let corrected = |counts_of: &dyn Fn(&WalkSummary) -> &[u16],
                     min_of: &dyn Fn(&WalkSummary) -> f64,
                     end_of: &dyn Fn(&WalkSummary) -> f64|
     -> Vec<f64> {
        let wn = summaries.len() as f64;
        let mut h: Vec<f64> = (0..g_len)
            .map(|g| {
                1.0 + summaries
                    .iter()
                    .map(|s| counts_of(s)[g] as f64)
                    .sum::<f64>()
                    / wn
            })
            .collect();
        for _ in 0..4 {
            let slope = top_slope(&h);
            let mut next = vec![1.0; g_len];
            for g in 1..g_len {
                let u = grid[g];
                let mut acc = KahanSum::new();
                for s in &summaries {
                    let m = min_of(s);
                    acc.add(counts_of(s)[g] as f64);
                    if m >= -u {
                        acc.add(tail(&h, slope, u, m, end_of(s)));
                    }
                }
                next[g] = 1.0 + acc.value() / wn;
            }
            h = next;
        }
        h
    };

    let h_full = corrected(&|s| &s.counts_full, &|s| s.min_full, &|s| s.end_full);
    let h_half = corrected(&|s| &s.counts_half, &|s| s.min_half, &|s| s.end_half);

    // Per-walk totals under the final estimate, for standard errors and the
    // full-vs-half drift test.
    let mut se = vec![0.0; g_len];
    let mut bias_bar = vec![0.0; g_len];
    let mut max_z = 0.0_f64;
    let mut max_z_at = 0.0;
    let wn = summaries.len() as f64;
    let slope_full = top_slope(&h_full);
    let slope_half = top_slope(&h_half);
    for g in 1..g_len {
        let u = grid[g];
        let t_of = |counts: &[u16], m: f64, x: f64, h: &[f64], slope: f64| -> f64 {
            let mut t = counts[g] as f64;
            if m >= -u {
                t += tail(h, slope, u, m, x);
            }
            t
        };
        let mut ds: Vec<f64> = Vec::with_capacity(summaries.len());
        let mut ts: Vec<f64> = Vec::with_capacity(summaries.len());
        for s in &summaries {
            let tf = t_of(&s.counts_full, s.min_full, s.end_full, &h_full, slope_full);
            let th = t_of(&s.counts_half, s.min_half, s.end_half, &h_half, slope_half);
            ts.push(tf);
            ds.push(tf - th);
        }
        let (_, se_t) = mean_se(&ts);
        se[g] = se_t;
        let (mean_d, se_d) = mean_se(&ds);
        bias_bar[g] = mean_d.abs();
        let z = mean_d.abs() / se_d.max(1e-300);
        if z > max_z {
            max_z = z;
            max_z_at = u;
        }
    }
    if max_z > 4.0 {
        return Err(Error::HorizonTooSmall {
            max_z,
            at_u: max_z_at,
        });
    }

    let n_ladders: Vec<u64> = (0..g_len)
        .map(|g| summaries.iter().map(|s| s.counts_full[g] as u64).sum())
        .collect();

    // Slope from the largest third of the grid.
    let third = (g_len * 2) / 3;
    let (_, c0, c0_se) = wls_line(&grid[third..], &h_full[third..], &se[third..]);

    // Square-root survival constant, averaged over the grid with
    // inverse-variance weights.
    let mut num = 0.0;
    let mut den = 0.0;
    for g in 0..g_len {
        let u = grid[g];
        let alive = summaries.iter().filter(|s| s.min_full >= -u).count() as f64 / wn;
        if alive == 0.0 || alive == 1.0 {
            continue;
        }
        let se_p = (alive * (1.0 - alive) / wn).sqrt();
        let th = (horizon as f64).sqrt() * alive / h_full[g];
        let se_th = (horizon as f64).sqrt() * se_p / h_full[g];
        let w = 1.0 / (se_th * se_th);
        num += w * th;
        den += w;
    }
    let (theta, theta_se) = if den > 0.0 {
        (num / den, (1.0 / den).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };

    Ok(RenewalTable {
        u: grid,
        h0: h_full,
        se,
        n_ladders,
        bias_bar,
        c0,
        c0_se,
        theta,
        theta_se,
        horizon,
        walks,
    })
}

/// One harmonicity comparison: the table value at `u` against the Monte
/// Carlo mean of the table at `S_1 + u` killed below `-u`.
#[derive(Clone, Debug)]
pub struct HarmonicityPoint {
    pub u: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    pub z: f64,
}

/// Check the renewal harmonic identity at the given points.
pub fn harmonicity_check(
    law: &ManyToOneLaw,
    table: &RenewalTable,
    points: &[f64],
    samples: usize,
    seed: u64,
) -> Vec<HarmonicityPoint> {
    points
        .iter()
        .enumerate()
        .map(|(pi, &u)| {
            let vals: Vec<f64> = (0..samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream_rng(substream(seed ^ (pi as u64) << 32, i as u64));
                    let s1 = law.sample(&mut rng);
                    table.value(s1 + u)
                })
                .collect();
            let (rhs, rhs_mc_se) = mean_se(&vals);
            let lhs = table.value(u);
            // The table enters both sides; fold its pointwise error in once
            // on each side.
            let se = (rhs_mc_se.powi(2) + table.se_at(u).powi(2) + table.mean_se().powi(2)).sqrt();
            let z = (lhs - rhs).abs() / se.max(1e-300);
            HarmonicityPoint {
                u,
                lhs,
                rhs,
                se,
                z,
            }
        })
        .collect()
}

/// Two independent Monte Carlo estimates of the same quantity: the
/// particle-sum expectation over the branching process (lhs) and the
/// exponentially reweighted single-walk expectation (rhs).
#[derive(Clone, Debug)]
pub struct ManyToOneCheck {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
}

impl ManyToOneCheck {
    pub fn z(&self) -> f64 {
        crate::stats::diff_z(self.lhs, self.lhs_se, self.rhs, self.rhs_se)
    }
}

/// The master identity of the toolkit: for bounded `g`,
/// `E[sum over particles of g(path)] = E[exp(S_n) g(S_1..S_n)]`.
///
/// The left side simulates full trees, so `n` is capped at 12.
pub fn many_to_one_check<G>(
    model: &BoundaryModel,
    n: usize,
    g: G,
    samples: usize,
    seed: u64,
) -> Result<ManyToOneCheck>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    if n > 12 {
        return Err(Error::DomainError(format!(
            "many-to-one lhs simulates full trees; n = {n} > 12"
        )));
    }
    let law = ManyToOneLaw::from_model(model);
    let options = SimOptions::default();
    let lhs_vals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|r| {
            let forest = simulate(model, n, substream(seed, r as u64), &options)
                .expect("within particle budget for n <= 12");
            let leaves = forest.leaves();
            let mut acc = KahanSum::new();
            for i in 0..leaves.len() {
                let path = forest.ancestry(n, i).expect("leaf index valid");
                acc.add(g(&path[1..]));
            }
            acc.value()
        })
        .collect();
    let rhs_vals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(substream(seed ^ RHS_SEED_TAG, r as u64));
            let mut path = Vec::with_capacity(n);
            law.sample_path(n, &mut rng, &mut path);
            let last = *path.last().unwrap_or(&0.0);
            last.exp() * g(&path)
        })
        .collect();
    let (lhs, lhs_se) = mean_se(&lhs_vals);
    let (rhs, rhs_se) = mean_se(&rhs_vals);
    Ok(ManyToOneCheck {
        lhs,
        lhs_se,
        rhs,
        rhs_se,
    })
}

const RHS_SEED_TAG: u64 = 0x9d8f_33aa_21c4_77ee;

/// Battery variant: several test functions evaluated on shared forests and
/// shared walks (one tree pass instead of one per function).
pub fn many_to_one_battery(
    model: &BoundaryModel,
    n: usize,
    gs: &[&(dyn Fn(&[f64]) -> f64 + Sync)],
    samples: usize,
    seed: u64,
) -> Result<Vec<ManyToOneCheck>> {
    if n > 12 {
        return Err(Error::DomainError(format!(
            "many-to-one lhs simulates full trees; n = {n} > 12"
        )));
    }
    let law = ManyToOneLaw::from_model(model);
    let options = SimOptions::default();
    let k = gs.len();
    let lhs_vals: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|r| {
            let forest = simulate(model, n, substream(seed, r as u64), &options)
                .expect("within particle budget for n <= 12");
            let leaves = forest.leaves();
            let mut acc = vec![KahanSum::new(); k];
            for i in 0..leaves.len() {
                let path = forest.ancestry(n, i).expect("leaf index valid");
                for (gi, g) in gs.iter().enumerate() {
                    acc[gi].add(g(&path[1..]));
                }
            }
            acc.into_iter().map(|a| a.value()).collect()
        })
        .collect();
    let rhs_vals: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(substream(seed ^ RHS_SEED_TAG, r as u64));
            let mut path = Vec::with_capacity(n);
            law.sample_path(n, &mut rng, &mut path);
            let tilt = path.last().copied().unwrap_or(0.0).exp();
            gs.iter().map(|g| tilt * g(&path)).collect()
        })
        .collect();
    Ok((0..k)
        .map(|gi| {
            let l: Vec<f64> = lhs_vals.iter().map(|v| v[gi]).collect();
            let r: Vec<f64> = rhs_vals.iter().map(|v| v[gi]).collect();
            let (lhs, lhs_se) = mean_se(&l);
            let (rhs, rhs_se) = mean_se(&r);
            ManyToOneCheck {
                lhs,
                lhs_se,
                rhs,
                rhs_se,
            }
        })
        .collect())
}

/// A path of the walk conditioned to stay at or above `-alpha`, sampled by
/// candidate-batch importance resampling through the renewal-transform
/// kernel, together with an exact unnormalized log importance weight back
/// to the plain walk restricted to the staying event.
#[derive(Clone, Debug)]
pub struct ConditionedPath {
    /// `S_0 = 0, S_1, ..., S_n`.
    pub path: Vec<f64>,
    /// `exp(log_weight)` reweights sampler expectations to unnormalized
    /// plain-walk expectations restricted to the staying event; the scheme
    /// is unbiased for any batch size because each step records the mean
    /// candidate weight actually used.
    pub log_weight: f64,
}

/// Sample one conditioned path. Each step proposes `batch` plain
/// increments, weights them by the shifted renewal value (zero below the
/// barrier) and resamples one. An all-zero batch is extended by doubling up
/// to 4 times before failing with [`Error::WeightCollapse`].
pub fn conditioned_walk(
    law: &ManyToOneLaw,
    table: &RenewalTable,
    alpha: f64,
    n: usize,
    rng: &mut Stream,
    batch: usize,
) -> Result<ConditionedPath> {
    let mut path = Vec::with_capacity(n + 1);
    path.push(0.0);
    let mut log_weight = 0.0;
    let mut cand: Vec<f64> = Vec::with_capacity(batch * 2);
    let mut weights: Vec<f64> = Vec::with_capacity(batch * 2);
    for _ in 0..n {
        let u = *path.last().unwrap();
        cand.clear();
        weights.clear();
        let mut total = 0.0;
        let mut draw = batch.max(1);
        let mut doublings = 0;
        loop {
            for _ in 0..draw {
                let v = u + law.sample(rng);
                let w = table.shifted(v, alpha);
                cand.push(v);
                weights.push(w);
                total += w;
            }
            if total > 0.0 {
                break;
            }
            if doublings == 4 {
                return Err(Error::WeightCollapse);
            }
            doublings += 1;
            draw *= 2;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = cand.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            pick -= w;
            if pick <= 0.0 {
                chosen = i;
                break;
            }
        }
        // Mean candidate weight over everything drawn this step (zeros of
        // exhausted sub-batches included): keeps the weight unbiased.
        log_weight += (total / cand.len() as f64).ln() - weights[chosen].ln();
        path.push(cand[chosen]);
    }
    Ok(ConditionedPath { path, log_weight })
}

/// Weighted endpoint sample of the walk conditioned (by importance
/// reweighting) to stay nonnegative up to `n`: values are `S_n / (sigma
/// sqrt(n))`, weights are the unnormalized staying-event weights.
pub fn conditioned_endpoints(
    law: &ManyToOneLaw,
    table: &RenewalTable,
    alpha: f64,
    n: usize,
    paths: usize,
    batch: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let scale = law.sigma() * (n as f64).sqrt();
    let results: Vec<Result<(f64, f64)>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream_rng(substream(seed, p as u64));
            let cp = conditioned_walk(law, table, alpha, n, &mut rng, batch)?;
            Ok((cp.path[n] / scale, cp.log_weight))
        })
        .collect();
    let mut values = Vec::with_capacity(paths);
    let mut logs = Vec::with_capacity(paths);
    for r in results {
        let (v, lw) = r?;
        values.push(v);
        logs.push(lw);
    }
    // Normalize in log space before exponentiating.
    let max_lw = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|lw| (lw - max_lw).exp()).collect();
    Ok((values, weights))
}

/// Plain-walk Monte Carlo of `g(S) h_alpha(S_n) 1{min >= -alpha} /
/// h_alpha(0)`: the reference side of the conditioned-spine identity.
pub fn barrier_weighted_expectation<G>(
    law: &ManyToOneLaw,
    table: &RenewalTable,
    alpha: f64,
    n: usize,
    g: G,
    samples: usize,
    seed: u64,
) -> (f64, f64)
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    let h0_alpha = table.shifted(0.0, alpha);
    let vals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(substream(seed, i as u64));
            let mut path = Vec::with_capacity(n + 1);
            path.push(0.0);
            let mut s = 0.0;
            let mut min = 0.0_f64;
            for _ in 0..n {
                s += law.sample(&mut rng);
                min = min.min(s);
                path.push(s);
            }
            if min < -alpha {
                0.0
            } else {
                g(&path) * table.shifted(s, alpha) / h0_alpha
            }
        })
        .collect();
    mean_se(&vals)
}
