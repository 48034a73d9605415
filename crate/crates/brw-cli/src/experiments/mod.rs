//! The experiment runners behind the CLI subcommands. Each runner is a
//! library function returning a [`RunReport`] so the acceptance suite can
//! drive the same code paths the binary does.

pub mod first_order;
pub mod identities;
pub mod meander_fdd;
pub mod overlap;
pub mod prop_exp;
pub mod renewal;
pub mod simulate;
pub mod spine_check;
pub mod theorem_a;

use std::path::PathBuf;

use brw::forest::{simulate as run_sim, Forest, SimOptions};
use brw::model::BoundaryModel;
use brw::rng::substream;
use rayon::prelude::*;

use crate::config::Config;
use crate::report::OutputFormat;
use crate::CliError;

/// Everything a runner needs besides its parameters.
pub struct Ctx {
    pub config: Config,
    pub model: BoundaryModel,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    pub hash: String,
}

impl Ctx {
    pub fn new(config: Config, out_dir: PathBuf, format: OutputFormat) -> Result<Ctx, CliError> {
        let model = config.build_model()?;
        let hash = config.hash();
        Ok(Ctx {
            config,
            model,
            out_dir,
            format,
            hash,
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.sim.seed
    }
}

/// Deterministic parallel map over forests conditioned on survival to
/// `depth`: attempts are numbered, simulated in waves, and the first
/// `target` survivors in attempt order are kept, so the result does not
/// depend on the thread count. Forests are dropped as soon as `f` reduces
/// them.
pub fn surviving_forest_stats<T, F>(
    model: &BoundaryModel,
    depth: usize,
    seed: u64,
    target: usize,
    options: &SimOptions,
    f: F,
) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(u64, &Forest) -> T + Sync,
{
    let mut kept: Vec<T> = Vec::with_capacity(target);
    let mut next_attempt: u64 = 0;
    while kept.len() < target {
        let wave = ((target - kept.len()) as u64 * 2).max(16);
        let results: Result<Vec<Option<T>>, brw::Error> = (next_attempt..next_attempt + wave)
            .into_par_iter()
            .map(|attempt| {
                let forest = run_sim(model, depth, substream(seed, attempt), options)?;
                Ok(if forest.alive {
                    Some(f(attempt, &forest))
                } else {
                    None
                })
            })
            .collect();
        for item in results?.into_iter().flatten() {
            if kept.len() < target {
                kept.push(item);
            }
        }
        next_attempt += wave;
        if next_attempt > 1_000_000 + 4 * target as u64 {
            return Err(CliError::from(brw::Error::AllExtinct(next_attempt)));
        }
    }
    Ok(kept)
}
