//! The propose / evaluate / observe loop and post-hoc policy ranking.

use log::{info, warn};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{AgentRng, AgentSpec, History};
use crate::batch_runner::{evaluate_batch, BatchContext, RunRecord};
use crate::error::{Error, Result};
use crate::gp::{self, GpParams, SurfaceRow};
use crate::policy_space::{discretize, GridSpec, Policy};
use crate::reward_model::{CostParams, PenaltyConfig, PenaltyTracker};
use crate::sim_env::{hash_words, BaselineCache, Simulator};

const AGENT_STREAM: u64 = 0x6167_656e_7473;
const SIM_STREAM: u64 = 0x7369_6d73;

/// Everything about an experiment except the scenario itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub agent: AgentSpec,
    pub grid: GridSpec,
    pub gp: GpParams,
    pub iterations: usize,
    pub batch_size: usize,
    pub master_seed: u64,
    pub workers: Option<usize>,
    pub costs: CostParams,
    pub penalty: PenaltyConfig,
}

impl ExperimentSettings {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.gp.validate()?;
        self.costs.validate()?;
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn agent_seed(&self) -> u64 {
        hash_words(&[self.master_seed, AGENT_STREAM])
    }

    pub fn sim_base_seed(&self) -> u64 {
        hash_words(&[self.master_seed, SIM_STREAM])
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub history: History,
    /// Posterior over the whole grid, fitted on every successful record.
    pub surface: Vec<SurfaceRow>,
}

/// Runs `iterations` batches. Each batch is handed to `sink` as soon as it
/// is evaluated, so a failure later on still leaves the earlier batches on
/// disk.
pub fn run_experiment(
    settings: &ExperimentSettings,
    sim: &dyn Simulator,
    sink: &mut dyn FnMut(&[RunRecord]) -> Result<()>,
) -> Result<ExperimentOutcome> {
    settings.validate()?;
    let candidates = discretize(&settings.grid)?;
    let mut agent = settings
        .agent
        .build(settings.batch_size, &settings.gp, candidates.clone())?;
    let mut rng = AgentRng::seed_from_u64(settings.agent_seed());
    let base_seed = settings.sim_base_seed();
    let mut penalty = PenaltyTracker::new(settings.penalty);
    let baselines = BaselineCache::new();
    let mut history = History::new();

    for batch in 0..settings.iterations {
        let policies = agent.propose(&mut rng)?;
        let ctx = BatchContext {
            base_seed,
            batch,
            costs: &settings.costs,
            workers: settings.workers,
        };
        let records = evaluate_batch(sim, &policies, &ctx, &mut penalty, &baselines)?;
        sink(&records)?;
        let results: Vec<(Policy, f64)> = records
            .iter()
            .filter_map(|r| r.reward.map(|v| (r.policy, v)))
            .collect();
        history.extend(records)?;
        let best = results.iter().map(|(_, r)| *r).fold(f64::NEG_INFINITY, f64::max);
        info!(
            "{} batch {}/{}: {} ok, best reward {best:.4}",
            agent.name(),
            batch + 1,
            settings.iterations,
            results.len()
        );
        agent.observe(&results)?;
    }

    let (xs, ys): (Vec<Policy>, Vec<f64>) = history.observations().into_iter().unzip();
    let model = gp::fit(&xs, &ys, settings.gp.noise_variance, &settings.gp.kernel())?;
    let surface = gp::surface(&model, &candidates)?;
    Ok(ExperimentOutcome { history, surface })
}

/// The evaluated record closest to a surface point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearestRun {
    pub batch: usize,
    pub proposal: usize,
    pub policy: Policy,
    pub distance: f64,
    pub c_da_usd_per_daly: Option<f64>,
    pub dalys_averted: f64,
    pub c_int_usd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopPolicy {
    pub policy: Policy,
    pub mean: f64,
    pub sd: f64,
    pub nearest: Option<NearestRun>,
}

fn nearest_run(history: &History, p: &Policy) -> Option<NearestRun> {
    let mut best: Option<NearestRun> = None;
    for r in history.records() {
        let Some(econ) = r.econ else { continue };
        let d = p.distance(&r.policy);
        if best.is_none_or(|b| d < b.distance) {
            best = Some(NearestRun {
                batch: r.batch,
                proposal: r.proposal,
                policy: r.policy,
                distance: d,
                c_da_usd_per_daly: econ.c_da_usd_per_daly,
                dalys_averted: econ.dalys_averted,
                c_int_usd: econ.c_int_usd,
            });
        }
    }
    best
}

/// Up to `k` surface points of largest posterior mean, pairwise at least
/// `separation` apart, best first. Ties go to the lower grid index.
pub fn top_policies(history: &History, surface: &[SurfaceRow], k: usize, separation: f64) -> Vec<TopPolicy> {
    let mut order: Vec<usize> = (0..surface.len()).collect();
    order.sort_by(|&a, &b| surface[b].mean.total_cmp(&surface[a].mean).then(a.cmp(&b)));
    let mut picked: Vec<TopPolicy> = Vec::with_capacity(k.min(surface.len()));
    for i in order {
        if picked.len() == k {
            break;
        }
        let row = &surface[i];
        if picked.iter().any(|t| t.policy.distance(&row.policy) < separation) {
            continue;
        }
        picked.push(TopPolicy {
            policy: row.policy,
            mean: row.mean,
            sd: row.sd,
            nearest: nearest_run(history, &row.policy),
        });
    }
    if picked.len() < k && k != usize::MAX {
        warn!("only {} separable maxima for k = {k}", picked.len());
    }
    picked
}
