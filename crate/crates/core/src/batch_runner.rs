//! Parallel, order-preserving evaluation of one proposed batch.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy_space::Policy;
use crate::reward_model::{assess, CostParams, EconReport, PenaltyTracker};
use crate::sim_env::{hash_words, BaselineCache, SimSeed, Simulator};

/// One evaluated proposal. Failed simulations keep their slot with `error`
/// set and no reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub batch: usize,
    pub proposal: usize,
    pub policy: Policy,
    pub seed: SimSeed,
    pub reward: Option<f64>,
    pub econ: Option<EconReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Scheduling-dependent, so kept out of the log.
    #[serde(skip)]
    pub wall_time_ms: f64,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.reward.is_some()
    }
}

/// The seed of proposal `proposal` in batch `batch`. All proposals of a batch
/// share a scenario seed and therefore one baseline run.
pub fn derive_seed(base_seed: u64, batch: usize, proposal: usize) -> SimSeed {
    SimSeed::new(hash_words(&[base_seed, batch as u64]), proposal as u64)
}

/// Hardware parallelism, capped at the batch size.
pub fn default_workers(batch_size: usize) -> usize {
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    hw.min(batch_size).max(1)
}

#[derive(Debug, Clone, Copy)]
pub struct BatchContext<'a> {
    pub base_seed: u64,
    pub batch: usize,
    pub costs: &'a CostParams,
    /// Upper bound on simultaneous simulations; `None` uses the hardware.
    pub workers: Option<usize>,
}

/// Simulates every policy and scores it against the shared baseline.
/// Rewards are assigned in proposal order, so the penalty state evolves
/// identically whatever the worker count.
pub fn evaluate_batch(
    sim: &dyn Simulator,
    policies: &[Policy],
    ctx: &BatchContext<'_>,
    penalty: &mut PenaltyTracker,
    baselines: &BaselineCache,
) -> Result<Vec<RunRecord>> {
    for (i, p) in policies.iter().enumerate() {
        if policies[..i].contains(p) {
            return Err(Error::Domain(format!("policy {p} proposed twice in batch {}", ctx.batch)));
        }
    }
    if policies.is_empty() {
        return Ok(Vec::new());
    }
    let width = ctx.workers.unwrap_or_else(|| default_workers(policies.len())).clamp(1, policies.len());
    let seed0 = derive_seed(ctx.base_seed, ctx.batch, 0);
    let baseline = baselines.get_or_run(sim, seed0)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(width)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<_> = pool.install(|| {
        policies
            .par_iter()
            .enumerate()
            .map(|(j, p)| {
                let seed = derive_seed(ctx.base_seed, ctx.batch, j);
                let start = Instant::now();
                let out = sim.simulate(p, seed);
                (seed, out, start.elapsed().as_secs_f64() * 1e3)
            })
            .collect()
    });

    let mut failed = 0;
    let mut records = Vec::with_capacity(policies.len());
    for (j, (p, (seed, out, ms))) in policies.iter().zip(outcomes).enumerate() {
        let rec = match out {
            Ok(o) => {
                let econ = assess(p, &o, &baseline, ctx.costs, penalty);
                RunRecord {
                    batch: ctx.batch,
                    proposal: j,
                    policy: *p,
                    seed,
                    reward: Some(econ.reward),
                    econ: Some(econ),
                    error: None,
                    wall_time_ms: ms,
                }
            }
            Err(e) => {
                warn!("batch {} proposal {j} ({p}) failed: {e}", ctx.batch);
                failed += 1;
                RunRecord {
                    batch: ctx.batch,
                    proposal: j,
                    policy: *p,
                    seed,
                    reward: None,
                    econ: None,
                    error: Some(e.to_string()),
                    wall_time_ms: ms,
                }
            }
        };
        debug!("batch {} proposal {j}: {p} reward={:?} {:.1} ms", ctx.batch, rec.reward, ms);
        records.push(rec);
    }
    if 2 * failed > policies.len() {
        return Err(Error::BatchAborted {
            batch: ctx.batch,
            failed,
            total: policies.len(),
        });
    }
    Ok(records)
}

/// Appends records as JSON lines and flushes.
pub fn append_jsonl(path: &Path, records: &[RunRecord]) -> Result<()> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, records).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    w.get_ref().sync_data().map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[RunRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a results log; blank lines are ignored.
pub fn read_jsonl(path: &Path) -> Result<Vec<RunRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Domain(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
