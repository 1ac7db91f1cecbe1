//! GP upper/lower confidence bound batch selection.
//!
//! Within a batch, the first `B·f_m` picks (0-based `j < B·f_m`) maximise
//! `μ + βσ`; the rest minimise `μ − βσ`. After each pick every candidate
//! closer than `l·f_c` is masked for the rest of the batch, shared by both
//! branches.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{Agent, AgentRng};
use crate::error::{Error, Result};
use crate::gp::{fit, GpModel, GpParams, Posterior};
use crate::policy_space::{CandidateSet, Policy};

fn default_mixing() -> f64 {
    0.75
}

fn default_masking() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UlcbSettings {
    #[serde(default = "default_mixing")]
    pub mixing_factor: f64,
    #[serde(default = "default_masking")]
    pub masking_factor: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl Default for UlcbSettings {
    fn default() -> Self {
        UlcbSettings {
            mixing_factor: default_mixing(),
            masking_factor: default_masking(),
            beta: default_beta(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UlcbConfig {
    pub batch_size: usize,
    pub mixing_factor: f64,
    pub masking_factor: f64,
    pub beta: f64,
    pub gp: GpParams,
}

impl UlcbConfig {
    pub fn new(batch_size: usize, s: &UlcbSettings, gp: GpParams) -> Result<Self> {
        let cfg = UlcbConfig {
            batch_size,
            mixing_factor: s.mixing_factor,
            masking_factor: s.masking_factor,
            beta: s.beta,
            gp,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("GP-ULCB batch size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mixing_factor) {
            return Err(Error::Config(format!("mixing factor must lie in [0, 1], got {}", self.mixing_factor)));
        }
        if !(self.masking_factor >= 0.0 && self.masking_factor.is_finite()) {
            return Err(Error::Config(format!("masking factor must be >= 0, got {}", self.masking_factor)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        self.gp.validate()
    }

    pub fn mask_radius(&self) -> f64 {
        self.gp.lengthscale * self.masking_factor
    }
}

fn pick(candidates: &CandidateSet, scores: &[f64], maximise: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, _) in candidates.available() {
        let better = match best {
            None => true,
            Some(b) if maximise => scores[i] > scores[b],
            Some(b) => scores[i] < scores[b],
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Selects one batch from a fitted model. Resets `candidates` first and
/// returns candidate indices in selection order.
pub fn ulcb_select(model: &GpModel, candidates: &mut CandidateSet, cfg: &UlcbConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    if cfg.batch_size > candidates.len() {
        return Err(Error::Domain(format!(
            "batch size {} exceeds {} candidates",
            cfg.batch_size,
            candidates.len()
        )));
    }
    candidates.reset();
    let post: Vec<Posterior> = model.posterior_many(candidates.points())?;
    let upper: Vec<f64> = post.iter().map(|p| p.mean + cfg.beta * p.sd()).collect();
    let lower: Vec<f64> = post.iter().map(|p| p.mean - cfg.beta * p.sd()).collect();
    let radius = cfg.mask_radius();
    let split = cfg.batch_size as f64 * cfg.mixing_factor;

    let mut picks = Vec::with_capacity(cfg.batch_size);
    for j in 0..cfg.batch_size {
        if candidates.available_count() == 0 {
            warn!("GP-ULCB: masking exhausted the candidates after {j} picks; unmasking");
            candidates.reset();
            for &i in &picks {
                candidates.remove(i);
            }
        }
        let is_upper = (j as f64) < split;
        let chosen = if is_upper {
            pick(candidates, &upper, true)
        } else {
            pick(candidates, &lower, false)
        }
        .expect("at least one candidate available");
        candidates.remove(chosen);
        let point = candidates.point(chosen);
        let masked = 1 + candidates.mask_near(&point, radius);
        debug!(
            "GP-ULCB pick {j}: branch={} candidate={chosen} policy={point} mean={:.6} sd={:.6} masked={masked}",
            if is_upper { "upper" } else { "lower" },
            post[chosen].mean,
            post[chosen].sd(),
        );
        picks.push(chosen);
    }
    Ok(picks)
}

/// Fits the GP to `observations` and selects one batch.
pub fn ulcb_propose(
    observations: &[(Policy, f64)],
    candidates: &mut CandidateSet,
    cfg: &UlcbConfig,
) -> Result<Vec<Policy>> {
    let (xs, ys): (Vec<Policy>, Vec<f64>) = observations.iter().copied().unzip();
    let model = fit(&xs, &ys, cfg.gp.noise_variance, &cfg.gp.kernel())?;
    Ok(ulcb_select(&model, candidates, cfg)?
        .into_iter()
        .map(|i| candidates.point(i))
        .collect())
}

pub struct UlcbAgent {
    cfg: UlcbConfig,
    candidates: CandidateSet,
    observations: Vec<(Policy, f64)>,
}

impl UlcbAgent {
    pub fn new(cfg: UlcbConfig, candidates: CandidateSet) -> Result<Self> {
        cfg.validate()?;
        if cfg.batch_size > candidates.len() {
            return Err(Error::Config(format!(
                "batch size {} exceeds {} candidates",
                cfg.batch_size,
                candidates.len()
            )));
        }
        Ok(UlcbAgent {
            cfg,
            candidates,
            observations: Vec::new(),
        })
    }

    pub fn observations(&self) -> &[(Policy, f64)] {
        &self.observations
    }
}

impl Agent for UlcbAgent {
    fn name(&self) -> &'static str {
        "gp_ulcb"
    }

    fn propose(&mut self, rng: &mut AgentRng) -> Result<Vec<Policy>> {
        if self.observations.is_empty() {
            self.candidates.reset();
            debug!("GP-ULCB: random initialisation batch");
            return self.candidates.sample_random(self.cfg.batch_size, rng);
        }
        ulcb_propose(&self.observations, &mut self.candidates, &self.cfg)
    }

    fn observe(&mut self, results: &[(Policy, f64)]) -> Result<()> {
        self.observations.extend_from_slice(results);
        Ok(())
    }
}
