//! Health-economic scoring of simulation outcomes: DALYs, healthcare
//! system costs, intervention costs, cost per DALY averted, and the scalar
//! reward the agents maximise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy_space::Policy;

/// One malaria episode. Costs are zero unless the episode was treated in
/// hospital.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub age_years: f64,
    pub duration_years: f64,
    pub disability_weight: f64,
    pub in_hospital: bool,
    pub treatment_cost_usd: f64,
    pub recovery_cost_usd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeathRecord {
    pub age_years: f64,
    pub in_hospital: bool,
    pub hospital_death_cost_usd: f64,
}

/// Everything one simulation run reports about its population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub episodes: Vec<EpisodeRecord>,
    pub deaths: Vec<DeathRecord>,
    pub population_size: u64,
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

impl SimOutcome {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::Domain("population size must be positive".into()));
        }
        if self.deaths.len() as u64 > self.population_size {
            return Err(Error::Domain(format!(
                "{} deaths exceed population {}",
                self.deaths.len(),
                self.population_size
            )));
        }
        for (k, e) in self.episodes.iter().enumerate() {
            let ok = finite_nonneg(e.age_years)
                && e.duration_years.is_finite()
                && e.duration_years > 0.0
                && (0.0..=1.0).contains(&e.disability_weight)
                && finite_nonneg(e.treatment_cost_usd)
                && finite_nonneg(e.recovery_cost_usd)
                && (e.in_hospital || (e.treatment_cost_usd == 0.0 && e.recovery_cost_usd == 0.0));
            if !ok {
                return Err(Error::Domain(format!("invalid episode record #{k}: {e:?}")));
            }
        }
        for (z, d) in self.deaths.iter().enumerate() {
            let ok = finite_nonneg(d.age_years)
                && finite_nonneg(d.hospital_death_cost_usd)
                && (d.in_hospital || d.hospital_death_cost_usd == 0.0);
            if !ok {
                return Err(Error::Domain(format!("invalid death record #{z}: {d:?}")));
            }
        }
        Ok(())
    }
}

/// Unit costs and DALY constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub net_cost_usd_per_person: f64,
    pub irs_cost_usd_per_person: f64,
    pub hospital_seek_cost_usd: f64,
    pub discount_factor: f64,
    pub life_expectancy_years: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            net_cost_usd_per_person: 8.52,
            irs_cost_usd_per_person: 0.73,
            hospital_seek_cost_usd: 0.60,
            discount_factor: 0.97,
            life_expectancy_years: 46.6,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let costs = [
            self.net_cost_usd_per_person,
            self.irs_cost_usd_per_person,
            self.hospital_seek_cost_usd,
        ];
        if !costs.iter().all(|c| finite_nonneg(*c)) {
            return Err(Error::Config("unit costs must be finite and non-negative".into()));
        }
        if !(self.discount_factor > 0.0 && self.discount_factor < 1.0) {
            return Err(Error::Config(format!(
                "discount factor must lie in (0, 1), got {}",
                self.discount_factor
            )));
        }
        if !(self.life_expectancy_years > 0.0 && self.life_expectancy_years.is_finite()) {
            return Err(Error::Config("life expectancy must be positive".into()));
        }
        Ok(())
    }
}

/// Years lived with disability: duration times disability weight, summed.
pub fn yld(episodes: &[EpisodeRecord]) -> f64 {
    episodes
        .iter()
        .map(|e| e.duration_years * e.disability_weight)
        .sum()
}

/// Discounted years of life lost for a single death.
pub fn yll_single(age_years: f64, params: &CostParams) -> f64 {
    let lost = (params.life_expectancy_years - age_years).max(0.0);
    lost * params.discount_factor.powf(lost)
}

pub fn yll(deaths: &[DeathRecord], params: &CostParams) -> f64 {
    deaths.iter().map(|d| yll_single(d.age_years, params)).sum()
}

pub fn daly(outcome: &SimOutcome, params: &CostParams) -> f64 {
    yld(&outcome.episodes) + yll(&outcome.deaths, params)
}

/// Healthcare system cost split into its components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HealthCosts {
    /// Total in-hospital treatment cost.
    pub ttc: f64,
    /// Total in-hospital recovery cost.
    pub trc: f64,
    pub death: f64,
    pub seek: f64,
}

impl HealthCosts {
    pub fn total(&self) -> f64 {
        self.ttc + self.trc + self.death + self.seek
    }
}

/// Only in-hospital events cost the health system; the seek cost is
/// charged once per in-hospital episode.
pub fn health_costs(outcome: &SimOutcome, params: &CostParams) -> HealthCosts {
    let mut c = HealthCosts::default();
    for e in outcome.episodes.iter().filter(|e| e.in_hospital) {
        c.ttc += e.treatment_cost_usd;
        c.trc += e.recovery_cost_usd;
        c.seek += params.hospital_seek_cost_usd;
    }
    c.death = outcome
        .deaths
        .iter()
        .filter(|d| d.in_hospital)
        .map(|d| d.hospital_death_cost_usd)
        .sum();
    c
}

pub fn health_system_cost(outcome: &SimOutcome, params: &CostParams) -> f64 {
    health_costs(outcome, params).total()
}

/// Cost of covering the population at the policy's coverage levels.
pub fn intervention_cost(policy: &Policy, population_size: u64, params: &CostParams) -> f64 {
    population_size as f64
        * (policy.itn() * params.net_cost_usd_per_person
            + policy.irs() * params.irs_cost_usd_per_person)
}

/// The DALY and HSC totals of one arm of a comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSummary {
    pub daly: f64,
    pub hsc: f64,
}

impl ArmSummary {
    pub fn of(outcome: &SimOutcome, params: &CostParams) -> Self {
        ArmSummary {
            daly: daly(outcome, params),
            hsc: health_system_cost(outcome, params),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEffect {
    pub c_da: f64,
    pub dalys_averted: f64,
}

/// `(HSC_int - HSC_base + C_int) / DA` where `DA = DALY_base - DALY_int`.
pub fn cost_per_daly_averted(
    intervention: &ArmSummary,
    baseline: &ArmSummary,
    c_int: f64,
) -> Result<CostEffect> {
    let dalys_averted = baseline.daly - intervention.daly;
    if dalys_averted <= 0.0 || !dalys_averted.is_finite() {
        return Err(Error::NonPositiveAverted { dalys_averted });
    }
    Ok(CostEffect {
        c_da: (intervention.hsc - baseline.hsc + c_int) / dalys_averted,
        dalys_averted,
    })
}

/// Lower cost per DALY averted is better.
pub fn reward(c_da: f64) -> f64 {
    -c_da
}

fn default_multiplier() -> f64 {
    10.0
}

fn default_floor() -> f64 {
    -1e6
}

/// Reward assigned to policies that avert no DALYs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Penalty is `-multiplier * (largest C_DA seen so far)`.
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    /// Lowest penalty ever handed out; also used before any C_DA is seen.
    #[serde(default = "default_floor")]
    pub floor: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            multiplier: default_multiplier(),
            floor: default_floor(),
        }
    }
}

/// Running state for the non-positive-averted penalty. Observations must be
/// fed in record order for runs to stay reproducible.
#[derive(Debug, Clone, Default)]
pub struct PenaltyTracker {
    cfg: PenaltyConfig,
    max_c_da: Option<f64>,
}

impl PenaltyTracker {
    pub fn new(cfg: PenaltyConfig) -> Self {
        PenaltyTracker { cfg, max_c_da: None }
    }

    pub fn observe(&mut self, c_da: f64) {
        if c_da.is_finite() {
            self.max_c_da = Some(self.max_c_da.map_or(c_da, |m| m.max(c_da)));
        }
    }

    pub fn penalty(&self) -> f64 {
        match self.max_c_da {
            Some(m) if m > 0.0 => (-self.cfg.multiplier * m).max(self.cfg.floor),
            _ => self.cfg.floor,
        }
    }
}

/// Full economic evaluation of one policy run against the baseline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconReport {
    pub yld: f64,
    pub yll: f64,
    pub daly: f64,
    pub ttc_usd: f64,
    pub trc_usd: f64,
    pub death_cost_usd: f64,
    pub seek_cost_usd: f64,
    pub hsc_usd: f64,
    pub c_int_usd: f64,
    pub baseline_daly: f64,
    pub baseline_hsc_usd: f64,
    pub dalys_averted: f64,
    /// `None` when the policy averted no DALYs.
    pub c_da_usd_per_daly: Option<f64>,
    pub reward: f64,
}

impl EconReport {
    /// Reward implied by the stored C_DA; `None` for penalised records.
    pub fn implied_reward(&self) -> Option<f64> {
        self.c_da_usd_per_daly.map(reward)
    }
}

/// Scores `outcome` for `policy` against `baseline`, updating `penalty`
/// with the resulting C_DA.
pub fn assess(
    policy: &Policy,
    outcome: &SimOutcome,
    baseline: &SimOutcome,
    params: &CostParams,
    penalty: &mut PenaltyTracker,
) -> EconReport {
    let yld_v = yld(&outcome.episodes);
    let yll_v = yll(&outcome.deaths, params);
    let costs = health_costs(outcome, params);
    let arm = ArmSummary {
        daly: yld_v + yll_v,
        hsc: costs.total(),
    };
    let base = ArmSummary::of(baseline, params);
    let c_int = intervention_cost(policy, outcome.population_size, params);
    let (c_da, r) = match cost_per_daly_averted(&arm, &base, c_int) {
        Ok(ce) => {
            penalty.observe(ce.c_da);
            (Some(ce.c_da), reward(ce.c_da))
        }
        Err(_) => (None, penalty.penalty()),
    };
    EconReport {
        yld: yld_v,
        yll: yll_v,
        daly: arm.daly,
        ttc_usd: costs.ttc,
        trc_usd: costs.trc,
        death_cost_usd: costs.death,
        seek_cost_usd: costs.seek,
        hsc_usd: arm.hsc,
        c_int_usd: c_int,
        baseline_daly: base.daly,
        baseline_hsc_usd: base.hsc,
        dalys_averted: base.daly - arm.daly,
        c_da_usd_per_daly: c_da,
        reward: r,
    }
}
