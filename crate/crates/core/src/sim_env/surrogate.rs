use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Poisson};
use serde::{Deserialize, Serialize};

use super::{fnv1a, SimSeed, Simulator, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::policy_space::Policy;
use crate::reward_model::{DeathRecord, EpisodeRecord, SimOutcome};

const MAX_AGE_YEARS: f64 = 100.0;

/// One row of an age-banded table, covering `[from_years, to_years)`.
/// The last band of a table also includes its upper edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeBand {
    pub from_years: f64,
    pub to_years: f64,
    pub value: f64,
}

impl AgeBand {
    pub const fn new(from_years: f64, to_years: f64, value: f64) -> Self {
        AgeBand {
            from_years,
            to_years,
            value,
        }
    }
}

fn validate_table(name: &str, table: &[AgeBand], value_ok: impl Fn(f64) -> bool) -> Result<()> {
    let err = |msg: String| Err(Error::Config(format!("{name}: {msg}")));
    if table.is_empty() {
        return err("table is empty".into());
    }
    if table[0].from_years != 0.0 {
        return err("first band must start at age 0".into());
    }
    for (i, band) in table.iter().enumerate() {
        if !(band.from_years < band.to_years) {
            return err(format!("band {i} is empty"));
        }
        if i > 0 && table[i - 1].to_years != band.from_years {
            return err(format!("band {i} does not start where band {} ends", i - 1));
        }
        if !value_ok(band.value) {
            return err(format!("band {i} has invalid value {}", band.value));
        }
    }
    if table[table.len() - 1].to_years < MAX_AGE_YEARS {
        return err(format!("bands must cover ages up to {MAX_AGE_YEARS}"));
    }
    Ok(())
}

fn lookup(table: &[AgeBand], age: f64) -> f64 {
    table
        .iter()
        .find(|b| age < b.to_years)
        .unwrap_or(&table[table.len() - 1])
        .value
}

/// Scenario parameters of the surrogate epidemic model.
///
/// Defaults are illustrative values for a young sub-Saharan population and
/// are not calibrated to any particular district.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub population_size: u64,
    pub horizon_years: f64,
    pub baseline_episodes_per_person_year: f64,
    pub itn_efficacy: f64,
    pub irs_efficacy: f64,
    pub case_fatality_per_episode: f64,
    pub hospital_seek_probability: f64,
    pub mean_episode_duration_days: f64,
    /// Relative weight of each age band among episodes.
    pub age_distribution: Vec<AgeBand>,
    pub disability_weights: Vec<AgeBand>,
    pub treatment_cost_usd: Vec<AgeBand>,
    pub recovery_cost_usd: Vec<AgeBand>,
    pub death_cost_usd: Vec<AgeBand>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            population_size: 100_000,
            horizon_years: 5.0,
            baseline_episodes_per_person_year: 0.35,
            itn_efficacy: 0.55,
            irs_efficacy: 0.30,
            case_fatality_per_episode: 0.0035,
            hospital_seek_probability: 0.40,
            mean_episode_duration_days: 12.0,
            age_distribution: vec![
                AgeBand::new(0.0, 5.0, 0.17),
                AgeBand::new(5.0, 15.0, 0.28),
                AgeBand::new(15.0, 30.0, 0.27),
                AgeBand::new(30.0, 45.0, 0.15),
                AgeBand::new(45.0, 60.0, 0.08),
                AgeBand::new(60.0, 100.0, 0.05),
            ],
            disability_weights: vec![
                AgeBand::new(0.0, 5.0, 0.21),
                AgeBand::new(5.0, 15.0, 0.17),
                AgeBand::new(15.0, 100.0, 0.13),
            ],
            treatment_cost_usd: vec![AgeBand::new(0.0, 100.0, 4.20)],
            recovery_cost_usd: vec![AgeBand::new(0.0, 100.0, 2.10)],
            death_cost_usd: vec![AgeBand::new(0.0, 100.0, 25.0)],
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if self.population_size == 0 {
            return Err(Error::Config("population_size must be positive".into()));
        }
        let positive = [
            ("horizon_years", self.horizon_years),
            ("baseline_episodes_per_person_year", self.baseline_episodes_per_person_year),
            ("mean_episode_duration_days", self.mean_episode_duration_days),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let probs = [
            ("itn_efficacy", self.itn_efficacy),
            ("irs_efficacy", self.irs_efficacy),
            ("case_fatality_per_episode", self.case_fatality_per_episode),
            ("hospital_seek_probability", self.hospital_seek_probability),
        ];
        for (name, v) in probs {
            if !prob(v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        validate_table("age_distribution", &self.age_distribution, nonneg)?;
        if self.age_distribution.iter().all(|b| b.value == 0.0) {
            return Err(Error::Config("age_distribution: all weights are zero".into()));
        }
        validate_table("disability_weights", &self.disability_weights, prob)?;
        validate_table("treatment_cost_usd", &self.treatment_cost_usd, nonneg)?;
        validate_table("recovery_cost_usd", &self.recovery_cost_usd, nonneg)?;
        validate_table("death_cost_usd", &self.death_cost_usd, nonneg)?;
        Ok(())
    }

    /// Multiplicative reduction in exposure: `(1 - e_itn a_itn)(1 - e_irs a_irs)`.
    pub fn transmission_multiplier(&self, policy: &Policy) -> f64 {
        (1.0 - self.itn_efficacy * policy.itn()) * (1.0 - self.irs_efficacy * policy.irs())
    }

    /// Expected episodes per person over the horizon at multiplier `m`.
    pub fn episode_rate(&self, m: f64) -> f64 {
        self.baseline_episodes_per_person_year * self.horizon_years * m
    }
}

/// Built-in stochastic epidemic model.
///
/// Each person suffers a Poisson number of episodes. Each episode draws an
/// age from the demography, an exponential duration, and a hospital flag;
/// hospital episodes carry the tabled costs. Any episode may be fatal, but
/// only the first fatal episode of a person produces a death record. Later
/// episodes of that person are still recorded so episode counts stay
/// Poisson.
#[derive(Debug, Clone)]
pub struct Surrogate {
    params: ScenarioParams,
    fingerprint: u64,
}

impl Surrogate {
    pub fn new(params: ScenarioParams) -> Result<Self> {
        params.validate()?;
        let fingerprint = fnv1a(&serde_json::to_vec(&params)?);
        Ok(Surrogate {
            params,
            fingerprint,
        })
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    fn run(&self, m: f64, stream_seed: u64) -> SimOutcome {
        let p = &self.params;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
        let lambda = p.episode_rate(m);
        let mut out = SimOutcome {
            episodes: Vec::new(),
            deaths: Vec::new(),
            population_size: p.population_size,
        };
        if lambda <= 0.0 {
            return out;
        }
        let count = Poisson::new(lambda).expect("validated rate");
        let duration = Exp::new(1.0 / p.mean_episode_duration_days).expect("validated mean");
        let band = WeightedIndex::new(p.age_distribution.iter().map(|b| b.value))
            .expect("validated age weights");
        out.episodes
            .reserve((lambda * p.population_size as f64 * 1.05) as usize);

        for _ in 0..p.population_size {
            let k = count.sample(&mut rng) as u64;
            let mut dead = false;
            for _ in 0..k {
                let b = &p.age_distribution[band.sample(&mut rng)];
                let age = b.from_years + (b.to_years - b.from_years) * rng.random::<f64>();
                let days = duration.sample(&mut rng).max(f64::MIN_POSITIVE);
                let in_hospital = rng.random::<f64>() < p.hospital_seek_probability;
                let (treat, recover) = if in_hospital {
                    (lookup(&p.treatment_cost_usd, age), lookup(&p.recovery_cost_usd, age))
                } else {
                    (0.0, 0.0)
                };
                out.episodes.push(EpisodeRecord {
                    age_years: age,
                    duration_years: days / DAYS_PER_YEAR,
                    disability_weight: lookup(&p.disability_weights, age),
                    in_hospital,
                    treatment_cost_usd: treat,
                    recovery_cost_usd: recover,
                });
                let fatal = rng.random::<f64>() < p.case_fatality_per_episode;
                if fatal && !dead {
                    dead = true;
                    out.deaths.push(DeathRecord {
                        age_years: age,
                        in_hospital,
                        hospital_death_cost_usd: if in_hospital {
                            lookup(&p.death_cost_usd, age)
                        } else {
                            0.0
                        },
                    });
                }
            }
        }
        out
    }
}

impl Simulator for Surrogate {
    fn simulate(&self, policy: &Policy, seed: SimSeed) -> Result<SimOutcome> {
        let m = self.params.transmission_multiplier(policy);
        if m == 1.0 {
            // an ineffective policy is the no-intervention scenario
            return self.baseline(seed);
        }
        Ok(self.run(m, seed.stream_seed(policy)))
    }

    fn baseline(&self, seed: SimSeed) -> Result<SimOutcome> {
        Ok(self.run(1.0, seed.baseline_stream_seed()))
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward_model::{daly, CostParams};

    fn small(pop: u64) -> ScenarioParams {
        ScenarioParams {
            population_size: pop,
            ..ScenarioParams::default()
        }
    }

    fn p(a: f64, b: f64) -> Policy {
        Policy::new(a, b).unwrap()
    }

    #[test]
    fn full_protection_means_no_disease() {
        let sim = Surrogate::new(ScenarioParams {
            itn_efficacy: 1.0,
            irs_efficacy: 1.0,
            ..small(5_000)
        })
        .unwrap();
        let out = sim.simulate(&p(1.0, 1.0), SimSeed::new(1, 0)).unwrap();
        assert!(out.episodes.is_empty());
        assert!(out.deaths.is_empty());
        assert_eq!(out.population_size, 5_000);
    }

    #[test]
    fn same_seed_same_outcome() {
        let sim = Surrogate::new(small(5_000)).unwrap();
        let a = sim.simulate(&p(0.3, 0.6), SimSeed::new(9, 2)).unwrap();
        let b = sim.simulate(&p(0.3, 0.6), SimSeed::new(9, 2)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = sim.simulate(&p(0.3, 0.6), SimSeed::new(9, 3)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn records_respect_invariants() {
        let sim = Surrogate::new(ScenarioParams {
            case_fatality_per_episode: 0.2,
            ..small(3_000)
        })
        .unwrap();
        let out = sim.simulate(&p(0.1, 0.1), SimSeed::new(4, 0)).unwrap();
        out.validate().unwrap();
        assert!(!out.deaths.is_empty());
        assert!(out.deaths.len() as u64 <= out.population_size);
        assert!(out.episodes.iter().all(|e| e.age_years <= 100.0));
    }

    #[test]
    fn one_death_per_person_at_most() {
        // every episode fatal: deaths equal the number of people with >=1 episode
        let sim = Surrogate::new(ScenarioParams {
            case_fatality_per_episode: 1.0,
            ..small(2_000)
        })
        .unwrap();
        let out = sim.baseline(SimSeed::new(5, 0)).unwrap();
        let lambda = sim.params().episode_rate(1.0);
        let expected_sick = 2_000.0 * (1.0 - (-lambda).exp());
        let sd = (2_000.0 * (1.0 - (-lambda).exp()) * (-lambda).exp()).sqrt();
        assert!((out.deaths.len() as f64 - expected_sick).abs() < 4.0 * sd);
        assert!(out.episodes.len() > out.deaths.len());
    }

    #[test]
    fn multiplier_bounds_and_monotonicity() {
        let s = ScenarioParams::default();
        let mut prev_row = f64::INFINITY;
        for i in 1..=10 {
            let mut prev = f64::INFINITY;
            for j in 1..=10 {
                let m = s.transmission_multiplier(&p(i as f64 / 10.0, j as f64 / 10.0));
                assert!((0.0..=1.0).contains(&m));
                assert!(m <= prev);
                prev = m;
            }
            let m0 = s.transmission_multiplier(&p(i as f64 / 10.0, 0.1));
            assert!(m0 <= prev_row);
            prev_row = m0;
        }
    }

    #[test]
    fn baseline_ignores_efficacies_and_replicate() {
        let a = Surrogate::new(small(3_000)).unwrap();
        let b = Surrogate::new(ScenarioParams {
            itn_efficacy: 0.9,
            ..small(3_000)
        })
        .unwrap();
        let s = SimSeed::new(21, 0);
        assert_eq!(a.baseline(s).unwrap(), b.baseline(s).unwrap());
        assert_eq!(a.baseline(s).unwrap(), a.baseline(SimSeed::new(21, 5)).unwrap());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn zero_disease_arm_averts_full_baseline() {
        let sim = Surrogate::new(ScenarioParams {
            itn_efficacy: 1.0,
            irs_efficacy: 1.0,
            ..small(3_000)
        })
        .unwrap();
        let cost = CostParams::default();
        let s = SimSeed::new(2, 0);
        let base = sim.baseline(s).unwrap();
        let none = sim.simulate(&p(1.0, 1.0), s).unwrap();
        assert_eq!(daly(&base, &cost) - daly(&none, &cost), daly(&base, &cost));
    }

    #[test]
    fn ineffective_policy_reproduces_baseline() {
        let sim = Surrogate::new(ScenarioParams {
            itn_efficacy: 0.0,
            irs_efficacy: 0.0,
            ..small(2000)
        })
        .unwrap();
        let seed = SimSeed::new(4, 2);
        assert_eq!(sim.simulate(&p(0.7, 0.3), seed).unwrap(), sim.baseline(seed).unwrap());
    }

    #[test]
    fn invalid_tables_rejected() {
        let bad = [
            ScenarioParams {
                disability_weights: vec![AgeBand::new(0.0, 50.0, 0.2)],
                ..ScenarioParams::default()
            },
            ScenarioParams {
                age_distribution: vec![AgeBand::new(0.0, 5.0, 1.0), AgeBand::new(6.0, 100.0, 1.0)],
                ..ScenarioParams::default()
            },
            ScenarioParams {
                hospital_seek_probability: 1.5,
                ..ScenarioParams::default()
            },
            ScenarioParams {
                population_size: 0,
                ..ScenarioParams::default()
            },
        ];
        for s in bad {
            assert!(s.validate().is_err());
        }
    }

    #[test]
    fn lookup_picks_band() {
        let t = ScenarioParams::default().disability_weights;
        assert_eq!(lookup(&t, 0.0), 0.21);
        assert_eq!(lookup(&t, 4.999), 0.21);
        assert_eq!(lookup(&t, 5.0), 0.17);
        assert_eq!(lookup(&t, 100.0), 0.13);
    }
}
