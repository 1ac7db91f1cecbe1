//! Adapter for simulators that run as a child process.
//!
//! The child is invoked as
//!
//! ```text
//! <program> [args...] <scenario_path> --policy <a_itn>,<a_irs> --seed <N>
//! ```
//!
//! where `N` is the derived stream seed of the run. The baseline run passes
//! `--policy 0,0`. The child must print exactly one JSON object on stdout:
//!
//! ```text
//! {"population_size": 100000,
//!  "episodes": [{"age": 3.2, "duration_days": 11.0, "weight": 0.21,
//!                "in_hospital": true, "treat_cost": 4.2, "recover_cost": 2.1}],
//!  "deaths": [{"age": 3.2, "in_hospital": true, "death_cost": 25.0}]}
//! ```

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{fnv1a, SimSeed, Simulator, DAYS_PER_YEAR};
use crate::error::{Error, ExternalSimError, Result};
use crate::policy_space::Policy;
use crate::reward_model::{DeathRecord, EpisodeRecord, SimOutcome};

fn default_timeout_ms() -> u64 {
    24 * 60 * 60 * 1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalAdapterConfig {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub scenario_path: PathBuf,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireEpisode {
    pub age: f64,
    pub duration_days: f64,
    pub weight: f64,
    pub in_hospital: bool,
    pub treat_cost: f64,
    pub recover_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireDeath {
    pub age: f64,
    pub in_hospital: bool,
    pub death_cost: f64,
}

/// The outcome record as exchanged with external simulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireOutcome {
    pub population_size: u64,
    pub episodes: Vec<WireEpisode>,
    pub deaths: Vec<WireDeath>,
}

impl WireOutcome {
    pub fn from_outcome(o: &SimOutcome) -> Self {
        WireOutcome {
            population_size: o.population_size,
            episodes: o
                .episodes
                .iter()
                .map(|e| WireEpisode {
                    age: e.age_years,
                    duration_days: e.duration_years * DAYS_PER_YEAR,
                    weight: e.disability_weight,
                    in_hospital: e.in_hospital,
                    treat_cost: e.treatment_cost_usd,
                    recover_cost: e.recovery_cost_usd,
                })
                .collect(),
            deaths: o
                .deaths
                .iter()
                .map(|d| WireDeath {
                    age: d.age_years,
                    in_hospital: d.in_hospital,
                    death_cost: d.hospital_death_cost_usd,
                })
                .collect(),
        }
    }

    pub fn into_outcome(self) -> SimOutcome {
        SimOutcome {
            population_size: self.population_size,
            episodes: self
                .episodes
                .into_iter()
                .map(|e| EpisodeRecord {
                    age_years: e.age,
                    duration_years: e.duration_days / DAYS_PER_YEAR,
                    disability_weight: e.weight,
                    in_hospital: e.in_hospital,
                    treatment_cost_usd: e.treat_cost,
                    recovery_cost_usd: e.recover_cost,
                })
                .collect(),
            deaths: self
                .deaths
                .into_iter()
                .map(|d| DeathRecord {
                    age_years: d.age,
                    in_hospital: d.in_hospital,
                    hospital_death_cost_usd: d.death_cost,
                })
                .collect(),
        }
    }
}

fn truncate(s: &str) -> String {
    const MAX: usize = 2000;
    if s.len() <= MAX {
        s.to_string()
    } else {
        let mut end = MAX;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}... ({} bytes total)", &s[..end], s.len())
    }
}

/// Parses one outcome object from simulator stdout.
pub fn parse_wire_output(stdout: &str) -> Result<SimOutcome, ExternalSimError> {
    let malformed = |reason: String| ExternalSimError::Malformed {
        reason,
        stdout: truncate(stdout),
    };
    let wire: WireOutcome = serde_json::from_str(stdout.trim()).map_err(|e| malformed(e.to_string()))?;
    let outcome = wire.into_outcome();
    outcome.validate().map_err(|e| malformed(e.to_string()))?;
    Ok(outcome)
}

fn policy_arg(policy: Option<&Policy>) -> String {
    match policy {
        Some(p) => format!("{},{}", p.itn(), p.irs()),
        None => "0,0".to_string(),
    }
}

fn spawn_and_collect(
    adapter: &ExternalAdapterConfig,
    policy: Option<&Policy>,
    stream_seed: u64,
) -> Result<SimOutcome, ExternalSimError> {
    let mut child = Command::new(&adapter.program)
        .args(&adapter.args)
        .arg(&adapter.scenario_path)
        .arg("--policy")
        .arg(policy_arg(policy))
        .arg("--seed")
        .arg(stream_seed.to_string())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| ExternalSimError::Spawn {
            program: adapter.program.clone(),
            source,
        })?;

    // drain pipes on their own threads so a chatty child cannot block
    let mut out_pipe = child.stdout.take().expect("piped stdout");
    let mut err_pipe = child.stderr.take().expect("piped stderr");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out_pipe.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err_pipe.read_to_end(&mut buf);
        buf
    });

    let deadline = Instant::now() + Duration::from_millis(adapter.timeout_ms);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(ExternalSimError::Timeout {
                    timeout_ms: adapter.timeout_ms,
                });
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                return Err(ExternalSimError::Exit {
                    status: format!("unknown ({e})"),
                    stderr: String::new(),
                })
            }
        }
    };
    let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
    if !status.success() {
        return Err(ExternalSimError::Exit {
            status: status.to_string(),
            stderr: truncate(&stderr),
        });
    }
    parse_wire_output(&stdout)
}

/// Runs one simulation through the external process.
pub fn run_external(adapter: &ExternalAdapterConfig, policy: &Policy, seed: SimSeed) -> Result<SimOutcome> {
    Ok(spawn_and_collect(adapter, Some(policy), seed.stream_seed(policy))?)
}

/// [`Simulator`] backed by an external process.
#[derive(Debug, Clone)]
pub struct External {
    adapter: ExternalAdapterConfig,
    fingerprint: u64,
}

impl External {
    pub fn new(adapter: ExternalAdapterConfig) -> Result<Self> {
        if adapter.program.is_empty() {
            return Err(Error::Config("external simulator program is empty".into()));
        }
        let fingerprint = fnv1a(&serde_json::to_vec(&adapter)?);
        Ok(External {
            adapter,
            fingerprint,
        })
    }

    pub fn adapter(&self) -> &ExternalAdapterConfig {
        &self.adapter
    }
}

impl Simulator for External {
    fn simulate(&self, policy: &Policy, seed: SimSeed) -> Result<SimOutcome> {
        run_external(&self.adapter, policy, seed)
    }

    fn baseline(&self, seed: SimSeed) -> Result<SimOutcome> {
        Ok(spawn_and_collect(&self.adapter, None, seed.baseline_stream_seed())?)
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}
