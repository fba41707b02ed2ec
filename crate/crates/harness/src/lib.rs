//! Batch experiment harness: seeded Monte-Carlo trials over algorithms and
//! instances, CSV/JSON reporting, and deterministic parallel execution.
//!
//! Trial `i` always draws from `RngStream(master_seed, i)`, so results are
//! identical regardless of the worker count; instance generation (when the
//! instance comes from a generator rather than a file) uses the reserved
//! stream index [`INSTANCE_STREAM_INDEX`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use glucb::algo::{run_glucb, run_static, ConfidenceParams, RadiusMode, StopReport, Terminated};
use glucb::env::{
    format_real, gen_crowded, gen_soare, gen_sphere, read_instance_file, three_arm, Instance,
    RngStream,
};
use glucb::{Error, Result};

/// Stream index reserved for instance generation, outside the trial range.
pub const INSTANCE_STREAM_INDEX: u64 = u64::MAX;

/// Which algorithm a batch runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Glucb,
    Static,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Glucb => "glucb",
            Algo::Static => "static",
        }
    }
}

/// Serializable mirror of [`RadiusMode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusModeConfig {
    DetBased,
    Simple,
}

impl From<RadiusModeConfig> for RadiusMode {
    fn from(m: RadiusModeConfig) -> Self {
        match m {
            RadiusModeConfig::DetBased => RadiusMode::DetBased,
            RadiusModeConfig::Simple => RadiusMode::Simple,
        }
    }
}

/// Synthetic instance family plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    Soare {
        d: usize,
        #[serde(default = "default_omega")]
        omega: f64,
    },
    Sphere {
        d: usize,
        k: usize,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    Crowded {
        k: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    ThreeArm {
        omega: f64,
    },
}

pub fn default_omega() -> f64 {
    0.1
}

pub fn default_gamma() -> f64 {
    0.01
}

pub fn default_sigma() -> f64 {
    0.3
}

impl GeneratorSpec {
    /// Builds the instance; random generators draw from `rng`.
    pub fn build(&self, rng: &mut RngStream) -> Result<Instance> {
        match *self {
            GeneratorSpec::Soare { d, omega } => gen_soare(d, omega),
            GeneratorSpec::Sphere { d, k, gamma } => gen_sphere(d, k, gamma, rng),
            GeneratorSpec::Crowded { k, sigma } => gen_crowded(k, sigma, rng),
            GeneratorSpec::ThreeArm { omega } => three_arm(omega),
        }
    }
}

/// Where the instance for a batch comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceSource {
    Generator(GeneratorSpec),
    File(PathBuf),
}

/// Full description of a batch run. Field names match the config-file
/// schema and the CLI flags one-to-one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_algo")]
    pub algo: Algo,
    #[serde(default = "default_radius_mode")]
    pub radius_mode: RadiusModeConfig,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    pub instance_source: InstanceSource,
    #[serde(default)]
    pub static_weights: Option<Vec<f64>>,
}

fn default_algo() -> Algo {
    Algo::Glucb
}

fn default_radius_mode() -> RadiusModeConfig {
    RadiusModeConfig::DetBased
}

pub fn default_delta() -> f64 {
    0.05
}

pub fn default_r() -> f64 {
    1.0
}

pub fn default_s() -> f64 {
    2.0
}

pub fn default_lambda() -> f64 {
    1.0
}

fn default_trials() -> u64 {
    100
}

pub fn default_max_steps() -> u64 {
    10_000_000
}

impl ExperimentConfig {
    pub fn confidence_params(&self) -> Result<ConfidenceParams> {
        ConfidenceParams::new(self.r, self.s, self.delta, self.lambda, self.radius_mode.into())
    }

    pub fn validate(&self) -> Result<()> {
        self.confidence_params()?;
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Resolves the instance (reading the file or running the generator on
    /// the reserved stream).
    pub fn resolve_instance(&self) -> Result<Instance> {
        match &self.instance_source {
            InstanceSource::File(path) => read_instance_file(path),
            InstanceSource::Generator(spec) => {
                let mut rng = RngStream::new(self.master_seed, INSTANCE_STREAM_INDEX);
                spec.build(&mut rng)
            }
        }
    }
}

/// One trial's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    /// The RNG stream index the trial consumed (equals `trial`).
    pub stream: u64,
    pub algo: Algo,
    pub tau: u64,
    pub recommended: usize,
    pub correct: bool,
    pub terminated: Terminated,
    pub wall_time_ms: f64,
}

/// Batch summary. `mean_tau`/`stderr_tau` cover stopped trials only;
/// non-terminated trials are counted separately rather than averaged in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateStats {
    pub mean_tau: f64,
    pub stderr_tau: f64,
    /// Wrong recommendations among stopped trials / stopped trials.
    pub error_rate: f64,
    pub non_termination_count: u64,
    pub trials: u64,
}

fn record_from_report(trial: u64, algo: Algo, report: &StopReport) -> TrialRecord {
    TrialRecord {
        trial,
        stream: trial,
        algo,
        tau: report.tau,
        recommended: report.recommended,
        // A trial only counts as correct if it actually reached its
        // stopping time; a lucky standing guess at the step cap does not.
        correct: report.terminated == Terminated::Stopped && report.correct,
        terminated: report.terminated,
        wall_time_ms: report.wall_time.as_secs_f64() * 1e3,
    }
}

fn run_trial(
    trial: u64,
    instance: &Instance,
    params: &ConfidenceParams,
    config: &ExperimentConfig,
) -> Result<TrialRecord> {
    let mut rng = RngStream::new(config.master_seed, trial);
    let report = match config.algo {
        Algo::Glucb => run_glucb(instance, params, &mut rng, config.max_steps)?,
        Algo::Static => {
            let uniform = vec![1.0 / instance.k() as f64; instance.k()];
            let weights = config.static_weights.as_deref().unwrap_or(&uniform);
            run_static(instance, params, weights, &mut rng, config.max_steps)?
        }
    };
    Ok(record_from_report(trial, config.algo, &report))
}

/// Runs every trial of the batch on a pool of `workers` threads.
///
/// Records come back in trial order and are identical (modulo
/// `wall_time_ms`) for any worker count.
pub fn run_experiment(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<(Vec<TrialRecord>, AggregateStats)> {
    config.validate()?;
    let instance = config.resolve_instance()?;
    let params = config.confidence_params()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    let records: Result<Vec<TrialRecord>> = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|trial| run_trial(trial, &instance, &params, config))
            .collect()
    });
    let records = records?;
    let stats = aggregate(&records);
    Ok((records, stats))
}

/// Recomputes the batch summary from per-trial records.
pub fn aggregate(records: &[TrialRecord]) -> AggregateStats {
    let stopped: Vec<&TrialRecord> = records
        .iter()
        .filter(|r| r.terminated == Terminated::Stopped)
        .collect();
    let n = stopped.len() as f64;
    let mean_tau = if stopped.is_empty() {
        0.0
    } else {
        stopped.iter().map(|r| r.tau as f64).sum::<f64>() / n
    };
    let stderr_tau = if stopped.len() < 2 {
        0.0
    } else {
        let var = stopped
            .iter()
            .map(|r| (r.tau as f64 - mean_tau).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    };
    let error_rate = if stopped.is_empty() {
        0.0
    } else {
        stopped.iter().filter(|r| !r.correct).count() as f64 / n
    };
    AggregateStats {
        mean_tau,
        stderr_tau,
        error_rate,
        non_termination_count: (records.len() - stopped.len()) as u64,
        trials: records.len() as u64,
    }
}

pub fn terminated_str(t: Terminated) -> &'static str {
    match t {
        Terminated::Stopped => "stopped",
        Terminated::MaxStepsExceeded => "max-steps-exceeded",
    }
}

/// CSV header used by [`records_to_csv`].
pub const CSV_HEADER: &str = "trial,algo,tau,recommended,correct,terminated,wall_time_ms";

/// Renders records as UTF-8 CSV with a header row; reals carry 17
/// significant digits.
pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.trial,
            r.algo.as_str(),
            r.tau,
            r.recommended,
            r.correct,
            terminated_str(r.terminated),
            format_real(r.wall_time_ms),
        ));
    }
    out
}

/// Parses the output of [`records_to_csv`].
pub fn records_from_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        other => {
            return Err(Error::Parse(format!(
                "unexpected CSV header: {other:?}"
            )))
        }
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse(format!(
                "line {}: expected 7 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_err = |what: &str| Error::Parse(format!("line {}: bad {what}", lineno + 2));
        let trial: u64 = fields[0].parse().map_err(|_| parse_err("trial"))?;
        let algo = match fields[1] {
            "glucb" => Algo::Glucb,
            "static" => Algo::Static,
            _ => return Err(parse_err("algo")),
        };
        let terminated = match fields[5] {
            "stopped" => Terminated::Stopped,
            "max-steps-exceeded" => Terminated::MaxStepsExceeded,
            _ => return Err(parse_err("terminated")),
        };
        records.push(TrialRecord {
            trial,
            stream: trial,
            algo,
            tau: fields[2].parse().map_err(|_| parse_err("tau"))?,
            recommended: fields[3].parse().map_err(|_| parse_err("recommended"))?,
            correct: fields[4].parse().map_err(|_| parse_err("correct"))?,
            terminated,
            wall_time_ms: fields[6].parse().map_err(|_| parse_err("wall_time_ms"))?,
        });
    }
    Ok(records)
}

/// Renders the summary as JSON with 17-significant-digit reals.
pub fn stats_to_json(stats: &AggregateStats) -> String {
    format!(
        "{{\n  \"mean_tau\": {},\n  \"stderr_tau\": {},\n  \"error_rate\": {},\n  \"non_termination_count\": {},\n  \"trials\": {}\n}}\n",
        format_real(stats.mean_tau),
        format_real(stats.stderr_tau),
        format_real(stats.error_rate),
        stats.non_termination_count,
        stats.trials
    )
}

/// Loads a config file (JSON with the [`ExperimentConfig`] field names).
pub fn config_from_file(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("config file: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soare_config(trials: u64) -> ExperimentConfig {
        ExperimentConfig {
            algo: Algo::Glucb,
            radius_mode: RadiusModeConfig::DetBased,
            delta: 0.05,
            r: 1.0,
            s: 2.0,
            lambda: 1.0,
            trials,
            master_seed: 7,
            max_steps: 1_000_000,
            instance_source: InstanceSource::Generator(GeneratorSpec::ThreeArm { omega: 1.0 }),
            static_weights: None,
        }
    }

    #[test]
    fn experiment_runs_and_aggregates() {
        let (records, stats) = run_experiment(&soare_config(8), 2).unwrap();
        assert_eq!(records.len(), 8);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.trial, i as u64);
            assert_eq!(r.terminated, Terminated::Stopped);
        }
        assert_eq!(stats.trials, 8);
        assert_eq!(stats.non_termination_count, 0);
        assert!(stats.mean_tau > 0.0);
        assert_eq!(aggregate(&records), stats);
    }

    #[test]
    fn csv_round_trip_preserves_aggregates() {
        let (records, stats) = run_experiment(&soare_config(5), 1).unwrap();
        let csv = records_to_csv(&records);
        let parsed = records_from_csv(&csv).unwrap();
        assert_eq!(parsed, records);
        assert_eq!(aggregate(&parsed), stats);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let config = soare_config(12);
        let (one, _) = run_experiment(&config, 1).unwrap();
        let (eight, _) = run_experiment(&config, 8).unwrap();
        let strip = |records: &[TrialRecord]| {
            records
                .iter()
                .map(|r| (r.trial, r.tau, r.recommended, r.correct))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&one), strip(&eight));
    }

    #[test]
    fn config_parses_with_defaults_and_rejects_unknown_fields() {
        let text = r#"{
            "instance_source": {"generator": {"name": "soare", "d": 2}},
            "trials": 3
        }"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(config.trials, 3);
        assert_eq!(config.delta, 0.05);
        assert_eq!(config.s, 2.0);
        assert_eq!(
            config.instance_source,
            InstanceSource::Generator(GeneratorSpec::Soare { d: 2, omega: 0.1 })
        );

        let bad = r#"{"instance_source": {"file": "x.json"}, "nope": 1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
    }

    #[test]
    fn static_algo_defaults_to_uniform_weights() {
        let mut config = soare_config(2);
        config.algo = Algo::Static;
        config.max_steps = 200_000;
        let (records, _) = run_experiment(&config, 1).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.algo == Algo::Static));
    }

    #[test]
    fn capped_trials_are_never_marked_correct() {
        let mut config = soare_config(4);
        config.max_steps = 10;
        let (records, stats) = run_experiment(&config, 1).unwrap();
        for r in &records {
            assert_eq!(r.terminated, Terminated::MaxStepsExceeded);
            assert!(!r.correct);
        }
        assert_eq!(stats.non_termination_count, 4);
        assert_eq!(stats.mean_tau, 0.0);
    }
}
