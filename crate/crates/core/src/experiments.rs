//! Batch experiments emitted as CSV: parameter sweeps, key randomness across
//! trials, and partner-vs-eavesdropper comparisons.
//!
//! Each CSV has a data section, a blank line, then a summary section with
//! its own header. Trials run in parallel but rows are always ordered by
//! `(value, trial)`.

use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::keymat::{derive_key, fnv1a64};
use crate::rng::SeededGenerator;
use crate::session::{
    run_attack_session, LocalSession, SessionConfig, SessionError, DEFAULT_AGREEMENT_WINDOW,
    DEFAULT_MAX_ROUNDS,
};
use crate::tpm::{LearningRule, TpmParams};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("output failed: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ExperimentError::ConfigInvalid(_)
                | ExperimentError::Session(SessionError::ConfigInvalid(_))
                | ExperimentError::Session(SessionError::Tpm(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunLimits {
    pub max_rounds: u64,
    pub agreement_window: u64,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self {
            max_rounds: DEFAULT_MAX_ROUNDS,
            agreement_window: DEFAULT_AGREEMENT_WINDOW,
        }
    }
}

/// Seeds for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrialSeeds {
    pub input: u64,
    pub weight_a: u64,
    pub weight_b: u64,
    pub weight_e: u64,
}

/// Trial seed: FNV-1a over `base_seed ‖ value ‖ trial` (all big-endian u64).
/// The per-role seeds are the first draws of a SplitMix64 stream on it.
pub fn derive_trial_seeds(base_seed: u64, value: u64, trial: u64) -> TrialSeeds {
    let mut bytes = [0u8; 24];
    bytes[..8].copy_from_slice(&base_seed.to_be_bytes());
    bytes[8..16].copy_from_slice(&value.to_be_bytes());
    bytes[16..].copy_from_slice(&trial.to_be_bytes());
    let seed = fnv1a64(&bytes);
    let mut g = SeededGenerator::new(seed);
    TrialSeeds {
        input: seed,
        weight_a: g.next_u64(),
        weight_b: g.next_u64(),
        weight_e: g.next_u64(),
    }
}

fn session_config(params: TpmParams, limits: RunLimits, seeds: TrialSeeds) -> SessionConfig {
    SessionConfig {
        params,
        max_rounds: limits.max_rounds,
        agreement_window: limits.agreement_window,
        input_seed: seeds.input,
        weight_seed_a: seeds.weight_a,
        weight_seed_b: seeds.weight_b,
        weight_seed_e: seeds.weight_e,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    K,
    N,
    L,
}

impl std::str::FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "k" | "K" => Ok(Dimension::K),
            "n" | "N" => Ok(Dimension::N),
            "l" | "L" => Ok(Dimension::L),
            other => Err(format!("cannot vary `{other}` (expected k, n or l)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub varying: Dimension,
    pub values: Vec<u64>,
    /// Defaults for the dimensions that do not vary.
    pub k: usize,
    pub n: usize,
    pub l: u8,
    pub rule: LearningRule,
    pub trials_per_value: u64,
    pub base_seed: u64,
    pub limits: RunLimits,
}

impl SweepSpec {
    fn params_for(&self, value: u64) -> Result<TpmParams, ExperimentError> {
        let (mut k, mut n, mut l) = (self.k, self.n, self.l as u64);
        match self.varying {
            Dimension::K => k = value as usize,
            Dimension::N => n = value as usize,
            Dimension::L => l = value,
        }
        let l = u8::try_from(l)
            .map_err(|_| ExperimentError::ConfigInvalid(format!("l = {l} is out of range")))?;
        TpmParams::new(k, n, l, self.rule)
            .map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))
    }

    fn validate(&self) -> Result<Vec<TpmParams>, ExperimentError> {
        if self.values.is_empty() {
            return Err(ExperimentError::ConfigInvalid("no sweep values".into()));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExperimentError::ConfigInvalid(
                "sweep values must be strictly increasing".into(),
            ));
        }
        if self.trials_per_value == 0 {
            return Err(ExperimentError::ConfigInvalid(
                "trials per value must be at least 1".into(),
            ));
        }
        validate_limits(self.limits)?;
        self.values.iter().map(|&v| self.params_for(v)).collect()
    }
}

fn validate_limits(limits: RunLimits) -> Result<(), ExperimentError> {
    if limits.agreement_window == 0 || limits.max_rounds < limits.agreement_window {
        return Err(ExperimentError::ConfigInvalid(
            "max_rounds must be at least agreement_window, which must be at least 1".into(),
        ));
    }
    Ok(())
}

pub const SWEEP_COLUMNS: [&str; 8] = [
    "varying_value",
    "trial_index",
    "synced",
    "rounds_used",
    "updates_applied",
    "pct_iterations",
    "elapsed_micros",
    "fingerprint",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub varying_value: u64,
    pub trial_index: u64,
    pub synced: u8,
    pub rounds_used: u64,
    pub updates_applied: u64,
    pub pct_iterations: f64,
    pub elapsed_micros: u64,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummaryRow {
    pub varying_value: u64,
    pub trials: u64,
    pub synced: u64,
    pub sync_fraction: f64,
    pub mean_rounds: f64,
    pub median_rounds: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<TrialRow>,
    pub summary: Vec<SweepSummaryRow>,
}

pub fn mean(values: &[u64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64
}

pub fn median(values: &[u64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] as f64 + v[mid] as f64) / 2.0
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    let params = spec.validate()?;
    let jobs: Vec<(u64, TpmParams, u64)> = spec
        .values
        .iter()
        .zip(&params)
        .flat_map(|(&v, &p)| (0..spec.trials_per_value).map(move |t| (v, p, t)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(value, p, trial)| {
            let seeds = derive_trial_seeds(spec.base_seed, value, trial);
            let mut session = LocalSession::new(session_config(p, spec.limits, seeds))?;
            let r = session.run()?;
            Ok(TrialRow {
                varying_value: value,
                trial_index: trial,
                synced: r.synced as u8,
                rounds_used: r.rounds_used,
                updates_applied: r.updates_applied,
                pct_iterations: r.rounds_used as f64 / spec.limits.max_rounds as f64,
                elapsed_micros: r.elapsed.as_micros() as u64,
                fingerprint: format!("{:016x}", r.key_fingerprint_a),
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let summary = spec
        .values
        .iter()
        .map(|&v| {
            let group: Vec<&TrialRow> = rows.iter().filter(|r| r.varying_value == v).collect();
            let rounds: Vec<u64> = group.iter().map(|r| r.rounds_used).collect();
            let synced = group.iter().filter(|r| r.synced == 1).count() as u64;
            SweepSummaryRow {
                varying_value: v,
                trials: group.len() as u64,
                synced,
                sync_fraction: synced as f64 / group.len() as f64,
                mean_rounds: mean(&rounds),
                median_rounds: median(&rounds),
            }
        })
        .collect();
    Ok(SweepResult { rows, summary })
}

fn write_sections<W: Write, D: Serialize, S: Serialize>(
    out: &mut W,
    rows: &[D],
    summary: &[S],
) -> Result<(), ExperimentError> {
    {
        let mut w = csv::Writer::from_writer(&mut *out);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    out.write_all(b"\n")?;
    let mut w = csv::Writer::from_writer(&mut *out);
    for row in summary {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ExperimentError> {
        write_sections(&mut out, &self.rows, &self.summary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomnessRow {
    pub trial_index: u64,
    pub synced: u8,
    pub rounds_used: u64,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomnessSummary {
    pub trials: u64,
    pub synced: u64,
    pub distinct_fingerprints: u64,
    pub distinct_keys: u64,
}

#[derive(Debug, Clone)]
pub struct RandomnessResult {
    pub rows: Vec<RandomnessRow>,
    /// Key octets per trial, kept for analysis; never written to the CSV.
    pub keys: Vec<Vec<u8>>,
    pub summary: RandomnessSummary,
}

impl RandomnessResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ExperimentError> {
        write_sections(&mut out, &self.rows, std::slice::from_ref(&self.summary))
    }
}

/// Independent sessions with distinct seeds; reports how many distinct keys came out.
pub fn run_randomness(
    trials: u64,
    params: TpmParams,
    base_seed: u64,
    limits: RunLimits,
) -> Result<RandomnessResult, ExperimentError> {
    if trials < 2 {
        return Err(ExperimentError::ConfigInvalid(
            "randomness needs at least 2 trials".into(),
        ));
    }
    validate_limits(limits)?;
    let seeds: Vec<TrialSeeds> = (0..trials)
        .map(|t| derive_trial_seeds(base_seed, params.n() as u64, t))
        .collect();
    randomness_over(params, limits, &seeds)
}

/// Randomness run over explicit per-trial seeds.
pub fn randomness_over(
    params: TpmParams,
    limits: RunLimits,
    seeds: &[TrialSeeds],
) -> Result<RandomnessResult, ExperimentError> {
    validate_limits(limits)?;
    let outcomes = seeds
        .par_iter()
        .map(|&s| {
            let mut session = LocalSession::new(session_config(params, limits, s))?;
            let report = session.run()?;
            let key = derive_key(session.partner_a().weights())
                .map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))?;
            Ok((report, key))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let rows: Vec<RandomnessRow> = outcomes
        .iter()
        .enumerate()
        .map(|(t, (r, key))| RandomnessRow {
            trial_index: t as u64,
            synced: r.synced as u8,
            rounds_used: r.rounds_used,
            fingerprint: format!("{:016x}", key.fingerprint()),
        })
        .collect();
    let keys: Vec<Vec<u8>> = outcomes.iter().map(|(_, k)| k.bytes().to_vec()).collect();
    let summary = RandomnessSummary {
        trials: rows.len() as u64,
        synced: rows.iter().filter(|r| r.synced == 1).count() as u64,
        distinct_fingerprints: rows
            .iter()
            .map(|r| r.fingerprint.as_str())
            .collect::<HashSet<_>>()
            .len() as u64,
        distinct_keys: keys.iter().collect::<HashSet<_>>().len() as u64,
    };
    Ok(RandomnessResult {
        rows,
        keys,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackRow {
    pub trial_index: u64,
    pub partner_synced: u8,
    pub partner_rounds_used: u64,
    pub attacker_synced: u8,
    pub attacker_mean_overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackSummary {
    pub trials: u64,
    pub partner_sync_fraction: f64,
    pub attacker_sync_fraction: f64,
    pub mean_attacker_overlap: f64,
    pub mean_partner_rounds: f64,
}

#[derive(Debug, Clone)]
pub struct AttackBenchResult {
    pub rows: Vec<AttackRow>,
    pub summary: AttackSummary,
}

impl AttackBenchResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ExperimentError> {
        write_sections(&mut out, &self.rows, std::slice::from_ref(&self.summary))
    }
}

pub fn run_attack_bench(
    trials: u64,
    params: TpmParams,
    base_seed: u64,
    limits: RunLimits,
) -> Result<AttackBenchResult, ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::ConfigInvalid(
            "attack bench needs at least 1 trial".into(),
        ));
    }
    validate_limits(limits)?;
    let rows = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seeds = derive_trial_seeds(base_seed, params.n() as u64, t);
            let r = run_attack_session(session_config(params, limits, seeds))?;
            Ok(AttackRow {
                trial_index: t,
                partner_synced: r.partner_report.synced as u8,
                partner_rounds_used: r.partner_report.rounds_used,
                attacker_synced: r.attacker_synced as u8,
                attacker_mean_overlap: r.attacker_mean_overlap,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let n = rows.len() as f64;
    let rounds: Vec<u64> = rows.iter().map(|r| r.partner_rounds_used).collect();
    let summary = AttackSummary {
        trials: rows.len() as u64,
        partner_sync_fraction: rows.iter().filter(|r| r.partner_synced == 1).count() as f64 / n,
        attacker_sync_fraction: rows.iter().filter(|r| r.attacker_synced == 1).count() as f64 / n,
        mean_attacker_overlap: rows.iter().map(|r| r.attacker_mean_overlap).sum::<f64>() / n,
        mean_partner_rounds: mean(&rounds),
    };
    Ok(AttackBenchResult { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(values: Vec<u64>, trials: u64) -> SweepSpec {
        SweepSpec {
            varying: Dimension::N,
            values,
            k: 3,
            n: 11,
            l: 3,
            rule: LearningRule::Hebbian,
            trials_per_value: trials,
            base_seed: 1,
            limits: RunLimits::default(),
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3, 1, 2]), 2.0);
        assert_eq!(median(&[4, 1, 3, 2]), 2.5);
        assert_eq!(mean(&[1, 2, 3, 4]), 2.5);
    }

    #[test]
    fn sweep_rejects_bad_specs() {
        assert!(run_sweep(&spec(vec![], 1)).unwrap_err().is_config());
        assert!(run_sweep(&spec(vec![5, 5], 1)).unwrap_err().is_config());
        assert!(run_sweep(&spec(vec![10, 5], 1)).unwrap_err().is_config());
        assert!(run_sweep(&spec(vec![5], 0)).unwrap_err().is_config());
        let mut s = spec(vec![5], 1);
        s.varying = Dimension::L;
        s.values = vec![200];
        assert!(run_sweep(&s).unwrap_err().is_config());
    }

    #[test]
    fn single_point_sweep() {
        let r = run_sweep(&spec(vec![5], 1)).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.summary.len(), 1);
        let row = &r.rows[0];
        assert!((0.0..=1.0).contains(&row.pct_iterations));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_COLUMNS.join(","));
        assert_eq!(
            lines.next().unwrap().split(',').count(),
            SWEEP_COLUMNS.len()
        );
        assert_eq!(lines.next().unwrap(), "");
        assert_eq!(
            lines.next().unwrap(),
            "varying_value,trials,synced,sync_fraction,mean_rounds,median_rounds"
        );
        assert!(lines.next().is_some());
        assert!(lines.next().is_none());
    }

    #[test]
    fn randomness_needs_two_trials() {
        let p = TpmParams::new(3, 11, 3, LearningRule::Hebbian).unwrap();
        assert!(run_randomness(1, p, 0, RunLimits::default())
            .unwrap_err()
            .is_config());
        assert!(run_attack_bench(0, p, 0, RunLimits::default())
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn equal_seeds_give_equal_keys() {
        let p = TpmParams::new(3, 11, 3, LearningRule::Hebbian).unwrap();
        let s = derive_trial_seeds(5, 11, 0);
        let r = randomness_over(p, RunLimits::default(), &[s, s]).unwrap();
        assert_eq!(r.rows[0].fingerprint, r.rows[1].fingerprint);
        assert_eq!(r.summary.distinct_fingerprints, 1);
    }

    #[test]
    fn seed_derivation_is_collision_free() {
        let mut seen = HashSet::new();
        for v in [5u64, 10, 20, 40] {
            for t in 0..1000 {
                assert!(seen.insert(derive_trial_seeds(1, v, t).input));
            }
        }
    }
}
