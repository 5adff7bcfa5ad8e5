//! Partner and eavesdropper state machines, and in-process session drivers.
//!
//! Partners count consecutive output agreements. Once the streak reaches the
//! agreement window a fingerprint probe is due; only an equal fingerprint
//! marks the partner as synced. A failed probe resets the streak.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::keymat::weight_fingerprint;
use crate::rng::SeededGenerator;
use crate::tpm::{
    compute_output, mean_overlap, InputVector, RoundTrace, Spin, TpmError, TpmParams, WeightMatrix,
};

pub const DEFAULT_MAX_ROUNDS: u64 = 100_000;
pub const DEFAULT_AGREEMENT_WINDOW: u64 = 50;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("operation not allowed while partner is {0:?}")]
    InvalidState(PartnerStatus),
    #[error("invalid session config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Tpm(#[from] TpmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartnerStatus {
    Running,
    Synced,
    TimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionConfig {
    pub params: TpmParams,
    pub max_rounds: u64,
    pub agreement_window: u64,
    pub input_seed: u64,
    pub weight_seed_a: u64,
    pub weight_seed_b: u64,
    pub weight_seed_e: u64,
}

impl SessionConfig {
    /// Default limits with the given seeds.
    pub fn new(params: TpmParams, input_seed: u64, seeds: [u64; 3]) -> Self {
        Self {
            params,
            max_rounds: DEFAULT_MAX_ROUNDS,
            agreement_window: DEFAULT_AGREEMENT_WINDOW,
            input_seed,
            weight_seed_a: seeds[0],
            weight_seed_b: seeds[1],
            weight_seed_e: seeds[2],
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.agreement_window == 0 {
            return Err(SessionError::ConfigInvalid(
                "agreement_window must be at least 1".into(),
            ));
        }
        if self.max_rounds < self.agreement_window {
            return Err(SessionError::ConfigInvalid(format!(
                "max_rounds ({}) must be at least agreement_window ({})",
                self.max_rounds, self.agreement_window
            )));
        }
        Ok(())
    }
}

/// One of the two key-exchange partners.
#[derive(Debug, Clone)]
pub struct PartnerState {
    params: TpmParams,
    weights: WeightMatrix,
    rounds_elapsed: u64,
    consecutive_agreements: u64,
    updates_applied: u64,
    status: PartnerStatus,
    max_rounds: u64,
    agreement_window: u64,
}

impl PartnerState {
    pub fn new(weights: WeightMatrix, max_rounds: u64, agreement_window: u64) -> Self {
        Self {
            params: *weights.params(),
            weights,
            rounds_elapsed: 0,
            consecutive_agreements: 0,
            updates_applied: 0,
            status: PartnerStatus::Running,
            max_rounds,
            agreement_window,
        }
    }

    pub fn params(&self) -> &TpmParams {
        &self.params
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn rounds_elapsed(&self) -> u64 {
        self.rounds_elapsed
    }

    pub fn consecutive_agreements(&self) -> u64 {
        self.consecutive_agreements
    }

    pub fn updates_applied(&self) -> u64 {
        self.updates_applied
    }

    pub fn status(&self) -> PartnerStatus {
        self.status
    }

    pub fn fingerprint(&self) -> u64 {
        weight_fingerprint(&self.weights)
    }

    /// Computes this round's output. State is unchanged.
    pub fn partner_round(&self, x: &InputVector) -> Result<(Spin, RoundTrace), SessionError> {
        self.ensure_running()?;
        let trace = compute_output(&self.weights, x)?;
        Ok((trace.tau, trace))
    }

    /// Learns from the peer's output bit and advances the round counters.
    pub fn apply_peer_output(
        &mut self,
        x: &InputVector,
        trace: &RoundTrace,
        tau_peer: Spin,
    ) -> Result<(), SessionError> {
        self.ensure_running()?;
        if self.weights.update(x, trace, tau_peer)? {
            self.consecutive_agreements += 1;
            self.updates_applied += 1;
        } else {
            self.consecutive_agreements = 0;
        }
        self.rounds_elapsed += 1;
        if self.rounds_elapsed >= self.max_rounds && !self.probe_due() {
            self.status = PartnerStatus::TimedOut;
        }
        Ok(())
    }

    /// Whether the agreement streak calls for a fingerprint probe.
    pub fn probe_due(&self) -> bool {
        self.status == PartnerStatus::Running
            && self.consecutive_agreements >= self.agreement_window
    }

    /// Records the probe verdict. A mismatch resets the streak and may end
    /// the session if the round budget is spent.
    pub fn resolve_probe(&mut self, matched: bool) -> Result<(), SessionError> {
        self.ensure_running()?;
        if matched {
            self.status = PartnerStatus::Synced;
        } else {
            self.consecutive_agreements = 0;
            if self.rounds_elapsed >= self.max_rounds {
                self.status = PartnerStatus::TimedOut;
            }
        }
        Ok(())
    }

    fn ensure_running(&self) -> Result<(), SessionError> {
        match self.status {
            PartnerStatus::Running => Ok(()),
            other => Err(SessionError::InvalidState(other)),
        }
    }
}

/// Passive listener running the simple attack.
#[derive(Debug, Clone)]
pub struct EavesdropperState {
    params: TpmParams,
    weights: WeightMatrix,
    rounds_observed: u64,
}

impl EavesdropperState {
    pub fn new(weights: WeightMatrix) -> Self {
        Self {
            params: *weights.params(),
            weights,
            rounds_observed: 0,
        }
    }

    pub fn params(&self) -> &TpmParams {
        &self.params
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn rounds_observed(&self) -> u64 {
        self.rounds_observed
    }

    pub fn fingerprint(&self) -> u64 {
        weight_fingerprint(&self.weights)
    }

    /// Observes one round. When the partners agree, learns with their shared
    /// output in place of its own.
    pub fn eavesdrop_round(
        &mut self,
        x: &InputVector,
        tau_a: Spin,
        tau_b: Spin,
    ) -> Result<(), SessionError> {
        let trace = compute_output(&self.weights, x)?;
        if tau_a == tau_b {
            self.weights.learn(x, &trace.sigma, tau_a);
        }
        self.rounds_observed += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncReport {
    pub synced: bool,
    pub rounds_used: u64,
    pub updates_applied: u64,
    pub key_fingerprint_a: u64,
    pub key_fingerprint_b: u64,
    pub elapsed: Duration,
}

impl SyncReport {
    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &SyncReport) -> bool {
        SyncReport {
            elapsed: Duration::ZERO,
            ..self.clone()
        } == SyncReport {
            elapsed: Duration::ZERO,
            ..other.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub partner_report: SyncReport,
    pub attacker_synced: bool,
    pub attacker_mean_overlap: f64,
    pub key_fingerprint_e: u64,
}

/// Two partners (and optionally an eavesdropper) driven in lockstep.
#[derive(Debug, Clone)]
pub struct LocalSession {
    cfg: SessionConfig,
    inputs: SeededGenerator,
    a: PartnerState,
    b: PartnerState,
    eavesdropper: Option<EavesdropperState>,
}

impl LocalSession {
    pub fn new(cfg: SessionConfig) -> Result<Self, SessionError> {
        cfg.validate()?;
        let partner = |seed| {
            PartnerState::new(
                SeededGenerator::new(seed).gen_weights(cfg.params),
                cfg.max_rounds,
                cfg.agreement_window,
            )
        };
        Ok(Self {
            cfg,
            inputs: SeededGenerator::new(cfg.input_seed),
            a: partner(cfg.weight_seed_a),
            b: partner(cfg.weight_seed_b),
            eavesdropper: None,
        })
    }

    /// Adds a listener seeded from `weight_seed_e`.
    pub fn with_eavesdropper(mut self) -> Self {
        let w = SeededGenerator::new(self.cfg.weight_seed_e).gen_weights(self.cfg.params);
        self.eavesdropper = Some(EavesdropperState::new(w));
        self
    }

    pub fn partner_a(&self) -> &PartnerState {
        &self.a
    }

    pub fn partner_b(&self) -> &PartnerState {
        &self.b
    }

    pub fn eavesdropper(&self) -> Option<&EavesdropperState> {
        self.eavesdropper.as_ref()
    }

    /// Plays one round. Returns `false` once the session has finished.
    pub fn step(&mut self) -> Result<bool, SessionError> {
        if self.a.status() != PartnerStatus::Running {
            return Ok(false);
        }
        let x = self.inputs.gen_input(self.cfg.params);
        let (tau_a, trace_a) = self.a.partner_round(&x)?;
        let (tau_b, trace_b) = self.b.partner_round(&x)?;
        if let Some(e) = self.eavesdropper.as_mut() {
            e.eavesdrop_round(&x, tau_a, tau_b)?;
        }
        self.a.apply_peer_output(&x, &trace_a, tau_b)?;
        self.b.apply_peer_output(&x, &trace_b, tau_a)?;
        if self.a.probe_due() || self.b.probe_due() {
            let matched = self.a.fingerprint() == self.b.fingerprint();
            self.a.resolve_probe(matched)?;
            self.b.resolve_probe(matched)?;
        }
        Ok(self.a.status() == PartnerStatus::Running)
    }

    pub fn run(&mut self) -> Result<SyncReport, SessionError> {
        let start = Instant::now();
        while self.step()? {}
        Ok(self.report(start.elapsed()))
    }

    fn report(&self, elapsed: Duration) -> SyncReport {
        SyncReport {
            synced: self.a.status() == PartnerStatus::Synced,
            rounds_used: self.a.rounds_elapsed(),
            updates_applied: self.a.updates_applied(),
            key_fingerprint_a: self.a.fingerprint(),
            key_fingerprint_b: self.b.fingerprint(),
            elapsed,
        }
    }
}

/// Runs A and B to confirmed synchronization or the round cap.
pub fn run_local_session(cfg: SessionConfig) -> Result<SyncReport, SessionError> {
    LocalSession::new(cfg)?.run()
}

/// As [`run_local_session`], with an eavesdropper watching every round.
pub fn run_attack_session(cfg: SessionConfig) -> Result<AttackReport, SessionError> {
    let mut session = LocalSession::new(cfg)?.with_eavesdropper();
    let partner_report = session.run()?;
    let e = session.eavesdropper().expect("eavesdropper attached");
    let a = session.partner_a().weights();
    Ok(AttackReport {
        partner_report,
        attacker_synced: e.weights() == a,
        attacker_mean_overlap: mean_overlap(e.weights(), a)?,
        key_fingerprint_e: e.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpm::LearningRule;

    fn params() -> TpmParams {
        TpmParams::new(3, 4, 3, LearningRule::Hebbian).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut cfg = SessionConfig::new(params(), 1, [2, 3, 4]);
        assert!(cfg.validate().is_ok());
        cfg.agreement_window = 0;
        assert!(matches!(
            cfg.validate(),
            Err(SessionError::ConfigInvalid(_))
        ));
        cfg.agreement_window = 10;
        cfg.max_rounds = 9;
        assert!(run_local_session(cfg).is_err());
    }

    #[test]
    fn disagreement_resets_streak() {
        let p = params();
        let mut g = SeededGenerator::new(3);
        let mut s = PartnerState::new(g.gen_weights(p), 100, 5);
        let x = g.gen_input(p);
        let (tau, trace) = s.partner_round(&x).unwrap();
        s.apply_peer_output(&x, &trace, tau).unwrap();
        assert_eq!(s.consecutive_agreements(), 1);
        let x = g.gen_input(p);
        let (tau, trace) = s.partner_round(&x).unwrap();
        let mid = s.weights().clone();
        s.apply_peer_output(&x, &trace, tau * Spin::Minus).unwrap();
        assert_eq!(s.consecutive_agreements(), 0);
        assert_eq!(s.weights(), &mid);
        assert_eq!(s.rounds_elapsed(), 2);
        assert_eq!(s.updates_applied(), 1);
    }

    #[test]
    fn window_makes_probe_due() {
        let p = params();
        let mut g = SeededGenerator::new(8);
        let mut s = PartnerState::new(g.gen_weights(p), 100, 3);
        for round in 1..=3 {
            assert!(!s.probe_due());
            let x = g.gen_input(p);
            let (tau, trace) = s.partner_round(&x).unwrap();
            s.apply_peer_output(&x, &trace, tau).unwrap();
            assert_eq!(s.consecutive_agreements(), round);
        }
        assert!(s.probe_due());
        s.resolve_probe(false).unwrap();
        assert!(!s.probe_due());
        assert_eq!(s.status(), PartnerStatus::Running);
    }

    #[test]
    fn synced_partner_rejects_rounds() {
        let p = params();
        let mut g = SeededGenerator::new(8);
        let mut s = PartnerState::new(g.gen_weights(p), 100, 1);
        let x = g.gen_input(p);
        let (tau, trace) = s.partner_round(&x).unwrap();
        s.apply_peer_output(&x, &trace, tau).unwrap();
        s.resolve_probe(true).unwrap();
        assert_eq!(s.status(), PartnerStatus::Synced);
        assert_eq!(
            s.partner_round(&x).unwrap_err(),
            SessionError::InvalidState(PartnerStatus::Synced)
        );
    }

    #[test]
    fn identical_partners_tie() {
        let p = params();
        let mut g = SeededGenerator::new(12);
        let w = g.gen_weights(p);
        let a = PartnerState::new(w.clone(), 100, 5);
        let b = PartnerState::new(w, 100, 5);
        let x = g.gen_input(p);
        assert_eq!(
            a.partner_round(&x).unwrap().0,
            b.partner_round(&x).unwrap().0
        );
    }

    #[test]
    fn presynchronized_start() {
        let cfg = SessionConfig::new(params(), 1, [9, 9, 4]);
        let r = run_local_session(cfg).unwrap();
        assert!(r.synced);
        assert_eq!(r.rounds_used, DEFAULT_AGREEMENT_WINDOW);
        assert_eq!(r.key_fingerprint_a, r.key_fingerprint_b);
    }

    #[test]
    fn one_round_budget_times_out() {
        let mut cfg = SessionConfig::new(params(), 1, [2, 3, 4]);
        cfg.max_rounds = 1;
        cfg.agreement_window = 1;
        let r = run_local_session(cfg).unwrap();
        assert!(!r.synced);
        assert_eq!(r.rounds_used, 1);
    }

    #[test]
    fn eavesdropper_ignores_disagreement() {
        let p = params();
        let mut g = SeededGenerator::new(21);
        let mut e = EavesdropperState::new(g.gen_weights(p));
        let before = e.weights().clone();
        let x = g.gen_input(p);
        e.eavesdrop_round(&x, Spin::Plus, Spin::Minus).unwrap();
        assert_eq!(e.weights(), &before);
        assert_eq!(e.rounds_observed(), 1);
    }

    #[test]
    fn lucky_eavesdropper_start() {
        let cfg = SessionConfig::new(params(), 5, [6, 7, 6]);
        let r = run_attack_session(cfg).unwrap();
        assert!(r.partner_report.synced);
        assert!(r.attacker_synced);
        assert_eq!(r.key_fingerprint_e, r.partner_report.key_fingerprint_a);
    }

    #[test]
    fn attack_report_on_timeout() {
        let mut cfg = SessionConfig::new(params(), 5, [6, 7, 8]);
        cfg.max_rounds = 3;
        cfg.agreement_window = 3;
        let r = run_attack_session(cfg).unwrap();
        assert!(!r.partner_report.synced);
        assert!(!r.attacker_synced);
        assert!((-1.0..=1.0).contains(&r.attacker_mean_overlap));
    }

    #[test]
    fn replay_is_identical() {
        let cfg = SessionConfig::new(
            TpmParams::new(3, 11, 3, LearningRule::Hebbian).unwrap(),
            1,
            [2, 3, 4],
        );
        let a = run_local_session(cfg).unwrap();
        let b = run_local_session(cfg).unwrap();
        assert!(a.same_outcome(&b));
        assert!(a.synced);
        assert!(a.updates_applied <= a.rounds_used);
    }
}
