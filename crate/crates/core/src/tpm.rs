//! Tree parity machine arithmetic.
//!
//! A machine has `k` hidden units, each wired to `n` inputs through integer
//! weights bounded by `[-l, +l]`. Its output bit is the product of the signs
//! of the hidden units' local fields. Everything here is a pure function of
//! its arguments; the only mutation is the in-place weight update.

use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use thiserror::Error;

/// Largest admissible weight bound. Keeps one weight per key octet.
pub const MAX_WEIGHT_BOUND: u8 = 127;

/// Upper limit on `k * n * l`, which bounds every local field.
const MAX_FIELD_MAGNITUDE: u128 = 1 << 60;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TpmError {
    #[error("dimension mismatch: expected {expected_k}x{expected_n}, got {got_k}x{got_n}")]
    DimensionMismatch {
        expected_k: usize,
        expected_n: usize,
        got_k: usize,
        got_n: usize,
    },
    #[error("invalid machine parameters: {0}")]
    InvalidParams(String),
    #[error("entry {index} = {value} is outside the admissible range")]
    OutOfRange { index: usize, value: i64 },
}

/// Weight update rule applied on rounds where both machines agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LearningRule {
    #[default]
    Hebbian,
    AntiHebbian,
    RandomWalk,
}

impl LearningRule {
    pub const ALL: [LearningRule; 3] = [
        LearningRule::Hebbian,
        LearningRule::AntiHebbian,
        LearningRule::RandomWalk,
    ];

    /// Wire code used in HELLO frames.
    pub fn code(self) -> u8 {
        match self {
            LearningRule::Hebbian => 0,
            LearningRule::AntiHebbian => 1,
            LearningRule::RandomWalk => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LearningRule::Hebbian),
            1 => Some(LearningRule::AntiHebbian),
            2 => Some(LearningRule::RandomWalk),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LearningRule::Hebbian => "hebbian",
            LearningRule::AntiHebbian => "anti-hebbian",
            LearningRule::RandomWalk => "random-walk",
        }
    }
}

impl fmt::Display for LearningRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearningRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hebbian" => Ok(LearningRule::Hebbian),
            "anti-hebbian" | "antihebbian" => Ok(LearningRule::AntiHebbian),
            "random-walk" | "randomwalk" => Ok(LearningRule::RandomWalk),
            other => Err(format!(
                "unknown learning rule `{other}` (expected hebbian, anti-hebbian or random-walk)"
            )),
        }
    }
}

/// A value in `{-1, +1}`: an input entry, a hidden-unit sign or an output bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(i8)]
pub enum Spin {
    Minus = -1,
    Plus = 1,
}

impl Spin {
    /// Sign with the convention `sign(0) = -1`.
    pub fn of(value: i64) -> Self {
        if value > 0 {
            Spin::Plus
        } else {
            Spin::Minus
        }
    }

    pub fn from_i8(value: i8) -> Option<Self> {
        match value {
            1 => Some(Spin::Plus),
            -1 => Some(Spin::Minus),
            _ => None,
        }
    }

    pub fn value(self) -> i64 {
        self as i8 as i64
    }
}

impl Mul for Spin {
    type Output = Spin;

    fn mul(self, rhs: Spin) -> Spin {
        if self == rhs {
            Spin::Plus
        } else {
            Spin::Minus
        }
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spin::Plus => f.write_str("+1"),
            Spin::Minus => f.write_str("-1"),
        }
    }
}

/// Machine geometry and learning rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TpmParams {
    k: usize,
    n: usize,
    l: u8,
    rule: LearningRule,
}

impl TpmParams {
    pub fn new(k: usize, n: usize, l: u8, rule: LearningRule) -> Result<Self, TpmError> {
        if k == 0 {
            return Err(TpmError::InvalidParams("k must be at least 1".into()));
        }
        if n == 0 {
            return Err(TpmError::InvalidParams("n must be at least 1".into()));
        }
        if l == 0 || l > MAX_WEIGHT_BOUND {
            return Err(TpmError::InvalidParams(format!(
                "l must lie in 1..={MAX_WEIGHT_BOUND}, got {l}"
            )));
        }
        let magnitude = (k as u128)
            .checked_mul(n as u128)
            .and_then(|kn| kn.checked_mul(l as u128));
        match magnitude {
            Some(m) if m <= MAX_FIELD_MAGNITUDE => {}
            _ => {
                return Err(TpmError::InvalidParams(format!(
                    "k*n*l must not exceed 2^60 (k={k}, n={n}, l={l})"
                )))
            }
        }
        Ok(Self { k, n, l, rule })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> u8 {
        self.l
    }

    pub fn rule(&self) -> LearningRule {
        self.rule
    }

    /// Total number of weights, `k * n`.
    pub fn len(&self) -> usize {
        self.k * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn with_rule(self, rule: LearningRule) -> Self {
        Self { rule, ..self }
    }

    /// Same `(k, n)` shape, ignoring `l` and the rule.
    pub fn same_shape(&self, other: &TpmParams) -> bool {
        self.k == other.k && self.n == other.n
    }

    fn check_shape(&self, other: &TpmParams) -> Result<(), TpmError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(TpmError::DimensionMismatch {
                expected_k: self.k,
                expected_n: self.n,
                got_k: other.k,
                got_n: other.n,
            })
        }
    }
}

/// Synaptic weights, stored row-major (`i * n + j`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WeightMatrix {
    params: TpmParams,
    w: Vec<i8>,
}

impl WeightMatrix {
    /// All-zero weights.
    pub fn zeros(params: TpmParams) -> Self {
        Self {
            params,
            w: vec![0; params.len()],
        }
    }

    /// Builds a matrix from row-major values, rejecting anything outside `[-l, l]`.
    pub fn from_values(params: TpmParams, values: &[i64]) -> Result<Self, TpmError> {
        if values.len() != params.len() {
            return Err(TpmError::InvalidParams(format!(
                "expected {} weights, got {}",
                params.len(),
                values.len()
            )));
        }
        let l = params.l as i64;
        let w = values
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                if (-l..=l).contains(&value) {
                    Ok(value as i8)
                } else {
                    Err(TpmError::OutOfRange { index, value })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { params, w })
    }

    pub fn params(&self) -> &TpmParams {
        &self.params
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.w[i * self.params.n + j]
    }

    pub fn row(&self, i: usize) -> &[i8] {
        let n = self.params.n;
        &self.w[i * n..(i + 1) * n]
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.w
    }

    /// Applies the learning rule in place. See [`update_weights`].
    pub fn update(
        &mut self,
        x: &InputVector,
        trace: &RoundTrace,
        tau_peer: Spin,
    ) -> Result<bool, TpmError> {
        self.params.check_shape(&x.params)?;
        if trace.sigma.len() != self.params.k {
            return Err(TpmError::DimensionMismatch {
                expected_k: self.params.k,
                expected_n: self.params.n,
                got_k: trace.sigma.len(),
                got_n: self.params.n,
            });
        }
        if trace.tau != tau_peer {
            return Ok(false);
        }
        self.learn(x, &trace.sigma, trace.tau);
        Ok(true)
    }

    /// Rule application without the output-agreement gate: every row whose
    /// hidden sign equals `tau` moves by one step and is clamped.
    pub(crate) fn learn(&mut self, x: &InputVector, sigma: &[Spin], tau: Spin) {
        let n = self.params.n;
        let l = self.params.l as i64;
        let rule = self.params.rule;
        for (i, &s) in sigma.iter().enumerate() {
            if s != tau {
                continue;
            }
            let row = &mut self.w[i * n..(i + 1) * n];
            let inputs = &x.x[i * n..(i + 1) * n];
            for (w, &xi) in row.iter_mut().zip(inputs) {
                let step = match rule {
                    LearningRule::Hebbian => xi.value() * tau.value(),
                    LearningRule::AntiHebbian => -xi.value() * tau.value(),
                    LearningRule::RandomWalk => xi.value(),
                };
                *w = clamp(*w as i64 + step, l) as i8;
            }
        }
    }
}

/// Common input for one round, row-major, entries in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InputVector {
    params: TpmParams,
    x: Vec<Spin>,
}

impl InputVector {
    pub fn new(params: TpmParams, x: Vec<Spin>) -> Result<Self, TpmError> {
        if x.len() != params.len() {
            return Err(TpmError::InvalidParams(format!(
                "expected {} inputs, got {}",
                params.len(),
                x.len()
            )));
        }
        Ok(Self { params, x })
    }

    /// Builds an input from `±1` integers.
    pub fn from_values(params: TpmParams, values: &[i64]) -> Result<Self, TpmError> {
        let x = values
            .iter()
            .enumerate()
            .map(|(index, &value)| match value {
                1 => Ok(Spin::Plus),
                -1 => Ok(Spin::Minus),
                _ => Err(TpmError::OutOfRange { index, value }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(params, x)
    }

    pub fn params(&self) -> &TpmParams {
        &self.params
    }

    pub fn get(&self, i: usize, j: usize) -> Spin {
        self.x[i * self.params.n + j]
    }

    pub fn as_slice(&self) -> &[Spin] {
        &self.x
    }
}

/// Local fields, hidden signs and output bit of one evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundTrace {
    pub sums: Vec<i64>,
    pub sigma: Vec<Spin>,
    pub tau: Spin,
}

/// Evaluates the machine on `x`.
pub fn compute_output(w: &WeightMatrix, x: &InputVector) -> Result<RoundTrace, TpmError> {
    w.params.check_shape(&x.params)?;
    let n = w.params.n;
    let sums: Vec<i64> =
        w.w.chunks_exact(n)
            .zip(x.x.chunks_exact(n))
            .map(|(wr, xr)| {
                wr.iter()
                    .zip(xr)
                    .map(|(&wi, &xi)| wi as i64 * xi.value())
                    .sum()
            })
            .collect();
    let sigma: Vec<Spin> = sums.iter().map(|&s| Spin::of(s)).collect();
    let tau = sigma.iter().fold(Spin::Plus, |acc, &s| acc * s);
    Ok(RoundTrace { sums, sigma, tau })
}

/// Saturates `v` into `[-l, l]`.
pub fn clamp(v: i64, l: i64) -> i64 {
    v.clamp(-l, l)
}

/// Returns `w` after one learning step. Identity when `trace.tau != tau_peer`.
pub fn update_weights(
    w: &WeightMatrix,
    x: &InputVector,
    trace: &RoundTrace,
    tau_peer: Spin,
) -> Result<WeightMatrix, TpmError> {
    let mut next = w.clone();
    next.update(x, trace, tau_peer)?;
    Ok(next)
}

/// Per-row normalized dot product. A row that is all zero in either matrix
/// has overlap 0.
pub fn overlap(wa: &WeightMatrix, wb: &WeightMatrix) -> Result<Vec<f64>, TpmError> {
    wa.params.check_shape(&wb.params)?;
    let n = wa.params.n;
    Ok(wa
        .w
        .chunks_exact(n)
        .zip(wb.w.chunks_exact(n))
        .map(|(ra, rb)| {
            let (mut dot, mut na, mut nb) = (0i64, 0i64, 0i64);
            for (&a, &b) in ra.iter().zip(rb) {
                let (a, b) = (a as i64, b as i64);
                dot += a * b;
                na += a * a;
                nb += b * b;
            }
            if na == 0 || nb == 0 {
                0.0
            } else {
                dot as f64 / ((na as f64) * (nb as f64)).sqrt()
            }
        })
        .collect())
}

/// Mean of [`overlap`] across hidden units.
pub fn mean_overlap(wa: &WeightMatrix, wb: &WeightMatrix) -> Result<f64, TpmError> {
    let rows = overlap(wa, wb)?;
    Ok(rows.iter().sum::<f64>() / rows.len() as f64)
}
