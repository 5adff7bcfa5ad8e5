//! SplitMix64 stream used for common inputs and initial weights.
//!
//! Every entry of an input vector or weight matrix consumes exactly one
//! 64-bit draw, in row-major order, so a seed fully determines a transcript.

use crate::tpm::{InputVector, Spin, TpmParams, WeightMatrix};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededGenerator {
    state: u64,
}

impl SeededGenerator {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// One `±1` entry per draw: low bit set gives `+1`.
    pub fn gen_input(&mut self, params: TpmParams) -> InputVector {
        let x = (0..params.len())
            .map(|_| {
                if self.next_u64() & 1 == 1 {
                    Spin::Plus
                } else {
                    Spin::Minus
                }
            })
            .collect();
        InputVector::new(params, x).expect("length matches params")
    }

    /// One weight per draw: `(draw mod (2l+1)) - l`.
    pub fn gen_weights(&mut self, params: TpmParams) -> WeightMatrix {
        let l = params.l() as u64;
        let span = 2 * l + 1;
        let values: Vec<i64> = (0..params.len())
            .map(|_| (self.next_u64() % span) as i64 - l as i64)
            .collect();
        WeightMatrix::from_values(params, &values).expect("values lie in [-l, l]")
    }
}
