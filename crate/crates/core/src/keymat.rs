//! Key bytes and fingerprints derived from synchronized weights.

use thiserror::Error;

use crate::tpm::{TpmParams, WeightMatrix, MAX_WEIGHT_BOUND};

const FNV_OFFSET_BASIS: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyError {
    #[error("weight bound {0} does not fit the one-octet encoding")]
    BoundExceeded(u8),
    #[error("expected {expected} key octets, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("key octet {value} at {index} exceeds 2l")]
    OctetOutOfRange { index: usize, value: u8 },
}

/// Canonical key octets plus their FNV-1a fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KeyMaterial {
    bytes: Vec<u8>,
    fingerprint: u64,
}

impl KeyMaterial {
    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Lowercase hex of the key octets.
    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(data: &[u8]) -> u64 {
    data.iter().fold(FNV_OFFSET_BASIS, |h, &b| {
        (h ^ b as u64).wrapping_mul(FNV_PRIME)
    })
}

/// Row-major octets, each weight shifted by `l` into `[0, 2l]`.
pub fn serialize_weights(w: &WeightMatrix) -> Result<Vec<u8>, KeyError> {
    let l = w.params().l();
    if l > MAX_WEIGHT_BOUND {
        return Err(KeyError::BoundExceeded(l));
    }
    Ok(w.as_slice()
        .iter()
        .map(|&v| (v as i16 + l as i16) as u8)
        .collect())
}

/// Inverse of [`serialize_weights`].
pub fn deserialize_weights(params: TpmParams, bytes: &[u8]) -> Result<WeightMatrix, KeyError> {
    if bytes.len() != params.len() {
        return Err(KeyError::LengthMismatch {
            expected: params.len(),
            got: bytes.len(),
        });
    }
    let l = params.l() as i64;
    let values = bytes
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value as i64 > 2 * l {
                Err(KeyError::OctetOutOfRange { index, value })
            } else {
                Ok(value as i64 - l)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WeightMatrix::from_values(params, &values).expect("octets checked against 2l"))
}

pub fn derive_key(w: &WeightMatrix) -> Result<KeyMaterial, KeyError> {
    let bytes = serialize_weights(w)?;
    let fingerprint = fnv1a64(&bytes);
    Ok(KeyMaterial { bytes, fingerprint })
}

/// Fingerprint of the canonical key bytes.
pub fn weight_fingerprint(w: &WeightMatrix) -> u64 {
    derive_key(w)
        .expect("TpmParams caps l at the one-octet bound")
        .fingerprint
}
