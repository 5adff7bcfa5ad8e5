//! Framed binary protocol spoken between the KDC and its clients.
//!
//! A frame is one type octet, a 4-octet big-endian payload length, then the
//! payload. All integers are big-endian.
//!
//! ```text
//! 0x01 HELLO       session_id u64 | role u8 | k u16 | n u16 | l u8 | rule u8
//! 0x02 START       round u32
//! 0x03 INPUT       round u32 | packed inputs, MSB first, bit 1 = +1
//! 0x04 OUTPUT      round u32 | tau (0x01 = +1, 0xFF = -1)
//! 0x05 SYNC_PROBE  round u32 | fingerprint u64
//! 0x06 SYNC_OK     (empty)
//! 0x07 SYNC_FAIL   (empty)
//! 0x08 ABORT       reason u8
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::tpm::{InputVector, LearningRule, Spin, TpmParams};

pub const HEADER_LEN: usize = 5;
/// Default payload cap, 1 MiB.
pub const DEFAULT_MAX_PAYLOAD: usize = 1 << 20;

pub const MSG_HELLO: u8 = 0x01;
pub const MSG_START: u8 = 0x02;
pub const MSG_INPUT: u8 = 0x03;
pub const MSG_OUTPUT: u8 = 0x04;
pub const MSG_SYNC_PROBE: u8 = 0x05;
pub const MSG_SYNC_OK: u8 = 0x06;
pub const MSG_SYNC_FAIL: u8 = 0x07;
pub const MSG_ABORT: u8 = 0x08;

const TAU_PLUS: u8 = 0x01;
const TAU_MINUS: u8 = 0xFF;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("payload of {len} bytes exceeds the {limit}-byte limit")]
    Oversize { len: usize, limit: usize },
    #[error("malformed payload for type 0x{msg_type:02x}: {reason}")]
    MalformedPayload { msg_type: u8, reason: String },
}

fn malformed(msg_type: u8, reason: impl Into<String>) -> WireError {
    WireError::MalformedPayload {
        msg_type,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    A,
    B,
    Eavesdropper,
}

impl Role {
    pub fn octet(self) -> u8 {
        match self {
            Role::A => 0x41,
            Role::B => 0x42,
            Role::Eavesdropper => 0x45,
        }
    }

    pub fn from_octet(b: u8) -> Option<Self> {
        match b {
            0x41 => Some(Role::A),
            0x42 => Some(Role::B),
            0x45 => Some(Role::Eavesdropper),
            _ => None,
        }
    }
}

/// ABORT reason codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbortReason {
    ParamMismatch,
    RoundCap,
    PeerFailure,
    LateJoin,
    ProtocolViolation,
    Other(u8),
}

impl AbortReason {
    pub fn code(self) -> u8 {
        match self {
            AbortReason::ParamMismatch => 1,
            AbortReason::RoundCap => 2,
            AbortReason::PeerFailure => 3,
            AbortReason::LateJoin => 4,
            AbortReason::ProtocolViolation => 5,
            AbortReason::Other(c) => c,
        }
    }

    pub fn from_code(c: u8) -> Self {
        match c {
            1 => AbortReason::ParamMismatch,
            2 => AbortReason::RoundCap,
            3 => AbortReason::PeerFailure,
            4 => AbortReason::LateJoin,
            5 => AbortReason::ProtocolViolation,
            other => AbortReason::Other(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hello {
    pub session_id: u64,
    pub role: Role,
    pub k: u16,
    pub n: u16,
    pub l: u8,
    pub rule: LearningRule,
}

impl Hello {
    pub fn for_params(session_id: u64, role: Role, params: &TpmParams) -> Self {
        Self {
            session_id,
            role,
            k: params.k() as u16,
            n: params.n() as u16,
            l: params.l(),
            rule: params.rule(),
        }
    }

    /// Validated machine parameters announced in this HELLO.
    pub fn params(&self) -> Option<TpmParams> {
        TpmParams::new(self.k as usize, self.n as usize, self.l, self.rule).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello(Hello),
    Start { round: u32 },
    Input { round: u32, packed: Vec<u8> },
    Output { round: u32, tau: Spin },
    SyncProbe { round: u32, fingerprint: u64 },
    SyncOk,
    SyncFail,
    Abort { reason: AbortReason },
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::Hello(_) => MSG_HELLO,
            Message::Start { .. } => MSG_START,
            Message::Input { .. } => MSG_INPUT,
            Message::Output { .. } => MSG_OUTPUT,
            Message::SyncProbe { .. } => MSG_SYNC_PROBE,
            Message::SyncOk => MSG_SYNC_OK,
            Message::SyncFail => MSG_SYNC_FAIL,
            Message::Abort { .. } => MSG_ABORT,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Hello(_) => "HELLO",
            Message::Start { .. } => "START",
            Message::Input { .. } => "INPUT",
            Message::Output { .. } => "OUTPUT",
            Message::SyncProbe { .. } => "SYNC_PROBE",
            Message::SyncOk => "SYNC_OK",
            Message::SyncFail => "SYNC_FAIL",
            Message::Abort { .. } => "ABORT",
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut p = Vec::new();
        match self {
            Message::Hello(h) => {
                p.extend_from_slice(&h.session_id.to_be_bytes());
                p.push(h.role.octet());
                p.extend_from_slice(&h.k.to_be_bytes());
                p.extend_from_slice(&h.n.to_be_bytes());
                p.push(h.l);
                p.push(h.rule.code());
            }
            Message::Start { round } => p.extend_from_slice(&round.to_be_bytes()),
            Message::Input { round, packed } => {
                p.extend_from_slice(&round.to_be_bytes());
                p.extend_from_slice(packed);
            }
            Message::Output { round, tau } => {
                p.extend_from_slice(&round.to_be_bytes());
                p.push(match tau {
                    Spin::Plus => TAU_PLUS,
                    Spin::Minus => TAU_MINUS,
                });
            }
            Message::SyncProbe { round, fingerprint } => {
                p.extend_from_slice(&round.to_be_bytes());
                p.extend_from_slice(&fingerprint.to_be_bytes());
            }
            Message::SyncOk | Message::SyncFail => {}
            Message::Abort { reason } => p.push(reason.code()),
        }
        p
    }
}

pub fn encode(m: &Message) -> Result<Vec<u8>, WireError> {
    encode_with_limit(m, DEFAULT_MAX_PAYLOAD)
}

pub fn encode_with_limit(m: &Message, limit: usize) -> Result<Vec<u8>, WireError> {
    let payload = m.payload();
    if payload.len() > limit || payload.len() > u32::MAX as usize {
        return Err(WireError::Oversize {
            len: payload.len(),
            limit,
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.push(m.msg_type());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Decodes the first frame in `bytes`, returning the message and the number
/// of bytes it occupied.
pub fn decode(bytes: &[u8]) -> Result<(Message, usize), WireError> {
    decode_with_limit(bytes, DEFAULT_MAX_PAYLOAD)
}

pub fn decode_with_limit(bytes: &[u8], limit: usize) -> Result<(Message, usize), WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let (msg_type, len) = parse_header(bytes[..HEADER_LEN].try_into().unwrap(), limit)?;
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Err(WireError::Truncated {
            needed: total,
            available: bytes.len(),
        });
    }
    let msg = decode_payload(msg_type, &bytes[HEADER_LEN..total])?;
    Ok((msg, total))
}

fn parse_header(header: &[u8; HEADER_LEN], limit: usize) -> Result<(u8, usize), WireError> {
    let msg_type = header[0];
    if !(MSG_HELLO..=MSG_ABORT).contains(&msg_type) {
        return Err(WireError::UnknownType(msg_type));
    }
    let len = u32::from_be_bytes(header[1..].try_into().unwrap()) as usize;
    if len > limit {
        return Err(WireError::Oversize { len, limit });
    }
    Ok((msg_type, len))
}

fn expect_len(msg_type: u8, p: &[u8], len: usize) -> Result<(), WireError> {
    if p.len() == len {
        Ok(())
    } else {
        Err(malformed(
            msg_type,
            format!("expected {len} payload bytes, got {}", p.len()),
        ))
    }
}

fn be_u32(p: &[u8]) -> u32 {
    u32::from_be_bytes(p[..4].try_into().unwrap())
}

fn be_u64(p: &[u8]) -> u64 {
    u64::from_be_bytes(p[..8].try_into().unwrap())
}

fn decode_payload(msg_type: u8, p: &[u8]) -> Result<Message, WireError> {
    Ok(match msg_type {
        MSG_HELLO => {
            expect_len(msg_type, p, 15)?;
            let role =
                Role::from_octet(p[8]).ok_or_else(|| malformed(msg_type, "bad role octet"))?;
            let rule = LearningRule::from_code(p[14])
                .ok_or_else(|| malformed(msg_type, "bad rule octet"))?;
            Message::Hello(Hello {
                session_id: be_u64(p),
                role,
                k: u16::from_be_bytes([p[9], p[10]]),
                n: u16::from_be_bytes([p[11], p[12]]),
                l: p[13],
                rule,
            })
        }
        MSG_START => {
            expect_len(msg_type, p, 4)?;
            Message::Start { round: be_u32(p) }
        }
        MSG_INPUT => {
            if p.len() < 4 {
                return Err(malformed(msg_type, "missing round number"));
            }
            Message::Input {
                round: be_u32(p),
                packed: p[4..].to_vec(),
            }
        }
        MSG_OUTPUT => {
            expect_len(msg_type, p, 5)?;
            let tau = match p[4] {
                TAU_PLUS => Spin::Plus,
                TAU_MINUS => Spin::Minus,
                other => return Err(malformed(msg_type, format!("bad tau octet 0x{other:02x}"))),
            };
            Message::Output {
                round: be_u32(p),
                tau,
            }
        }
        MSG_SYNC_PROBE => {
            expect_len(msg_type, p, 12)?;
            Message::SyncProbe {
                round: be_u32(p),
                fingerprint: be_u64(&p[4..]),
            }
        }
        MSG_SYNC_OK => {
            expect_len(msg_type, p, 0)?;
            Message::SyncOk
        }
        MSG_SYNC_FAIL => {
            expect_len(msg_type, p, 0)?;
            Message::SyncFail
        }
        MSG_ABORT => {
            expect_len(msg_type, p, 1)?;
            Message::Abort {
                reason: AbortReason::from_code(p[0]),
            }
        }
        other => return Err(WireError::UnknownType(other)),
    })
}

/// Packs `±1` inputs into `ceil(k*n/8)` octets, most significant bit first.
pub fn pack_input(x: &InputVector) -> Vec<u8> {
    let entries = x.as_slice();
    let mut out = vec![0u8; entries.len().div_ceil(8)];
    for (idx, &s) in entries.iter().enumerate() {
        if s == Spin::Plus {
            out[idx / 8] |= 0x80 >> (idx % 8);
        }
    }
    out
}

/// Inverse of [`pack_input`]; rejects a wrong length or non-zero padding.
pub fn unpack_input(params: TpmParams, packed: &[u8]) -> Result<InputVector, WireError> {
    let entries = params.len();
    let expected = entries.div_ceil(8);
    if packed.len() != expected {
        return Err(malformed(
            MSG_INPUT,
            format!(
                "expected {expected} packed octets for {entries} inputs, got {}",
                packed.len()
            ),
        ));
    }
    if !entries.is_multiple_of(8) {
        let pad_mask = 0xFFu8 >> (entries % 8);
        if packed[expected - 1] & pad_mask != 0 {
            return Err(malformed(MSG_INPUT, "non-zero padding bits"));
        }
    }
    let x = (0..entries)
        .map(|idx| {
            if packed[idx / 8] & (0x80 >> (idx % 8)) != 0 {
                Spin::Plus
            } else {
                Spin::Minus
            }
        })
        .collect();
    Ok(InputVector::new(params, x).expect("length matches params"))
}

#[derive(Debug, Error)]
pub enum FrameIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Reads exactly one frame from a byte stream.
pub fn read_message<R: Read>(r: &mut R, limit: usize) -> Result<Message, FrameIoError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    let (msg_type, len) = parse_header(&header, limit)?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(decode_payload(msg_type, &payload)?)
}

pub fn write_message<W: Write>(w: &mut W, m: &Message, limit: usize) -> Result<(), FrameIoError> {
    let bytes = encode_with_limit(m, limit)?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
