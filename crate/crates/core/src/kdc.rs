//! Key Distribution Centre service and its party / eavesdropper clients.
//!
//! Per session the KDC waits for HELLO from partner A and partner B (any
//! number of eavesdroppers may join before that), then runs lockstep rounds:
//!
//! 1. INPUT to everyone, drawn from the session's input stream.
//! 2. OUTPUT from A and from B.
//! 3. A's OUTPUT relayed to B, B's to A; eavesdroppers get A's then B's.
//! 4. When the agreement streak reaches the window, both partners send
//!    SYNC_PROBE; each probe is relayed to the other partner and to
//!    eavesdroppers, then SYNC_OK or SYNC_FAIL is broadcast.
//!
//! Eavesdroppers receive an echo of the session HELLO (so they learn the
//! machine geometry) before START. They are fed through per-connection
//! writer threads and can never stall the partners.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use thiserror::Error;

use crate::keymat::{derive_key, KeyMaterial};
use crate::rng::SeededGenerator;
use crate::session::{EavesdropperState, PartnerState, SessionError, SyncReport};
use crate::tpm::{InputVector, LearningRule, Spin, TpmParams, WeightMatrix};
use crate::wire::{
    encode_with_limit, pack_input, read_message, unpack_input, write_message, AbortReason,
    FrameIoError, Hello, Message, Role, DEFAULT_MAX_PAYLOAD,
};

pub const DEFAULT_IO_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum NetError {
    #[error("connection lost: {0}")]
    ConnectionLost(#[source] io::Error),
    #[error("timed out waiting for the next message")]
    Timeout,
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("session aborted by the KDC (reason {})", .0.code())]
    Aborted(AbortReason),
    #[error("invalid client config: {0}")]
    Config(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl From<FrameIoError> for NetError {
    fn from(e: FrameIoError) -> Self {
        match e {
            FrameIoError::Io(io) => match io.kind() {
                io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => NetError::Timeout,
                _ => NetError::ConnectionLost(io),
            },
            FrameIoError::Wire(w) => NetError::ProtocolViolation(w.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KdcConfig {
    pub max_rounds: u32,
    pub agreement_window: u32,
    /// Session `s` draws inputs from `input_seed + s` (wrapping).
    pub input_seed: u64,
    pub io_timeout: Duration,
    pub max_payload: usize,
}

impl Default for KdcConfig {
    fn default() -> Self {
        Self {
            max_rounds: 100_000,
            agreement_window: 50,
            input_seed: 0,
            io_timeout: DEFAULT_IO_TIMEOUT,
            max_payload: DEFAULT_MAX_PAYLOAD,
        }
    }
}

impl KdcConfig {
    pub fn session_input_seed(&self, session_id: u64) -> u64 {
        self.input_seed.wrapping_add(session_id)
    }
}

struct Joined {
    stream: TcpStream,
    hello: Hello,
}

#[derive(Default)]
struct Pending {
    a: Option<Joined>,
    b: Option<Joined>,
    eavesdroppers: Vec<TcpStream>,
}

enum Slot {
    Pending(Pending),
    Running,
    Closed,
}

type Registry = Arc<Mutex<HashMap<u64, Slot>>>;

pub struct KdcServer {
    listener: TcpListener,
    cfg: KdcConfig,
    shutdown: Arc<AtomicBool>,
    sessions: Registry,
}

/// Stops a running [`KdcServer::serve`] loop.
#[derive(Clone)]
pub struct ShutdownHandle {
    flag: Arc<AtomicBool>,
    addr: SocketAddr,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.flag.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
    }
}

impl KdcServer {
    pub fn bind<A: ToSocketAddrs>(addr: A, cfg: KdcConfig) -> io::Result<Self> {
        if cfg.agreement_window == 0 || cfg.max_rounds < cfg.agreement_window {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "max_rounds must be at least agreement_window, which must be at least 1",
            ));
        }
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            cfg,
            shutdown: Arc::new(AtomicBool::new(false)),
            sessions: Arc::new(Mutex::new(HashMap::new())),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn shutdown_handle(&self) -> io::Result<ShutdownHandle> {
        Ok(ShutdownHandle {
            flag: self.shutdown.clone(),
            addr: self.local_addr()?,
        })
    }

    /// Accepts connections until shut down. Each connection is handled on
    /// its own thread; a session runs on the thread of its last partner.
    pub fn serve(&self) -> io::Result<()> {
        info!("kdc listening on {}", self.local_addr()?);
        for conn in self.listener.incoming() {
            if self.shutdown.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let cfg = self.cfg;
                    let sessions = self.sessions.clone();
                    thread::spawn(move || {
                        if let Err(e) = handle_connection(stream, cfg, sessions) {
                            debug!("connection dropped during handshake: {e}");
                        }
                    });
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
        Ok(())
    }
}

fn send(stream: &mut TcpStream, m: &Message, cfg: &KdcConfig) -> Result<(), FrameIoError> {
    write_message(stream, m, cfg.max_payload)
}

fn refuse(mut stream: TcpStream, reason: AbortReason, cfg: &KdcConfig) {
    let _ = send(&mut stream, &Message::Abort { reason }, cfg);
}

fn handle_connection(
    mut stream: TcpStream,
    cfg: KdcConfig,
    sessions: Registry,
) -> Result<(), FrameIoError> {
    stream.set_read_timeout(Some(cfg.io_timeout))?;
    stream.set_write_timeout(Some(cfg.io_timeout))?;
    stream.set_nodelay(true)?;
    let hello = match read_message(&mut stream, cfg.max_payload)? {
        Message::Hello(h) => h,
        other => {
            debug!("expected HELLO, got {}", other.name());
            refuse(stream, AbortReason::ProtocolViolation, &cfg);
            return Ok(());
        }
    };
    let id = hello.session_id;
    let ready = {
        let mut table = sessions.lock().unwrap();
        let slot = table
            .entry(id)
            .or_insert_with(|| Slot::Pending(Pending::default()));
        let pending = match slot {
            Slot::Pending(p) => p,
            Slot::Running | Slot::Closed => {
                debug!("session {id}: refusing late {:?}", hello.role);
                refuse(stream, AbortReason::LateJoin, &cfg);
                return Ok(());
            }
        };
        let seat = match hello.role {
            Role::A => &mut pending.a,
            Role::B => &mut pending.b,
            Role::Eavesdropper => {
                pending.eavesdroppers.push(stream);
                return Ok(());
            }
        };
        if seat.is_some() {
            refuse(stream, AbortReason::ProtocolViolation, &cfg);
            return Ok(());
        }
        *seat = Some(Joined { stream, hello });
        if pending.a.is_some() && pending.b.is_some() {
            match std::mem::replace(slot, Slot::Running) {
                Slot::Pending(p) => Some(p),
                _ => unreachable!(),
            }
        } else {
            None
        }
    };
    if let Some(p) = ready {
        let a = p.a.expect("seat filled");
        let b = p.b.expect("seat filled");
        run_session(id, a, b, p.eavesdroppers, &cfg);
        sessions.lock().unwrap().insert(id, Slot::Closed);
    }
    Ok(())
}

/// Fan-out to eavesdroppers through writer threads.
struct Listeners {
    senders: Vec<mpsc::Sender<Arc<Vec<u8>>>>,
    max_payload: usize,
}

impl Listeners {
    fn spawn(streams: Vec<TcpStream>, max_payload: usize) -> Self {
        let senders = streams
            .into_iter()
            .map(|mut stream| {
                let (tx, rx) = mpsc::channel::<Arc<Vec<u8>>>();
                thread::spawn(move || {
                    use std::io::Write;
                    for frame in rx {
                        if stream.write_all(&frame).is_err() {
                            break;
                        }
                    }
                });
                tx
            })
            .collect();
        Self {
            senders,
            max_payload,
        }
    }

    fn send(&self, m: &Message) {
        if self.senders.is_empty() {
            return;
        }
        let frame = Arc::new(encode_with_limit(m, self.max_payload).expect("KDC frames fit"));
        for tx in &self.senders {
            let _ = tx.send(frame.clone());
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Side {
    A,
    B,
}

#[derive(Debug)]
enum Fault {
    Io(Side, String),
    Protocol(Side, String),
}

impl std::fmt::Display for Fault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Fault::Io(side, msg) => write!(f, "i/o failure on partner {side:?}: {msg}"),
            Fault::Protocol(side, msg) => write!(f, "partner {side:?} broke protocol: {msg}"),
        }
    }
}

impl Fault {
    fn reason(&self) -> AbortReason {
        match self {
            Fault::Io(..) => AbortReason::PeerFailure,
            Fault::Protocol(..) => AbortReason::ProtocolViolation,
        }
    }
}

struct Partners {
    a: TcpStream,
    b: TcpStream,
    cfg: KdcConfig,
}

impl Partners {
    fn stream(&mut self, side: Side) -> &mut TcpStream {
        match side {
            Side::A => &mut self.a,
            Side::B => &mut self.b,
        }
    }

    fn send(&mut self, side: Side, m: &Message) -> Result<(), Fault> {
        let cfg = self.cfg;
        send(self.stream(side), m, &cfg).map_err(|e| Fault::Io(side, e.to_string()))
    }

    fn recv(&mut self, side: Side) -> Result<Message, Fault> {
        let limit = self.cfg.max_payload;
        read_message(self.stream(side), limit).map_err(|e| match e {
            FrameIoError::Io(io) => Fault::Io(side, io.to_string()),
            FrameIoError::Wire(w) => Fault::Protocol(side, w.to_string()),
        })
    }

    fn broadcast(&mut self, m: &Message) -> Result<(), Fault> {
        self.send(Side::A, m)?;
        self.send(Side::B, m)
    }

    fn recv_output(&mut self, side: Side, round: u32) -> Result<Spin, Fault> {
        match self.recv(side)? {
            Message::Output { round: r, tau } if r == round => Ok(tau),
            other => Err(Fault::Protocol(
                side,
                format!("expected OUTPUT for round {round}, got {other:?}"),
            )),
        }
    }

    fn recv_probe(&mut self, side: Side, round: u32) -> Result<u64, Fault> {
        match self.recv(side)? {
            Message::SyncProbe {
                round: r,
                fingerprint,
            } if r == round => Ok(fingerprint),
            other => Err(Fault::Protocol(
                side,
                format!("expected SYNC_PROBE for round {round}, got {other:?}"),
            )),
        }
    }
}

enum Outcome {
    Synced(u32),
    RoundCap,
}

fn run_session(id: u64, a: Joined, b: Joined, eavesdroppers: Vec<TcpStream>, cfg: &KdcConfig) {
    let listeners = Listeners::spawn(eavesdroppers, cfg.max_payload);
    let params = match (a.hello.params(), b.hello.params()) {
        (Some(pa), Some(pb)) if pa == pb => pa,
        _ => {
            info!(
                "session {id}: parameter mismatch ({:?} vs {:?})",
                a.hello, b.hello
            );
            let abort = Message::Abort {
                reason: AbortReason::ParamMismatch,
            };
            refuse(a.stream, AbortReason::ParamMismatch, cfg);
            refuse(b.stream, AbortReason::ParamMismatch, cfg);
            listeners.send(&abort);
            return;
        }
    };
    let mut partners = Partners {
        a: a.stream,
        b: b.stream,
        cfg: *cfg,
    };
    info!(
        "session {id}: start k={} n={} l={} rule={}",
        params.k(),
        params.n(),
        params.l(),
        params.rule()
    );
    match drive_rounds(id, params, &mut partners, &listeners, cfg) {
        Ok(Outcome::Synced(round)) => info!("session {id}: synchronized after {round} rounds"),
        Ok(Outcome::RoundCap) => {
            info!("session {id}: round cap reached");
            let abort = Message::Abort {
                reason: AbortReason::RoundCap,
            };
            let _ = partners.send(Side::A, &abort);
            let _ = partners.send(Side::B, &abort);
            listeners.send(&abort);
        }
        Err(fault) => {
            warn!("session {id}: aborted: {fault}");
            let abort = Message::Abort {
                reason: fault.reason(),
            };
            let _ = partners.send(Side::A, &abort);
            let _ = partners.send(Side::B, &abort);
            listeners.send(&abort);
        }
    }
}

fn drive_rounds(
    id: u64,
    params: TpmParams,
    partners: &mut Partners,
    listeners: &Listeners,
    cfg: &KdcConfig,
) -> Result<Outcome, Fault> {
    listeners.send(&Message::Hello(Hello::for_params(
        id,
        Role::Eavesdropper,
        &params,
    )));
    let start = Message::Start { round: 1 };
    partners.broadcast(&start)?;
    listeners.send(&start);

    let mut inputs = SeededGenerator::new(cfg.session_input_seed(id));
    let mut streak = 0u32;
    for round in 1..=cfg.max_rounds {
        let input = Message::Input {
            round,
            packed: pack_input(&inputs.gen_input(params)),
        };
        partners.broadcast(&input)?;
        listeners.send(&input);

        let tau_a = partners.recv_output(Side::A, round)?;
        let tau_b = partners.recv_output(Side::B, round)?;
        let out_a = Message::Output { round, tau: tau_a };
        let out_b = Message::Output { round, tau: tau_b };
        partners.send(Side::B, &out_a)?;
        partners.send(Side::A, &out_b)?;
        listeners.send(&out_a);
        listeners.send(&out_b);

        streak = if tau_a == tau_b { streak + 1 } else { 0 };
        if streak >= cfg.agreement_window {
            let fp_a = partners.recv_probe(Side::A, round)?;
            let fp_b = partners.recv_probe(Side::B, round)?;
            let probe_a = Message::SyncProbe {
                round,
                fingerprint: fp_a,
            };
            let probe_b = Message::SyncProbe {
                round,
                fingerprint: fp_b,
            };
            partners.send(Side::B, &probe_a)?;
            partners.send(Side::A, &probe_b)?;
            listeners.send(&probe_a);
            listeners.send(&probe_b);
            if fp_a == fp_b {
                partners.broadcast(&Message::SyncOk)?;
                listeners.send(&Message::SyncOk);
                return Ok(Outcome::Synced(round));
            }
            debug!("session {id}: probe mismatch at round {round}");
            partners.broadcast(&Message::SyncFail)?;
            listeners.send(&Message::SyncFail);
            streak = 0;
        }
    }
    Ok(Outcome::RoundCap)
}

fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<TcpStream, NetError> {
    let stream = TcpStream::connect(addr).map_err(NetError::ConnectionLost)?;
    stream
        .set_read_timeout(Some(timeout))
        .and_then(|_| stream.set_write_timeout(Some(timeout)))
        .and_then(|_| stream.set_nodelay(true))
        .map_err(NetError::ConnectionLost)?;
    Ok(stream)
}

fn violation(expected: &str, got: &Message) -> NetError {
    NetError::ProtocolViolation(format!("expected {expected}, got {got:?}"))
}

#[derive(Debug, Clone, Copy)]
pub struct PartyConfig {
    pub session_id: u64,
    pub role: Role,
    pub params: TpmParams,
    pub weight_seed: u64,
    pub agreement_window: u64,
    pub io_timeout: Duration,
    pub max_payload: usize,
}

impl PartyConfig {
    pub fn new(session_id: u64, role: Role, params: TpmParams, weight_seed: u64) -> Self {
        Self {
            session_id,
            role,
            params,
            weight_seed,
            agreement_window: crate::session::DEFAULT_AGREEMENT_WINDOW,
            io_timeout: DEFAULT_IO_TIMEOUT,
            max_payload: DEFAULT_MAX_PAYLOAD,
        }
    }
}

/// What a partner knows when its session ends.
#[derive(Debug, Clone)]
pub struct PartyOutcome {
    pub role: Role,
    /// Fingerprints are ordered A then B; an unknown peer fingerprint is 0.
    pub report: SyncReport,
    pub weights: WeightMatrix,
}

impl PartyOutcome {
    pub fn key(&self) -> KeyMaterial {
        derive_key(&self.weights).expect("TpmParams caps l at the one-octet bound")
    }
}

struct PartyConn {
    stream: TcpStream,
    limit: usize,
}

impl PartyConn {
    fn recv(&mut self) -> Result<Message, NetError> {
        Ok(read_message(&mut self.stream, self.limit)?)
    }

    fn send(&mut self, m: &Message) -> Result<(), NetError> {
        Ok(write_message(&mut self.stream, m, self.limit)?)
    }
}

/// Runs one partner against a KDC until SYNC_OK, the round cap, or an abort.
pub fn party_client<A: ToSocketAddrs>(addr: A, cfg: PartyConfig) -> Result<PartyOutcome, NetError> {
    if cfg.role == Role::Eavesdropper {
        return Err(NetError::Config("party role must be A or B".into()));
    }
    if cfg.agreement_window == 0 {
        return Err(NetError::Config(
            "agreement window must be at least 1".into(),
        ));
    }
    let started = Instant::now();
    let mut conn = PartyConn {
        stream: connect(addr, cfg.io_timeout)?,
        limit: cfg.max_payload,
    };
    conn.send(&Message::Hello(Hello::for_params(
        cfg.session_id,
        cfg.role,
        &cfg.params,
    )))?;
    let mut expected = match conn.recv()? {
        Message::Start { round } => round,
        Message::Abort { reason } => return Err(NetError::Aborted(reason)),
        other => return Err(violation("START", &other)),
    };

    let weights = SeededGenerator::new(cfg.weight_seed).gen_weights(cfg.params);
    // The KDC owns the round cap.
    let mut state = PartnerState::new(weights, u64::MAX, cfg.agreement_window);
    let mut peer_fp = 0u64;

    let finish = |state: &PartnerState, peer_fp: u64, synced: bool| {
        let own = state.fingerprint();
        let (fa, fb) = match cfg.role {
            Role::A => (own, peer_fp),
            _ => (peer_fp, own),
        };
        PartyOutcome {
            role: cfg.role,
            report: SyncReport {
                synced,
                rounds_used: state.rounds_elapsed(),
                updates_applied: state.updates_applied(),
                key_fingerprint_a: fa,
                key_fingerprint_b: fb,
                elapsed: started.elapsed(),
            },
            weights: state.weights().clone(),
        }
    };

    loop {
        let x: InputVector = match conn.recv()? {
            Message::Input { round, packed } if round == expected => {
                unpack_input(cfg.params, &packed)
                    .map_err(|e| NetError::ProtocolViolation(format!("round {round}: {e}")))?
            }
            Message::Abort {
                reason: AbortReason::RoundCap,
            } => return Ok(finish(&state, peer_fp, false)),
            Message::Abort { reason } => return Err(NetError::Aborted(reason)),
            other => return Err(violation(&format!("INPUT for round {expected}"), &other)),
        };
        let (tau, trace) = state.partner_round(&x)?;
        conn.send(&Message::Output {
            round: expected,
            tau,
        })?;
        let tau_peer = match conn.recv()? {
            Message::Output { round, tau } if round == expected => tau,
            Message::Abort { reason } => return Err(NetError::Aborted(reason)),
            other => return Err(violation(&format!("OUTPUT for round {expected}"), &other)),
        };
        state.apply_peer_output(&x, &trace, tau_peer)?;

        if state.probe_due() {
            let own = state.fingerprint();
            conn.send(&Message::SyncProbe {
                round: expected,
                fingerprint: own,
            })?;
            peer_fp = match conn.recv()? {
                Message::SyncProbe { round, fingerprint } if round == expected => fingerprint,
                Message::Abort { reason } => return Err(NetError::Aborted(reason)),
                other => return Err(violation("SYNC_PROBE", &other)),
            };
            match conn.recv()? {
                Message::SyncOk => {
                    if peer_fp != own {
                        return Err(NetError::ProtocolViolation(format!(
                            "SYNC_OK although fingerprints differ ({own:016x} vs {peer_fp:016x})"
                        )));
                    }
                    state.resolve_probe(true)?;
                    return Ok(finish(&state, peer_fp, true));
                }
                Message::SyncFail => state.resolve_probe(false)?,
                Message::Abort { reason } => return Err(NetError::Aborted(reason)),
                other => return Err(violation("SYNC_OK or SYNC_FAIL", &other)),
            }
        }
        expected = expected.wrapping_add(1);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EavesdropConfig {
    pub session_id: u64,
    pub weight_seed: u64,
    pub io_timeout: Duration,
    pub max_payload: usize,
}

impl EavesdropConfig {
    pub fn new(session_id: u64, weight_seed: u64) -> Self {
        Self {
            session_id,
            weight_seed,
            io_timeout: DEFAULT_IO_TIMEOUT,
            max_payload: DEFAULT_MAX_PAYLOAD,
        }
    }
}

/// The listener's view of a finished session.
#[derive(Debug, Clone)]
pub struct EavesdropReport {
    pub params: TpmParams,
    pub rounds_observed: u64,
    pub partners_synced: bool,
    /// A's fingerprint from the last probe seen, if any.
    pub probe_fingerprint: Option<u64>,
    pub key_fingerprint_e: u64,
    /// Whether the listener's own fingerprint equals the probed one.
    pub matched: bool,
    pub weights: WeightMatrix,
}

/// Listens to a session from START to its close.
pub fn eavesdrop_client<A: ToSocketAddrs>(
    addr: A,
    cfg: EavesdropConfig,
) -> Result<EavesdropReport, NetError> {
    let mut conn = PartyConn {
        stream: connect(addr, cfg.io_timeout)?,
        limit: cfg.max_payload,
    };
    conn.send(&Message::Hello(Hello {
        session_id: cfg.session_id,
        role: Role::Eavesdropper,
        k: 0,
        n: 0,
        l: 0,
        rule: LearningRule::Hebbian,
    }))?;
    let params = match conn.recv()? {
        Message::Hello(h) => h
            .params()
            .ok_or_else(|| NetError::ProtocolViolation(format!("unusable session HELLO {h:?}")))?,
        Message::Abort { reason } => return Err(NetError::Aborted(reason)),
        other => return Err(violation("HELLO", &other)),
    };
    match conn.recv()? {
        Message::Start { .. } => {}
        Message::Abort { reason } => return Err(NetError::Aborted(reason)),
        other => return Err(violation("START", &other)),
    }

    let mut e = EavesdropperState::new(SeededGenerator::new(cfg.weight_seed).gen_weights(params));
    let mut current: Option<InputVector> = None;
    let mut taus: Vec<Spin> = Vec::with_capacity(2);
    let mut probes: Vec<u64> = Vec::with_capacity(2);
    let mut last_probe: Option<u64> = None;

    let partners_synced = loop {
        match conn.recv()? {
            Message::Input { round, packed } => {
                let x = unpack_input(params, &packed)
                    .map_err(|err| NetError::ProtocolViolation(format!("round {round}: {err}")))?;
                current = Some(x);
                taus.clear();
                probes.clear();
            }
            Message::Output { tau, .. } => {
                taus.push(tau);
                if taus.len() == 2 {
                    let x = current
                        .as_ref()
                        .ok_or_else(|| NetError::ProtocolViolation("OUTPUT before INPUT".into()))?;
                    e.eavesdrop_round(x, taus[0], taus[1])?;
                } else if taus.len() > 2 {
                    return Err(NetError::ProtocolViolation(
                        "more than two OUTPUT frames in one round".into(),
                    ));
                }
            }
            Message::SyncProbe { fingerprint, .. } => {
                if probes.is_empty() {
                    last_probe = Some(fingerprint);
                }
                probes.push(fingerprint);
            }
            Message::SyncOk => break true,
            Message::SyncFail => probes.clear(),
            Message::Abort {
                reason: AbortReason::RoundCap,
            } => break false,
            Message::Abort { reason } => return Err(NetError::Aborted(reason)),
            other => return Err(violation("session traffic", &other)),
        }
    };

    let own = e.fingerprint();
    Ok(EavesdropReport {
        params,
        rounds_observed: e.rounds_observed(),
        partners_synced,
        probe_fingerprint: last_probe,
        key_fingerprint_e: own,
        matched: last_probe == Some(own),
        weights: e.weights().clone(),
    })
}
