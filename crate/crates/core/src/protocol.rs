//! End-to-end simulation of the GHZ-based aggregation protocol.
//!
//! The server prepares `d^{−1/2} Σ_j |j⟩^{⊗n}` and teleports one share to each
//! client. Client `i` randomizes its input to `y_i`, applies `Z^{y_i}` and `H`,
//! measures `z_i` and reports it. The server outputs `m = −Σ z_i mod d`, which
//! equals `Σ y_i` whenever `d > (κ−1)n`.
//!
//! Three backends produce the reports:
//!
//! * `statevector` runs every gate on dense amplitudes, including one
//!   teleportation per share.
//! * `tableau` starts from the GHZ tableau (teleportation acts as the
//!   identity on the distributed state) and scales to thousands of clients.
//! * `analytic` samples the exact joint law of the reports directly.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arith::Modulus;
use crate::dp::{self, RandomizerConfig};
use crate::error::{Error, Result};
use crate::rng::rng_for_run;
use crate::statevec::{amplitude_count, StateVector, DEFAULT_AMPLITUDE_CAP};
use crate::tableau::StabilizerTableau;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    StateVector,
    Tableau,
    Analytic,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::StateVector, Backend::Tableau, Backend::Analytic];

    pub fn name(self) -> &'static str {
        match self {
            Backend::StateVector => "statevector",
            Backend::Tableau => "tableau",
            Backend::Analytic => "analytic",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown backend {s:?}; expected statevector, tableau or analytic"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub n: usize,
    pub kappa: u64,
    pub d: Modulus,
    pub randomizer: RandomizerConfig,
    pub backend: Backend,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(
        n: usize,
        d: u64,
        randomizer: RandomizerConfig,
        backend: Backend,
        seed: u64,
    ) -> Result<Self> {
        let kappa = randomizer.kappa;
        if n < 2 {
            return Err(Error::Config(format!("need at least 2 clients, got {n}")));
        }
        let d = Modulus::new(d)?;
        if backend == Backend::Tableau && !d.is_odd() {
            return Err(Error::Unsupported(
                "the tableau backend requires an odd prime d (got d = 2)".into(),
            ));
        }
        let max_sum = (kappa - 1)
            .checked_mul(n as u64)
            .ok_or_else(|| Error::Config("(kappa-1)n overflows".into()))?;
        if d.get() <= max_sum {
            return Err(Error::Config(format!(
                "d = {d} must exceed (kappa-1)n = {max_sum}"
            )));
        }
        if backend == Backend::StateVector {
            amplitude_count(n + 2, d, DEFAULT_AMPLITUDE_CAP).map_err(|_| {
                Error::Unsupported(format!(
                    "statevector backend needs d^(n+2) = {d}^{} amplitudes, above the cap of {DEFAULT_AMPLITUDE_CAP}",
                    n + 2
                ))
            })?;
        }
        Ok(ProtocolConfig {
            n,
            kappa,
            d,
            randomizer,
            backend,
            seed,
        })
    }
}

/// Teleportation correction: the client applies `X^{−s}` then `Z^{−l}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub l: u64,
    pub s: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartyId {
    Server,
    Client(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    TeleportCorrection,
    MeasurementReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Correction(Correction),
    Report { z: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassicalMessage {
    pub kind: MessageKind,
    pub sender: PartyId,
    pub receiver: PartyId,
    pub payload: Payload,
}

impl ClassicalMessage {
    /// Corrections go server to client, reports client to server, and the
    /// payload must match the kind.
    pub fn check_direction(&self) -> Result<()> {
        let ok = match (self.kind, self.sender, self.receiver, self.payload) {
            (
                MessageKind::TeleportCorrection,
                PartyId::Server,
                PartyId::Client(_),
                Payload::Correction(_),
            ) => true,
            (MessageKind::MeasurementReport, PartyId::Client(_), PartyId::Server, Payload::Report { .. }) => {
                true
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Protocol(format!("illegal message {self:?}")))
        }
    }
}

/// In-process classical channel. Records every accepted message in order.
#[derive(Clone, Debug, Default)]
pub struct ClassicalChannel {
    log: Vec<ClassicalMessage>,
}

impl ClassicalChannel {
    pub fn send(&mut self, msg: ClassicalMessage) -> Result<ClassicalMessage> {
        msg.check_direction()?;
        self.log.push(msg);
        Ok(msg)
    }

    pub fn log(&self) -> &[ClassicalMessage] {
        &self.log
    }

    pub fn into_log(self) -> Vec<ClassicalMessage> {
        self.log
    }
}

/// The operations client measurement needs, shared by both quantum backends.
pub trait QuditSimulator {
    fn apply_z_pow(&mut self, target: usize, a: u64) -> Result<()>;
    fn apply_h(&mut self, target: usize, inverse: bool) -> Result<()>;
    fn measure_z<R: Rng + ?Sized>(&mut self, target: usize, rng: &mut R) -> Result<u64>;
}

impl QuditSimulator for StateVector {
    fn apply_z_pow(&mut self, target: usize, a: u64) -> Result<()> {
        StateVector::apply_z_pow(self, target, a)
    }
    fn apply_h(&mut self, target: usize, inverse: bool) -> Result<()> {
        StateVector::apply_h(self, target, inverse)
    }
    fn measure_z<R: Rng + ?Sized>(&mut self, target: usize, rng: &mut R) -> Result<u64> {
        StateVector::measure_z(self, target, rng)
    }
}

impl QuditSimulator for StabilizerTableau {
    fn apply_z_pow(&mut self, target: usize, a: u64) -> Result<()> {
        StabilizerTableau::apply_z_pow(self, target, a)
    }
    fn apply_h(&mut self, target: usize, inverse: bool) -> Result<()> {
        StabilizerTableau::apply_h(self, target, inverse)
    }
    fn measure_z<R: Rng + ?Sized>(&mut self, target: usize, rng: &mut R) -> Result<u64> {
        StabilizerTableau::measure_z(self, target, rng)
    }
}

/// `d^{−1/2} Σ_j |jj⟩`.
pub fn prepare_bell(d: Modulus) -> Result<StateVector> {
    prepare_ghz(2, d)
}

/// `d^{−1/2} Σ_j |j⟩^{⊗n}`: `H` on qudit 0, then `CX` from qudit 0 to each other.
pub fn prepare_ghz(n: usize, d: Modulus) -> Result<StateVector> {
    if n == 0 {
        return Err(Error::Domain("a GHZ state needs at least one qudit".into()));
    }
    let mut s = StateVector::zero(n, d)?;
    s.apply_h(0, false)?;
    for t in 1..n {
        s.apply_cx(0, t, false)?;
    }
    Ok(s)
}

fn teleport_inner<R: Rng + ?Sized>(
    state: &StateVector,
    share: usize,
    forced: Option<Correction>,
    rng: &mut R,
) -> Result<(Correction, StateVector)> {
    let n = state.n();
    if share >= n {
        return Err(Error::Domain(format!("share {share} out of range for {n} qudits")));
    }
    // Qudit n is the server's Bell half, n+1 the client's.
    let mut joint = state.tensor(&prepare_bell(state.d())?)?;
    joint.apply_cx(share, n, true)?;
    joint.apply_h(share, false)?;
    let (outcome, rest) = match forced {
        Some(c) => (c, joint.drop_qudits(&[(share, c.l), (n, c.s)])?),
        None => {
            let (o, rest) = joint.measure_and_drop(&[share, n], rng)?;
            (Correction { l: o[0], s: o[1] }, rest)
        }
    };
    Ok((outcome, rest.move_qudit(n - 1, share)?))
}

/// Teleport qudit `share` of `state` through a fresh Bell pair. The server
/// applies `CX⁻¹` (share to its Bell half) and `H` on the share, then measures
/// both: `l` from the share, `s` from its Bell half. The returned state has
/// the client's qudit in the share's slot, not yet corrected.
pub fn teleport_share<R: Rng + ?Sized>(
    state: &StateVector,
    share: usize,
    rng: &mut R,
) -> Result<(Correction, StateVector)> {
    teleport_inner(state, share, None, rng)
}

/// [`teleport_share`] with the measurement outcomes fixed in advance.
pub fn teleport_share_forced(
    state: &StateVector,
    share: usize,
    outcome: Correction,
) -> Result<StateVector> {
    let d = state.d().get();
    if outcome.l >= d || outcome.s >= d {
        return Err(Error::Domain(format!("outcome {outcome:?} outside Z_{d}")));
    }
    let mut unused = rng_for_run(0, 0);
    Ok(teleport_inner(state, share, Some(outcome), &mut unused)?.1)
}

/// Client side of teleportation: `X^{−s}`, then `Z^{−l}`.
pub fn apply_teleport_correction(state: &mut StateVector, qudit: usize, c: Correction) -> Result<()> {
    let d = state.d();
    state.apply_x_pow(qudit, d.neg(d.reduce(c.s)))?;
    state.apply_z_pow(qudit, d.neg(d.reduce(c.l)))
}

/// Steps 4 to 6 for one client: `Z^y`, `H`, then a computational basis
/// measurement.
pub fn client_local_ops<S: QuditSimulator, R: Rng + ?Sized>(
    state: &mut S,
    qudit: usize,
    y: u64,
    rng: &mut R,
) -> Result<u64> {
    state.apply_z_pow(qudit, y)?;
    state.apply_h(qudit, false)?;
    state.measure_z(qudit, rng)
}

/// `m = −Σ z_i mod d`.
pub fn server_decode(reports: &[u64], d: Modulus) -> Result<u64> {
    let mut acc = 0;
    for &z in reports {
        if z >= d.get() {
            return Err(Error::Protocol(format!("report {z} outside Z_{d}")));
        }
        acc = d.add(acc, z);
    }
    Ok(d.neg(acc))
}

/// Exact joint law of the reports: `z_1..z_{n−1}` uniform, `z_n` fixed by
/// `Σ z ≡ −m`.
pub fn analytic_sample<R: Rng + ?Sized>(m: u64, n: usize, d: Modulus, rng: &mut R) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::Domain("need at least one report".into()));
    }
    let mut z: Vec<u64> = (0..n - 1).map(|_| rng.random_range(0..d.get())).collect();
    let partial = z.iter().fold(0, |acc, &v| d.add(acc, v));
    z.push(d.neg(d.add(d.reduce(m), partial)));
    Ok(z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DitFlipOutcome {
    /// Randomized value, `raw mod κ`.
    pub y: u64,
    /// Measured data qudit `x + j`.
    pub raw: u64,
    /// Environment shift `j`.
    pub env: u64,
}

/// Environment weights: `p_0 = 1 − (κ−1)γ/κ`, `p_j = γ/κ` for `0 < j < κ`,
/// zero above.
pub fn dit_flip_weights(kappa: u64, d: Modulus, gamma: f64) -> Result<Vec<f64>> {
    let cfg = RandomizerConfig::from_gamma(kappa, gamma)?;
    if d.get() <= 2 * (kappa - 1) {
        return Err(Error::Domain(format!(
            "d = {d} must exceed 2(kappa-1) = {} so x + j never wraps",
            2 * (kappa - 1)
        )));
    }
    let mut w = vec![0.0; d.get() as usize];
    w[0] = cfg.keep_probability();
    for wj in w.iter_mut().take(kappa as usize).skip(1) {
        *wj = gamma / kappa as f64;
    }
    Ok(w)
}

/// Randomized response as a dit flip channel. The environment
/// `ρ_e = Σ p_j |j⟩⟨j|` is purified onto an environment qudit and a reference
/// qudit; `CX` from the environment shifts `|x⟩` to `|x+j⟩`, and the data
/// qudit is measured.
pub fn quantum_randomize<R: Rng + ?Sized>(
    x: u64,
    kappa: u64,
    d: Modulus,
    gamma: f64,
    rng: &mut R,
) -> Result<DitFlipOutcome> {
    if x >= kappa {
        return Err(Error::Domain(format!("input {x} outside [0, {kappa})")));
    }
    let w = dit_flip_weights(kappa, d, gamma)?;
    let dd = d.get() as usize;
    // Qudits: 0 environment, 1 reference, 2 data.
    let mut amps = vec![num_complex::Complex64::new(0.0, 0.0); dd * dd * dd];
    for (j, p) in w.iter().enumerate() {
        amps[(j * dd + j) * dd + x as usize] = num_complex::Complex64::new(p.sqrt(), 0.0);
    }
    let mut state = StateVector::from_amplitudes(3, d, amps)?;
    state.apply_cx(0, 2, false)?;
    let raw = state.measure_z(2, rng)?;
    let env = state.measure_z(0, rng)?;
    Ok(DitFlipOutcome {
        y: raw % kappa,
        raw,
        env,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClientPhase {
    AwaitingShare,
    HoldingShare,
    Randomized,
    Reported,
}

/// One client. Owns qudit `index` of the shared simulation.
#[derive(Clone, Debug)]
pub struct Client {
    pub index: usize,
    pub x: u64,
    phase: ClientPhase,
    y: Option<u64>,
    correction: Option<Correction>,
    z: Option<u64>,
}

impl Client {
    pub fn new(index: usize, x: u64) -> Self {
        Client {
            index,
            x,
            phase: ClientPhase::AwaitingShare,
            y: None,
            correction: None,
            z: None,
        }
    }

    pub fn phase(&self) -> ClientPhase {
        self.phase
    }

    fn expect(&self, phase: ClientPhase) -> Result<()> {
        if self.phase != phase {
            return Err(Error::Protocol(format!(
                "client {} is in {:?}, expected {phase:?}",
                self.index, self.phase
            )));
        }
        Ok(())
    }

    /// Take delivery of the share, with the correction message when it was
    /// teleported.
    pub fn receive_share(&mut self, msg: Option<&ClassicalMessage>) -> Result<Option<Correction>> {
        self.expect(ClientPhase::AwaitingShare)?;
        if let Some(msg) = msg {
            msg.check_direction()?;
            match (msg.receiver, msg.payload) {
                (PartyId::Client(i), Payload::Correction(c)) if i == self.index => {
                    self.correction = Some(c)
                }
                _ => {
                    return Err(Error::Protocol(format!(
                        "client {} got a message meant for {:?}",
                        self.index, msg.receiver
                    )))
                }
            }
        }
        self.phase = ClientPhase::HoldingShare;
        Ok(self.correction)
    }

    /// Local randomizer.
    pub fn randomize<R: Rng + ?Sized>(&mut self, cfg: &RandomizerConfig, rng: &mut R) -> Result<u64> {
        self.expect(ClientPhase::HoldingShare)?;
        let y = dp::randomize(self.x, cfg, rng)?;
        self.y = Some(y);
        self.phase = ClientPhase::Randomized;
        Ok(y)
    }

    /// Encode, transform and measure the share, producing the report.
    pub fn measure<S: QuditSimulator, R: Rng + ?Sized>(
        &mut self,
        state: &mut S,
        rng: &mut R,
    ) -> Result<ClassicalMessage> {
        self.expect(ClientPhase::Randomized)?;
        let y = self.y.expect("set while randomizing");
        let z = client_local_ops(state, self.index, y, rng)?;
        self.report_value(z)
    }

    /// Report an outcome obtained elsewhere (the analytic backend).
    pub fn report_value(&mut self, z: u64) -> Result<ClassicalMessage> {
        self.expect(ClientPhase::Randomized)?;
        self.z = Some(z);
        self.phase = ClientPhase::Reported;
        Ok(ClassicalMessage {
            kind: MessageKind::MeasurementReport,
            sender: PartyId::Client(self.index),
            receiver: PartyId::Server,
            payload: Payload::Report { z },
        })
    }

    pub fn y(&self) -> Option<u64> {
        self.y
    }

    fn record(&self) -> Result<ClientRecord> {
        self.expect(ClientPhase::Reported)?;
        Ok(ClientRecord {
            index: self.index,
            x: self.x,
            y: self.y.expect("reported clients have randomized"),
            correction: self.correction,
            z: self.z.expect("reported clients have measured"),
        })
    }
}

/// The aggregating server.
#[derive(Clone, Debug)]
pub struct Server {
    d: Modulus,
    reports: Vec<Option<u64>>,
}

impl Server {
    pub fn new(n: usize, d: Modulus) -> Self {
        Server {
            d,
            reports: vec![None; n],
        }
    }

    pub fn correction_message(&self, client: usize, c: Correction) -> Result<ClassicalMessage> {
        if client >= self.reports.len() {
            return Err(Error::Protocol(format!("no client {client}")));
        }
        Ok(ClassicalMessage {
            kind: MessageKind::TeleportCorrection,
            sender: PartyId::Server,
            receiver: PartyId::Client(client),
            payload: Payload::Correction(c),
        })
    }

    pub fn receive_report(&mut self, msg: &ClassicalMessage) -> Result<()> {
        msg.check_direction()?;
        let (PartyId::Client(i), Payload::Report { z }) = (msg.sender, msg.payload) else {
            unreachable!("check_direction admits only client reports here");
        };
        let slot = self
            .reports
            .get_mut(i)
            .ok_or_else(|| Error::Protocol(format!("report from unknown client {i}")))?;
        if slot.is_some() {
            return Err(Error::Protocol(format!("client {i} reported twice")));
        }
        if z >= self.d.get() {
            return Err(Error::Protocol(format!("report {z} outside Z_{}", self.d)));
        }
        *slot = Some(z);
        Ok(())
    }

    pub fn decode(&self) -> Result<u64> {
        let reports: Vec<u64> = self
            .reports
            .iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| Error::Protocol(format!("client {i} has not reported"))))
            .collect::<Result<_>>()?;
        server_decode(&reports, self.d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub index: usize,
    pub x: u64,
    pub y: u64,
    pub correction: Option<Correction>,
    pub z: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub n: usize,
    pub kappa: u64,
    pub d: u64,
    pub gamma: f64,
    pub backend: Backend,
    pub seed: u64,
    pub clients: Vec<ClientRecord>,
    pub messages: Vec<ClassicalMessage>,
    /// Server output `m`.
    pub z: u64,
    /// De-biased sum; `None` when `γ = 1`.
    pub estimate: Option<f64>,
}

impl ProtocolTranscript {
    pub fn sum_y(&self) -> u64 {
        self.clients.iter().map(|c| c.y).sum()
    }

    pub fn sum_x(&self) -> u64 {
        self.clients.iter().map(|c| c.x).sum()
    }

    pub fn reports(&self) -> Vec<u64> {
        self.clients.iter().map(|c| c.z).collect()
    }

    /// Decode consistency, `Σ y = m`, and message directions.
    pub fn check_invariants(&self) -> Result<()> {
        let d = Modulus::new(self.d)?;
        if self.clients.len() != self.n {
            return Err(Error::Protocol("client count does not match n".into()));
        }
        if server_decode(&self.reports(), d)? != self.z {
            return Err(Error::Protocol("z is not minus the sum of the reports".into()));
        }
        if self.sum_y() != self.z {
            return Err(Error::Protocol(format!(
                "decoded {} but the randomized values sum to {}",
                self.z,
                self.sum_y()
            )));
        }
        for m in &self.messages {
            m.check_direction()?;
        }
        Ok(())
    }
}

/// The quantum part of the protocol for fixed randomized values: distribute
/// the GHZ state, run every client's local operations, and return the
/// corrections (statevector only) and reports.
pub fn sample_reports<R: Rng + ?Sized>(
    backend: Backend,
    d: Modulus,
    ys: &[u64],
    rng: &mut R,
) -> Result<(Vec<Option<Correction>>, Vec<u64>)> {
    let n = ys.len();
    match backend {
        Backend::StateVector => {
            let mut state = prepare_ghz(n, d)?;
            let mut corrections = Vec::with_capacity(n);
            for i in 0..n {
                let (c, mut next) = teleport_share(&state, i, rng)?;
                apply_teleport_correction(&mut next, i, c)?;
                corrections.push(Some(c));
                state = next;
            }
            let z = (0..n)
                .map(|i| client_local_ops(&mut state, i, ys[i], rng))
                .collect::<Result<_>>()?;
            Ok((corrections, z))
        }
        Backend::Tableau => {
            let mut t = StabilizerTableau::ghz(n, d)?;
            let z = (0..n)
                .map(|i| client_local_ops(&mut t, i, ys[i], rng))
                .collect::<Result<_>>()?;
            Ok((vec![None; n], z))
        }
        Backend::Analytic => {
            let m = ys.iter().fold(0, |acc, &y| d.add(acc, d.reduce(y)));
            Ok((vec![None; n], analytic_sample(m, n, d, rng)?))
        }
    }
}

enum Quantum {
    Dense(StateVector),
    Stabilizer(StabilizerTableau),
    Analytic,
}

/// Run the protocol with stream 0 of the configured seed.
pub fn run_protocol(config: &ProtocolConfig, inputs: &[u64]) -> Result<ProtocolTranscript> {
    run_protocol_with_rng(config, inputs, &mut rng_for_run(config.seed, 0))
}

pub fn run_protocol_with_rng<R: Rng + ?Sized>(
    config: &ProtocolConfig,
    inputs: &[u64],
    rng: &mut R,
) -> Result<ProtocolTranscript> {
    let (n, d) = (config.n, config.d);
    if inputs.len() != n {
        return Err(Error::Domain(format!("expected {n} inputs, got {}", inputs.len())));
    }
    let mut clients = inputs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if x >= config.kappa {
                Err(Error::Domain(format!("input {x} outside [0, {})", config.kappa)))
            } else {
                Ok(Client::new(i, x))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut server = Server::new(n, d);
    let mut channel = ClassicalChannel::default();

    // Distribution.
    let mut quantum = match config.backend {
        Backend::StateVector => {
            let mut state = prepare_ghz(n, d)?;
            for client in clients.iter_mut() {
                let i = client.index;
                let (c, mut next) = teleport_share(&state, i, rng)?;
                let msg = channel.send(server.correction_message(i, c)?)?;
                let c = client.receive_share(Some(&msg))?.expect("correction just sent");
                apply_teleport_correction(&mut next, i, c)?;
                state = next;
            }
            Quantum::Dense(state)
        }
        Backend::Tableau => {
            for client in clients.iter_mut() {
                client.receive_share(None)?;
            }
            Quantum::Stabilizer(StabilizerTableau::ghz(n, d)?)
        }
        Backend::Analytic => {
            for client in clients.iter_mut() {
                client.receive_share(None)?;
            }
            Quantum::Analytic
        }
    };

    for client in clients.iter_mut() {
        client.randomize(&config.randomizer, rng)?;
    }

    let analytic_reports = match quantum {
        Quantum::Analytic => {
            let m = clients.iter().fold(0, |acc, c| d.add(acc, d.reduce(c.y().unwrap())));
            Some(analytic_sample(m, n, d, rng)?)
        }
        _ => None,
    };

    for client in clients.iter_mut() {
        let msg = match &mut quantum {
            Quantum::Dense(s) => client.measure(s, rng)?,
            Quantum::Stabilizer(t) => client.measure(t, rng)?,
            Quantum::Analytic => {
                let z = analytic_reports.as_ref().expect("sampled above")[client.index];
                client.report_value(z)?
            }
        };
        let msg = channel.send(msg)?;
        server.receive_report(&msg)?;
    }

    let m = server.decode()?;
    let gamma = config.randomizer.gamma;
    let estimate = if gamma < 1.0 {
        Some(dp::debias(m, n as u64, config.kappa, gamma)?)
    } else {
        None
    };
    Ok(ProtocolTranscript {
        n,
        kappa: config.kappa,
        d: d.get(),
        gamma,
        backend: config.backend,
        seed: config.seed,
        clients: clients.iter().map(Client::record).collect::<Result<_>>()?,
        messages: channel.into_log(),
        z: m,
        estimate,
    })
}
