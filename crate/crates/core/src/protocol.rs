//! Alice, Bob and the quantum channel as single-shot session state machines.
//!
//! A session runs its photons, then the classical exchange, and ends in one
//! of three verdicts. Pair types (QKD) and the key sequence (direct
//! communication) are only revealed after the check step has passed; an
//! aborted session never reveals them. Restarting after an abort is up to
//! the caller.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::adversary::InterceptResendStrategy;
use crate::hilbert4::{sample_outcome, StateVector};
use crate::schemes::{three_one_scheme, BasisChoice, Bit, Detection, Scheme, SchemeError, SchemeKind, TOL_ORTHOGONAL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid session configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

/// Channel between Alice and Bob.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ChannelConfig {
    pub eavesdropper: Option<InterceptResendStrategy>,
    pub loss_probability: f64,
}

impl ChannelConfig {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn with_eavesdropper(strategy: InterceptResendStrategy) -> Self {
        Self {
            eavesdropper: Some(strategy),
            loss_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(ProtocolError::InvalidConfig(format!(
                "loss probability {} outside [0, 1)",
                self.loss_probability
            )));
        }
        Ok(())
    }
}

/// Sends one photon through the channel; `None` means it was lost.
pub fn transmit<R: Rng + ?Sized>(channel: &ChannelConfig, state: &StateVector, rng: &mut R) -> Option<StateVector> {
    if channel.loss_probability > 0.0 && rng.gen::<f64>() < channel.loss_probability {
        return None;
    }
    match &channel.eavesdropper {
        Some(evan) => {
            let outcome = sample_outcome(&evan.measurement, state, rng);
            Some(evan.resend[outcome])
        }
        None => Some(*state),
    }
}

/// Whether `detected` could have been caused by `sent`.
pub fn consistency_check(sent: &StateVector, detected: &StateVector) -> bool {
    sent.overlap(detected) > TOL_ORTHOGONAL
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    LossReport,
    CheckRequest,
    CheckReport,
    ControlPositions,
    RevealTypes,
    KeyReveal,
    Abort,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CheckEntry {
    pub position: usize,
    pub detected: Detection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TypeEntry {
    pub position: usize,
    pub type_id: usize,
}

/// Payloads of the classical channel. Positions are zero-based photon indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "payload", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageBody {
    /// Bob: positions where nothing was detected.
    LossReport(Vec<usize>),
    /// Bob: positions he sacrifices for the check.
    CheckRequest(Vec<usize>),
    /// Bob: his detections at the checked positions.
    CheckReport(Vec<CheckEntry>),
    /// Alice: where the control bits were.
    ControlPositions(Vec<usize>),
    /// Alice: pair types of the key photons.
    RevealTypes(Vec<TypeEntry>),
    /// Alice: the full type sequence, in photon order.
    KeyReveal(Vec<usize>),
    /// Alice: positions that failed the check.
    Abort(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassicalMessage {
    pub from: Party,
    #[serde(flatten)]
    pub body: MessageBody,
}

impl ClassicalMessage {
    pub fn kind(&self) -> MessageKind {
        match self.body {
            MessageBody::LossReport(_) => MessageKind::LossReport,
            MessageBody::CheckRequest(_) => MessageKind::CheckRequest,
            MessageBody::CheckReport(_) => MessageKind::CheckReport,
            MessageBody::ControlPositions(_) => MessageKind::ControlPositions,
            MessageBody::RevealTypes(_) => MessageKind::RevealTypes,
            MessageBody::KeyReveal(_) => MessageKind::KeyReveal,
            MessageBody::Abort(_) => MessageKind::Abort,
        }
    }
}

fn serialize_bits<S: Serializer>(bits: &[Bit], serializer: S) -> Result<S::Ok, S::Error> {
    serializer.serialize_str(&Bit::render(bits))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhotonRecord {
    pub position: usize,
    pub type_id: usize,
    pub bit: Bit,
    pub control: bool,
    pub lost: bool,
    pub bob_basis: Option<BasisChoice>,
    pub detected: Option<Detection>,
    /// Bob's decoded bit, once the type is known to him.
    pub inferred: Option<Bit>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Key {
        #[serde(serialize_with = "serialize_bits")]
        alice: Vec<Bit>,
        #[serde(serialize_with = "serialize_bits")]
        bob: Vec<Bit>,
    },
    Message {
        #[serde(serialize_with = "serialize_bits")]
        received: Vec<Bit>,
    },
    Abort {
        reason: String,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SessionStats {
    pub photons_sent: usize,
    pub photons_lost: usize,
    /// Photons whose detections were compared in the check step.
    pub checked: usize,
    pub check_inconsistencies: usize,
    /// Simulator-side audit over every received photon, including
    /// unchecked ones; no party in the protocol has this view.
    pub audit_received: usize,
    pub audit_inconsistencies: usize,
}

impl SessionStats {
    pub fn audit_rate(&self) -> f64 {
        if self.audit_received == 0 {
            0.0
        } else {
            self.audit_inconsistencies as f64 / self.audit_received as f64
        }
    }

    pub fn check_rate(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.check_inconsistencies as f64 / self.checked as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    KeyDistribution,
    DirectCommunication,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionTranscript {
    pub protocol: ProtocolKind,
    pub scheme: SchemeKind,
    pub k: Option<f64>,
    pub loss_probability: f64,
    pub eavesdropper: bool,
    pub photons: Vec<PhotonRecord>,
    pub messages: Vec<ClassicalMessage>,
    pub stats: SessionStats,
    #[serde(flatten)]
    pub verdict: Verdict,
}

impl SessionTranscript {
    pub fn is_abort(&self) -> bool {
        matches!(self.verdict, Verdict::Abort { .. })
    }

    pub fn message_kinds(&self) -> Vec<MessageKind> {
        self.messages.iter().map(ClassicalMessage::kind).collect()
    }
}

/// Shared photon stage: Alice's choices are fixed; the channel and Bob act.
struct Flight {
    records: Vec<PhotonRecord>,
    detections: Vec<Option<Detection>>,
    audit_received: usize,
    audit_inconsistencies: usize,
}

fn fly<R: Rng + ?Sized>(
    scheme: &Scheme,
    choices: &[(usize, Bit, bool)],
    forced: Option<&[Detection]>,
    channel: &ChannelConfig,
    rng: &mut R,
) -> Result<Flight, ProtocolError> {
    let mut records = Vec::with_capacity(choices.len());
    let mut detections = Vec::with_capacity(choices.len());
    let mut audit_received = 0;
    let mut audit_inconsistencies = 0;
    for (position, &(type_id, bit, control)) in choices.iter().enumerate() {
        let sent = *scheme.state(type_id, bit)?;
        let detected = match forced {
            Some(script) => Some(script[position]),
            None => transmit(channel, &sent, rng).map(|arriving| {
                let basis = if rng.gen::<bool>() { BasisChoice::B } else { BasisChoice::BPrime };
                let index = sample_outcome(scheme.basis(basis), &arriving, rng);
                Detection::new(basis, index)
            }),
        };
        if let Some(d) = detected {
            audit_received += 1;
            if !consistency_check(&sent, scheme.detected_state(d)) {
                audit_inconsistencies += 1;
            }
        }
        records.push(PhotonRecord {
            position,
            type_id,
            bit,
            control,
            lost: detected.is_none(),
            bob_basis: detected.map(|d| d.basis),
            detected,
            inferred: None,
        });
        detections.push(detected);
    }
    Ok(Flight {
        records,
        detections,
        audit_received,
        audit_inconsistencies,
    })
}

/// Alice's side of the check: positions whose reported detection is impossible.
fn failed_checks(scheme: &Scheme, records: &[PhotonRecord], report: &[CheckEntry]) -> Result<Vec<usize>, ProtocolError> {
    let mut failed = Vec::new();
    for entry in report {
        let r = &records[entry.position];
        let sent = scheme.state(r.type_id, r.bit)?;
        if !consistency_check(sent, scheme.detected_state(entry.detected)) {
            failed.push(entry.position);
        }
    }
    Ok(failed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct QkdConfig {
    pub key_bits: usize,
    pub check_count: usize,
}

impl Default for QkdConfig {
    fn default() -> Self {
        Self {
            key_bits: 1000,
            check_count: 100,
        }
    }
}

/// Key distribution: `key_bits + check_count` photons, Bob checks a random
/// subset of `check_count`, Alice aborts on any impossible detection and
/// otherwise reveals the pair types of the remaining photons.
pub fn run_qkd_session<R: Rng + ?Sized>(
    scheme: &Scheme,
    config: &QkdConfig,
    channel: &ChannelConfig,
    rng: &mut R,
) -> Result<SessionTranscript, ProtocolError> {
    if config.key_bits == 0 {
        return Err(ProtocolError::InvalidConfig("key_bits must be at least 1".into()));
    }
    channel.validate()?;
    let n = config.key_bits + config.check_count;
    let type_ids: Vec<usize> = scheme.type_ids().collect();

    // Alice: uniform bit and pair type per photon
    let choices: Vec<(usize, Bit, bool)> = (0..n)
        .map(|_| {
            let bit = if rng.gen::<bool>() { Bit::Plus } else { Bit::Minus };
            let type_id = type_ids[rng.gen_range(0..type_ids.len())];
            (type_id, bit, false)
        })
        .collect();
    let Flight {
        mut records,
        detections,
        audit_received,
        audit_inconsistencies,
    } = fly(scheme, &choices, None, channel, rng)?;

    let mut messages = Vec::new();
    let lost: Vec<usize> = (0..n).filter(|&i| detections[i].is_none()).collect();
    if !lost.is_empty() {
        messages.push(ClassicalMessage {
            from: Party::Bob,
            body: MessageBody::LossReport(lost.clone()),
        });
    }
    let received: Vec<usize> = (0..n).filter(|&i| detections[i].is_some()).collect();

    // Bob: random check subset among received photons
    let m = config.check_count.min(received.len());
    let mut picks: Vec<usize> = sample(rng, received.len(), m).into_iter().map(|j| received[j]).collect();
    picks.sort_unstable();
    let mut is_check = vec![false; n];
    for &p in &picks {
        is_check[p] = true;
        records[p].control = true;
    }

    let mut stats = SessionStats {
        photons_sent: n,
        photons_lost: lost.len(),
        checked: m,
        audit_received,
        audit_inconsistencies,
        ..Default::default()
    };

    if m > 0 {
        let report: Vec<CheckEntry> = picks
            .iter()
            .map(|&position| CheckEntry {
                position,
                detected: detections[position].expect("checks are drawn from received photons"),
            })
            .collect();
        messages.push(ClassicalMessage {
            from: Party::Bob,
            body: MessageBody::CheckRequest(picks.clone()),
        });
        messages.push(ClassicalMessage {
            from: Party::Bob,
            body: MessageBody::CheckReport(report.clone()),
        });
        let failed = failed_checks(scheme, &records, &report)?;
        stats.check_inconsistencies = failed.len();
        if !failed.is_empty() {
            let reason = format!("{} of {} check photons inconsistent", failed.len(), m);
            messages.push(ClassicalMessage {
                from: Party::Alice,
                body: MessageBody::Abort(failed),
            });
            return Ok(SessionTranscript {
                protocol: ProtocolKind::KeyDistribution,
                scheme: scheme.kind(),
                k: scheme.k(),
                loss_probability: channel.loss_probability,
                eavesdropper: channel.eavesdropper.is_some(),
                photons: records,
                messages,
                stats,
                verdict: Verdict::Abort { reason },
            });
        }
    }

    let key_positions: Vec<usize> = received.iter().copied().filter(|&p| !is_check[p]).collect();
    messages.push(ClassicalMessage {
        from: Party::Alice,
        body: MessageBody::RevealTypes(
            key_positions
                .iter()
                .map(|&position| TypeEntry {
                    position,
                    type_id: records[position].type_id,
                })
                .collect(),
        ),
    });

    let mut alice = Vec::with_capacity(key_positions.len());
    let mut bob = Vec::with_capacity(key_positions.len());
    for &p in &key_positions {
        let d = detections[p].expect("key positions were received");
        let bit = scheme.infer_detection(d, records[p].type_id)?;
        records[p].inferred = Some(bit);
        alice.push(records[p].bit);
        bob.push(bit);
    }

    Ok(SessionTranscript {
        protocol: ProtocolKind::KeyDistribution,
        scheme: scheme.kind(),
        k: scheme.k(),
        loss_probability: channel.loss_probability,
        eavesdropper: channel.eavesdropper.is_some(),
        photons: records,
        messages,
        stats,
        verdict: Verdict::Key { alice, bob },
    })
}

/// Fully specified direct-communication run: Alice's key sequence, the
/// interleaved bit stream, control flags, and optionally Bob's detections.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectCommScript {
    pub types: Vec<usize>,
    pub bits: Vec<Bit>,
    pub controls: Vec<bool>,
    /// Replaces the channel and Bob's measurement when present.
    pub detections: Option<Vec<Detection>>,
}

impl DirectCommScript {
    /// Message bits: the stream with control positions removed.
    pub fn message(&self) -> Vec<Bit> {
        self.bits
            .iter()
            .zip(&self.controls)
            .filter(|(_, &c)| !c)
            .map(|(b, _)| *b)
            .collect()
    }

    /// Steps one and two: uniform key sequence over the pair types, and a
    /// control bit with probability `control_fraction` before each message bit.
    pub fn draw<R: Rng + ?Sized>(message: &[Bit], control_fraction: f64, rng: &mut R) -> Result<Self, ProtocolError> {
        if message.is_empty() {
            return Err(ProtocolError::InvalidConfig("message must not be empty".into()));
        }
        if !(control_fraction > 0.0 && control_fraction < 1.0) {
            return Err(ProtocolError::InvalidConfig(format!(
                "control fraction {control_fraction} outside (0, 1)"
            )));
        }
        let mut bits = Vec::new();
        let mut controls = Vec::new();
        let mut next = 0;
        while next < message.len() {
            if rng.gen::<f64>() < control_fraction {
                bits.push(if rng.gen::<bool>() { Bit::Plus } else { Bit::Minus });
                controls.push(true);
            } else {
                bits.push(message[next]);
                controls.push(false);
                next += 1;
            }
        }
        let types = (0..bits.len()).map(|_| rng.gen_range(1..=4)).collect();
        Ok(Self {
            types,
            bits,
            controls,
            detections: None,
        })
    }

    fn validate(&self, scheme: &Scheme) -> Result<(), ProtocolError> {
        let n = self.types.len();
        if n == 0 || self.bits.len() != n || self.controls.len() != n {
            return Err(ProtocolError::InvalidConfig(
                "types, bits and control flags must be non-empty and of equal length".into(),
            ));
        }
        if let Some(d) = &self.detections {
            if d.len() != n {
                return Err(ProtocolError::InvalidConfig("one forced detection per photon required".into()));
            }
        }
        for &t in &self.types {
            scheme.pair(t)?;
        }
        Ok(())
    }
}

/// The six-step direct communication over the three-one scheme.
pub fn run_direct_comm_session<R: Rng + ?Sized>(
    message: &[Bit],
    control_fraction: f64,
    channel: &ChannelConfig,
    rng: &mut R,
) -> Result<SessionTranscript, ProtocolError> {
    channel.validate()?;
    let script = DirectCommScript::draw(message, control_fraction, rng)?;
    run_direct_comm_scripted(&script, channel, rng)
}

/// Steps three to six for a given script.
pub fn run_direct_comm_scripted<R: Rng + ?Sized>(
    script: &DirectCommScript,
    channel: &ChannelConfig,
    rng: &mut R,
) -> Result<SessionTranscript, ProtocolError> {
    let scheme = three_one_scheme();
    channel.validate()?;
    script.validate(&scheme)?;
    let n = script.types.len();
    let choices: Vec<(usize, Bit, bool)> = (0..n)
        .map(|i| (script.types[i], script.bits[i], script.controls[i]))
        .collect();

    // step three
    let Flight {
        mut records,
        detections,
        audit_received,
        audit_inconsistencies,
    } = fly(&scheme, &choices, script.detections.as_deref(), channel, rng)?;

    let mut messages = Vec::new();
    let lost: Vec<usize> = (0..n).filter(|&i| detections[i].is_none()).collect();
    if !lost.is_empty() {
        messages.push(ClassicalMessage {
            from: Party::Bob,
            body: MessageBody::LossReport(lost.clone()),
        });
    }

    // step four
    let controls: Vec<usize> = (0..n)
        .filter(|&i| script.controls[i] && detections[i].is_some())
        .collect();
    messages.push(ClassicalMessage {
        from: Party::Alice,
        body: MessageBody::ControlPositions(controls.clone()),
    });
    let report: Vec<CheckEntry> = controls
        .iter()
        .map(|&position| CheckEntry {
            position,
            detected: detections[position].expect("lost positions are excluded"),
        })
        .collect();
    messages.push(ClassicalMessage {
        from: Party::Bob,
        body: MessageBody::CheckReport(report.clone()),
    });

    // step five
    let failed = failed_checks(&scheme, &records, &report)?;
    let mut stats = SessionStats {
        photons_sent: n,
        photons_lost: lost.len(),
        checked: controls.len(),
        check_inconsistencies: failed.len(),
        audit_received,
        audit_inconsistencies,
    };
    stats.check_inconsistencies = failed.len();
    if !failed.is_empty() {
        let reason = format!("{} of {} control photons inconsistent", failed.len(), controls.len());
        messages.push(ClassicalMessage {
            from: Party::Alice,
            body: MessageBody::Abort(failed),
        });
        return Ok(SessionTranscript {
            protocol: ProtocolKind::DirectCommunication,
            scheme: scheme.kind(),
            k: None,
            loss_probability: channel.loss_probability,
            eavesdropper: channel.eavesdropper.is_some(),
            photons: records,
            messages,
            stats,
            verdict: Verdict::Abort { reason },
        });
    }

    // step six
    messages.push(ClassicalMessage {
        from: Party::Alice,
        body: MessageBody::KeyReveal(script.types.clone()),
    });
    let mut received = Vec::with_capacity(n);
    for (i, record) in records.iter_mut().enumerate() {
        let Some(d) = detections[i] else { continue };
        let bit = scheme.infer_detection(d, record.type_id)?;
        record.inferred = Some(bit);
        if !record.control {
            received.push(bit);
        }
    }

    Ok(SessionTranscript {
        protocol: ProtocolKind::DirectCommunication,
        scheme: scheme.kind(),
        k: None,
        loss_probability: channel.loss_probability,
        eavesdropper: channel.eavesdropper.is_some(),
        photons: records,
        messages,
        stats,
        verdict: Verdict::Message { received },
    })
}

/// The worked nine-photon direct-communication example.
pub mod table3 {
    use super::*;

    /// Alice's key sequence.
    pub const TYPES: [usize; 9] = [1, 3, 4, 4, 1, 2, 1, 3, 3];
    /// Message stream including the two control bits.
    pub const BITS: &str = "++---+-+-";
    /// Zero-based control positions (the boxed entries).
    pub const CONTROLS: [usize; 2] = [1, 6];
    pub const STATES_SENT: [&str; 9] = ["1+", "3+", "4-", "4-", "1-", "2+", "1-", "3+", "3-"];
    pub const BOB_FINDS: [&str; 9] = ["B1", "B'1", "B'4", "B2", "B2", "B'4", "B4", "B3", "B'3"];
    /// Message after removing the control bits.
    pub const MESSAGE: &str = "+---++-";

    pub fn script() -> DirectCommScript {
        let mut controls = vec![false; 9];
        for c in CONTROLS {
            controls[c] = true;
        }
        DirectCommScript {
            types: TYPES.to_vec(),
            bits: Bit::parse_string(BITS).expect("fixture bits"),
            controls,
            detections: Some(
                BOB_FINDS
                    .iter()
                    .map(|s| s.parse().expect("fixture detections"))
                    .collect(),
            ),
        }
    }

    /// `"1+"`-style labels of the states a transcript sent.
    pub fn states_sent(transcript: &SessionTranscript) -> Vec<String> {
        transcript
            .photons
            .iter()
            .map(|r| format!("{}{}", r.type_id, r.bit))
            .collect()
    }
}
