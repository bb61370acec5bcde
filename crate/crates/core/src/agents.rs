//! The protocol as isolated state machines exchanging audited messages.
//!
//! Alice, Bob, and the tube run as separate machines wired through a
//! deterministic logical-time event queue; a referee delivers inputs and
//! collects outputs. Nothing in the wiring lets the parties address each
//! other, and [`audit`] counts direct party-to-party traffic anyway so the
//! claim is checked rather than assumed. On the same [`TrialConfig`] the
//! run produces a [`TrialRecord`] identical to [`rubberband::run_trial`],
//! because both draw from the same stream in the same order and share the
//! same measurement primitives.
//!
//! Simultaneous events resolve in a fixed order (Alice, Bob, tube, referee,
//! then the suction timer); the physics is order-independent because the
//! tube acts on the set of pulls it has received by the third tick.
//!
//! [`rubberband::run_trial`]: crate::rubberband::run_trial

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::bits::{Bit, Color, OutputPair, Party};
use crate::report::fmt_f64;
use crate::rng::SplitMix64;
use crate::rubberband::{
    length_to_l, resolve_pulls, retraction_distance, sample_band, BandGeometry, BandSpec,
    BandState, ModelError, TimingParams, TrialConfig, TrialRecord,
};

/// Addressable endpoints. The referee is the harness side: it hands out
/// inputs and receives outputs, and never touches the band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Alice,
    Bob,
    Tube,
    Referee,
}

impl Endpoint {
    /// Fixed service order for simultaneous deliveries.
    fn rank(self) -> u8 {
        match self {
            Endpoint::Alice => 0,
            Endpoint::Bob => 1,
            Endpoint::Tube => 2,
            Endpoint::Referee => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Endpoint::Alice => "alice",
            Endpoint::Bob => "bob",
            Endpoint::Tube => "tube",
            Endpoint::Referee => "referee",
        }
    }
}

impl From<Party> for Endpoint {
    fn from(party: Party) -> Endpoint {
        match party {
            Party::Alice => Endpoint::Alice,
            Party::Bob => Endpoint::Bob,
        }
    }
}

/// Protocol messages. Grips are implicit: pulling is the only active move a
/// party makes on the band, and the tube answers with deliveries.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    DeliverInput(Bit),
    ReadColor,
    ColorIs(Color),
    Pull,
    PieceDelivered { length: f64, color: Color },
    Sucked,
    Output(Bit),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::DeliverInput(_) => "deliver_input",
            Message::ReadColor => "read_color",
            Message::ColorIs(_) => "color_is",
            Message::Pull => "pull",
            Message::PieceDelivered { .. } => "piece_delivered",
            Message::Sucked => "sucked",
            Message::Output(_) => "output",
        }
    }

    pub fn payload(&self) -> String {
        match self {
            Message::DeliverInput(bit) | Message::Output(bit) => format!("bit={bit}"),
            Message::ColorIs(color) => format!("color={color}"),
            Message::PieceDelivered { length, color } => {
                format!("length={};color={color}", fmt_f64(*length))
            }
            Message::ReadColor | Message::Pull | Message::Sucked => String::new(),
        }
    }
}

/// One delivered message.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub tick: f64,
    pub from: Endpoint,
    pub to: Endpoint,
    pub message: Message,
}

impl TraceEvent {
    /// `tick,from,to,kind,payload` line for trace dumps.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            fmt_f64(self.tick),
            self.from.label(),
            self.to.label(),
            self.message.kind(),
            self.message.payload()
        )
    }
}

/// Time-ordered list of every message delivered in one trial.
pub type Trace = Vec<TraceEvent>;

/// Direct Alice-Bob traffic counts; the verdict is true iff both are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub alice_to_bob_count: u64,
    pub bob_to_alice_count: u64,
    pub verdict: bool,
}

/// Count direct party-to-party messages in a trace.
pub fn audit(trace: &[TraceEvent]) -> AuditReport {
    let mut alice_to_bob = 0;
    let mut bob_to_alice = 0;
    for event in trace {
        match (event.from, event.to) {
            (Endpoint::Alice, Endpoint::Bob) => alice_to_bob += 1,
            (Endpoint::Bob, Endpoint::Alice) => bob_to_alice += 1,
            _ => {}
        }
    }
    AuditReport {
        alice_to_bob_count: alice_to_bob,
        bob_to_alice_count: bob_to_alice,
        verdict: alice_to_bob == 0 && bob_to_alice == 0,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("{role:?} cannot accept {kind} in its current phase")]
    UnexpectedMessage { role: Party, kind: &'static str },
    #[error("tube cannot accept {kind} from {from:?}")]
    UnexpectedTubeMessage { from: Endpoint, kind: &'static str },
    #[error("pull received after the band was already resolved")]
    PullAfterResolution,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A message scheduled for delivery at `at`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub at: f64,
    pub to: Endpoint,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq)]
enum PartyPhase {
    AwaitingInput,
    AwaitingColor,
    AwaitingPiece,
    Done,
}

/// One measurement wing. Knows the public apparatus constants (band length,
/// clock) and its own observations; everything else arrives as messages.
#[derive(Debug, Clone)]
pub struct PartyMachine {
    role: Party,
    band_len: f64,
    timing: TimingParams,
    phase: PartyPhase,
    input: Option<Bit>,
    length_bit: Option<Bit>,
    color_bit: Option<Bit>,
    output: Option<Bit>,
}

impl PartyMachine {
    pub fn new(role: Party, band_len: f64, timing: TimingParams) -> Self {
        Self {
            role,
            band_len,
            timing,
            phase: PartyPhase::AwaitingInput,
            input: None,
            length_bit: None,
            color_bit: None,
            output: None,
        }
    }

    pub fn length_bit(&self) -> Option<Bit> {
        self.length_bit
    }

    pub fn color_bit(&self) -> Option<Bit> {
        self.color_bit
    }

    pub fn output(&self) -> Option<Bit> {
        self.output
    }

    /// Advance on one delivered message, emitting scheduled replies.
    pub fn step(&mut self, at: f64, message: &Message) -> Result<Vec<Outgoing>, ProtocolError> {
        match (&self.phase, message) {
            (PartyPhase::AwaitingInput, Message::DeliverInput(bit)) => {
                self.input = Some(*bit);
                match bit {
                    Bit::Zero => {
                        self.phase = PartyPhase::AwaitingColor;
                        Ok(vec![Outgoing {
                            at,
                            to: Endpoint::Tube,
                            message: Message::ReadColor,
                        }])
                    }
                    Bit::One => {
                        // count to three before pulling
                        self.phase = PartyPhase::AwaitingPiece;
                        Ok(vec![Outgoing {
                            at: self.timing.pull_tick(),
                            to: Endpoint::Tube,
                            message: Message::Pull,
                        }])
                    }
                }
            }
            (PartyPhase::AwaitingColor, Message::ColorIs(color)) => {
                let c = color.bit();
                self.color_bit = Some(c);
                self.output = Some(c);
                self.phase = PartyPhase::Done;
                Ok(vec![Outgoing {
                    at,
                    to: Endpoint::Referee,
                    message: Message::Output(c),
                }])
            }
            (PartyPhase::AwaitingPiece, Message::PieceDelivered { length, color }) => {
                let l = length_to_l(*length, self.band_len)?;
                let c = color.bit();
                self.length_bit = Some(l);
                self.color_bit = Some(c);
                let out = crate::bits::xnor(l, c);
                self.output = Some(out);
                self.phase = PartyPhase::Done;
                Ok(vec![Outgoing {
                    at,
                    to: Endpoint::Referee,
                    message: Message::Output(out),
                }])
            }
            // the suction notice reaches a done grip; nothing to act on
            (PartyPhase::Done, Message::Sucked) => Ok(Vec::new()),
            (_, message) => Err(ProtocolError::UnexpectedMessage {
                role: self.role,
                kind: message.kind(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TubePhase {
    Armed,
    Resolved,
}

/// The tube: holds the loaded band, answers color reads, collects pulls, and
/// resolves them at the third tick. Its behavior depends only on which pulls
/// arrived, never on who abstained.
#[derive(Debug, Clone)]
pub struct TubeMachine {
    band: BandSpec,
    timing: TimingParams,
    rng: SplitMix64,
    pulled_alice: bool,
    pulled_bob: bool,
    phase: TubePhase,
    band_final: BandState,
    alice_piece: Option<f64>,
    bob_piece: Option<f64>,
}

impl TubeMachine {
    /// Load a fresh band, drawing its color from the trial stream.
    pub fn new(geometry: BandGeometry, timing: TimingParams, mut rng: SplitMix64) -> Self {
        let band = sample_band(&mut rng, geometry);
        Self {
            band,
            timing,
            rng,
            pulled_alice: false,
            pulled_bob: false,
            phase: TubePhase::Armed,
            band_final: BandState::Intact,
            alice_piece: None,
            bob_piece: None,
        }
    }

    pub fn band_color(&self) -> Color {
        self.band.color
    }

    pub fn band_final(&self) -> BandState {
        self.band_final
    }

    pub fn pieces(&self) -> (Option<f64>, Option<f64>) {
        (self.alice_piece, self.bob_piece)
    }

    /// Accept a color read or a pull from a party.
    pub fn step(
        &mut self,
        at: f64,
        from: Endpoint,
        message: &Message,
    ) -> Result<Vec<Outgoing>, ProtocolError> {
        match (self.phase, from, message) {
            (TubePhase::Armed, Endpoint::Alice | Endpoint::Bob, Message::ReadColor) => {
                Ok(vec![Outgoing {
                    at,
                    to: from,
                    message: Message::ColorIs(self.band.color),
                }])
            }
            (TubePhase::Armed, Endpoint::Alice, Message::Pull) => {
                self.pulled_alice = true;
                Ok(Vec::new())
            }
            (TubePhase::Armed, Endpoint::Bob, Message::Pull) => {
                self.pulled_bob = true;
                Ok(Vec::new())
            }
            (TubePhase::Resolved, _, Message::Pull) => Err(ProtocolError::PullAfterResolution),
            (_, from, message) => Err(ProtocolError::UnexpectedTubeMessage {
                from,
                kind: message.kind(),
            }),
        }
    }

    /// Third-tick resolution over the pulls received so far: two pulls snap
    /// the band and each piece travels to its holder; a sole pull hands over
    /// the whole band; no pulls triggers the suction, announced to both
    /// grips.
    pub fn resolve(&mut self, at: f64) -> Vec<Outgoing> {
        self.phase = TubePhase::Resolved;
        let outcome = resolve_pulls(
            Bit::from_bool(self.pulled_alice),
            Bit::from_bool(self.pulled_bob),
            &self.band,
            &mut self.rng,
        );
        self.band_final = outcome.state;
        self.alice_piece = outcome.alice_piece;
        self.bob_piece = outcome.bob_piece;

        if outcome.state == BandState::Sucked {
            return vec![
                Outgoing {
                    at,
                    to: Endpoint::Alice,
                    message: Message::Sucked,
                },
                Outgoing {
                    at,
                    to: Endpoint::Bob,
                    message: Message::Sucked,
                },
            ];
        }

        let mut out = Vec::new();
        for (piece, to) in [
            (outcome.alice_piece, Endpoint::Alice),
            (outcome.bob_piece, Endpoint::Bob),
        ] {
            if let Some(length) = piece {
                let travel = retraction_distance(length, &self.band.geometry)
                    / self.timing.retraction_speed();
                out.push(Outgoing {
                    at: at + travel,
                    to,
                    message: Message::PieceDelivered {
                        length,
                        color: self.band.color,
                    },
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum EventKind {
    Deliver {
        from: Endpoint,
        to: Endpoint,
        message: Message,
    },
    SuctionTimer,
}

#[derive(Debug, Clone, PartialEq)]
struct QueuedEvent {
    tick: f64,
    rank: u8,
    seq: u64,
    kind: EventKind,
}

impl Eq for QueuedEvent {}

impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.tick
            .total_cmp(&other.tick)
            .then(self.rank.cmp(&other.rank))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<std::cmp::Reverse<QueuedEvent>>,
    next_seq: u64,
}

impl EventQueue {
    fn push(&mut self, tick: f64, rank: u8, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap
            .push(std::cmp::Reverse(QueuedEvent { tick, rank, seq, kind }));
    }

    fn deliver(&mut self, tick: f64, from: Endpoint, to: Endpoint, message: Message) {
        self.push(tick, to.rank(), EventKind::Deliver { from, to, message });
    }

    // the timer runs last among same-tick events so every pull lands first
    fn schedule_timer(&mut self, tick: f64) {
        self.push(tick, 4, EventKind::SuctionTimer);
    }

    fn pop(&mut self) -> Option<QueuedEvent> {
        self.heap.pop().map(|rev| rev.0)
    }
}

/// Run one trial through the message-passing machines. Returns the full
/// record plus the complete trace of delivered messages.
pub fn run_protocol(config: &TrialConfig, timing: &TimingParams) -> (TrialRecord, Trace) {
    let mut tube = TubeMachine::new(config.band, *timing, SplitMix64::new(config.seed));
    let mut alice = PartyMachine::new(Party::Alice, config.band.len(), *timing);
    let mut bob = PartyMachine::new(Party::Bob, config.band.len(), *timing);

    let mut queue = EventQueue::default();
    queue.deliver(
        0.0,
        Endpoint::Referee,
        Endpoint::Alice,
        Message::DeliverInput(config.x),
    );
    queue.deliver(
        0.0,
        Endpoint::Referee,
        Endpoint::Bob,
        Message::DeliverInput(config.y),
    );
    queue.schedule_timer(timing.pull_tick());

    let mut trace: Trace = Vec::new();
    let mut collected: [Option<(Bit, f64)>; 2] = [None, None];

    while let Some(event) = queue.pop() {
        match event.kind {
            EventKind::Deliver { from, to, message } => {
                trace.push(TraceEvent {
                    tick: event.tick,
                    from,
                    to,
                    message: message.clone(),
                });
                let outgoing = match to {
                    Endpoint::Alice => alice
                        .step(event.tick, &message)
                        .expect("honest protocol run"),
                    Endpoint::Bob => bob.step(event.tick, &message).expect("honest protocol run"),
                    Endpoint::Tube => tube
                        .step(event.tick, from, &message)
                        .expect("honest protocol run"),
                    Endpoint::Referee => {
                        if let Message::Output(bit) = message {
                            let slot = if from == Endpoint::Alice { 0 } else { 1 };
                            collected[slot] = Some((bit, event.tick));
                        }
                        Vec::new()
                    }
                };
                for reply in outgoing {
                    queue.deliver(reply.at, to, reply.to, reply.message);
                }
            }
            EventKind::SuctionTimer => {
                for reply in tube.resolve(event.tick) {
                    queue.deliver(reply.at, Endpoint::Tube, reply.to, reply.message);
                }
            }
        }
    }

    let (out_alice, alice_done) = collected[0].expect("alice produced an output");
    let (out_bob, bob_done) = collected[1].expect("bob produced an output");
    let (alice_piece, bob_piece) = tube.pieces();
    let color_bit = tube.band_color().bit();

    let record = TrialRecord {
        inputs: config.inputs(),
        color: tube.band_color(),
        alice_pulled: config.x == Bit::One,
        bob_pulled: config.y == Bit::One,
        band_final: tube.band_final(),
        alice_piece,
        bob_piece,
        l_alice: alice.length_bit(),
        l_bob: bob.length_bit(),
        c_alice: alice.color_bit().unwrap_or(color_bit),
        c_bob: bob.color_bit().unwrap_or(color_bit),
        outputs: OutputPair::new(out_alice, out_bob),
        alice_done,
        bob_done,
    };
    (record, trace)
}
