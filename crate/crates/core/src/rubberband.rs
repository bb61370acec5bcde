//! The band-in-a-tube trial engine.
//!
//! One trial: a band of unstretched length `L` is stretched across a tube of
//! span `D` connecting Alice and Bob, colored yellow or red by a fair coin.
//! A party given input 0 reads the color at its end and outputs the color
//! bit. A party given input 1 counts to three, pulls, measures the length of
//! the piece it receives and its color, and outputs `XNOR(l, c)` where `l`
//! says whether the piece is longer than `L/2`. Two pulls snap the band at a
//! uniform point; a sole puller receives the whole band; if nobody pulls by
//! the third tick the tube sucks the band away.
//!
//! Draw order within a trial is fixed: band color first, then (only when
//! both parties pull) the break point. Identical [`TrialConfig`]s therefore
//! replay to bitwise-identical [`TrialRecord`]s.

use serde::Serialize;
use thiserror::Error;

use crate::bits::{xnor, Bit, Color, InputPair, OutputPair};
use crate::rng::SplitMix64;

/// Ticks counted by an input-1 party before pulling.
pub const COUNT_TICKS: u32 = 3;

/// Relative margin kept around the band midpoint when sampling break points
/// (2^-40). Break points this close to `L/2` are resampled so the
/// longer-than-half comparison is total without inventing a tie rule.
pub const MIDPOINT_MARGIN: f64 = 1.0 / (1u64 << 40) as f64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("band length must be positive and finite, got {0}")]
    BandLength(f64),
    #[error("tube span must be finite and at least the band length {len}, got {span}")]
    TubeSpan { len: f64, span: f64 },
    #[error("timing parameter {name} must be positive and finite, got {value}")]
    Timing { name: &'static str, value: f64 },
    #[error("retraction speed {v} exceeds signal speed {c}")]
    SpeedOrdering { v: f64, c: f64 },
    #[error("piece length sits exactly on the band midpoint")]
    MidpointLength,
    #[error("party with input 1 has no length bit")]
    MissingLengthBit,
}

/// Validated band/tube geometry: unstretched length `L` and tube span `D`
/// with `0 < L <= D` (the band is stretched, never slack).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandGeometry {
    #[serde(rename = "unstretched_len")]
    len: f64,
    #[serde(rename = "tube_span")]
    span: f64,
}

impl BandGeometry {
    pub fn new(len: f64, span: f64) -> Result<Self, ModelError> {
        if !(len.is_finite() && len > 0.0) {
            return Err(ModelError::BandLength(len));
        }
        if !(span.is_finite() && span >= len) {
            return Err(ModelError::TubeSpan { len, span });
        }
        Ok(Self { len, span })
    }

    /// Unstretched band length `L`.
    pub fn len(&self) -> f64 {
        self.len
    }

    /// Tube span `D` (the Alice-Bob distance).
    pub fn span(&self) -> f64 {
        self.span
    }
}

impl Default for BandGeometry {
    fn default() -> Self {
        Self { len: 1.0, span: 1.0 }
    }
}

/// Validated clock and speed parameters: tick duration, band retraction
/// speed `v`, and signal speed `c`, with `0 < v <= c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingParams {
    tick: f64,
    retraction_speed: f64,
    signal_speed: f64,
}

impl TimingParams {
    pub fn new(tick: f64, retraction_speed: f64, signal_speed: f64) -> Result<Self, ModelError> {
        for (name, value) in [
            ("tick", tick),
            ("retraction_speed", retraction_speed),
            ("signal_speed", signal_speed),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::Timing { name, value });
            }
        }
        if retraction_speed > signal_speed {
            return Err(ModelError::SpeedOrdering {
                v: retraction_speed,
                c: signal_speed,
            });
        }
        Ok(Self {
            tick,
            retraction_speed,
            signal_speed,
        })
    }

    pub fn tick(&self) -> f64 {
        self.tick
    }

    pub fn retraction_speed(&self) -> f64 {
        self.retraction_speed
    }

    pub fn signal_speed(&self) -> f64 {
        self.signal_speed
    }

    /// Instant an input-1 party pulls: three ticks after trial start.
    pub fn pull_tick(&self) -> f64 {
        f64::from(COUNT_TICKS) * self.tick
    }

    /// Time for a signal at speed `c` to cross half the tube.
    pub fn photon_arm_time(&self, span: f64) -> f64 {
        (0.5 * span) / self.signal_speed
    }
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            tick: 1.0,
            retraction_speed: 1.0,
            signal_speed: 1.0,
        }
    }
}

/// One loaded band: its color plus the geometry it is stretched into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec {
    pub color: Color,
    pub geometry: BandGeometry,
}

/// Final fate of the band in a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandState {
    /// Never broken (a sole puller takes it whole).
    Intact,
    /// Snapped at band coordinate `break_point`, measured from Alice's end,
    /// strictly inside `(0, L)` and never exactly `L/2`.
    Broken { break_point: f64 },
    /// Removed by the tube mechanism because nobody pulled.
    Sucked,
}

/// Everything that determines one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    /// Alice's input bit.
    pub x: Bit,
    /// Bob's input bit.
    pub y: Bit,
    /// Seed of this trial's private random stream.
    pub seed: u64,
    pub band: BandGeometry,
}

impl TrialConfig {
    pub fn inputs(&self) -> InputPair {
        InputPair::new(self.x, self.y)
    }
}

/// Full provenance of one protocol round.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub inputs: InputPair,
    pub color: Color,
    pub alice_pulled: bool,
    pub bob_pulled: bool,
    pub band_final: BandState,
    /// Band length Alice received; present iff she pulled.
    pub alice_piece: Option<f64>,
    /// Band length Bob received; present iff he pulled.
    pub bob_piece: Option<f64>,
    pub l_alice: Option<Bit>,
    pub l_bob: Option<Bit>,
    pub c_alice: Bit,
    pub c_bob: Bit,
    pub outputs: OutputPair,
    /// Instant Alice's output is available.
    pub alice_done: f64,
    /// Instant Bob's output is available.
    pub bob_done: f64,
}

/// Load a fresh band: fair color draw, geometry from the configuration.
pub fn sample_band(rng: &mut SplitMix64, geometry: BandGeometry) -> BandSpec {
    BandSpec {
        color: Color::from_bit(rng.next_bit()),
        geometry,
    }
}

/// Uniform break point in `(0, len)`, resampled until it clears the
/// midpoint by `MIDPOINT_MARGIN * len`.
pub fn sample_break_point(rng: &mut SplitMix64, len: f64) -> f64 {
    let half = 0.5 * len;
    let margin = MIDPOINT_MARGIN * len;
    loop {
        let p = rng.next_unit() * len;
        if p > 0.0 && p < len && (p - half).abs() > margin {
            return p;
        }
    }
}

/// What the tube hands out once the pulls (or their absence) are known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PullOutcome {
    pub state: BandState,
    pub alice_piece: Option<f64>,
    pub bob_piece: Option<f64>,
}

/// Resolve the pulls: two pulls snap the band at a uniform point (Alice
/// keeps `p`, Bob keeps `L - p`); a sole puller receives the entire band
/// and consumes no randomness; no pulls means the tube sucks the band away.
pub fn resolve_pulls(x: Bit, y: Bit, band: &BandSpec, rng: &mut SplitMix64) -> PullOutcome {
    let len = band.geometry.len();
    match (x, y) {
        (Bit::One, Bit::One) => {
            let p = sample_break_point(rng, len);
            PullOutcome {
                state: BandState::Broken { break_point: p },
                alice_piece: Some(p),
                bob_piece: Some(len - p),
            }
        }
        (Bit::One, Bit::Zero) => PullOutcome {
            state: BandState::Intact,
            alice_piece: Some(len),
            bob_piece: None,
        },
        (Bit::Zero, Bit::One) => PullOutcome {
            state: BandState::Intact,
            alice_piece: None,
            bob_piece: Some(len),
        },
        (Bit::Zero, Bit::Zero) => PullOutcome {
            state: BandState::Sucked,
            alice_piece: None,
            bob_piece: None,
        },
    }
}

/// Length bit: 1 iff the piece exceeds half the band. The exact midpoint is
/// a contract violation; break sampling keeps a margin around it.
pub fn length_to_l(piece_len: f64, band_len: f64) -> Result<Bit, ModelError> {
    let half = 0.5 * band_len;
    if piece_len == half {
        return Err(ModelError::MidpointLength);
    }
    Ok(Bit::from_bool(piece_len > half))
}

/// A party's output rule: input 0 returns the color bit, input 1 returns
/// `XNOR(l, c)` and requires the length bit.
pub fn local_output(input: Bit, c: Bit, l: Option<Bit>) -> Result<Bit, ModelError> {
    match input {
        Bit::Zero => Ok(c),
        Bit::One => l.map(|l| xnor(l, c)).ok_or(ModelError::MissingLengthBit),
    }
}

/// Tube-coordinate distance a piece's free end travels to its holder.
///
/// Computed fraction-first, `(piece / L) * D`, so that whichever party holds
/// the longer piece gets a distance of at least `D/2` exactly, rounding
/// included; the sole puller's whole band gives exactly `D`.
pub fn retraction_distance(piece_len: f64, band: &BandGeometry) -> f64 {
    (piece_len / band.len()) * band.span()
}

/// Per-party completion instants. An input-0 party is done immediately at
/// tick 0 (the color is read in place); an input-1 party finishes when its
/// piece has retracted to its hand: `pull_tick + distance / v`.
pub fn completion_time(
    record: &TrialRecord,
    timing: &TimingParams,
    band: &BandGeometry,
) -> (f64, f64) {
    let done = |input: Bit, piece: Option<f64>| -> f64 {
        match input {
            Bit::Zero => 0.0,
            Bit::One => {
                let piece = piece.expect("puller holds a piece");
                timing.pull_tick()
                    + retraction_distance(piece, band) / timing.retraction_speed()
            }
        }
    };
    (
        done(record.inputs.alice, record.alice_piece),
        done(record.inputs.bob, record.bob_piece),
    )
}

/// Run one full trial from its seed.
pub fn run_trial(config: &TrialConfig, timing: &TimingParams) -> TrialRecord {
    let mut rng = SplitMix64::new(config.seed);
    let band = sample_band(&mut rng, config.band);
    let c = band.color.bit();
    let pulls = resolve_pulls(config.x, config.y, &band, &mut rng);

    let len = config.band.len();
    let length_bit = |piece: Option<f64>| -> Option<Bit> {
        piece.map(|p| length_to_l(p, len).expect("break sampling avoids the midpoint"))
    };
    let l_alice = length_bit(pulls.alice_piece);
    let l_bob = length_bit(pulls.bob_piece);

    let out_alice = local_output(config.x, c, l_alice).expect("length bit present for pullers");
    let out_bob = local_output(config.y, c, l_bob).expect("length bit present for pullers");

    let mut record = TrialRecord {
        inputs: config.inputs(),
        color: band.color,
        alice_pulled: config.x == Bit::One,
        bob_pulled: config.y == Bit::One,
        band_final: pulls.state,
        alice_piece: pulls.alice_piece,
        bob_piece: pulls.bob_piece,
        l_alice,
        l_bob,
        c_alice: c,
        c_bob: c,
        outputs: OutputPair::new(out_alice, out_bob),
        alice_done: 0.0,
        bob_done: 0.0,
    };
    let (alice_done, bob_done) = completion_time(&record, timing, &config.band);
    record.alice_done = alice_done;
    record.bob_done = bob_done;
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::nlb_constraint;
    use crate::rng::trial_seed;

    fn config(x: Bit, y: Bit, seed: u64) -> TrialConfig {
        TrialConfig {
            x,
            y,
            seed,
            band: BandGeometry::default(),
        }
    }

    #[test]
    fn geometry_and_timing_validation() {
        assert!(BandGeometry::new(1.0, 1.0).is_ok());
        assert!(BandGeometry::new(0.5, 2.0).is_ok());
        assert!(matches!(
            BandGeometry::new(0.0, 1.0),
            Err(ModelError::BandLength(_))
        ));
        assert!(matches!(
            BandGeometry::new(1.0, 0.5),
            Err(ModelError::TubeSpan { .. })
        ));
        assert!(TimingParams::new(1.0, 0.5, 1.0).is_ok());
        assert!(matches!(
            TimingParams::new(1.0, 2.0, 1.0),
            Err(ModelError::SpeedOrdering { .. })
        ));
        assert!(matches!(
            TimingParams::new(0.0, 1.0, 1.0),
            Err(ModelError::Timing { .. })
        ));
    }

    #[test]
    fn color_frequency_is_one_half() {
        let mut rng = SplitMix64::new(2024);
        let n = 100_000;
        let mut yellow = 0u64;
        for _ in 0..n {
            if sample_band(&mut rng, BandGeometry::default()).color == Color::Yellow {
                yellow += 1;
            }
        }
        let freq = yellow as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.005, "yellow freq = {freq}");
    }

    #[test]
    fn same_seed_replays_same_color() {
        for seed in 0..50 {
            let a = sample_band(&mut SplitMix64::new(seed), BandGeometry::default());
            let b = sample_band(&mut SplitMix64::new(seed), BandGeometry::default());
            assert_eq!(a.color, b.color);
        }
    }

    /// 2x2 chi-square statistic for independence of two binary sequences.
    fn chi_square_2x2(pairs: &[(Bit, Bit)]) -> f64 {
        let mut n = [[0.0f64; 2]; 2];
        for &(a, b) in pairs {
            n[a.as_usize()][b.as_usize()] += 1.0;
        }
        let total: f64 = pairs.len() as f64;
        let row = [n[0][0] + n[0][1], n[1][0] + n[1][1]];
        let col = [n[0][0] + n[1][0], n[0][1] + n[1][1]];
        let mut stat = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let expected = row[i] * col[j] / total;
                stat += (n[i][j] - expected).powi(2) / expected;
            }
        }
        stat
    }

    #[test]
    fn derived_sub_streams_draw_independent_colors() {
        // colors from two sub-streams of one master seed, paired up
        let master = 99;
        let geometry = BandGeometry::default();
        let pairs: Vec<(Bit, Bit)> = (0..20_000)
            .map(|i| {
                let a = sample_band(&mut SplitMix64::new(trial_seed(master, 2 * i)), geometry);
                let b =
                    sample_band(&mut SplitMix64::new(trial_seed(master, 2 * i + 1)), geometry);
                (a.color.bit(), b.color.bit())
            })
            .collect();
        // 5% critical value for chi-square with one degree of freedom
        assert!(chi_square_2x2(&pairs) < 3.841);

        // negative control: a stream paired with itself is maximally dependent
        let same: Vec<(Bit, Bit)> = (0..20_000)
            .map(|i| {
                let c = sample_band(&mut SplitMix64::new(trial_seed(master, i)), geometry)
                    .color
                    .bit();
                (c, c)
            })
            .collect();
        assert!(chi_square_2x2(&same) > 3.841);
    }

    #[test]
    fn break_points_stay_strictly_inside_the_band() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..10_000 {
            let p = sample_break_point(&mut rng, 1.0);
            assert!(p > 0.0 && p < 1.0);
            assert!((p - 0.5).abs() > MIDPOINT_MARGIN);
        }
    }

    #[test]
    fn break_points_split_evenly_around_the_midpoint() {
        let mut rng = SplitMix64::new(6);
        let n = 100_000;
        let below = (0..n)
            .filter(|_| sample_break_point(&mut rng, 1.0) < 0.5)
            .count();
        let freq = below as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.005, "P(p < L/2) = {freq}");
    }

    #[test]
    fn pull_resolution_cases() {
        let mut rng = SplitMix64::new(7);
        let band = BandSpec {
            color: Color::Red,
            geometry: BandGeometry::default(),
        };

        let both = resolve_pulls(Bit::One, Bit::One, &band, &mut rng);
        let p = match both.state {
            BandState::Broken { break_point } => break_point,
            other => panic!("expected a break, got {other:?}"),
        };
        // band length is conserved (exact at L = 1)
        assert_eq!(both.alice_piece.unwrap() + both.bob_piece.unwrap(), 1.0);
        assert_eq!(both.alice_piece.unwrap(), p);

        let sole = resolve_pulls(Bit::Zero, Bit::One, &band, &mut rng);
        assert_eq!(sole.state, BandState::Intact);
        assert_eq!(sole.bob_piece, Some(1.0));
        assert_eq!(sole.alice_piece, None);

        let nobody = resolve_pulls(Bit::Zero, Bit::Zero, &band, &mut rng);
        assert_eq!(nobody.state, BandState::Sucked);
        assert_eq!(nobody.alice_piece, None);
        assert_eq!(nobody.bob_piece, None);
    }

    #[test]
    fn sole_puller_consumes_no_randomness() {
        let band = BandSpec {
            color: Color::Red,
            geometry: BandGeometry::default(),
        };
        let mut a = SplitMix64::new(13);
        let mut b = a.clone();
        resolve_pulls(Bit::One, Bit::Zero, &band, &mut a);
        resolve_pulls(Bit::Zero, Bit::Zero, &band, &mut b);
        assert_eq!(a, b);
        assert_eq!(a, SplitMix64::new(13));
    }

    #[test]
    fn length_bit_cases() {
        assert_eq!(length_to_l(0.75, 1.0), Ok(Bit::One));
        assert_eq!(length_to_l(0.25, 1.0), Ok(Bit::Zero));
        // the sole puller's whole band is always longer than half
        assert_eq!(length_to_l(1.0, 1.0), Ok(Bit::One));
        assert_eq!(length_to_l(0.5, 1.0), Err(ModelError::MidpointLength));
    }

    #[test]
    fn local_output_cases() {
        assert_eq!(local_output(Bit::Zero, Bit::One, None), Ok(Bit::One));
        assert_eq!(
            local_output(Bit::One, Bit::One, Some(Bit::One)),
            Ok(Bit::One)
        );
        assert_eq!(
            local_output(Bit::One, Bit::Zero, Some(Bit::One)),
            Ok(Bit::Zero)
        );
        assert_eq!(
            local_output(Bit::One, Bit::One, None),
            Err(ModelError::MissingLengthBit)
        );
    }

    fn find_seed_with_color(want: Color) -> u64 {
        (0..)
            .find(|&s| {
                sample_band(&mut SplitMix64::new(s), BandGeometry::default()).color == want
            })
            .unwrap()
    }

    #[test]
    fn both_zero_inputs_echo_the_color() {
        let timing = TimingParams::default();
        let yellow_seed = find_seed_with_color(Color::Yellow);
        let rec = run_trial(&config(Bit::Zero, Bit::Zero, yellow_seed), &timing);
        assert_eq!(rec.outputs, OutputPair::new(Bit::One, Bit::One));
        assert_eq!(rec.band_final, BandState::Sucked);

        let red_seed = find_seed_with_color(Color::Red);
        let rec = run_trial(&config(Bit::Zero, Bit::Zero, red_seed), &timing);
        assert_eq!(rec.outputs, OutputPair::new(Bit::Zero, Bit::Zero));
    }

    #[test]
    fn mixed_inputs_with_red_band_output_zeros() {
        let timing = TimingParams::default();
        let red_seed = find_seed_with_color(Color::Red);
        let rec = run_trial(&config(Bit::Zero, Bit::One, red_seed), &timing);
        assert_eq!(rec.outputs, OutputPair::new(Bit::Zero, Bit::Zero));
        assert_eq!(rec.bob_piece, Some(1.0));
        assert_eq!(rec.l_bob, Some(Bit::One));
    }

    #[test]
    fn both_pull_invariants_hold_on_every_seed() {
        let timing = TimingParams::default();
        for seed in 0..5_000 {
            let rec = run_trial(&config(Bit::One, Bit::One, seed), &timing);
            assert!(nlb_constraint(rec.inputs, rec.outputs));
            // outputs anti-correlated, length bits opposite, colors shared
            assert_ne!(rec.outputs.alice, rec.outputs.bob);
            assert_eq!(rec.l_alice.unwrap(), !rec.l_bob.unwrap());
            assert_eq!(rec.c_alice, rec.c_bob);
            assert_eq!(rec.alice_piece.unwrap() + rec.bob_piece.unwrap(), 1.0);
        }
    }

    #[test]
    fn constraint_holds_on_every_seed_and_setting() {
        let timing = TimingParams::default();
        for seed in 0..2_000 {
            for inputs in InputPair::ALL {
                let rec = run_trial(&config(inputs.alice, inputs.bob, seed), &timing);
                assert!(nlb_constraint(rec.inputs, rec.outputs), "seed {seed}");
                if inputs.alice == Bit::Zero {
                    assert_eq!(rec.outputs.alice, rec.color.bit());
                }
                if inputs.bob == Bit::Zero {
                    assert_eq!(rec.outputs.bob, rec.color.bit());
                }
            }
        }
    }

    #[test]
    fn replay_determinism_is_bitwise() {
        let timing = TimingParams::default();
        for seed in [0, 1, 99, u64::MAX] {
            for inputs in InputPair::ALL {
                let cfg = config(inputs.alice, inputs.bob, seed);
                assert_eq!(run_trial(&cfg, &timing), run_trial(&cfg, &timing));
            }
        }
    }

    #[test]
    fn zero_input_party_finishes_immediately() {
        let timing = TimingParams::default();
        let rec = run_trial(&config(Bit::Zero, Bit::One, 3), &timing);
        assert_eq!(rec.alice_done, 0.0);
        // sole puller: count to three, then the far end crosses the tube
        assert_eq!(rec.bob_done, 3.0 + 1.0);
    }

    #[test]
    fn finishing_party_never_beats_the_photon() {
        let band = BandGeometry::new(0.8, 2.0).unwrap();
        let timing = TimingParams::new(0.25, 0.5, 1.5).unwrap();
        let photon = timing.photon_arm_time(band.span());
        // whoever holds the long piece waits the count plus at least a
        // half-span retraction
        let slowest_floor =
            timing.pull_tick() + (0.5 * band.span()) / timing.retraction_speed();
        for seed in 0..5_000 {
            let rec = run_trial(
                &TrialConfig {
                    x: Bit::One,
                    y: Bit::One,
                    seed,
                    band,
                },
                &timing,
            );
            let da = retraction_distance(rec.alice_piece.unwrap(), &band);
            let db = retraction_distance(rec.bob_piece.unwrap(), &band);
            let finish = rec.alice_done.max(rec.bob_done);
            assert!(da.max(db) >= 0.5 * band.span(), "seed {seed}");
            assert!(finish >= slowest_floor, "seed {seed}");
            assert!(finish >= photon, "seed {seed}");
        }
    }

    #[test]
    fn empirical_marginals_are_uniform() {
        let timing = TimingParams::default();
        let n = 100_000u64;
        for inputs in InputPair::ALL {
            let mut ones_a = 0u64;
            let mut ones_b = 0u64;
            for seed in 0..n {
                let rec = run_trial(&config(inputs.alice, inputs.bob, seed), &timing);
                ones_a += u64::from(rec.outputs.alice.as_u8());
                ones_b += u64::from(rec.outputs.bob.as_u8());
            }
            // 3 sigma binomial tolerance at n = 1e5
            for ones in [ones_a, ones_b] {
                let freq = ones as f64 / n as f64;
                assert!((freq - 0.5).abs() < 0.0048, "inputs {inputs:?}: {freq}");
            }
        }
    }
}
