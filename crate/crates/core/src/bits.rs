//! Two-valued domain primitives shared by every other module: bits, band
//! colors, per-party pairs, and the box constraint tying inputs to outputs.

use std::fmt;
use std::ops::{BitAnd, BitXor, Not};

/// A single protocol bit. Invalid values are unrepresentable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    /// Both values, in numeric order.
    pub const VALUES: [Bit; 2] = [Bit::Zero, Bit::One];

    pub const fn from_bool(v: bool) -> Self {
        if v {
            Bit::One
        } else {
            Bit::Zero
        }
    }

    pub const fn as_bool(self) -> bool {
        matches!(self, Bit::One)
    }

    pub const fn as_u8(self) -> u8 {
        self as u8
    }

    pub const fn as_usize(self) -> usize {
        self as usize
    }
}

impl Not for Bit {
    type Output = Bit;

    fn not(self) -> Bit {
        Bit::from_bool(!self.as_bool())
    }
}

impl BitAnd for Bit {
    type Output = Bit;

    fn bitand(self, rhs: Bit) -> Bit {
        Bit::from_bool(self.as_bool() && rhs.as_bool())
    }
}

impl BitXor for Bit {
    type Output = Bit;

    fn bitxor(self, rhs: Bit) -> Bit {
        Bit::from_bool(self.as_bool() != rhs.as_bool())
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// NOT(XOR(p, q)): one exactly when the two bits agree.
pub fn xnor(p: Bit, q: Bit) -> Bit {
    !(p ^ q)
}

/// Band color. Yellow carries bit one, red bit zero; that mapping is used
/// both when a party reads the color directly and when it folds the color
/// into an XNOR, so it lives here once.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Color {
    Red,
    Yellow,
}

impl Color {
    pub const fn bit(self) -> Bit {
        match self {
            Color::Red => Bit::Zero,
            Color::Yellow => Bit::One,
        }
    }

    pub const fn from_bit(b: Bit) -> Self {
        match b {
            Bit::Zero => Color::Red,
            Bit::One => Color::Yellow,
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Color::Red => "red",
            Color::Yellow => "yellow",
        })
    }
}

/// One of the two measurement wings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub const BOTH: [Party; 2] = [Party::Alice, Party::Bob];

    pub const fn other(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

/// Input bits for one round, Alice's then Bob's.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct InputPair {
    pub alice: Bit,
    pub bob: Bit,
}

impl InputPair {
    /// The four settings, in the round-robin order trial batches cycle
    /// through them.
    pub const ALL: [InputPair; 4] = [
        InputPair::new(Bit::Zero, Bit::Zero),
        InputPair::new(Bit::Zero, Bit::One),
        InputPair::new(Bit::One, Bit::Zero),
        InputPair::new(Bit::One, Bit::One),
    ];

    pub const fn new(alice: Bit, bob: Bit) -> Self {
        Self { alice, bob }
    }
}

/// Output bits for one round, Alice's then Bob's.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OutputPair {
    pub alice: Bit,
    pub bob: Bit,
}

impl OutputPair {
    pub const fn new(alice: Bit, bob: Bit) -> Self {
        Self { alice, bob }
    }
}

/// The box constraint: XOR of the output bits equals AND of the input bits.
pub fn nlb_constraint(inputs: InputPair, outputs: OutputPair) -> bool {
    (outputs.alice ^ outputs.bob) == (inputs.alice & inputs.bob)
}
