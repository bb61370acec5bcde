//! Machine-readable run reports.
//!
//! Every f64 is serialized with 17 significant digits (`{:.16e}`), which
//! round-trips exactly, so reports from identical configurations are
//! byte-identical and safe to diff.

use std::io;

use serde::Serialize;

use crate::agents::AuditReport;
use crate::runner::RunConfig;
use crate::stats::Behavior;

/// 17-significant-digit rendering used for every float this crate emits.
pub(crate) fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// The four empirical correlators, `exy = E(x, y)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Correlators {
    pub e00: f64,
    pub e01: f64,
    pub e10: f64,
    pub e11: f64,
}

/// `P(outcome = 1 | x, y)` per party, indexed `[x][y]`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Marginals {
    pub alice: [[f64; 2]; 2],
    pub bob: [[f64; 2]; 2],
}

/// A metric evaluated in both directions; `into_alice` measures what Bob's
/// input could push into Alice's outcome, and vice versa.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Directional {
    pub into_alice: f64,
    pub into_bob: f64,
}

/// Per-run check of the retraction-time bound on both-pull trials.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimingCheck {
    /// Minimum over both-pull trials of (finishing party's completion time)
    /// divided by the one-arm photon time `D / (2c)`; at least 1 when the
    /// model is honest.
    pub min_completion_over_photon_ratio: f64,
    /// Trials whose longest retraction fell short of `D/2` or whose
    /// finishing time beat the photon.
    pub violations: u64,
}

/// One run's verification summary.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: RunConfig,
    pub behavior: Behavior<f64>,
    pub correlators: Correlators,
    pub chsh: f64,
    pub marginals: Marginals,
    pub signaling_tv: Directional,
    pub mi_leak_bits: Directional,
    pub constraint_violations: u64,
    /// KS statistic of the observed break points against Uniform(0, L);
    /// absent for scenarios without a band.
    pub ks_break_uniformity: Option<f64>,
    pub timing_check: Option<TimingCheck>,
    /// Message audit; present for the agents scenario.
    pub audit: Option<AuditReport>,
}

impl Report {
    /// Exit-code predicate: the box constraint held on every trial and, when
    /// audited, no direct party-to-party message was seen.
    pub fn passed(&self) -> bool {
        self.constraint_violations == 0 && self.audit.is_none_or(|a| a.verdict)
    }

    /// Compact JSON with byte-stable float formatting.
    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits17);
        self.serialize(&mut ser)
            .expect("report serialization cannot fail");
        String::from_utf8(buf).expect("serializer emits UTF-8")
    }
}

struct SigDigits17;

impl serde_json::ser::Formatter for SigDigits17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}
