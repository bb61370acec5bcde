//! Scenario runner: seeded trial batches, statistic accumulation, and
//! report assembly.
//!
//! Trials are indexed globally. Trial `i` plays input setting `i mod 4`
//! (round-robin over the four settings, equal counts each) on the private
//! stream seeded by `trial_seed(master, i)`. Because every per-trial result
//! is a pure function of its index, a batch can be split across workers at
//! any boundary and merged in index order without changing a byte of the
//! output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::thread;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::agents::{audit, run_protocol};
use crate::bits::{nlb_constraint, Bit, InputPair, OutputPair, Party};
use crate::boxes::{ideal_pr_sample, LhvStrategy};
use crate::report::{fmt_f64, Correlators, Directional, Marginals, Report, TimingCheck};
use crate::rng::{trial_seed, SplitMix64};
use crate::rubberband::{
    retraction_distance, run_trial, BandGeometry, BandState, TimingParams, TrialConfig,
    TrialRecord,
};
use crate::stats::{self, JointCounts};

/// What to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// The band model as a direct trial engine.
    RubberBand,
    /// The band model as isolated message-passing machines, audited.
    Agents,
    /// The canonical PR sampler.
    IdealPr,
    /// Deterministic local strategy `0..=15`.
    Lhv(u8),
}

impl Scenario {
    pub fn label(&self) -> String {
        match self {
            Scenario::RubberBand => "rubberband".to_string(),
            Scenario::Agents => "agents".to_string(),
            Scenario::IdealPr => "ideal-pr".to_string(),
            Scenario::Lhv(k) => format!("lhv:{k}"),
        }
    }

    /// Scenarios with a physical band (break points, retraction timing).
    fn has_band(&self) -> bool {
        matches!(self, Scenario::RubberBand | Scenario::Agents)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioParseError {
    #[error("unknown scenario `{0}` (expected rubberband, agents, ideal-pr, or lhv:<0..15>)")]
    Unknown(String),
    #[error("malformed lhv index `{0}`")]
    LhvIndex(String),
    #[error("lhv index {0} out of range 0..=15")]
    LhvRange(u32),
}

impl std::str::FromStr for Scenario {
    type Err = ScenarioParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rubberband" => Ok(Scenario::RubberBand),
            "agents" => Ok(Scenario::Agents),
            "ideal-pr" => Ok(Scenario::IdealPr),
            other => {
                if let Some(index) = other.strip_prefix("lhv:") {
                    let k: u32 = index
                        .parse()
                        .map_err(|_| ScenarioParseError::LhvIndex(index.to_string()))?;
                    if k > 15 {
                        return Err(ScenarioParseError::LhvRange(k));
                    }
                    Ok(Scenario::Lhv(k as u8))
                } else {
                    Err(ScenarioParseError::Unknown(other.to_string()))
                }
            }
        }
    }
}

impl Serialize for Scenario {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

/// Standard-output format of the CLI: a JSON report or a CSV per-trial dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn label(&self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format `{other}` (expected json or csv)")),
        }
    }
}

impl Serialize for ReportFormat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

/// One run's full configuration; echoed verbatim into the report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub trials_per_setting: u64,
    pub master_seed: u64,
    pub format: ReportFormat,
    pub dump_trace: Option<PathBuf>,
    pub band: BandGeometry,
    pub timing: TimingParams,
}

impl RunConfig {
    /// Documented defaults: 10^5 trials per setting, seed 0, JSON output,
    /// unit geometry and speeds.
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            trials_per_setting: 100_000,
            master_seed: 0,
            format: ReportFormat::Json,
            dump_trace: None,
            band: BandGeometry::default(),
            timing: TimingParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials_per_setting == 0 {
            return Err(ConfigError::ZeroTrials);
        }
        if let Scenario::Lhv(k) = self.scenario {
            if k > 15 {
                return Err(ConfigError::LhvIndex(k));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("trials per setting must be at least 1")]
    ZeroTrials,
    #[error("lhv index {0} out of range 0..=15")]
    LhvIndex(u8),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Header of the CSV per-trial dump.
pub const CSV_HEADER: &str =
    "trial_index,x,y,color,pulled_a,pulled_b,break_point,l_a,l_b,c_a,c_b,out_a,out_b,t_a,t_b";

/// Header of the trace dump (one line per delivered message, all trials).
pub const TRACE_HEADER: &str = "trial,tick,from,to,kind,payload";

/// Optional byte sinks for the per-trial CSV dump and the message trace.
#[derive(Default)]
pub struct RunSinks<'a> {
    pub trials_csv: Option<&'a mut dyn Write>,
    pub trace: Option<&'a mut dyn Write>,
}

impl RunSinks<'_> {
    pub fn none() -> Self {
        Self::default()
    }
}

/// Run single-threaded with no per-trial outputs beyond the report (the
/// trace file named by the config is still written).
pub fn run(config: &RunConfig) -> Result<Report, RunError> {
    run_sharded(config, 1)
}

/// Run across `workers` threads. The report is independent of the worker
/// count; so are the trace bytes.
pub fn run_sharded(config: &RunConfig, workers: usize) -> Result<Report, RunError> {
    let mut trace_file = match &config.dump_trace {
        Some(path) => Some(BufWriter::new(File::create(path)?)),
        None => None,
    };
    let sinks = RunSinks {
        trials_csv: None,
        trace: trace_file.as_mut().map(|f| f as &mut dyn Write),
    };
    let report = run_with_sinks(config, workers, sinks)?;
    if let Some(mut file) = trace_file {
        file.flush()?;
    }
    Ok(report)
}

/// Shard accumulator; merges in index order so byte streams stay stable.
struct Accum {
    counts: JointCounts,
    constraint_violations: u64,
    break_points: Vec<f64>,
    min_ratio: f64,
    timing_violations: u64,
    audit_alice_to_bob: u64,
    audit_bob_to_alice: u64,
    csv: Vec<u8>,
    trace: Vec<u8>,
}

impl Accum {
    fn new() -> Self {
        Self {
            counts: JointCounts::new(),
            constraint_violations: 0,
            break_points: Vec::new(),
            min_ratio: f64::INFINITY,
            timing_violations: 0,
            audit_alice_to_bob: 0,
            audit_bob_to_alice: 0,
            csv: Vec::new(),
            trace: Vec::new(),
        }
    }

    fn merge(&mut self, other: Accum) {
        self.counts.merge(&other.counts);
        self.constraint_violations += other.constraint_violations;
        self.break_points.extend(other.break_points);
        self.min_ratio = self.min_ratio.min(other.min_ratio);
        self.timing_violations += other.timing_violations;
        self.audit_alice_to_bob += other.audit_alice_to_bob;
        self.audit_bob_to_alice += other.audit_bob_to_alice;
        self.csv.extend(other.csv);
        self.trace.extend(other.trace);
    }
}

/// Run with explicit sinks. Rows and trace lines are buffered per shard and
/// emitted in shard order, so the bytes are identical for any worker count.
pub fn run_with_sinks(
    config: &RunConfig,
    workers: usize,
    sinks: RunSinks<'_>,
) -> Result<Report, RunError> {
    config.validate()?;
    let workers = workers.max(1);
    let total = config.trials_per_setting * 4;
    let want_csv = sinks.trials_csv.is_some();
    let want_trace = sinks.trace.is_some();

    let chunk = total.div_ceil(workers as u64).max(1);
    let ranges: Vec<(u64, u64)> = (0..workers as u64)
        .map(|i| (i * chunk, ((i + 1) * chunk).min(total)))
        .filter(|(lo, hi)| lo < hi)
        .collect();

    let shards: Vec<Accum> = if ranges.len() == 1 {
        let (lo, hi) = ranges[0];
        vec![run_range(config, lo, hi, want_csv, want_trace)]
    } else {
        thread::scope(|scope| {
            let handles: Vec<_> = ranges
                .iter()
                .map(|&(lo, hi)| scope.spawn(move || run_range(config, lo, hi, want_csv, want_trace)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        })
    };

    let mut merged = Accum::new();
    for shard in shards {
        merged.merge(shard);
    }

    if let Some(out) = sinks.trials_csv {
        writeln!(out, "{CSV_HEADER}")?;
        out.write_all(&merged.csv)?;
        out.flush()?;
    }
    if let Some(out) = sinks.trace {
        writeln!(out, "{TRACE_HEADER}")?;
        out.write_all(&merged.trace)?;
        out.flush()?;
    }

    Ok(build_report(config, merged))
}

fn run_range(config: &RunConfig, lo: u64, hi: u64, want_csv: bool, want_trace: bool) -> Accum {
    let mut acc = Accum::new();
    let strategy = match config.scenario {
        Scenario::Lhv(k) => LhvStrategy::from_index(k as usize),
        _ => None,
    };

    for index in lo..hi {
        let inputs = InputPair::ALL[(index % 4) as usize];
        let seed = trial_seed(config.master_seed, index);
        match config.scenario {
            Scenario::RubberBand => {
                let record = run_trial(
                    &TrialConfig {
                        x: inputs.alice,
                        y: inputs.bob,
                        seed,
                        band: config.band,
                    },
                    &config.timing,
                );
                absorb_band_trial(&mut acc, config, index, &record, want_csv);
            }
            Scenario::Agents => {
                let (record, trace) = run_protocol(
                    &TrialConfig {
                        x: inputs.alice,
                        y: inputs.bob,
                        seed,
                        band: config.band,
                    },
                    &config.timing,
                );
                absorb_band_trial(&mut acc, config, index, &record, want_csv);
                let verdict = audit(&trace);
                acc.audit_alice_to_bob += verdict.alice_to_bob_count;
                acc.audit_bob_to_alice += verdict.bob_to_alice_count;
                if want_trace {
                    for event in &trace {
                        writeln!(acc.trace, "{},{}", index, event.csv_line())
                            .expect("writing to a Vec cannot fail");
                    }
                }
            }
            Scenario::IdealPr => {
                let mut rng = SplitMix64::new(seed);
                let outputs = ideal_pr_sample(inputs.alice, inputs.bob, &mut rng);
                absorb_box_trial(&mut acc, index, inputs, outputs, want_csv);
            }
            Scenario::Lhv(_) => {
                let outputs = strategy
                    .expect("validated lhv index")
                    .respond(inputs.alice, inputs.bob);
                absorb_box_trial(&mut acc, index, inputs, outputs, want_csv);
            }
        }
    }
    acc
}

fn absorb_band_trial(
    acc: &mut Accum,
    config: &RunConfig,
    index: u64,
    record: &TrialRecord,
    want_csv: bool,
) {
    acc.counts.record(record.inputs, record.outputs);
    if !nlb_constraint(record.inputs, record.outputs) {
        acc.constraint_violations += 1;
    }
    if let BandState::Broken { break_point } = record.band_final {
        acc.break_points.push(break_point);

        // retraction-time bound, checked on every both-pull trial
        let da = retraction_distance(record.alice_piece.expect("puller"), &config.band);
        let db = retraction_distance(record.bob_piece.expect("puller"), &config.band);
        let half_span = 0.5 * config.band.span();
        let photon = config.timing.photon_arm_time(config.band.span());
        let finish = record.alice_done.max(record.bob_done);
        if da.max(db) < half_span || finish < photon {
            acc.timing_violations += 1;
        }
        let ratio = finish / photon;
        if ratio < acc.min_ratio {
            acc.min_ratio = ratio;
        }
    }
    if want_csv {
        let cells: [String; 15] = [
            index.to_string(),
            record.inputs.alice.to_string(),
            record.inputs.bob.to_string(),
            record.color.to_string(),
            u8::from(record.alice_pulled).to_string(),
            u8::from(record.bob_pulled).to_string(),
            match record.band_final {
                BandState::Broken { break_point } => fmt_f64(break_point),
                _ => String::new(),
            },
            opt_bit(record.l_alice),
            opt_bit(record.l_bob),
            record.c_alice.to_string(),
            record.c_bob.to_string(),
            record.outputs.alice.to_string(),
            record.outputs.bob.to_string(),
            fmt_f64(record.alice_done),
            fmt_f64(record.bob_done),
        ];
        writeln!(acc.csv, "{}", cells.join(",")).expect("writing to a Vec cannot fail");
    }
}

fn absorb_box_trial(
    acc: &mut Accum,
    index: u64,
    inputs: InputPair,
    outputs: OutputPair,
    want_csv: bool,
) {
    acc.counts.record(inputs, outputs);
    if !nlb_constraint(inputs, outputs) {
        acc.constraint_violations += 1;
    }
    if want_csv {
        let empty = String::new;
        let cells: [String; 15] = [
            index.to_string(),
            inputs.alice.to_string(),
            inputs.bob.to_string(),
            empty(),
            empty(),
            empty(),
            empty(),
            empty(),
            empty(),
            empty(),
            empty(),
            outputs.alice.to_string(),
            outputs.bob.to_string(),
            empty(),
            empty(),
        ];
        writeln!(acc.csv, "{}", cells.join(",")).expect("writing to a Vec cannot fail");
    }
}

fn opt_bit(bit: Option<Bit>) -> String {
    bit.map(|b| b.to_string()).unwrap_or_default()
}

fn build_report(config: &RunConfig, acc: Accum) -> Report {
    let counts = &acc.counts;
    let behavior = counts
        .behavior::<f64>()
        .expect("round-robin sampling covers every setting");

    let correlator = |x: Bit, y: Bit| -> f64 {
        counts.correlator(x, y).expect("every setting sampled")
    };
    let correlators = Correlators {
        e00: correlator(Bit::Zero, Bit::Zero),
        e01: correlator(Bit::Zero, Bit::One),
        e10: correlator(Bit::One, Bit::Zero),
        e11: correlator(Bit::One, Bit::One),
    };
    let chsh = counts.chsh().expect("every setting sampled");

    let marginal = |party: Party, x: Bit, y: Bit| -> f64 {
        counts.marginal(party, x, y).expect("every setting sampled")
    };
    let per_party = |party: Party| -> [[f64; 2]; 2] {
        [
            [
                marginal(party, Bit::Zero, Bit::Zero),
                marginal(party, Bit::Zero, Bit::One),
            ],
            [
                marginal(party, Bit::One, Bit::Zero),
                marginal(party, Bit::One, Bit::One),
            ],
        ]
    };
    let marginals = Marginals {
        alice: per_party(Party::Alice),
        bob: per_party(Party::Bob),
    };

    let signaling_tv = Directional {
        into_alice: stats::signaling_tv(&behavior, Party::Alice),
        into_bob: stats::signaling_tv(&behavior, Party::Bob),
    };
    let mi_leak_bits = Directional {
        into_alice: counts.mi_leak(Party::Alice).expect("every setting sampled"),
        into_bob: counts.mi_leak(Party::Bob).expect("every setting sampled"),
    };

    let (ks_break_uniformity, timing_check) = if config.scenario.has_band() {
        let ks = stats::ks_uniform(&acc.break_points, 0.0, config.band.len())
            .expect("at least one both-pull trial per run");
        (
            Some(ks),
            Some(TimingCheck {
                min_completion_over_photon_ratio: acc.min_ratio,
                violations: acc.timing_violations,
            }),
        )
    } else {
        (None, None)
    };

    let audit = match config.scenario {
        Scenario::Agents => Some(crate::agents::AuditReport {
            alice_to_bob_count: acc.audit_alice_to_bob,
            bob_to_alice_count: acc.audit_bob_to_alice,
            verdict: acc.audit_alice_to_bob == 0 && acc.audit_bob_to_alice == 0,
        }),
        _ => None,
    };

    Report {
        config: config.clone(),
        behavior,
        correlators,
        chsh,
        marginals,
        signaling_tv,
        mi_leak_bits,
        constraint_violations: acc.constraint_violations,
        ks_break_uniformity,
        timing_check,
        audit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(scenario: Scenario) -> RunConfig {
        let mut config = RunConfig::new(scenario);
        config.trials_per_setting = 200;
        config.master_seed = 42;
        config
    }

    #[test]
    fn scenario_parsing() {
        assert_eq!("rubberband".parse::<Scenario>(), Ok(Scenario::RubberBand));
        assert_eq!("agents".parse::<Scenario>(), Ok(Scenario::Agents));
        assert_eq!("ideal-pr".parse::<Scenario>(), Ok(Scenario::IdealPr));
        assert_eq!("lhv:0".parse::<Scenario>(), Ok(Scenario::Lhv(0)));
        assert_eq!("lhv:15".parse::<Scenario>(), Ok(Scenario::Lhv(15)));
        assert_eq!(
            "lhv:16".parse::<Scenario>(),
            Err(ScenarioParseError::LhvRange(16))
        );
        assert!(matches!(
            "lhv:x".parse::<Scenario>(),
            Err(ScenarioParseError::LhvIndex(_))
        ));
        assert!(matches!(
            "vessels".parse::<Scenario>(),
            Err(ScenarioParseError::Unknown(_))
        ));
        assert_eq!(Scenario::Lhv(7).label(), "lhv:7");
    }

    #[test]
    fn zero_trials_is_rejected() {
        let mut config = RunConfig::new(Scenario::RubberBand);
        config.trials_per_setting = 0;
        assert_eq!(config.validate(), Err(ConfigError::ZeroTrials));
        assert!(matches!(run(&config), Err(RunError::Config(_))));
    }

    #[test]
    fn rubberband_report_passes_all_exact_checks() {
        let report = run(&small_config(Scenario::RubberBand)).unwrap();
        assert_eq!(report.constraint_violations, 0);
        assert_eq!(report.chsh, 4.0);
        assert_eq!(report.correlators.e00, 1.0);
        assert_eq!(report.correlators.e11, -1.0);
        let timing = report.timing_check.unwrap();
        assert_eq!(timing.violations, 0);
        assert!(timing.min_completion_over_photon_ratio >= 1.0);
        assert!(report.ks_break_uniformity.is_some());
        assert!(report.audit.is_none());
        assert!(report.passed());
    }

    #[test]
    fn agents_report_matches_rubberband_statistics() {
        let band = run(&small_config(Scenario::RubberBand)).unwrap();
        let agents = run(&small_config(Scenario::Agents)).unwrap();
        assert_eq!(band.behavior, agents.behavior);
        assert_eq!(band.chsh, agents.chsh);
        let audit = agents.audit.unwrap();
        assert!(audit.verdict);
        assert_eq!(audit.alice_to_bob_count, 0);
        assert_eq!(audit.bob_to_alice_count, 0);
    }

    #[test]
    fn ideal_pr_report_has_no_band_sections() {
        let report = run(&small_config(Scenario::IdealPr)).unwrap();
        assert_eq!(report.constraint_violations, 0);
        assert_eq!(report.chsh, 4.0);
        assert!(report.ks_break_uniformity.is_none());
        assert!(report.timing_check.is_none());
        assert!(report.audit.is_none());
        assert!(report.passed());
    }

    #[test]
    fn lhv_strategies_stay_at_the_classical_bound_and_fail_the_constraint() {
        for k in 0..16 {
            let report = run(&small_config(Scenario::Lhv(k))).unwrap();
            assert!(report.chsh <= 2.0, "lhv:{k} chsh = {}", report.chsh);
            assert!(report.constraint_violations > 0, "lhv:{k}");
            assert!(!report.passed());
        }
    }

    #[test]
    fn reports_are_byte_identical_across_runs_and_worker_counts() {
        let config = small_config(Scenario::RubberBand);
        let single = run(&config).unwrap().to_json();
        let again = run(&config).unwrap().to_json();
        let sharded = run_sharded(&config, 3).unwrap().to_json();
        let sharded_more = run_sharded(&config, 7).unwrap().to_json();
        assert_eq!(single, again);
        assert_eq!(single, sharded);
        assert_eq!(single, sharded_more);
    }

    #[test]
    fn csv_dump_has_one_row_per_trial_and_stable_bytes() {
        let mut config = small_config(Scenario::RubberBand);
        config.trials_per_setting = 3;
        config.format = ReportFormat::Csv;

        let mut csv_single = Vec::new();
        run_with_sinks(
            &config,
            1,
            RunSinks {
                trials_csv: Some(&mut csv_single),
                trace: None,
            },
        )
        .unwrap();
        let text = String::from_utf8(csv_single.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 12);
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 15, "{line}");
        }

        let mut csv_sharded = Vec::new();
        run_with_sinks(
            &config,
            4,
            RunSinks {
                trials_csv: Some(&mut csv_sharded),
                trace: None,
            },
        )
        .unwrap();
        assert_eq!(csv_single, csv_sharded);
    }

    #[test]
    fn trace_dump_is_written_and_worker_independent() {
        let mut config = small_config(Scenario::Agents);
        config.trials_per_setting = 5;

        let mut trace_single = Vec::new();
        run_with_sinks(
            &config,
            1,
            RunSinks {
                trials_csv: None,
                trace: Some(&mut trace_single),
            },
        )
        .unwrap();
        let text = String::from_utf8(trace_single.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_HEADER);
        assert!(lines.clone().count() >= 20 * 2);
        // no direct party-to-party rows anywhere
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            let (from, to) = (fields[2], fields[3]);
            assert!(!(from == "alice" && to == "bob"), "{line}");
            assert!(!(from == "bob" && to == "alice"), "{line}");
        }

        let mut trace_sharded = Vec::new();
        run_with_sinks(
            &config,
            3,
            RunSinks {
                trials_csv: None,
                trace: Some(&mut trace_sharded),
            },
        )
        .unwrap();
        assert_eq!(trace_single, trace_sharded);
    }

    #[test]
    fn report_json_shape_is_parseable_and_keys_are_stable() {
        let mut config = small_config(Scenario::Agents);
        config.trials_per_setting = 2;
        let report = run(&config).unwrap();
        let json = report.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["config"]["scenario"], "agents");
        assert_eq!(value["config"]["trials_per_setting"], 2);
        assert_eq!(value["constraint_violations"], 0);
        assert!(value["behavior"].is_array());
        assert!(value["audit"]["verdict"].as_bool().unwrap());
        assert!(value["ks_break_uniformity"].is_number());
        // 17-significant-digit float rendering
        assert!(json.contains("\"chsh\":4.0000000000000000e0"), "{json}");
    }
}
