use std::fmt;
use std::io::{self, Write};

use super::ids::NodeId;
use super::time::SimTime;

/// Protocol layer that produced a trace record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Module {
    Kernel,
    Power,
    Mac,
    Aida,
    Sched,
    Routing,
    Transport,
    Harness,
}

impl Module {
    pub fn as_str(self) -> &'static str {
        match self {
            Module::Kernel => "kernel",
            Module::Power => "power",
            Module::Mac => "mac",
            Module::Aida => "aida",
            Module::Sched => "sched",
            Module::Routing => "routing",
            Module::Transport => "transport",
            Module::Harness => "harness",
        }
    }
}

/// Structured trace payloads. Audits replay these independently of the engine.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceKind {
    /// A frame was handed to a receiver's upper layers.
    FrameReceived { from: NodeId, bytes: usize },
    TxStart { bytes: usize },
    Asleep,
    Awake,
    Crash,
    Recover,
    Moved,
    /// Energy drawn: activity label and joules.
    Consume { activity: &'static str, joules: f64 },
    /// One AIDA unit left its buffer.
    UnitHeld { packet: u64, enqueued: f64, flushed: f64, flush_timer: f64, slack: f64, guard: f64 },
    Backpressure { toward: NodeId, before: f64, after: f64 },
    Suspect { neighbor: NodeId },
    SleepGranted,
    Other(&'static str),
}

impl TraceKind {
    pub fn label(&self) -> &'static str {
        match self {
            TraceKind::FrameReceived { .. } => "rx",
            TraceKind::TxStart { .. } => "tx",
            TraceKind::Asleep => "sleep",
            TraceKind::Awake => "wake",
            TraceKind::Crash => "crash",
            TraceKind::Recover => "recover",
            TraceKind::Moved => "move",
            TraceKind::Consume { .. } => "consume",
            TraceKind::UnitHeld { .. } => "unit-held",
            TraceKind::Backpressure { .. } => "backpressure",
            TraceKind::Suspect { .. } => "suspect",
            TraceKind::SleepGranted => "sleep-granted",
            TraceKind::Other(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub node: Option<NodeId>,
    pub module: Module,
    pub kind: TraceKind,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let node = self.node.map(|n| n.0.to_string()).unwrap_or_else(|| "-".into());
        write!(f, "{},{},{},{}", self.time, node, self.module.as_str(), self.kind.label())
    }
}

/// In-memory event trace; disabled traces drop records without allocating.
#[derive(Debug, Default)]
pub struct Trace {
    enabled: bool,
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(enabled: bool) -> Self {
        Trace { enabled, records: Vec::new() }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn record(&mut self, time: SimTime, node: Option<NodeId>, module: Module, kind: TraceKind) {
        if self.enabled {
            self.records.push(TraceRecord { time, node, module, kind });
        }
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn write_lines<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,node,module,event")?;
        for r in &self.records {
            writeln!(out, "{r}")?;
        }
        Ok(())
    }
}
