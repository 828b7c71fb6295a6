use serde::{Deserialize, Serialize};

use crate::ir::OpKind;

/// Arithmetic latencies in cycles. Memory latencies are not configurable:
/// a reference costs 0 when register-resident and 1 when it goes to RAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Latencies {
    pub multiply: u64,
    pub add: u64,
    pub subtract: u64,
    pub compare: u64,
    pub accumulate: u64,
}

impl Default for Latencies {
    fn default() -> Self {
        Latencies { multiply: 1, add: 1, subtract: 1, compare: 1, accumulate: 1 }
    }
}

impl Latencies {
    pub fn of(&self, op: OpKind) -> u64 {
        match op {
            OpKind::Multiply => self.multiply,
            OpKind::Add => self.add,
            OpKind::Subtract => self.subtract,
            OpKind::Compare => self.compare,
            OpKind::Accumulate => self.accumulate,
        }
    }
}

/// What a partial register assignment buys.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Every register holds one reused element; the `β` elements with the
    /// lowest first-access rank are resident. On arrays that are written the
    /// first register stages the store and holds nothing.
    #[default]
    ElementLevel,
    /// A single register only stages values; residency starts at β = 2.
    StagingOnly,
}

/// How the critical-path-aware allocator prices a cut.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RrAccounting {
    /// Σ (α - β): only registers not yet granted.
    #[default]
    Incremental,
    /// Σ α over the cut regardless of what its members already hold.
    FullAlpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub policy: Policy,
    /// Ports per RAM block (one block per array).
    pub ports: usize,
    /// Used only for the reported critical-path latency.
    pub latencies: Latencies,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { policy: Policy::ElementLevel, ports: 1, latencies: Latencies::default() }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "element-level" => Ok(Policy::ElementLevel),
            "staging-only" => Ok(Policy::StagingOnly),
            other => Err(format!("unknown residency policy `{}`", other)),
        }
    }
}

impl std::str::FromStr for RrAccounting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "incremental" => Ok(RrAccounting::Incremental),
            "full-alpha" => Ok(RrAccounting::FullAlpha),
            other => Err(format!("unknown RR accounting `{}`", other)),
        }
    }
}

/// Everything one run of the pipeline depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Register budget NR.
    pub nr: u64,
    pub latencies: Latencies,
    pub policy: Policy,
    pub rr_accounting: RrAccounting,
    pub ports: usize,
    /// Largest iteration space the brute-force oracle will enumerate.
    pub cap: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            nr: 64,
            latencies: Latencies::default(),
            policy: Policy::ElementLevel,
            rr_accounting: RrAccounting::Incremental,
            ports: 1,
            cap: crate::oracle::DEFAULT_CAP,
        }
    }
}

impl RunConfig {
    pub fn sim(&self) -> SimConfig {
        SimConfig { policy: self.policy, ports: self.ports, latencies: self.latencies }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::ElementLevel => "element-level",
            Policy::StagingOnly => "staging-only",
        })
    }
}

impl std::fmt::Display for RrAccounting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RrAccounting::Incremental => "incremental",
            RrAccounting::FullAlpha => "full-alpha",
        })
    }
}
