//! Register allocation for scalar replacement: the two greedy benefit/cost
//! variants and the critical-path-aware allocator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{Latencies, RrAccounting};
use crate::dfg::{build_dfg, find_cuts, make_cg};
use crate::error::AllocError;
use crate::ir::{ArrayId, Kernel};
use crate::reuse::ReuseTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    FrRa,
    PrRa,
    CpaRa,
    Manual,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::FrRa, Algorithm::PrRa, Algorithm::CpaRa];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FrRa => "fr-ra",
            Algorithm::PrRa => "pr-ra",
            Algorithm::CpaRa => "cpa-ra",
            Algorithm::Manual => "manual",
        }
    }

    /// Version tag used in comparison reports: v1, v2, v3.
    pub fn version(self) -> &'static str {
        match self {
            Algorithm::FrRa => "v1",
            Algorithm::PrRa => "v2",
            Algorithm::CpaRa => "v3",
            Algorithm::Manual => "manual",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fr" | "fr-ra" => Ok(Algorithm::FrRa),
            "pr" | "pr-ra" => Ok(Algorithm::PrRa),
            "cpa" | "cpa-ra" => Ok(Algorithm::CpaRa),
            "manual" => Ok(Algorithm::Manual),
            _ => Err(format!("unknown algorithm `{s}`")),
        }
    }
}

/// Registers granted to each array, indexed by [`ArrayId`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub algorithm: Algorithm,
    pub budget: u64,
    pub beta: Vec<u64>,
    pub names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct AllocationRepr {
    algorithm: Algorithm,
    budget: u64,
    beta: BTreeMap<String, u64>,
    used: u64,
}

impl Serialize for Allocation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        AllocationRepr {
            algorithm: self.algorithm,
            budget: self.budget,
            beta: self.names.iter().cloned().zip(self.beta.iter().copied()).collect(),
            used: self.used(),
        }
        .serialize(s)
    }
}

impl Allocation {
    fn ones(algorithm: Algorithm, reuse: &ReuseTable, budget: u64) -> Allocation {
        Allocation {
            algorithm,
            budget,
            beta: vec![1; reuse.len()],
            names: reuse.iter().map(|i| i.array.clone()).collect(),
        }
    }

    /// One register per array, no budget check.
    pub fn baseline(reuse: &ReuseTable) -> Allocation {
        Allocation::ones(Algorithm::Manual, reuse, reuse.len() as u64)
    }

    /// Every array fully replaced.
    pub fn full(reuse: &ReuseTable) -> Allocation {
        let mut a = Allocation::ones(Algorithm::Manual, reuse, reuse.total_alpha());
        a.beta = reuse.iter().map(|i| i.alpha).collect();
        a
    }

    /// A hand-written assignment; unnamed arrays keep one register.
    pub fn manual(reuse: &ReuseTable, given: &BTreeMap<String, u64>) -> Result<Allocation, AllocError> {
        let mut a = Allocation::ones(Algorithm::Manual, reuse, 0);
        for (name, &b) in given {
            let info = reuse.by_name(name).ok_or_else(|| AllocError::MissingArray(name.clone()))?;
            if b < 1 || b > info.alpha {
                return Err(AllocError::BetaOutOfRange { array: name.clone(), beta: b, alpha: info.alpha });
            }
            a.beta[info.array_id.0] = b;
        }
        a.budget = a.used();
        Ok(a)
    }

    pub fn used(&self) -> u64 {
        self.beta.iter().sum()
    }

    pub fn get(&self, a: ArrayId) -> u64 {
        self.beta[a.0]
    }

    pub fn by_name(&self, name: &str) -> Option<u64> {
        self.names.iter().position(|n| n == name).map(|i| self.beta[i])
    }

    pub fn as_map(&self) -> BTreeMap<String, u64> {
        self.names.iter().cloned().zip(self.beta.iter().copied()).collect()
    }
}

fn check_budget(reuse: &ReuseTable, nr: u64) -> Result<u64, AllocError> {
    let na = reuse.len() as u64;
    if nr < na {
        return Err(AllocError::InfeasibleBudget { budget: nr, arrays: reuse.len() });
    }
    Ok(nr - na)
}

/// Full-reuse greedy: arrays in benefit/cost order get all α registers
/// when they fit, otherwise keep one.
pub fn fr_ra(reuse: &ReuseTable, nr: u64) -> Result<Allocation, AllocError> {
    let mut remaining = check_budget(reuse, nr)?;
    let mut a = Allocation::ones(Algorithm::FrRa, reuse, nr);
    if reuse.total_alpha() <= nr {
        a.beta = reuse.iter().map(|i| i.alpha).collect();
        return Ok(a);
    }
    for id in reuse.bc_order() {
        let need = reuse.alpha(id) - 1;
        if need <= remaining {
            a.beta[id.0] = reuse.alpha(id);
            remaining -= need;
        }
    }
    Ok(a)
}

/// Partial-reuse greedy: the full-reuse result, with every leftover
/// register going to the first array still at one register that can use it.
pub fn pr_ra(reuse: &ReuseTable, nr: u64) -> Result<Allocation, AllocError> {
    let mut a = fr_ra(reuse, nr)?;
    a.algorithm = Algorithm::PrRa;
    let leftover = nr - a.used();
    if leftover == 0 {
        return Ok(a);
    }
    let target = reuse.bc_order().into_iter().find(|&id| {
        let i = reuse.get(id);
        a.beta[id.0] == 1 && i.save > 0 && i.alpha > 1
    });
    if let Some(id) = target {
        a.beta[id.0] = reuse.alpha(id).min(1 + leftover);
    }
    Ok(a)
}

/// Critical-path-aware allocation: repeatedly fund the cheapest cut of the
/// critical graph; when the cheapest cut no longer fits, share what is left
/// evenly among its arrays and stop.
pub fn cpa_ra(
    k: &Kernel,
    reuse: &ReuseTable,
    nr: u64,
    lat: &Latencies,
    accounting: RrAccounting,
) -> Result<Allocation, AllocError> {
    let mut remaining = check_budget(reuse, nr)?;
    let mut a = Allocation::ones(Algorithm::CpaRa, reuse, nr);
    if reuse.total_alpha() <= nr {
        a.beta = reuse.iter().map(|i| i.alpha).collect();
        return Ok(a);
    }
    while remaining > 0 {
        let g = build_dfg(k, lat, reuse, &a.beta);
        let cg = make_cg(&g);
        let cuts = find_cuts(&g, &cg, reuse, &a.beta, accounting);
        let Some(best) = cuts.into_iter().next() else { break };
        if best.rr <= remaining {
            for &id in &best.arrays {
                a.beta[id.0] = reuse.alpha(id);
            }
            remaining -= best.rr;
            continue;
        }
        share_evenly(&mut a.beta, &best.arrays, reuse, remaining);
        break;
    }
    Ok(a)
}

/// Repeated floor-division of `remaining` over the members still short of
/// α; a remainder smaller than the member count is left unassigned.
fn share_evenly(beta: &mut [u64], members: &[ArrayId], reuse: &ReuseTable, mut remaining: u64) {
    loop {
        let open: Vec<ArrayId> =
            members.iter().copied().filter(|&m| beta[m.0] < reuse.alpha(m)).collect();
        if open.is_empty() {
            return;
        }
        let share = remaining / open.len() as u64;
        if share == 0 {
            return;
        }
        for m in open {
            let add = share.min(reuse.alpha(m) - beta[m.0]);
            beta[m.0] += add;
            remaining -= add;
        }
    }
}

/// Runs one of the three allocators.
pub fn allocate(
    algorithm: Algorithm,
    k: &Kernel,
    reuse: &ReuseTable,
    nr: u64,
    lat: &Latencies,
    accounting: RrAccounting,
) -> Result<Allocation, AllocError> {
    match algorithm {
        Algorithm::FrRa => fr_ra(reuse, nr),
        Algorithm::PrRa => pr_ra(reuse, nr),
        Algorithm::CpaRa | Algorithm::Manual => cpa_ra(k, reuse, nr, lat, accounting),
    }
}
