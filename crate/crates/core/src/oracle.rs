//! Brute-force ground truth.
//!
//! Everything here enumerates the iteration space explicitly and works on
//! linearized addresses. Nothing is shared with the analytic modules beyond
//! the kernel IR itself: forwarding, working sets, carriers, memory levels
//! and register files are all recomputed from scratch.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use crate::alloc::Allocation;
use crate::config::Policy;
use crate::error::CapExceeded;
use crate::ir::{Access, AffineExpr, ArrayId, Kernel, Operand, RefId, Rhs};

pub const DEFAULT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub point: Vec<i64>,
    pub address: u64,
    pub access: Access,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessTrace {
    pub r: RefId,
    pub entries: Vec<TraceEntry>,
}

fn space_size(k: &Kernel) -> u64 {
    k.loops
        .iter()
        .map(|l| if l.upper > l.lower { ((l.upper - l.lower - 1) / l.step + 1) as u64 } else { 0 })
        .fold(1u64, |a, t| a.saturating_mul(t))
}

fn check_cap(k: &Kernel, cap: u64) -> Result<(), CapExceeded> {
    let points = space_size(k);
    if points > cap {
        return Err(CapExceeded { points, cap });
    }
    Ok(())
}

/// Calls `f` on every iteration point in loop order.
fn each_point(k: &Kernel, f: &mut dyn FnMut(&[i64])) {
    fn rec(k: &Kernel, lvl: usize, point: &mut Vec<i64>, f: &mut dyn FnMut(&[i64])) {
        if lvl == k.loops.len() {
            f(point);
            return;
        }
        let l = &k.loops[lvl];
        let mut v = l.lower;
        while v < l.upper {
            point.push(v);
            rec(k, lvl + 1, point, f);
            point.pop();
            v += l.step;
        }
    }
    rec(k, 0, &mut Vec::new(), f);
}

/// Row-major layout over each array's bounding box.
struct Layout {
    lo: Vec<Vec<i64>>,
    strides: Vec<Vec<u64>>,
}

fn expr_range(k: &Kernel, e: &AffineExpr) -> (i64, i64) {
    let (mut lo, mut hi) = (e.constant, e.constant);
    for (&lvl, &c) in &e.terms {
        let l = &k.loops[lvl];
        let last = l.lower + (l.upper - l.lower - 1) / l.step * l.step;
        let (a, b) = (c * l.lower, c * last);
        lo += a.min(b);
        hi += a.max(b);
    }
    (lo, hi)
}

impl Layout {
    fn new(k: &Kernel) -> Layout {
        let mut lo = Vec::new();
        let mut strides = Vec::new();
        for (a, info) in k.arrays.iter().enumerate() {
            let mut mins = vec![i64::MAX; info.dims];
            let mut maxs = vec![i64::MIN; info.dims];
            for r in k.refs.iter().filter(|r| r.array.0 == a) {
                for (d, s) in r.subscripts.iter().enumerate() {
                    let (l, h) = expr_range(k, s);
                    mins[d] = mins[d].min(l);
                    maxs[d] = maxs[d].max(h);
                }
            }
            let mut st = vec![1u64; info.dims];
            for d in (0..info.dims.saturating_sub(1)).rev() {
                st[d] = st[d + 1] * (maxs[d + 1] - mins[d + 1] + 1) as u64;
            }
            lo.push(mins);
            strides.push(st);
        }
        Layout { lo, strides }
    }

    fn address(&self, k: &Kernel, r: RefId, point: &[i64]) -> u64 {
        let ar = &k.refs[r.0];
        let a = ar.array.0;
        ar.subscripts
            .iter()
            .enumerate()
            .map(|(d, s)| (s.eval(point) - self.lo[a][d]) as u64 * self.strides[a][d])
            .sum()
    }
}

/// Refs that reach memory: a read whose subscripts repeat those of an
/// earlier ref of the same array in the body is served by that ref's value.
fn memory_refs(k: &Kernel) -> Vec<bool> {
    let mut order: Vec<RefId> = Vec::new();
    for s in &k.statements {
        let mut ops = Vec::new();
        match &s.rhs {
            Rhs::Single(o) => ops.push(*o),
            Rhs::Binary(_, a, b) => {
                ops.push(*a);
                ops.push(*b);
            }
        }
        for o in ops {
            if let Operand::Ref(r) = o {
                order.push(r);
            }
        }
        if let Some(acc) = s.accumulate {
            order.push(acc);
        }
        order.push(s.write);
    }
    let mut touches = vec![true; k.refs.len()];
    for (i, &r) in order.iter().enumerate() {
        let ar = &k.refs[r.0];
        if ar.access == Access::Write {
            continue;
        }
        let seen = order[..i].iter().any(|&q| {
            let other = &k.refs[q.0];
            other.array == ar.array && other.subscripts == ar.subscripts
        });
        touches[r.0] = !seen;
    }
    touches
}

/// Every access of one static reference, in loop order.
pub fn trace(k: &Kernel, r: RefId, cap: u64) -> Result<AccessTrace, CapExceeded> {
    check_cap(k, cap)?;
    let layout = Layout::new(k);
    let access = k.refs[r.0].access;
    let mut entries = Vec::new();
    each_point(k, &mut |p| {
        entries.push(TraceEntry { point: p.to_vec(), address: layout.address(k, r, p), access });
    });
    Ok(AccessTrace { r, entries })
}

/// Traces of the refs of `array` that reach memory.
pub fn array_traces(k: &Kernel, array: ArrayId, cap: u64) -> Result<Vec<AccessTrace>, CapExceeded> {
    let touches = memory_refs(k);
    k.refs
        .iter()
        .filter(|r| r.array == array && touches[r.id.0])
        .map(|r| trace(k, r.id, cap))
        .collect()
}

fn iteration_number(k: &Kernel, level: usize, point: &[i64]) -> usize {
    ((point[level] - k.loops[level].lower) / k.loops[level].step) as usize
}

/// Largest count of addresses touched both at or before and after some
/// boundary between consecutive iterations of loop `level`, with the outer
/// indices fixed.
pub fn live_across(k: &Kernel, traces: &[AccessTrace], level: usize) -> u64 {
    let mut span: HashMap<(&[i64], u64), (usize, usize)> = HashMap::new();
    for t in traces {
        for e in &t.entries {
            let n = iteration_number(k, level, &e.point);
            let s = span.entry((&e.point[..level], e.address)).or_insert((n, n));
            s.0 = s.0.min(n);
            s.1 = s.1.max(n);
        }
    }
    let mut per_prefix: HashMap<&[i64], BTreeMap<usize, i64>> = HashMap::new();
    for ((prefix, _), (first, last)) in span {
        if first < last {
            let d = per_prefix.entry(prefix).or_default();
            *d.entry(first).or_insert(0) += 1;
            *d.entry(last).or_insert(0) -= 1;
        }
    }
    let mut best = 0;
    for deltas in per_prefix.values() {
        let mut run = 0;
        for d in deltas.values() {
            run += d;
            best = best.max(run);
        }
    }
    best as u64
}

/// Largest overlap between the working sets of two consecutive iterations
/// of loop `level`.
pub fn consecutive_overlap(k: &Kernel, traces: &[AccessTrace], level: usize) -> u64 {
    let mut ws: HashMap<(&[i64], usize), HashSet<u64>> = HashMap::new();
    for t in traces {
        for e in &t.entries {
            let n = iteration_number(k, level, &e.point);
            ws.entry((&e.point[..level], n)).or_default().insert(e.address);
        }
    }
    let mut best = 0;
    for ((prefix, n), set) in &ws {
        if let Some(next) = ws.get(&(*prefix, n + 1)) {
            best = best.max(set.intersection(next).count() as u64);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleReuse {
    pub carrier: Option<usize>,
    pub alpha: u64,
    pub total: u64,
    pub after: u64,
}

impl OracleReuse {
    pub fn save(&self) -> u64 {
        self.total - self.after
    }
}

pub fn oracle_reuse(k: &Kernel, array: ArrayId, cap: u64) -> Result<OracleReuse, CapExceeded> {
    let traces = array_traces(k, array, cap)?;
    let mut carrier = None;
    let mut alpha = 1;
    for level in 0..k.loops.len() {
        let live = live_across(k, &traces, level);
        if live > 0 {
            carrier = Some(level);
            alpha = live;
            break;
        }
    }
    let total = traces.iter().map(|t| t.entries.len() as u64).sum();
    let mut read = HashSet::new();
    let mut written = HashSet::new();
    for t in &traces {
        for e in &t.entries {
            match e.access {
                Access::Read => read.insert(e.address),
                Access::Write => written.insert(e.address),
            };
        }
    }
    Ok(OracleReuse { carrier, alpha, total, after: (read.len() + written.len()) as u64 })
}

/// `(total, distinct)` addresses of a single trace.
pub fn trace_counts(t: &AccessTrace) -> (u64, u64) {
    let distinct: HashSet<u64> = t.entries.iter().map(|e| e.address).collect();
    (t.entries.len() as u64, distinct.len() as u64)
}

/// Memory-access level of each memory-touching ref, from the statement
/// structure: a value carries the number of memory accesses on its longest
/// producing chain.
pub fn ref_levels(k: &Kernel) -> BTreeMap<RefId, usize> {
    let touches = memory_refs(k);
    let mut levels = BTreeMap::new();
    let mut last_value: HashMap<(ArrayId, Vec<AffineExpr>), usize> = HashMap::new();
    let read = |r: RefId, levels: &mut BTreeMap<RefId, usize>, last: &HashMap<_, usize>| -> usize {
        let ar = &k.refs[r.0];
        if touches[r.0] {
            levels.insert(r, 0);
            1
        } else {
            *last.get(&(ar.array, ar.subscripts.clone())).expect("forwarded from earlier ref")
        }
    };
    for s in &k.statements {
        let operand = |o: &Operand, levels: &mut BTreeMap<RefId, usize>, last: &mut HashMap<_, usize>| {
            match o {
                Operand::Const(_) => 0,
                Operand::Ref(r) => {
                    let c = read(*r, levels, last);
                    let ar = &k.refs[r.0];
                    last.entry((ar.array, ar.subscripts.clone())).or_insert(c);
                    c
                }
            }
        };
        let mut value = match &s.rhs {
            Rhs::Single(o) => operand(o, &mut levels, &mut last_value),
            Rhs::Binary(_, a, b) => {
                let a = operand(a, &mut levels, &mut last_value);
                let b = operand(b, &mut levels, &mut last_value);
                a.max(b)
            }
        };
        if let Some(acc) = s.accumulate {
            value = value.max(operand(&Operand::Ref(acc), &mut levels, &mut last_value));
        }
        let w = &k.refs[s.write.0];
        levels.insert(s.write, value);
        last_value.insert((w.array, w.subscripts.clone()), value + 1);
    }
    levels
}

/// Level groups of refs, split so that no group touches one array more
/// than `ports` times.
pub fn oracle_levels(k: &Kernel, ports: usize) -> Vec<Vec<RefId>> {
    let ports = ports.max(1);
    let mut grouped: BTreeMap<(usize, usize), Vec<RefId>> = BTreeMap::new();
    let mut used: HashMap<(usize, ArrayId), usize> = HashMap::new();
    for (r, lvl) in ref_levels(k) {
        let n = used.entry((lvl, k.refs[r.0].array)).or_insert(0);
        grouped.entry((lvl, *n / ports)).or_default().push(r);
        *n += 1;
    }
    grouped.into_values().collect()
}

fn window(k: &Kernel) -> i64 {
    let l = &k.loops[0];
    let trips = ((l.upper - l.lower - 1) / l.step + 1) as i64;
    l.lower + l.step * (trips / 2)
}

/// Oracle reuse records of every array, indexed by [`ArrayId`].
pub fn oracle_reuse_all(k: &Kernel, cap: u64) -> Result<Vec<OracleReuse>, CapExceeded> {
    (0..k.arrays.len()).map(|a| oracle_reuse(k, ArrayId(a), cap)).collect()
}

/// Per-array register files replayed over the steady-state window. A file
/// is emptied at every new carrier iteration and admits each new element
/// while it has room; an access is resident iff its element is in the file.
pub fn oracle_residency(
    k: &Kernel,
    alloc: &Allocation,
    policy: Policy,
    cap: u64,
) -> Result<Vec<(RefId, Vec<i64>, bool)>, CapExceeded> {
    let reuse = oracle_reuse_all(k, cap)?;
    Ok(residency_with(k, &reuse, alloc, policy))
}

/// [`oracle_residency`] with the reuse records already computed.
pub fn residency_with(
    k: &Kernel,
    reuse: &[OracleReuse],
    alloc: &Allocation,
    policy: Policy,
) -> Vec<(RefId, Vec<i64>, bool)> {
    let touches = memory_refs(k);
    let layout = Layout::new(k);
    let rules: Vec<(Option<bool>, Option<usize>)> = (0..k.arrays.len())
        .map(|a| {
            let id = ArrayId(a);
            let beta = alloc.beta[a];
            let written = k.refs.iter().any(|r| r.array == id && r.access == Access::Write);
            let fixed = if reuse[a].save() == 0 {
                Some(false)
            } else if beta >= reuse[a].alpha {
                Some(true)
            } else if beta < 2 && (policy == Policy::StagingOnly || written) {
                Some(false)
            } else {
                None
            };
            (fixed, reuse[a].carrier)
        })
        .collect();

    let mut files: Vec<(Vec<i64>, VecDeque<u64>)> = vec![(Vec::new(), VecDeque::new()); k.arrays.len()];
    let mut out = Vec::new();
    let w = window(k);
    each_point(k, &mut |p| {
        if p[0] != w {
            return;
        }
        for r in &k.refs {
            if !touches[r.id.0] {
                continue;
            }
            let a = r.array.0;
            let resident = match rules[a] {
                (Some(f), _) => f,
                (None, carrier) => {
                    let key = match carrier {
                        Some(c) => p[..=c].to_vec(),
                        None => p.to_vec(),
                    };
                    let (owner, file) = &mut files[a];
                    if *owner != key {
                        *owner = key;
                        file.clear();
                    }
                    let addr = layout.address(k, r.id, p);
                    if file.contains(&addr) {
                        true
                    } else if (file.len() as u64) < alloc.beta[a] {
                        file.push_back(addr);
                        true
                    } else {
                        false
                    }
                }
            };
            out.push((r.id, p.to_vec(), resident));
        }
    });
    out
}

/// Memory cycles of the steady-state window under `alloc`.
pub fn oracle_residency_cycles(
    k: &Kernel,
    alloc: &Allocation,
    policy: Policy,
    ports: usize,
    cap: u64,
) -> Result<u64, CapExceeded> {
    Ok(cycles_from_flags(k, &oracle_residency(k, alloc, policy, cap)?, ports))
}

/// Charges one cycle per (iteration, level) pair holding a miss.
pub fn cycles_from_flags(k: &Kernel, flags: &[(RefId, Vec<i64>, bool)], ports: usize) -> u64 {
    let mut level_of: HashMap<RefId, usize> = HashMap::new();
    for (i, l) in oracle_levels(k, ports).iter().enumerate() {
        for &r in l {
            level_of.insert(r, i);
        }
    }
    let mut missed: HashSet<(&[i64], usize)> = HashSet::new();
    for (r, p, resident) in flags {
        if !resident {
            missed.insert((p, level_of[r]));
        }
    }
    missed.len() as u64
}
