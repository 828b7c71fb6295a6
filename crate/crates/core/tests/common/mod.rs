//! Random affine kernels and oracle comparisons shared by the test targets.
//!
//! Kernels have at most three loops with at most 16 iterations each and
//! subscript coefficients in [-2, 2]. References to one array mostly share
//! a linear part so group reuse is common. Each output array is written by
//! exactly one statement.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use srra_core::alloc::{allocate, Algorithm, Allocation};
use srra_core::oracle::{self, OracleReuse, DEFAULT_CAP};
use srra_core::reuse::{analyze_all, ReuseTable};
use srra_core::sim::{steady_state_cycles, Residency};
use srra_core::{parse_kernel, Kernel, Latencies, Policy, RrAccounting, SimConfig};

pub const POLICIES: [Policy; 2] = [Policy::ElementLevel, Policy::StagingOnly];

macro_rules! ensure_eq {
    ($a:expr, $b:expr, $($ctx:tt)+) => {{
        let (a, b) = (&$a, &$b);
        if a != b {
            return Err(format!("{:?} != {:?}: {}", a, b, format!($($ctx)+)));
        }
    }};
}

pub fn check_reuse(k: &Kernel, t: &ReuseTable, o: &[OracleReuse]) -> Result<(), String> {
    for (info, or) in t.iter().zip(o) {
        let ctx = format!("{} / {}\n{}", k.name, info.array, k);
        ensure_eq!(info.carrier, or.carrier, "carrier {ctx}");
        ensure_eq!(info.alpha, or.alpha, "alpha {ctx}");
        ensure_eq!(info.total_accesses, or.total, "total {ctx}");
        ensure_eq!(info.after_accesses, or.after, "after {ctx}");
    }
    Ok(())
}

/// Residency of every steady-state access and the resulting cycle count,
/// under both policies.
pub fn check_allocation(
    k: &Kernel,
    t: &ReuseTable,
    o: &[OracleReuse],
    alloc: &Allocation,
    ports: usize,
) -> Result<(), String> {
    for policy in POLICIES {
        let flags = oracle::residency_with(k, o, alloc, policy);
        let mut res = Residency::new(k, t, alloc, policy);
        for (r, p, resident) in &flags {
            ensure_eq!(
                res.resident(*r, p),
                *resident,
                "residency of {} at {:?} under {:?} / {:?}\n{}",
                k.fmt_ref(*r),
                p,
                alloc.beta,
                policy,
                k
            );
        }
        let cfg = SimConfig { policy, ports, ..SimConfig::default() };
        let ours = steady_state_cycles(k, t, alloc, &cfg).memory_cycles;
        ensure_eq!(ours, oracle::cycles_from_flags(k, &flags, ports), "cycles {:?} {:?}\n{}", alloc.beta, policy, k);
    }
    Ok(())
}

/// Reuse, then every allocator plus one random manual allocation, against
/// the oracle. Returns whether the kernel carries any reuse.
pub fn check_random(seed: u64, rng: &mut StdRng) -> Result<bool, String> {
    let k = random_kernel(seed);
    let t = analyze_all(&k);
    let o = oracle::oracle_reuse_all(&k, DEFAULT_CAP).map_err(|e| e.to_string())?;
    check_reuse(&k, &t, &o)?;
    let nr = rng.gen_range(t.len() as u64..=t.total_alpha() + 4);
    let ports = rng.gen_range(1..=2);
    for alg in Algorithm::ALL {
        let a = allocate(alg, &k, &t, nr, &Latencies::default(), RrAccounting::Incremental)
            .map_err(|e| e.to_string())?;
        check_allocation(&k, &t, &o, &a, ports)?;
    }
    let manual = Allocation {
        beta: t.iter().map(|i| rng.gen_range(1..=i.alpha)).collect(),
        ..Allocation::baseline(&t)
    };
    check_allocation(&k, &t, &o, &manual, ports)?;
    let reuse = t.iter().any(|i| i.alpha > 1);
    Ok(reuse)
}

const INDICES: [&str; 3] = ["i", "j", "k"];

struct ArraySpec {
    name: String,
    dims: usize,
    /// Coefficient of each loop level in each dimension.
    linear: Vec<Vec<i64>>,
}

fn subscript(rng: &mut StdRng, coeffs: &[i64]) -> String {
    let mut s = String::new();
    for (lvl, &c) in coeffs.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let mag = c.abs();
        let term = if mag == 1 { INDICES[lvl].to_string() } else { format!("{}*{}", mag, INDICES[lvl]) };
        if s.is_empty() {
            if c < 0 {
                s.push('-');
            }
        } else {
            s.push_str(if c < 0 { " - " } else { " + " });
        }
        s.push_str(&term);
    }
    let off: i64 = rng.gen_range(-2..=2);
    if s.is_empty() {
        s = off.to_string();
    } else if off != 0 {
        s.push_str(&format!(" {} {}", if off < 0 { '-' } else { '+' }, off.abs()));
    }
    s
}

fn random_linear(rng: &mut StdRng, dims: usize, depth: usize) -> Vec<Vec<i64>> {
    (0..dims)
        .map(|_| {
            (0..depth)
                .map(|_| if rng.gen_bool(0.45) { rng.gen_range(-2..=2) } else { 0 })
                .collect()
        })
        .collect()
}

fn reference(rng: &mut StdRng, a: &ArraySpec, depth: usize) -> String {
    // One in five refs leaves the array's uniform group.
    let linear = if rng.gen_bool(0.2) { random_linear(rng, a.dims, depth) } else { a.linear.clone() };
    let mut s = a.name.clone();
    for d in 0..a.dims {
        s.push('[');
        s.push_str(&subscript(rng, &linear[d]));
        s.push(']');
    }
    s
}

/// DSL source of a random kernel.
pub fn random_source(seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=3);
    let mut src = format!("kernel rand{seed};\n");
    for lvl in 0..depth {
        let lower = rng.gen_range(0..=2);
        let trips = rng.gen_range(1..=16);
        let step = if rng.gen_bool(0.2) { 2 } else { 1 };
        let upper = lower + (trips - 1) * step + 1;
        if step == 1 {
            src.push_str(&format!("loop {} = {}..{} {{\n", INDICES[lvl], lower, upper));
        } else {
            src.push_str(&format!("loop {} = {}..{} step {} {{\n", INDICES[lvl], lower, upper, step));
        }
    }
    let inputs: Vec<ArraySpec> = (0..rng.gen_range(1..=3))
        .map(|n| {
            let dims = rng.gen_range(1..=2);
            ArraySpec { name: format!("x{n}"), dims, linear: random_linear(&mut rng, dims, depth) }
        })
        .collect();
    let statements = rng.gen_range(1..=3);
    let outputs: Vec<ArraySpec> = (0..statements)
        .map(|n| {
            let dims = rng.gen_range(1..=2);
            ArraySpec { name: format!("y{n}"), dims, linear: random_linear(&mut rng, dims, depth) }
        })
        .collect();
    let mut written: Vec<String> = Vec::new();
    for s in 0..statements {
        let target = reference(&mut rng, &outputs[s], depth);
        let operand = |rng: &mut StdRng| -> String {
            let roll = rng.gen_range(0..10);
            if roll == 0 {
                rng.gen_range(0..5).to_string()
            } else if roll <= 2 && !written.is_empty() {
                // Re-read an earlier result, usually the exact element.
                written.choose(rng).unwrap().clone()
            } else {
                let a = inputs.choose(rng).unwrap();
                reference(rng, a, depth)
            }
        };
        let lhs = operand(&mut rng);
        let rhs = match rng.gen_range(0..5) {
            0 => lhs,
            n => {
                let op = ["*", "+", "-", "=="][n - 1];
                format!("{} {} {}", lhs, op, operand(&mut rng))
            }
        };
        let assign = if rng.gen_bool(0.3) { "+=" } else { "=" };
        src.push_str(&format!("S{s}: {target} {assign} {rhs};\n"));
        written.push(target);
    }
    for _ in 0..depth {
        src.push_str("}\n");
    }
    src
}

pub fn random_kernel(seed: u64) -> Kernel {
    let src = random_source(seed);
    parse_kernel(&src).unwrap_or_else(|e| panic!("generated kernel failed to parse: {e}\n{src}"))
}
