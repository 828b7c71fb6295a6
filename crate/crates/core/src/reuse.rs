//! Data reuse analysis for scalar replacement.
//!
//! All quantities are per array: static references to one array share a
//! register pool, and a read forwarded from an earlier same-iteration
//! access never reaches memory.
//!
//! For an array whose references share one linear part (uniformly
//! generated, differing only in constant offsets), the working set of one
//! iteration of loop `ℓ` is a fixed set `S` translated by the loop's
//! subscript column `a` on every step. Splitting `S` into lines parallel to
//! `a` turns liveness across an iteration boundary into interval
//! arithmetic over each line, so α never needs the whole iteration space.
//! Arrays with mixed linear parts fall back to explicit per-iteration
//! working sets.

use std::collections::{BTreeMap, HashMap, HashSet};

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ir::{ArrayId, ArrayRef, Kernel, RefId};

pub type Element = Vec<i64>;

/// Benefit/cost ratio `save / α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bc(pub Ratio<u64>);

impl Bc {
    pub fn as_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl std::fmt::Display for Bc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{:.2}", self.as_f64())
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BcRepr {
    num: u64,
    den: u64,
}

impl Serialize for Bc {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        BcRepr { num: *self.0.numer(), den: *self.0.denom() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Bc {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = BcRepr::deserialize(d)?;
        if r.den == 0 {
            return Err(serde::de::Error::custom("zero denominator"));
        }
        Ok(Bc(Ratio::new(r.num, r.den)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReuseInfo {
    pub array: String,
    #[serde(skip, default = "default_array_id")]
    pub array_id: ArrayId,
    /// Static references to this array, including forwarded reads.
    pub refs: Vec<RefId>,
    /// Nest level of the reuse carrier; `None` when no element is touched
    /// in two different iterations.
    pub carrier: Option<usize>,
    pub alpha: u64,
    pub total_accesses: u64,
    pub after_accesses: u64,
    pub save: u64,
    pub bc: Bc,
}

fn default_array_id() -> ArrayId {
    ArrayId(usize::MAX)
}

/// Reuse records of one kernel, indexed by [`ArrayId`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReuseTable {
    pub infos: Vec<ReuseInfo>,
}

impl ReuseTable {
    pub fn get(&self, a: ArrayId) -> &ReuseInfo {
        &self.infos[a.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&ReuseInfo> {
        self.infos.iter().find(|i| i.array == name)
    }

    pub fn alpha(&self, a: ArrayId) -> u64 {
        self.infos[a.0].alpha
    }

    pub fn total_alpha(&self) -> u64 {
        self.infos.iter().map(|i| i.alpha).sum()
    }

    pub fn len(&self) -> usize {
        self.infos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infos.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReuseInfo> {
        self.infos.iter()
    }

    /// Arrays in benefit/cost order: descending BC, ties by first
    /// appearance in the body.
    pub fn bc_order(&self) -> Vec<ArrayId> {
        let mut ids: Vec<ArrayId> = self.infos.iter().map(|i| i.array_id).collect();
        ids.sort_by(|a, b| self.get(*b).bc.cmp(&self.get(*a).bc).then(a.cmp(b)));
        ids
    }
}

fn memory_refs(k: &Kernel, array: ArrayId) -> Vec<&ArrayRef> {
    k.refs_of(array).filter(|r| r.touches_memory()).collect()
}

fn is_uniform(refs: &[&ArrayRef]) -> bool {
    match refs.split_first() {
        None => true,
        Some((first, rest)) => rest.iter().all(|r| {
            r.subscripts.iter().zip(&first.subscripts).all(|(a, b)| a.terms == b.terms)
        }),
    }
}

fn column(refs: &[&ArrayRef], level: usize) -> Element {
    refs[0].subscripts.iter().map(|s| s.coeff(level)).collect()
}

fn translate(x: &[i64], a: &[i64], times: i64) -> Element {
    x.iter().zip(a).map(|(x, a)| x + a * times).collect()
}

/// `images[ℓ]` holds the elements touched by loops `ℓ..depth` with every
/// outer index contributing zero. Only meaningful for uniform groups.
fn level_images(k: &Kernel, refs: &[&ArrayRef]) -> Vec<HashSet<Element>> {
    let depth = k.depth();
    let mut images: Vec<HashSet<Element>> = vec![HashSet::new(); depth + 1];
    images[depth] = refs
        .iter()
        .map(|r| r.subscripts.iter().map(|s| s.constant).collect())
        .collect();
    for lvl in (0..depth).rev() {
        let col = column(refs, lvl);
        let l = &k.loops[lvl];
        let mut set = HashSet::with_capacity(images[lvl + 1].len());
        if col.iter().all(|&c| c == 0) {
            set = images[lvl + 1].clone();
        } else {
            for n in 0..l.trip_count() {
                let v = l.value_at(n);
                for x in &images[lvl + 1] {
                    set.insert(translate(x, &col, v));
                }
            }
        }
        images[lvl] = set;
    }
    images
}

fn merge(mut iv: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    iv.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(iv.len());
    for (lo, hi) in iv {
        match out.last_mut() {
            Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

fn intersection_len(a: &[(i64, i64)], b: &[(i64, i64)]) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo <= hi {
            n += (hi - lo + 1) as u64;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    n
}

/// Largest number of elements live across any boundary between iterations
/// of a loop with `trips` iterations, when iteration `n` touches
/// `set + n * shift`.
fn translated_live(set: &HashSet<Element>, shift: &[i64], trips: u64) -> u64 {
    if trips < 2 || set.is_empty() {
        return 0;
    }
    let Some(pivot) = shift.iter().position(|&c| c != 0) else {
        return set.len() as u64;
    };
    // Group by line parallel to `shift`; each line stores its positions.
    let mut lines: HashMap<Element, Vec<i64>> = HashMap::new();
    for x in set {
        let q = x[pivot].div_euclid(shift[pivot]);
        lines.entry(translate(x, shift, -q)).or_default().push(q);
    }
    let last = trips as i64 - 1;
    let mut best = 0;
    for b in 0..last {
        let mut live = 0;
        for ks in lines.values() {
            // Position p is touched at iteration p - k for every k on the line;
            // live across b iff touched at some n <= b and some n > b.
            let before = merge(ks.iter().map(|&k| (k, k + b)).collect());
            let after = merge(ks.iter().map(|&k| (k + b + 1, k + last)).collect());
            live += intersection_len(&before, &after);
        }
        best = best.max(live);
    }
    best
}

/// Explicit working sets for arrays with mixed linear parts.
fn explicit_live(k: &Kernel, refs: &[&ArrayRef], level: usize) -> u64 {
    let l = &k.loops[level];
    let trips = l.trip_count();
    if trips < 2 {
        return 0;
    }
    let mut best = 0;
    for prefix in k.prefixes(level) {
        let mut span: HashMap<Element, (u64, u64)> = HashMap::new();
        for n in 0..trips {
            let mut p = prefix.clone();
            p.push(l.value_at(n));
            for point in k.points_under(&p) {
                for r in refs {
                    let e = span.entry(r.element(&point)).or_insert((n, n));
                    e.1 = n;
                }
            }
        }
        let mut delta = vec![0i64; trips as usize];
        for &(first, last) in span.values() {
            if first < last {
                delta[first as usize] += 1;
                delta[last as usize] -= 1;
            }
        }
        let mut run = 0i64;
        for d in &delta {
            run += d;
            best = best.max(run as u64);
        }
    }
    best
}

/// Live-register requirement at every nest level (index = level).
fn live_by_level(k: &Kernel, refs: &[&ArrayRef]) -> Vec<u64> {
    if refs.is_empty() {
        return vec![0; k.depth()];
    }
    if is_uniform(refs) {
        let images = level_images(k, refs);
        (0..k.depth())
            .map(|lvl| {
                let l = &k.loops[lvl];
                let shift: Element = column(refs, lvl).iter().map(|c| c * l.step).collect();
                translated_live(&images[lvl + 1], &shift, l.trip_count())
            })
            .collect()
    } else {
        (0..k.depth()).map(|lvl| explicit_live(k, refs, lvl)).collect()
    }
}

fn distinct(k: &Kernel, refs: &[&ArrayRef]) -> u64 {
    if refs.is_empty() {
        return 0;
    }
    if is_uniform(refs) {
        return level_images(k, refs)[0].len() as u64;
    }
    let mut seen = HashSet::new();
    for point in k.points_under(&[]) {
        for r in refs {
            seen.insert(r.element(&point));
        }
    }
    seen.len() as u64
}

/// Outermost loop level carrying reuse for `array`.
pub fn carrier_loop(k: &Kernel, array: ArrayId) -> Option<usize> {
    live_by_level(k, &memory_refs(k, array)).iter().position(|&n| n > 0)
}

/// Registers needed for full scalar replacement of `array` (α).
pub fn required_registers(k: &Kernel, array: ArrayId) -> u64 {
    let live = live_by_level(k, &memory_refs(k, array));
    live.into_iter().find(|&n| n > 0).unwrap_or(1).max(1)
}

/// `(total, after, save)` dynamic memory accesses of `array` before and
/// after full scalar replacement. Under full replacement every element
/// read is loaded once and every element written is stored once.
pub fn saved_accesses(k: &Kernel, array: ArrayId) -> (u64, u64, u64) {
    let refs = memory_refs(k, array);
    let per_ref = k.iteration_space_size(0).unwrap_or(0);
    let total = per_ref * refs.len() as u64;
    let reads: Vec<_> = refs.iter().copied().filter(|r| r.is_read()).collect();
    let writes: Vec<_> = refs.iter().copied().filter(|r| r.is_write()).collect();
    let after = distinct(k, &reads) + distinct(k, &writes);
    (total, after, total - after)
}

/// `(total, distinct)` accesses of one static reference on its own.
pub fn ref_accesses(k: &Kernel, r: RefId) -> (u64, u64) {
    let r = k.array_ref(r);
    (k.iteration_space_size(0).unwrap_or(0), distinct(k, &[r]))
}

/// `save / α`, or 1 when nothing can be saved.
pub fn benefit_cost(save: u64, alpha: u64) -> Bc {
    if save == 0 {
        Bc(Ratio::from_integer(1))
    } else {
        Bc(Ratio::new(save, alpha.max(1)))
    }
}

pub fn analyze_array(k: &Kernel, array: ArrayId) -> ReuseInfo {
    let refs = memory_refs(k, array);
    let live = live_by_level(k, &refs);
    let carrier = live.iter().position(|&n| n > 0);
    let alpha = carrier.map(|c| live[c]).unwrap_or(1).max(1);
    let (total, after, save) = saved_accesses(k, array);
    ReuseInfo {
        array: k.array_name(array).to_string(),
        array_id: array,
        refs: k.refs_of(array).map(|r| r.id).collect(),
        carrier,
        alpha,
        total_accesses: total,
        after_accesses: after,
        save,
        bc: benefit_cost(save, alpha),
    }
}

/// Reuse records of every array, in order of first appearance.
pub fn analyze_all(k: &Kernel) -> ReuseTable {
    ReuseTable { infos: k.array_ids().map(|a| analyze_array(k, a)).collect() }
}

impl ReuseTable {
    pub fn as_map(&self) -> BTreeMap<String, ReuseInfo> {
        self.infos.iter().map(|i| (i.array.clone(), i.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::bundled;
    use crate::parser::parse_kernel;

    fn info<'a>(t: &'a ReuseTable, name: &str) -> &'a ReuseInfo {
        t.by_name(name).unwrap()
    }

    #[test]
    fn example_nest_alpha_and_bc() {
        let k = bundled("example").unwrap();
        let t = analyze_all(&k);
        assert_eq!(t.len(), 5);
        let want = [("a", 30, 1999), ("b", 600, 99), ("c", 20, 2999), ("d", 30, 1900), ("e", 1, 1)];
        for (name, alpha, bc) in want {
            let i = info(&t, name);
            assert_eq!(i.alpha, alpha, "{name}");
            assert_eq!(i.bc, Bc(Ratio::from_integer(bc)), "{name}");
        }
        assert_eq!(info(&t, "b").carrier, Some(0));
        assert_eq!(info(&t, "d").carrier, Some(1));
        assert_eq!(info(&t, "e").carrier, None);
    }

    #[test]
    fn example_nest_savings() {
        let k = bundled("example").unwrap();
        let t = analyze_all(&k);
        let b = info(&t, "b");
        assert_eq!((b.total_accesses, b.after_accesses, b.save), (60000, 600, 59400));
        let d = info(&t, "d");
        assert_eq!(d.save, 57000);
        let e = info(&t, "e");
        assert_eq!((e.total_accesses, e.after_accesses, e.save), (60000, 60000, 0));
        let a = info(&t, "a");
        assert_eq!(a.save, 59970);
    }

    #[test]
    fn bc_order_matches_greedy_visit() {
        let k = bundled("example").unwrap();
        let t = analyze_all(&k);
        let order: Vec<_> = t.bc_order().into_iter().map(|a| t.get(a).array.clone()).collect();
        assert_eq!(order, ["c", "a", "d", "b", "e"]);
    }

    #[test]
    fn fir_window_overlap() {
        let k = bundled("fir").unwrap();
        let t = analyze_all(&k);
        assert_eq!(info(&t, "out").alpha, 1);
        assert_eq!(info(&t, "coeff").alpha, 52);
        assert_eq!(info(&t, "in").alpha, 51);
        assert_eq!(info(&t, "in").carrier, Some(0));
        assert_eq!(info(&t, "out").carrier, Some(1));
    }

    #[test]
    fn unit_full_rank_ref_has_no_reuse() {
        let k = parse_kernel("loop i=0..5 { loop j=0..7 { S: y[i][j] = x[j][i]; } }").unwrap();
        let t = analyze_all(&k);
        for i in t.iter() {
            assert_eq!(i.alpha, 1);
            assert_eq!(i.carrier, None);
            assert_eq!(i.save, 0);
        }
    }

    #[test]
    fn strided_hole_pattern() {
        // x[i + 2j]: iteration i touches {i, i+2}; nothing is shared with
        // i+1 but two elements are live across every boundary.
        let k = parse_kernel("loop i=0..6 { loop j=0..2 { S: y[i][j] = x[i + 2*j]; } }").unwrap();
        let t = analyze_all(&k);
        let x = info(&t, "x");
        assert_eq!(x.carrier, Some(0));
        assert_eq!(x.alpha, 2);
        assert_eq!(x.after_accesses, 8);
        assert_eq!(x.save, 4);
    }

    #[test]
    fn translated_live_small_trip() {
        let set: HashSet<Element> = [vec![0], vec![2]].into_iter().collect();
        assert_eq!(translated_live(&set, &[1], 2), 0);
        assert_eq!(translated_live(&set, &[1], 3), 1);
        assert_eq!(translated_live(&set, &[1], 10), 2);
        assert_eq!(translated_live(&set, &[0], 10), 2);
        assert_eq!(translated_live(&set, &[0], 1), 0);
    }

    #[test]
    fn mixed_linear_parts_use_explicit_sets() {
        let k = parse_kernel("loop i=0..4 { loop j=0..3 { S: y[i][j] = x[i + j] + x[2*j]; } }").unwrap();
        let x = k.array_id("x").unwrap();
        // x[i+j] covers 0..=5 and x[2j] adds nothing new.
        assert_eq!(carrier_loop(&k, x), Some(0));
        let (total, after, _) = saved_accesses(&k, x);
        assert_eq!(total, 24);
        assert_eq!(after, 6);
        // Working sets {0,1,2,4}, {0..=4}, {0,2,3,4}, {0,2,3,4,5}: four
        // elements straddle every boundary.
        assert_eq!(required_registers(&k, x), 4);
    }

    #[test]
    fn empty_body_has_no_records() {
        let k = parse_kernel("loop i=0..3 { }").unwrap();
        assert!(analyze_all(&k).is_empty());
    }

    #[test]
    fn floor_bc_for_unsaved() {
        assert_eq!(benefit_cost(0, 1), Bc(Ratio::from_integer(1)));
        assert_eq!(benefit_cost(59980, 20), Bc(Ratio::from_integer(2999)));
        assert_eq!(benefit_cost(7, 2).to_string(), "3.50");
    }

    #[test]
    fn bc_serializes_as_fraction() {
        let s = serde_json::to_string(&benefit_cost(7, 2)).unwrap();
        assert_eq!(s, r#"{"num":7,"den":2}"#);
        let back: Bc = serde_json::from_str(&s).unwrap();
        assert_eq!(back, benefit_cost(7, 2));
    }
}
