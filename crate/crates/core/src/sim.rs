//! Steady-state memory cycle model.
//!
//! One iteration of the outermost loop is replayed. Memory nodes of the
//! body graph are grouped into dependence levels; accesses in one level go
//! to distinct RAM blocks and overlap, so a level costs one cycle in an
//! inner iteration iff at least one of its accesses misses the registers.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::alloc::{Algorithm, Allocation};
use crate::config::{Latencies, Policy, SimConfig};
use crate::dfg::{build_dfg, Dfg, NodeKind};
use crate::ir::{ArrayId, Kernel, RefId};
use crate::reuse::{Element, ReuseTable};

/// Memory nodes levelled by how many memory nodes precede them on any
/// dependence chain. With `ports` RAM ports per array, a level touching one
/// array more than `ports` times is split into consecutive sublevels.
pub fn memory_levels(g: &Dfg, ports: usize) -> Vec<Vec<usize>> {
    let ports = ports.max(1);
    let mut depth = vec![0usize; g.len()];
    for &v in g.topo_order() {
        for &u in g.preds(v) {
            let d = depth[u] + usize::from(g.nodes[u].is_memory());
            depth[v] = depth[v].max(d);
        }
    }
    let mut by_depth: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for n in g.memory_nodes() {
        by_depth.entry(depth[n.id]).or_default().push(n.id);
    }
    let mut levels = Vec::new();
    for (_, members) in by_depth {
        let mut seen: HashMap<ArrayId, usize> = HashMap::new();
        let mut subs: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in members {
            let a = g.nodes[v].array().expect("memory node");
            let n = seen.entry(a).or_insert(0);
            subs.entry(*n / ports).or_default().push(v);
            *n += 1;
        }
        levels.extend(subs.into_values());
    }
    levels
}

/// Index of the outermost loop used as the steady-state window.
pub fn window_index(k: &Kernel) -> i64 {
    let l = &k.loops[0];
    l.value_at(l.trip_count() / 2)
}

/// Register residency of array elements under an allocation. Elements of
/// an array are ranked by first access within each iteration of its
/// carrier loop; the `β` lowest-ranked ones live in registers.
pub struct Residency<'a> {
    k: &'a Kernel,
    reuse: &'a ReuseTable,
    beta: &'a [u64],
    policy: Policy,
    ranks: HashMap<(ArrayId, Vec<i64>), HashMap<Element, usize>>,
}

impl<'a> Residency<'a> {
    pub fn new(k: &'a Kernel, reuse: &'a ReuseTable, alloc: &'a Allocation, policy: Policy) -> Self {
        Residency { k, reuse, beta: &alloc.beta, policy, ranks: HashMap::new() }
    }

    fn rank_bound(&self, array: ArrayId) -> Option<bool> {
        let info = self.reuse.get(array);
        let beta = self.beta[array.0];
        if info.save == 0 {
            return Some(false);
        }
        if beta >= info.alpha {
            return Some(true);
        }
        if beta < 2 && (self.policy == Policy::StagingOnly || self.k.has_write(array)) {
            return Some(false);
        }
        None
    }

    fn ranks_for(&mut self, array: ArrayId, prefix: &[i64]) -> &HashMap<Element, usize> {
        let k = self.k;
        self.ranks.entry((array, prefix.to_vec())).or_insert_with(|| {
            let refs: Vec<_> = k.refs_of(array).filter(|r| r.touches_memory()).collect();
            let mut ranks = HashMap::new();
            for p in k.points_under(prefix) {
                for r in &refs {
                    let next = ranks.len();
                    ranks.entry(r.element(&p)).or_insert(next);
                }
            }
            ranks
        })
    }

    /// Whether the access of `r` at iteration `point` is served by a register.
    pub fn resident(&mut self, r: RefId, point: &[i64]) -> bool {
        let ar = self.k.array_ref(r);
        let array = ar.array;
        if let Some(fixed) = self.rank_bound(array) {
            return fixed;
        }
        let cut = match self.reuse.get(array).carrier {
            Some(c) => c + 1,
            None => point.len(),
        };
        let element = ar.element(point);
        let beta = self.beta[array.0] as usize;
        self.ranks_for(array, &point[..cut])[&element] < beta
    }

    /// Drops cached rankings; call between carrier iterations when
    /// scanning a large space.
    pub fn clear(&mut self) {
        self.ranks.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    pub kernel: String,
    pub algorithm: Algorithm,
    pub beta: BTreeMap<String, u64>,
    pub registers_used: u64,
    pub memory_cycles: u64,
    /// Cycles charged per memory level, outermost dependence first.
    pub per_level: Vec<u64>,
    /// Ref labels of each memory level.
    pub levels: Vec<Vec<String>>,
    /// Memory accesses that miss the registers, per array.
    pub per_array: BTreeMap<String, u64>,
    pub inner_iterations: u64,
    pub t_exec: u64,
}

pub fn steady_state_cycles(
    k: &Kernel,
    reuse: &ReuseTable,
    alloc: &Allocation,
    cfg: &SimConfig,
) -> CycleReport {
    let g = build_dfg(k, &cfg.latencies, reuse, &alloc.beta);
    let levels = memory_levels(&g, cfg.ports);
    let node_ref = |v: usize| match g.nodes[v].kind {
        NodeKind::Memory { r, .. } => r,
        NodeKind::Op { .. } => unreachable!("levels hold memory nodes"),
    };
    let mut res = Residency::new(k, reuse, alloc, cfg.policy);
    let mut per_level = vec![0u64; levels.len()];
    let mut per_array: BTreeMap<String, u64> =
        reuse.iter().map(|i| (i.array.clone(), 0)).collect();
    let mut inner = 0u64;
    if !k.loops.is_empty() && k.loops[0].trip_count() > 0 {
        for p in k.points_under(&[window_index(k)]) {
            inner += 1;
            for (li, level) in levels.iter().enumerate() {
                let mut miss = false;
                for &v in level {
                    if !res.resident(node_ref(v), &p) {
                        miss = true;
                        let name = g.nodes[v].array().map(|a| k.array_name(a)).unwrap_or("");
                        *per_array.get_mut(name).expect("known array") += 1;
                    }
                }
                per_level[li] += u64::from(miss);
            }
        }
    }
    CycleReport {
        kernel: k.name.clone(),
        algorithm: alloc.algorithm,
        beta: alloc.as_map(),
        registers_used: alloc.used(),
        memory_cycles: per_level.iter().sum(),
        per_level,
        levels: levels
            .iter()
            .map(|l| l.iter().map(|&v| g.nodes[v].label.clone()).collect())
            .collect(),
        per_array,
        inner_iterations: inner,
        t_exec: g.t_exec(),
    }
}

/// Critical-path latency of one body iteration when every partially
/// replaced array misses.
pub fn t_exec(k: &Kernel, reuse: &ReuseTable, alloc: &Allocation, lat: &Latencies) -> u64 {
    build_dfg(k, lat, reuse, &alloc.beta).t_exec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::{cpa_ra, fr_ra, pr_ra};
    use crate::config::RrAccounting;
    use crate::corpus::bundled;
    use crate::parser::parse_kernel;
    use crate::reuse::analyze_all;

    fn cycles(name: &str, policy: Policy) -> [u64; 3] {
        let k = bundled(name).unwrap();
        let t = analyze_all(&k);
        let cfg = SimConfig { policy, ..SimConfig::default() };
        let lat = Latencies::default();
        let allocs = [
            fr_ra(&t, 64).unwrap(),
            pr_ra(&t, 64).unwrap(),
            cpa_ra(&k, &t, 64, &lat, RrAccounting::Incremental).unwrap(),
        ];
        allocs.map(|a| steady_state_cycles(&k, &t, &a, &cfg).memory_cycles)
    }

    #[test]
    fn example_nest_element_level() {
        assert_eq!(cycles("example", Policy::ElementLevel), [1799, 1559, 1184]);
    }

    #[test]
    fn example_nest_staging_only() {
        assert_eq!(cycles("example", Policy::StagingOnly), [1800, 1560, 1200]);
    }

    #[test]
    fn example_nest_levels() {
        let k = bundled("example").unwrap();
        let t = analyze_all(&k);
        let g = build_dfg(&k, &Latencies::default(), &t, &vec![1; 5]);
        let labels: Vec<Vec<&str>> = memory_levels(&g, 1)
            .iter()
            .map(|l| l.iter().map(|&v| g.nodes[v].label.as_str()).collect())
            .collect();
        assert_eq!(labels, vec![vec!["a[k]", "b[k][j]", "c[j]"], vec!["d[i][k]"], vec!["e[i][j][k]"]]);
    }

    #[test]
    fn ports_split_same_array_levels() {
        let k = parse_kernel("loop i=0..4 { S: y[i] = x[i] + x[i+1]; }").unwrap();
        let t = analyze_all(&k);
        let g = build_dfg(&k, &Latencies::default(), &t, &vec![1; 2]);
        assert_eq!(memory_levels(&g, 1).len(), 3);
        assert_eq!(memory_levels(&g, 2).len(), 2);
    }

    #[test]
    fn chain_gives_two_levels() {
        let k = parse_kernel("loop i=0..4 { S: y[i] = x[i]; }").unwrap();
        let t = analyze_all(&k);
        let g = build_dfg(&k, &Latencies::default(), &t, &vec![1; 2]);
        assert_eq!(memory_levels(&g, 1), vec![vec![0], vec![1]]);
    }

    #[test]
    fn full_residency_floor() {
        let k = bundled("example").unwrap();
        let t = analyze_all(&k);
        let r = steady_state_cycles(&k, &t, &Allocation::full(&t), &SimConfig::default());
        assert_eq!(r.memory_cycles, 600);
        assert_eq!(r.inner_iterations, 600);
        assert_eq!(r.per_array["e"], 600);
    }

    #[test]
    fn residency_examples() {
        let k = bundled("example").unwrap();
        let t = analyze_all(&k);
        let a = cpa_ra(&k, &t, 64, &Latencies::default(), RrAccounting::Incremental).unwrap();
        let mut res = Residency::new(&k, &t, &a, Policy::ElementLevel);
        let a_ref = k.refs_of(k.array_id("a").unwrap()).next().unwrap().id;
        let b_ref = k.refs_of(k.array_id("b").unwrap()).next().unwrap().id;
        assert!(res.resident(a_ref, &[50, 3, 5]));
        assert!(!res.resident(a_ref, &[50, 3, 16]));
        assert!(!res.resident(b_ref, &[50, 0, 20]));
        assert!(res.resident(b_ref, &[50, 0, 15]));
        assert!(!res.resident(b_ref, &[50, 1, 0]));
    }

    #[test]
    fn t_exec_example_nest() {
        let k = bundled("example").unwrap();
        let t = analyze_all(&k);
        let lat = Latencies::default();
        assert_eq!(t_exec(&k, &t, &Allocation::baseline(&t), &lat), 5);
        let mut a = Allocation::baseline(&t);
        a.beta[k.array_id("d").unwrap().0] = 30;
        assert_eq!(t_exec(&k, &t, &a, &lat), 4);
    }

    #[test]
    fn cpa_never_worse_on_corpus() {
        for name in ["fir", "decfir", "imi", "mat", "pat", "bic"] {
            let [fr, pr, cpa] = cycles(name, Policy::ElementLevel);
            assert!(cpa <= pr && pr <= fr, "{name}: {fr} {pr} {cpa}");
        }
    }
}
