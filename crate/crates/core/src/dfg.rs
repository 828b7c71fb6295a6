//! Loop-body data-flow graph, critical paths and critical-graph cuts.
//!
//! Node ids are assigned in creation order while walking the body, so
//! graphs built from kernels always have edges from a lower to a higher id.
//! [`Dfg::from_parts`] accepts arbitrary DAGs and checks them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::config::{Latencies, RrAccounting};
use crate::error::GraphError;
use crate::ir::{Access, ArrayId, Kernel, OpKind, Operand, RefId, Rhs};
use crate::reuse::ReuseTable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeKind {
    Memory { r: RefId, array: ArrayId, access: Access },
    Op { op: OpKind, statement: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    pub label: String,
    pub latency: u64,
}

impl Node {
    pub fn memory(id: usize, r: RefId, array: ArrayId, label: &str, latency: u64) -> Node {
        Node {
            id,
            kind: NodeKind::Memory { r, array, access: Access::Read },
            label: label.to_string(),
            latency,
        }
    }

    pub fn op(id: usize, op: OpKind, latency: u64) -> Node {
        Node { id, kind: NodeKind::Op { op, statement: 0 }, label: op.symbol().to_string(), latency }
    }

    pub fn array(&self) -> Option<ArrayId> {
        match self.kind {
            NodeKind::Memory { array, .. } => Some(array),
            NodeKind::Op { .. } => None,
        }
    }

    pub fn is_memory(&self) -> bool {
        matches!(self.kind, NodeKind::Memory { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfg {
    pub nodes: Vec<Node>,
    pub edges: Vec<(usize, usize)>,
    succs: Vec<Vec<usize>>,
    preds: Vec<Vec<usize>>,
    topo: Vec<usize>,
    /// Node serving each static ref; forwarded reads share their source's node.
    pub ref_node: BTreeMap<RefId, usize>,
}

impl Dfg {
    /// Builds a graph from explicit nodes and edges. Node ids must equal
    /// their positions; duplicate edges are dropped.
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<(usize, usize)>) -> Result<Dfg, GraphError> {
        let n = nodes.len();
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(GraphError::UnknownNode(node.id));
            }
        }
        let edges: Vec<(usize, usize)> =
            edges.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        for &(u, v) in &edges {
            if u >= n {
                return Err(GraphError::UnknownNode(u));
            }
            if v >= n {
                return Err(GraphError::UnknownNode(v));
            }
            succs[u].push(v);
            preds[v].push(u);
        }
        let mut indeg: Vec<usize> = preds.iter().map(Vec::len).collect();
        let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).rev().collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(u) = ready.pop() {
            topo.push(u);
            for &v in succs[u].iter().rev() {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.push(v);
                }
            }
        }
        if topo.len() < n {
            let stuck = (0..n).find(|&v| indeg[v] > 0).unwrap_or(0);
            return Err(GraphError::Cycle(stuck));
        }
        Ok(Dfg { nodes, edges, succs, preds, topo, ref_node: BTreeMap::new() })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn succs(&self, v: usize) -> &[usize] {
        &self.succs[v]
    }

    pub fn preds(&self, v: usize) -> &[usize] {
        &self.preds[v]
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn memory_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_memory())
    }

    /// Longest latency from any root up to (excluding) each node, and from
    /// each node (including it) to any sink.
    fn distances(&self) -> (Vec<u64>, Vec<u64>) {
        let n = self.len();
        let mut from = vec![0u64; n];
        for &u in &self.topo {
            let reach = from[u] + self.nodes[u].latency;
            for &v in &self.succs[u] {
                from[v] = from[v].max(reach);
            }
        }
        let mut to = vec![0u64; n];
        for &u in self.topo.iter().rev() {
            let tail = self.succs[u].iter().map(|&v| to[v]).max().unwrap_or(0);
            to[u] = self.nodes[u].latency + tail;
        }
        (from, to)
    }

    pub fn t_exec(&self) -> u64 {
        let (from, to) = self.distances();
        (0..self.len()).map(|v| from[v] + to[v]).max().unwrap_or(0)
    }

    pub fn to_dot(&self, name: &str, highlight: Option<&CriticalGraph>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph \"{}\" {{", name.replace('"', "'"));
        for n in &self.nodes {
            let shape = if n.is_memory() { "box" } else { "ellipse" };
            let bold = highlight.is_some_and(|cg| cg.nodes.contains(&n.id));
            let _ = writeln!(
                s,
                "  n{} [label=\"{} ({})\", shape={}{}];",
                n.id,
                n.label,
                n.latency,
                shape,
                if bold { ", penwidth=2" } else { "" }
            );
        }
        for &(u, v) in &self.edges {
            let bold = highlight.is_some_and(|cg| cg.edges.contains(&(u, v)));
            let _ = writeln!(s, "  n{} -> n{}{};", u, v, if bold { " [penwidth=2]" } else { "" });
        }
        s.push_str("}\n");
        s
    }
}

/// Latency of a memory node: 0 when the array is fully scalar-replaced.
pub fn memory_latency(reuse: &ReuseTable, beta: &[u64], array: ArrayId) -> u64 {
    let info = reuse.get(array);
    if info.save > 0 && beta[array.0] >= info.alpha {
        0
    } else {
        1
    }
}

/// Data-flow graph of the innermost body under the register assignment
/// `beta` (indexed by [`ArrayId`]).
pub fn build_dfg(k: &Kernel, lat: &Latencies, reuse: &ReuseTable, beta: &[u64]) -> Dfg {
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges = Vec::new();
    let mut ref_node: BTreeMap<RefId, usize> = BTreeMap::new();

    let memory = |nodes: &mut Vec<Node>, ref_node: &mut BTreeMap<RefId, usize>, r: RefId| {
        let ar = k.array_ref(r);
        if let Some(src) = ar.forwarded_from {
            let id = ref_node[&src];
            ref_node.insert(r, id);
            return id;
        }
        let id = nodes.len();
        nodes.push(Node {
            id,
            kind: NodeKind::Memory { r, array: ar.array, access: ar.access },
            label: k.fmt_ref(r),
            latency: memory_latency(reuse, beta, ar.array),
        });
        ref_node.insert(r, id);
        id
    };
    let op = |nodes: &mut Vec<Node>, kind: OpKind, statement: usize| {
        let id = nodes.len();
        nodes.push(Node {
            id,
            kind: NodeKind::Op { op: kind, statement },
            label: kind.symbol().to_string(),
            latency: lat.of(kind),
        });
        id
    };

    for s in &k.statements {
        let value = |nodes: &mut Vec<Node>, ref_node: &mut BTreeMap<RefId, usize>, o: &Operand| {
            match o {
                Operand::Ref(r) => Some(memory(nodes, ref_node, *r)),
                Operand::Const(_) => None,
            }
        };
        let result = match &s.rhs {
            Rhs::Single(o) => value(&mut nodes, &mut ref_node, o),
            Rhs::Binary(kind, a, b) => {
                let a = value(&mut nodes, &mut ref_node, a);
                let b = value(&mut nodes, &mut ref_node, b);
                let id = op(&mut nodes, *kind, s.id);
                edges.extend(a.into_iter().chain(b).map(|u| (u, id)));
                Some(id)
            }
        };
        let result = match s.accumulate {
            Some(acc) => {
                let old = memory(&mut nodes, &mut ref_node, acc);
                let id = op(&mut nodes, OpKind::Accumulate, s.id);
                edges.extend(result.into_iter().chain([old]).map(|u| (u, id)));
                Some(id)
            }
            None => result,
        };
        let w = memory(&mut nodes, &mut ref_node, s.write);
        edges.extend(result.map(|u| (u, w)));
    }
    let mut g = Dfg::from_parts(nodes, edges).expect("body graphs are acyclic by construction");
    g.ref_node = ref_node;
    g
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticalGraph {
    pub t_exec: u64,
    pub nodes: BTreeSet<usize>,
    pub edges: BTreeSet<(usize, usize)>,
    /// Every maximum-latency root-to-sink path, in lexicographic order.
    pub paths: Vec<Vec<usize>>,
}

impl CriticalGraph {
    /// The critical graph as a standalone DFG with renumbered nodes.
    pub fn to_dfg(&self, g: &Dfg) -> Dfg {
        let index: BTreeMap<usize, usize> =
            self.nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let nodes = self
            .nodes
            .iter()
            .map(|&v| Node { id: index[&v], ..g.nodes[v].clone() })
            .collect();
        let edges = self.edges.iter().map(|(u, v)| (index[u], index[v])).collect();
        Dfg::from_parts(nodes, edges).expect("subgraph of a DAG")
    }
}

/// `T_exec` and every path attaining it.
pub fn critical_paths(g: &Dfg) -> (u64, Vec<Vec<usize>>) {
    let cg = make_cg(g);
    (cg.t_exec, cg.paths)
}

pub fn make_cg(g: &Dfg) -> CriticalGraph {
    let (from, to) = g.distances();
    let t = (0..g.len()).map(|v| from[v] + to[v]).max().unwrap_or(0);
    let on = |v: usize| from[v] + to[v] == t;
    let tight = |u: usize, v: usize| on(u) && on(v) && from[u] + g.nodes[u].latency + to[v] == t;

    let mut paths = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    fn walk(
        g: &Dfg,
        v: usize,
        stack: &mut Vec<usize>,
        paths: &mut Vec<Vec<usize>>,
        tight: &dyn Fn(usize, usize) -> bool,
    ) {
        stack.push(v);
        let next: Vec<usize> = g.succs(v).iter().copied().filter(|&w| tight(v, w)).collect();
        if g.succs(v).is_empty() {
            paths.push(stack.clone());
        }
        for w in next {
            walk(g, w, stack, paths, tight);
        }
        stack.pop();
    }
    let mut roots: Vec<usize> =
        (0..g.len()).filter(|&v| g.preds(v).is_empty() && on(v)).collect();
    roots.sort_unstable();
    for r in roots {
        walk(g, r, &mut stack, &mut paths, &tight);
    }
    paths.sort();
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for p in &paths {
        nodes.extend(p.iter().copied());
        edges.extend(p.windows(2).map(|w| (w[0], w[1])));
    }
    CriticalGraph { t_exec: t, nodes, edges, paths }
}

/// Minimal sets of candidate nodes meeting every critical path, via
/// Berge's incremental transversal construction.
pub fn minimal_cuts(cg: &CriticalGraph, candidate: impl Fn(usize) -> bool) -> Vec<BTreeSet<usize>> {
    if cg.paths.is_empty() {
        return Vec::new();
    }
    let mut hyper: Vec<BTreeSet<usize>> = cg
        .paths
        .iter()
        .map(|p| p.iter().copied().filter(|&v| candidate(v)).collect())
        .collect();
    hyper.sort();
    hyper.dedup();
    let mut trans: Vec<BTreeSet<usize>> = vec![BTreeSet::new()];
    for edge in &hyper {
        let mut next: BTreeSet<BTreeSet<usize>> = BTreeSet::new();
        for t in &trans {
            if !t.is_disjoint(edge) {
                next.insert(t.clone());
            } else {
                for &e in edge {
                    let mut t2 = t.clone();
                    t2.insert(e);
                    next.insert(t2);
                }
            }
        }
        let next: Vec<BTreeSet<usize>> = next.into_iter().collect();
        trans = next
            .iter()
            .filter(|t| !next.iter().any(|o| o.len() < t.len() && o.is_subset(t)))
            .cloned()
            .collect();
        if trans.is_empty() {
            break;
        }
    }
    trans
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cut {
    pub nodes: Vec<usize>,
    /// Distinct arrays behind the member nodes, ascending.
    pub arrays: Vec<ArrayId>,
    /// Registers for full replacement of every member array.
    pub omega: u64,
    /// Registers charged when selecting this cut.
    pub rr: u64,
}

pub fn req_reg(arrays: &[ArrayId], reuse: &ReuseTable, beta: &[u64], accounting: RrAccounting) -> u64 {
    arrays
        .iter()
        .map(|&a| match accounting {
            RrAccounting::Incremental => reuse.alpha(a).saturating_sub(beta[a.0]),
            RrAccounting::FullAlpha => reuse.alpha(a),
        })
        .sum()
}

/// Memory nodes of arrays that still gain from more registers.
pub fn is_candidate(g: &Dfg, reuse: &ReuseTable, beta: &[u64], v: usize) -> bool {
    match g.nodes[v].array() {
        Some(a) => reuse.get(a).save > 0 && beta[a.0] < reuse.alpha(a),
        None => false,
    }
}

/// All cuts of the critical graph, cheapest first (ties: fewer members,
/// then smaller node ids).
pub fn find_cuts(
    g: &Dfg,
    cg: &CriticalGraph,
    reuse: &ReuseTable,
    beta: &[u64],
    accounting: RrAccounting,
) -> Vec<Cut> {
    let mut cuts: Vec<Cut> = minimal_cuts(cg, |v| is_candidate(g, reuse, beta, v))
        .into_iter()
        .map(|set| {
            let nodes: Vec<usize> = set.into_iter().collect();
            let arrays: Vec<ArrayId> = nodes
                .iter()
                .filter_map(|&v| g.nodes[v].array())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let omega = arrays.iter().map(|&a| reuse.alpha(a)).sum();
            let rr = req_reg(&arrays, reuse, beta, accounting);
            Cut { nodes, arrays, omega, rr }
        })
        .collect();
    cuts.sort_by(|a, b| {
        (a.rr, a.nodes.len(), &a.nodes).cmp(&(b.rr, b.nodes.len(), &b.nodes))
    });
    cuts
}
