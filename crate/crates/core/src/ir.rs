//! Loop-nest intermediate representation.
//!
//! A [`Kernel`] is a perfect nest of constant-bound loops whose innermost
//! body is a straight-line sequence of statements over affine array
//! references. Everything is resolved at construction time: parameters are
//! folded into constants, references carry stable ids assigned in execution
//! order, and intra-iteration value forwarding is recorded on each read.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Stable id of a static array reference; ids follow execution order
/// within one body iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RefId(pub usize);

impl fmt::Display for RefId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ref{}", self.0)
    }
}

/// Index into [`Kernel::arrays`], in order of first appearance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArrayId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loop {
    pub index: String,
    /// Inclusive.
    pub lower: i64,
    /// Exclusive.
    pub upper: i64,
    pub step: i64,
}

impl Loop {
    pub fn trip_count(&self) -> u64 {
        if self.upper <= self.lower {
            return 0;
        }
        ((self.upper - self.lower + self.step - 1) / self.step) as u64
    }

    /// Value of the index at iteration number `n`.
    pub fn value_at(&self, n: u64) -> i64 {
        self.lower + self.step * n as i64
    }
}

/// `constant + sum(coeff * index)`, with loop indices identified by nest
/// level. Zero coefficients are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct AffineExpr {
    pub constant: i64,
    pub terms: BTreeMap<usize, i64>,
}

impl AffineExpr {
    pub fn constant(c: i64) -> Self {
        AffineExpr { constant: c, terms: BTreeMap::new() }
    }

    pub fn index(level: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(level, 1);
        AffineExpr { constant: 0, terms }
    }

    pub fn coeff(&self, level: usize) -> i64 {
        self.terms.get(&level).copied().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &AffineExpr) -> AffineExpr {
        let mut out = self.clone();
        out.constant += other.constant;
        for (&lvl, &c) in &other.terms {
            let e = out.terms.entry(lvl).or_insert(0);
            *e += c;
            if *e == 0 {
                out.terms.remove(&lvl);
            }
        }
        out
    }

    pub fn scale(&self, k: i64) -> AffineExpr {
        if k == 0 {
            return AffineExpr::constant(0);
        }
        AffineExpr {
            constant: self.constant * k,
            terms: self.terms.iter().map(|(&l, &c)| (l, c * k)).collect(),
        }
    }

    /// Evaluate with `point[level]` as the value of each loop index.
    pub fn eval(&self, point: &[i64]) -> i64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, (&lvl, &c)| acc + c * point[lvl])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayRef {
    pub id: RefId,
    pub array: ArrayId,
    pub subscripts: Vec<AffineExpr>,
    pub access: Access,
    pub statement: usize,
    /// Ordinal position within the statement: 0 = left operand, 1 = right
    /// operand, 2 = implicit read of a `+=` target, 3 = the written target.
    pub slot: usize,
    /// Set on a read whose element was already touched earlier in the same
    /// iteration by a reference with identical subscripts. Such a read is
    /// served from the register holding that value and never reaches memory.
    pub forwarded_from: Option<RefId>,
}

impl ArrayRef {
    pub fn is_read(&self) -> bool {
        self.access == Access::Read
    }

    pub fn is_write(&self) -> bool {
        self.access == Access::Write
    }

    pub fn touches_memory(&self) -> bool {
        self.forwarded_from.is_none()
    }

    /// Element address at an iteration point.
    pub fn element(&self, point: &[i64]) -> Vec<i64> {
        self.subscripts.iter().map(|s| s.eval(point)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Multiply,
    Add,
    Subtract,
    Compare,
    Accumulate,
}

impl OpKind {
    pub fn symbol(self) -> &'static str {
        match self {
            OpKind::Multiply => "*",
            OpKind::Add => "+",
            OpKind::Subtract => "-",
            OpKind::Compare => "==",
            OpKind::Accumulate => "+=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Ref(RefId),
    Const(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rhs {
    Single(Operand),
    Binary(OpKind, Operand, Operand),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub id: usize,
    pub label: String,
    pub write: RefId,
    /// Implicit read of the written element for `+=` statements.
    pub accumulate: Option<RefId>,
    pub rhs: Rhs,
}

impl Statement {
    /// Refs of this statement in execution order.
    pub fn refs(&self) -> Vec<RefId> {
        let mut out = Vec::new();
        let mut push = |o: &Operand| {
            if let Operand::Ref(r) = o {
                out.push(*r);
            }
        };
        match &self.rhs {
            Rhs::Single(o) => push(o),
            Rhs::Binary(_, a, b) => {
                push(a);
                push(b);
            }
        }
        out.extend(self.accumulate);
        out.push(self.write);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayInfo {
    pub name: String,
    pub dims: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kernel {
    pub name: String,
    pub params: BTreeMap<String, i64>,
    /// Outermost first.
    pub loops: Vec<Loop>,
    pub statements: Vec<Statement>,
    /// Indexed by [`RefId`].
    pub refs: Vec<ArrayRef>,
    /// Indexed by [`ArrayId`].
    pub arrays: Vec<ArrayInfo>,
}

impl Kernel {
    pub fn depth(&self) -> usize {
        self.loops.len()
    }

    pub fn array_ref(&self, id: RefId) -> &ArrayRef {
        &self.refs[id.0]
    }

    pub fn array_name(&self, id: ArrayId) -> &str {
        &self.arrays[id.0].name
    }

    pub fn array_id(&self, name: &str) -> Option<ArrayId> {
        self.arrays.iter().position(|a| a.name == name).map(ArrayId)
    }

    pub fn array_ids(&self) -> impl Iterator<Item = ArrayId> {
        (0..self.arrays.len()).map(ArrayId)
    }

    /// Static refs of one array in execution order.
    pub fn refs_of(&self, array: ArrayId) -> impl Iterator<Item = &ArrayRef> {
        self.refs.iter().filter(move |r| r.array == array)
    }

    pub fn has_write(&self, array: ArrayId) -> bool {
        self.refs_of(array).any(|r| r.is_write())
    }

    /// Product of the trip counts of the loops at nest positions
    /// `level..depth`. Level 0 is the whole nest, level `depth` is one
    /// body iteration.
    pub fn iteration_space_size(&self, level: usize) -> Result<u64, crate::KernelError> {
        if level > self.depth() {
            return Err(crate::KernelError::LevelOutOfRange { level, depth: self.depth() });
        }
        Ok(self.loops[level..].iter().map(Loop::trip_count).product())
    }

    /// Iteration points of loops `level..depth` with outer indices fixed by
    /// `prefix` (length `level`), in lexicographic order.
    pub fn points_under(&self, prefix: &[i64]) -> Points<'_> {
        Points::new(&self.loops, prefix)
    }

    /// Index tuples of the loops at positions `0..level`.
    pub fn prefixes(&self, level: usize) -> Points<'_> {
        Points::new(&self.loops[..level], &[])
    }
}

/// Odometer over a rectangular iteration sub-space.
pub struct Points<'a> {
    loops: &'a [Loop],
    current: Vec<i64>,
    counters: Vec<u64>,
    fixed: usize,
    done: bool,
}

impl<'a> Points<'a> {
    fn new(loops: &'a [Loop], prefix: &[i64]) -> Self {
        let fixed = prefix.len();
        let mut current = prefix.to_vec();
        let mut done = false;
        for l in &loops[fixed..] {
            if l.trip_count() == 0 {
                done = true;
            }
            current.push(l.lower);
        }
        Points { loops, current, counters: vec![0; loops.len()], fixed, done }
    }
}

impl Iterator for Points<'_> {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let mut lvl = self.loops.len();
        loop {
            if lvl == self.fixed {
                self.done = true;
                break;
            }
            lvl -= 1;
            let l = &self.loops[lvl];
            self.counters[lvl] += 1;
            if self.counters[lvl] < l.trip_count() {
                self.current[lvl] = l.value_at(self.counters[lvl]);
                break;
            }
            self.counters[lvl] = 0;
            self.current[lvl] = l.lower;
        }
        Some(out)
    }
}

impl fmt::Display for Kernel {
    /// Prints the kernel back in the `.knl` DSL; parameters are printed but
    /// bounds and subscripts appear with parameters already folded.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kernel {};", self.name)?;
        for (p, v) in &self.params {
            writeln!(f, "param {} = {};", p, v)?;
        }
        for (depth, l) in self.loops.iter().enumerate() {
            let pad = "  ".repeat(depth);
            if l.step == 1 {
                writeln!(f, "{}loop {} = {}..{} {{", pad, l.index, l.lower, l.upper)?;
            } else {
                writeln!(f, "{}loop {} = {}..{} step {} {{", pad, l.index, l.lower, l.upper, l.step)?;
            }
        }
        let pad = "  ".repeat(self.depth());
        for s in &self.statements {
            let op = if s.accumulate.is_some() { "+=" } else { "=" };
            write!(f, "{}{}: {} {} ", pad, s.label, self.fmt_ref(s.write), op)?;
            match &s.rhs {
                Rhs::Single(o) => write!(f, "{}", self.fmt_operand(o))?,
                Rhs::Binary(k, a, b) => write!(
                    f,
                    "{} {} {}",
                    self.fmt_operand(a),
                    k.symbol(),
                    self.fmt_operand(b)
                )?,
            }
            writeln!(f, ";")?;
        }
        for depth in (0..self.depth()).rev() {
            writeln!(f, "{}}}", "  ".repeat(depth))?;
        }
        Ok(())
    }
}

impl Kernel {
    fn fmt_operand(&self, o: &Operand) -> String {
        match o {
            Operand::Ref(r) => self.fmt_ref(*r),
            Operand::Const(c) => c.to_string(),
        }
    }

    pub fn fmt_ref(&self, id: RefId) -> String {
        let r = self.array_ref(id);
        let mut s = self.array_name(r.array).to_string();
        for sub in &r.subscripts {
            s.push('[');
            s.push_str(&self.fmt_expr(sub));
            s.push(']');
        }
        s
    }

    pub fn fmt_expr(&self, e: &AffineExpr) -> String {
        let mut s = String::new();
        for (&lvl, &c) in &e.terms {
            let name = &self.loops[lvl].index;
            let (sign, mag) = if c < 0 { ("-", -c) } else { ("+", c) };
            if s.is_empty() {
                if sign == "-" {
                    s.push('-');
                }
            } else {
                s.push(' ');
                s.push_str(sign);
                s.push(' ');
            }
            if mag == 1 {
                s.push_str(name);
            } else {
                s.push_str(&format!("{}*{}", mag, name));
            }
        }
        if s.is_empty() {
            s = e.constant.to_string();
        } else if e.constant != 0 {
            let sign = if e.constant < 0 { '-' } else { '+' };
            s.push_str(&format!(" {} {}", sign, e.constant.abs()));
        }
        s
    }
}
