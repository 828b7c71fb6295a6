//! Parser for the `.knl` kernel DSL.
//!
//! ```text
//! # comment
//! kernel fir;
//! param N = 1024;
//! param T = 52;
//! loop i = 0..N-T+1 {
//!   loop j = 0..T {
//!     S: out[i] += coeff[j] * in[i + j];
//!   }
//! }
//! ```
//!
//! Subscripts are integer-linear in the enclosing indices and parameters.
//! Bounds may reference parameters only. A statement writes one array
//! element from a single term or from `term op term` with `op` one of
//! `* + - ==`; `+=` makes the statement a read-modify-write.

use std::collections::BTreeMap;

use crate::error::{KernelError, Pos};
use crate::ir::{
    Access, AffineExpr, ArrayId, ArrayInfo, ArrayRef, Kernel, Loop, OpKind, Operand, RefId, Rhs,
    Statement,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
}

const PUNCT: [&str; 16] = ["..", "+=", "==", "=", "{", "}", "[", "]", "(", ")", ";", ":", "+", "-", "*", "/"];

fn lex(src: &str) -> Result<Vec<Token>, KernelError> {
    let mut out = Vec::new();
    for (lineno, line) in src.lines().enumerate() {
        let line = match line.find('#') {
            Some(at) => &line[..at],
            None => line,
        };
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let pos = Pos { line: lineno + 1, col: i + 1 };
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let v = text.parse::<i64>().map_err(|_| KernelError::Syntax {
                    pos,
                    msg: format!("integer literal `{}` out of range", text),
                })?;
                out.push(Token { tok: Tok::Int(v), pos });
            } else if c.is_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), pos });
            } else {
                let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
                let p = PUNCT
                    .iter()
                    .find(|p| rest.starts_with(**p))
                    .ok_or_else(|| KernelError::Syntax { pos, msg: format!("unexpected character `{}`", c) })?;
                out.push(Token { tok: Tok::Punct(p), pos });
                i += p.len();
            }
        }
    }
    let pos = Pos { line: src.lines().count().max(1), col: 1 };
    out.push(Token { tok: Tok::Eof, pos });
    Ok(out)
}

/// Expression value while parsing: affine in loop levels, parameters
/// already folded.
type Lin = AffineExpr;

struct RawRef {
    array: String,
    subscripts: Vec<Lin>,
    pos: Pos,
}

enum RawTerm {
    Ref(RawRef),
    Const(i64),
}

struct RawStmt {
    label: String,
    target: RawRef,
    accumulate: bool,
    lhs: RawTerm,
    rhs: Option<(OpKind, RawTerm)>,
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
    params: BTreeMap<String, i64>,
    indices: Vec<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, KernelError> {
        Err(KernelError::Syntax { pos: self.pos(), msg: msg.into() })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect(&mut self, p: &str) -> Result<(), KernelError> {
        if self.is_punct(p) {
            self.bump();
            Ok(())
        } else {
            self.syntax(format!("expected `{}`, found {}", p, describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), KernelError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok((s, pos))
            }
            other => self.syntax(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn expr(&mut self) -> Result<Lin, KernelError> {
        let mut acc = self.product()?;
        loop {
            if self.is_punct("+") {
                self.bump();
                acc = acc.add(&self.product()?);
            } else if self.is_punct("-") {
                self.bump();
                acc = acc.add(&self.product()?.scale(-1));
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<Lin, KernelError> {
        let mut acc = self.unary()?;
        while self.is_punct("*") || self.is_punct("/") {
            let pos = self.pos();
            let divide = self.is_punct("/");
            self.bump();
            let rhs = self.unary()?;
            if divide {
                if !acc.is_constant() || !rhs.is_constant() {
                    return Err(KernelError::NonAffine { pos, msg: "division of a loop-index expression".into() });
                }
                if rhs.constant == 0 {
                    return Err(KernelError::Invalid { pos, msg: "division by zero".into() });
                }
                acc = AffineExpr::constant(acc.constant.div_euclid(rhs.constant));
                continue;
            }
            acc = if rhs.is_constant() {
                acc.scale(rhs.constant)
            } else if acc.is_constant() {
                rhs.scale(acc.constant)
            } else {
                return Err(KernelError::NonAffine {
                    pos,
                    msg: "product of two loop-index expressions".into(),
                });
            };
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Lin, KernelError> {
        if self.is_punct("-") {
            self.bump();
            return Ok(self.unary()?.scale(-1));
        }
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(AffineExpr::constant(v))
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(level) = self.indices.iter().position(|i| *i == name) {
                    Ok(AffineExpr::index(level))
                } else if let Some(v) = self.params.get(&name) {
                    Ok(AffineExpr::constant(*v))
                } else {
                    Err(KernelError::Undefined { pos, name })
                }
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            other => self.syntax(format!("expected expression, found {}", describe(&other))),
        }
    }

    fn const_expr(&mut self, what: &str) -> Result<i64, KernelError> {
        let pos = self.pos();
        let e = self.expr()?;
        if !e.is_constant() {
            return Err(KernelError::NonConstantBound {
                pos,
                msg: format!("{} depends on a loop index", what),
            });
        }
        Ok(e.constant)
    }

    fn array_ref(&mut self, array: String, pos: Pos) -> Result<RawRef, KernelError> {
        let mut subscripts = Vec::new();
        while self.is_punct("[") {
            self.bump();
            subscripts.push(self.expr()?);
            self.expect("]")?;
        }
        if subscripts.is_empty() {
            return self.syntax(format!("expected `[` after array `{}`", array));
        }
        Ok(RawRef { array, subscripts, pos })
    }

    fn term(&mut self) -> Result<RawTerm, KernelError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                if self.is_punct("[") {
                    Ok(RawTerm::Ref(self.array_ref(name, pos)?))
                } else if let Some(v) = self.params.get(&name) {
                    Ok(RawTerm::Const(*v))
                } else if self.indices.contains(&name) {
                    self.syntax(format!("loop index `{}` cannot be used as a value", name))
                } else {
                    Err(KernelError::Undefined { pos, name })
                }
            }
            Tok::Int(v) => {
                self.bump();
                Ok(RawTerm::Const(v))
            }
            Tok::Punct("-") => {
                self.bump();
                match self.peek().clone() {
                    Tok::Int(v) => {
                        self.bump();
                        Ok(RawTerm::Const(-v))
                    }
                    other => self.syntax(format!("expected integer after `-`, found {}", describe(&other))),
                }
            }
            other => self.syntax(format!("expected operand, found {}", describe(&other))),
        }
    }

    fn statement(&mut self) -> Result<RawStmt, KernelError> {
        let (label, _) = self.ident()?;
        self.expect(":")?;
        let (array, pos) = self.ident()?;
        let target = self.array_ref(array, pos)?;
        let accumulate = if self.is_punct("+=") {
            true
        } else if self.is_punct("=") {
            false
        } else {
            return self.syntax(format!("expected `=` or `+=`, found {}", describe(self.peek())));
        };
        self.bump();
        let lhs = self.term()?;
        let op = match self.peek() {
            Tok::Punct("*") => Some(OpKind::Multiply),
            Tok::Punct("+") => Some(OpKind::Add),
            Tok::Punct("-") => Some(OpKind::Subtract),
            Tok::Punct("==") => Some(OpKind::Compare),
            _ => None,
        };
        let rhs = match op {
            Some(op) => {
                self.bump();
                Some((op, self.term()?))
            }
            None => None,
        };
        self.expect(";")?;
        Ok(RawStmt { label, target, accumulate, lhs, rhs })
    }

    /// Parses `loop ... { ... }` recursively, returning the loops of the
    /// nest and the statements of its innermost body.
    fn nest(&mut self, loops: &mut Vec<Loop>) -> Result<Vec<RawStmt>, KernelError> {
        self.bump(); // `loop`
        let (index, ipos) = self.ident()?;
        if self.indices.contains(&index) || self.params.contains_key(&index) {
            return Err(KernelError::Invalid { pos: ipos, msg: format!("loop index `{}` is already defined", index) });
        }
        self.expect("=")?;
        let lower = self.const_expr("lower bound")?;
        self.expect("..")?;
        let upper = self.const_expr("upper bound")?;
        let step = if self.is_keyword("step") {
            self.bump();
            self.const_expr("step")?
        } else {
            1
        };
        if step < 1 {
            return Err(KernelError::Invalid { pos: ipos, msg: format!("loop `{}` has step {} < 1", index, step) });
        }
        if lower >= upper {
            return Err(KernelError::Invalid {
                pos: ipos,
                msg: format!("loop `{}` has empty range {}..{}", index, lower, upper),
            });
        }
        self.expect("{")?;
        self.indices.push(index.clone());
        loops.push(Loop { index, lower, upper, step });

        let mut stmts = Vec::new();
        let mut inner_seen = false;
        loop {
            if self.is_punct("}") {
                self.bump();
                break;
            }
            if matches!(self.peek(), Tok::Eof) {
                return self.syntax("unterminated loop body");
            }
            let pos = self.pos();
            if self.is_keyword("loop") {
                if inner_seen || !stmts.is_empty() {
                    return Err(KernelError::ImperfectNest {
                        pos,
                        msg: "a loop body holds either one inner loop or statements".into(),
                    });
                }
                inner_seen = true;
                stmts = self.nest(loops)?;
                if !self.is_punct("}") {
                    return Err(KernelError::ImperfectNest {
                        pos: self.pos(),
                        msg: "code after an inner loop".into(),
                    });
                }
            } else if inner_seen {
                return Err(KernelError::ImperfectNest { pos, msg: "code after an inner loop".into() });
            } else {
                stmts.push(self.statement()?);
            }
        }
        Ok(stmts)
    }

    fn kernel(mut self, default_name: &str) -> Result<Kernel, KernelError> {
        let mut name = default_name.to_string();
        let mut loops = Vec::new();
        let mut stmts = None;
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "kernel" && stmts.is_none() => {
                    self.bump();
                    name = self.ident()?.0;
                    self.expect(";")?;
                }
                Tok::Ident(kw) if kw == "param" && stmts.is_none() => {
                    self.bump();
                    let (p, pos) = self.ident()?;
                    if self.params.contains_key(&p) {
                        return Err(KernelError::Invalid { pos, msg: format!("parameter `{}` defined twice", p) });
                    }
                    self.expect("=")?;
                    let v = self.const_expr("parameter value")?;
                    self.expect(";")?;
                    self.params.insert(p, v);
                }
                Tok::Ident(kw) if kw == "loop" => {
                    if stmts.is_some() {
                        return Err(KernelError::ImperfectNest {
                            pos: self.pos(),
                            msg: "a kernel holds exactly one loop nest".into(),
                        });
                    }
                    stmts = Some(self.nest(&mut loops)?);
                }
                other => return self.syntax(format!("unexpected {}", describe(&other))),
            }
        }
        let stmts = match stmts {
            Some(s) => s,
            None => return self.syntax("kernel has no loop nest"),
        };
        resolve(name, self.params, loops, stmts)
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{}`", s),
        Tok::Int(v) => format!("`{}`", v),
        Tok::Punct(p) => format!("`{}`", p),
        Tok::Eof => "end of input".into(),
    }
}

/// Assigns ref ids in execution order, checks array dimensionality and
/// records intra-iteration forwarding.
fn resolve(
    name: String,
    params: BTreeMap<String, i64>,
    loops: Vec<Loop>,
    raw: Vec<RawStmt>,
) -> Result<Kernel, KernelError> {
    let mut arrays: Vec<ArrayInfo> = Vec::new();
    let mut refs: Vec<ArrayRef> = Vec::new();
    let mut statements = Vec::new();

    let mut add_ref = |r: &RawRef, access: Access, statement: usize, slot: usize| -> Result<RefId, KernelError> {
        let array = match arrays.iter().position(|a| a.name == r.array) {
            Some(i) => {
                if arrays[i].dims != r.subscripts.len() {
                    return Err(KernelError::Invalid {
                        pos: r.pos,
                        msg: format!(
                            "array `{}` used with {} subscripts, previously {}",
                            r.array,
                            r.subscripts.len(),
                            arrays[i].dims
                        ),
                    });
                }
                ArrayId(i)
            }
            None => {
                arrays.push(ArrayInfo { name: r.array.clone(), dims: r.subscripts.len() });
                ArrayId(arrays.len() - 1)
            }
        };
        let id = RefId(refs.len());
        // Only reads can be forwarded; the latest prior touch of the same
        // element in this iteration already holds its value in a register.
        let forwarded_from = if access == Access::Read {
            refs.iter()
                .rev()
                .find(|p| p.array == array && p.subscripts == r.subscripts)
                .map(|p| p.forwarded_from.unwrap_or(p.id))
        } else {
            None
        };
        refs.push(ArrayRef {
            id,
            array,
            subscripts: r.subscripts.clone(),
            access,
            statement,
            slot,
            forwarded_from,
        });
        Ok(id)
    };

    for (sid, s) in raw.into_iter().enumerate() {
        let mut operand = |t: &RawTerm, slot: usize| -> Result<Operand, KernelError> {
            Ok(match t {
                RawTerm::Ref(r) => Operand::Ref(add_ref(r, Access::Read, sid, slot)?),
                RawTerm::Const(c) => Operand::Const(*c),
            })
        };
        let lhs = operand(&s.lhs, 0)?;
        let rhs = match &s.rhs {
            Some((op, t)) => Rhs::Binary(*op, lhs, operand(t, 1)?),
            None => Rhs::Single(lhs),
        };
        let accumulate = if s.accumulate {
            Some(add_ref(&s.target, Access::Read, sid, 2)?)
        } else {
            None
        };
        let write = add_ref(&s.target, Access::Write, sid, 3)?;
        statements.push(Statement { id: sid, label: s.label, write, accumulate, rhs });
    }

    Ok(Kernel { name, params, loops, statements, refs, arrays })
}

/// Parses a kernel; the name defaults to `kernel` unless the source has a
/// `kernel NAME;` line.
pub fn parse_kernel(source: &str) -> Result<Kernel, KernelError> {
    parse_kernel_named(source, "kernel")
}

pub fn parse_kernel_named(source: &str, default_name: &str) -> Result<Kernel, KernelError> {
    let toks = lex(source)?;
    let p = Parser { toks, at: 0, params: BTreeMap::new(), indices: Vec::new() };
    p.kernel(default_name)
}
