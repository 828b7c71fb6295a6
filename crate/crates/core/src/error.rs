use thiserror::Error;

/// Position inside a `.knl` source, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: non-affine subscript: {msg}")]
    NonAffine { pos: Pos, msg: String },
    #[error("{pos}: imperfect loop nest: {msg}")]
    ImperfectNest { pos: Pos, msg: String },
    #[error("{pos}: undefined identifier `{name}`")]
    Undefined { pos: Pos, name: String },
    #[error("{pos}: loop bound is not a compile-time constant: {msg}")]
    NonConstantBound { pos: Pos, msg: String },
    #[error("{pos}: {msg}")]
    Invalid { pos: Pos, msg: String },
    #[error("level {level} out of range for a nest of depth {depth}")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("unknown bundled kernel `{0}`")]
    UnknownKernel(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AllocError {
    #[error("register budget {budget} is below the {arrays} mandatory registers (one per array)")]
    InfeasibleBudget { budget: u64, arrays: usize },
    #[error("allocation does not cover array `{0}`")]
    MissingArray(String),
    #[error("β for `{array}` is {beta}, outside 1..={alpha}")]
    BetaOutOfRange { array: String, beta: u64, alpha: u64 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("dependence cycle through node {0}")]
    Cycle(usize),
    #[error("edge or id refers to missing node {0}")]
    UnknownNode(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("iteration space of {points} points exceeds the cap of {cap}")]
pub struct CapExceeded {
    pub points: u64,
    pub cap: u64,
}

/// Any failure of the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cap(#[from] CapExceeded),
}
