//! Scalar-replacement register allocation for affine loop kernels.
//!
//! The pipeline is:
//!
//! 1. [`parser`] turns a `.knl` source into a [`Kernel`];
//! 2. [`reuse`] computes per-array reuse carriers, required registers α,
//!    eliminable accesses and the benefit/cost ratio;
//! 3. [`alloc`] runs the full-reuse, partial-reuse and critical-path-aware
//!    allocators, the last one driven by the [`dfg`] critical graph and its
//!    cuts;
//! 4. [`sim`] charges steady-state memory cycles for an allocation.
//!
//! [`oracle`] recomputes the analytic quantities by brute-force enumeration
//! and [`report`] shapes results for the command line.

pub mod alloc;
pub mod config;
pub mod corpus;
pub mod dfg;
pub mod error;
pub mod ir;
pub mod oracle;
pub mod parser;
pub mod report;
pub mod reuse;
pub mod sim;

pub use alloc::{cpa_ra, fr_ra, pr_ra, Algorithm, Allocation};
pub use config::{Latencies, Policy, RrAccounting, RunConfig, SimConfig};
pub use corpus::{bundled, bundled_kernels};
pub use error::{AllocError, CapExceeded, Error, GraphError, KernelError};
pub use ir::{ArrayId, Kernel, RefId};
pub use parser::{parse_kernel, parse_kernel_named};
pub use reuse::{analyze_all, ReuseInfo, ReuseTable};
pub use sim::{steady_state_cycles, CycleReport};
