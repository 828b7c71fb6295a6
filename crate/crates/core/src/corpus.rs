//! Compiled-in kernel corpus: the two-statement example nest plus the six
//! signal and image processing kernels (FIR, Dec-FIR, IMI, MAT, PAT, BIC).
//!
//! The `.knl` sources live in `crates/core/kernels/`. Each keeps the
//! published problem sizes; where a kernel body is not fully determined by
//! its description the chosen shape is described in the file header.

use std::collections::BTreeMap;

use crate::error::KernelError;
use crate::ir::Kernel;
use crate::parser::parse_kernel_named;

pub const SOURCES: [(&str, &str); 7] = [
    ("bic", include_str!("../kernels/bic.knl")),
    ("decfir", include_str!("../kernels/decfir.knl")),
    ("example", include_str!("../kernels/example.knl")),
    ("fir", include_str!("../kernels/fir.knl")),
    ("imi", include_str!("../kernels/imi.knl")),
    ("mat", include_str!("../kernels/mat.knl")),
    ("pat", include_str!("../kernels/pat.knl")),
];

pub fn bundled_source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled(name: &str) -> Result<Kernel, KernelError> {
    let src = bundled_source(name).ok_or_else(|| KernelError::UnknownKernel(name.to_string()))?;
    parse_kernel_named(src, name)
}

/// All bundled kernels keyed by name.
pub fn bundled_kernels() -> BTreeMap<String, Kernel> {
    SOURCES
        .iter()
        .map(|(n, src)| {
            let k = parse_kernel_named(src, n).expect("bundled kernel must parse");
            (n.to_string(), k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_parse_with_expected_shape() {
        let ks = bundled_kernels();
        assert_eq!(ks.len(), 7);
        let depth: BTreeMap<_, _> = ks.iter().map(|(n, k)| (n.as_str(), k.depth())).collect();
        assert_eq!(depth["mat"], 3);
        assert_eq!(depth["bic"], 4);
        assert_eq!(depth["example"], 3);
        for n in ["fir", "decfir", "imi", "pat"] {
            assert_eq!(depth[n], 2, "{n}");
        }
        for (n, k) in &ks {
            assert_eq!(&k.name, n);
            assert_eq!(k.arrays.len(), if n == "example" { 5 } else { 3 }, "{n}");
        }
    }

    #[test]
    fn example_is_the_two_statement_nest() {
        let k = bundled("example").unwrap();
        assert_eq!(k.iteration_space_size(0).unwrap(), 60000);
        assert_eq!(k.iteration_space_size(1).unwrap(), 600);
        assert_eq!(k.iteration_space_size(3).unwrap(), 1);
        assert!(k.iteration_space_size(4).is_err());
        assert_eq!(k.fmt_ref(k.statements[0].write), "d[i][k]");
    }

    #[test]
    fn decfir_reads_a_decimated_stream() {
        let k = bundled("decfir").unwrap();
        assert_eq!(k.loops[0].upper, 385);
        let input = k.refs.iter().find(|r| k.array_name(r.array) == "in").unwrap();
        assert_eq!(input.subscripts[0].coeff(0), 2);
        assert_eq!(input.subscripts[0].coeff(1), 2);
    }

    #[test]
    fn unknown_name() {
        assert_eq!(bundled("nope").unwrap_err(), KernelError::UnknownKernel("nope".into()));
    }
}
