//! Shared fixtures for the inference benchmarks.

use projfam::logic::{parse_query, QFFormula, Structure};
use projfam::plp::Program;

pub fn sbm() -> Program {
    projfam::corpus::sbm_plp()
}

pub fn edge_query() -> QFFormula {
    parse_query("edge(e1,e2)").unwrap()
}

pub fn bare(program: &Program, n: usize) -> Structure {
    let domain: Vec<String> = (0..n).map(projfam::canonical_name).collect();
    Structure::new(program.ext_vocab().clone(), domain).unwrap()
}
