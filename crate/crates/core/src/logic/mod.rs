//! Finite relational logic: structures, quantifier-free formulas, types.

pub mod formula;
pub mod lex;
pub mod structure;
pub mod types;

pub use formula::{parse_formula, parse_query, QFFormula, Term};
pub use structure::{enumerate_extensions, parse_db, ElementMap, Structure, Vocabulary};
pub use types::{Datum, TupleType};
