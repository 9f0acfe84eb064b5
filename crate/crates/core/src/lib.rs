//! Projective families of probability distributions over relational
//! structures: exact semantics for probabilistic logic programs, Markov
//! logic networks, and relational Bayesian networks; a piecewise-constant
//! exchangeable-array representation with domain-size-independent marginal
//! inference; combinators on families; infinite-domain sampling; and
//! small-domain conformance checks for exchangeability and projectivity.

pub mod ahk;
pub mod check;
pub mod corpus;
pub mod error;
pub mod family;
pub mod infinite;
pub mod logic;
pub mod mln;
pub mod num;
pub mod plp;
pub mod rbn;

pub use ahk::{sbm_mixture_model, sbm_model, sbm_struct_model, AhkModel, WorldSampler};
pub use check::{
    canonical_extension, check_arity_invariance, check_exchangeable, check_projective,
    check_projective_via_types, check_sigma_projective, PropertyReport, Verdict, Witness,
};
pub use error::{Error, Result};
pub use infinite::{StreamModel, StreamState};
pub use family::{canonical_name, Family, WorldDistribution, DEFAULT_MAX_DOMAIN};
pub use logic::{
    enumerate_extensions, parse_db, parse_formula, parse_query, Datum, ElementMap, QFFormula,
    Structure, Term, TupleType, Vocabulary,
};
pub use num::Num;
