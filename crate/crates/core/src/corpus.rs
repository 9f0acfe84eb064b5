//! Worked models used across the test suite, the benchmarks, and the
//! bundled examples: two small logic programs, block models in program and
//! uniform-function form, two Markov networks, and two relational Bayesian
//! networks.

use crate::ahk::{sbm_mixture_model, sbm_model, sbm_struct_model, AhkModel};
use crate::error::Result;
use crate::family::Family;
use crate::mln::{parse_mln, Mln};
use crate::num::Num;
use crate::plp::{parse_program, Program};
use crate::rbn::{CombOp, ProbFormula, Rbn, RelDef};
use std::collections::BTreeMap;

/// Two independent coins per pair and per node; r needs both.
pub fn pi1() -> Program {
    parse_program("0.5 :: u(X,Y).\n0.5 :: s(X).\nr(X,Y) :- s(X), s(Y), u(X,Y).\n").unwrap()
}

/// Non-determinate: the body variable Y is projected away.
pub fn pi2() -> Program {
    parse_program("0.5 :: u(X,Y).\n0.5 :: r(X,Y).\ns(X) :- r(X,Y), u(X,Y).\n").unwrap()
}

/// Block-model community probability and the four per-direction link
/// probabilities used throughout the examples. Edges are symmetrized, so an
/// unordered pair with communities (a, b) is linked with probability
/// 1 - (1 - p_ab)(1 - p_ba).
pub fn sbm_params() -> [Num; 5] {
    [Num::ratio(1, 4), Num::ratio(1, 4), Num::ratio(1, 2), Num::ratio(3, 4), Num::one()]
}

/// Second parameter set for the two-component mixture.
pub fn sbm_alt_params() -> [Num; 5] {
    [Num::ratio(3, 4), Num::ratio(1, 2), Num::ratio(1, 4), Num::ratio(1, 2), Num::ratio(3, 4)]
}

pub fn sbm_plp_with(params: &[Num; 5]) -> Program {
    let [p, p00, p01, p10, p11] = params;
    let text = format!(
        "{p} :: c1(X).\n\
         c0(X) :- \\+c1(X).\n\
         {p00} :: edge(X,Y) :- c0(X), c0(Y), X != Y.\n\
         {p01} :: edge(X,Y) :- c0(X), c1(Y), X != Y.\n\
         {p10} :: edge(X,Y) :- c1(X), c0(Y), X != Y.\n\
         {p11} :: edge(X,Y) :- c1(X), c1(Y), X != Y.\n\
         edge(X,Y) :- edge(Y,X).\n"
    );
    parse_program(&text).unwrap()
}

/// The block model as a determinate program over an empty extensional
/// vocabulary.
pub fn sbm_plp() -> Program {
    sbm_plp_with(&sbm_params())
}

/// The block model with community membership supplied as extensional data.
pub fn struct_sbm_plp() -> Program {
    let [_, p00, p01, p10, p11] = sbm_params();
    let text = format!(
        "c0(X) :- \\+c1(X).\n\
         {p00} :: edge(X,Y) :- c0(X), c0(Y), X != Y.\n\
         {p01} :: edge(X,Y) :- c0(X), c1(Y), X != Y.\n\
         {p10} :: edge(X,Y) :- c1(X), c0(Y), X != Y.\n\
         {p11} :: edge(X,Y) :- c1(X), c1(Y), X != Y.\n\
         edge(X,Y) :- edge(Y,X).\n"
    );
    parse_program(&text).unwrap()
}

/// Assortative block model whose conditional family over {edge} is no
/// longer projective: observed edges leak community information between
/// otherwise independent nodes.
pub fn sigma_sbm_plp() -> Program {
    sbm_plp_with(&[
        Num::ratio(1, 2),
        Num::ratio(1, 10),
        Num::ratio(1, 10),
        Num::ratio(9, 10),
        Num::ratio(9, 10),
    ])
}

pub fn sbm_ahk() -> AhkModel {
    let [p, p00, p01, p10, p11] = sbm_params();
    sbm_model(&p, &p00, &p01, &p10, &p11).unwrap()
}

pub fn struct_sbm_ahk() -> AhkModel {
    let [_, p00, p01, p10, p11] = sbm_params();
    sbm_struct_model(&p00, &p01, &p10, &p11).unwrap()
}

/// Equal-weight mixture of two block models, mixed by the global uniform.
pub fn mixture_ahk() -> AhkModel {
    sbm_mixture_model(&Num::ratio(1, 2), &sbm_params(), &sbm_alt_params()).unwrap()
}

/// One σ-determinate formula; weight ln 2 keeps the semantics rational.
pub fn t1() -> Mln {
    parse_mln("ln(2)\tr(X) & q(X)").unwrap()
}

/// Atoms with different variable sets: exchangeable but not projective.
pub fn t2() -> Mln {
    parse_mln("1.0\tr(X) & q(Y)").unwrap()
}

/// Two σ-determinate formulas, one unary block and one pair block.
pub fn t3() -> Mln {
    parse_mln("ln(2)\tr(X) & q(X)\nln(3)\te(X,Y) & e(Y,X)").unwrap()
}

/// Comb-free network: r mixes on the node's own attribute s.
pub fn b1() -> Rbn {
    Rbn {
        ext: BTreeMap::new(),
        relations: vec![
            RelDef { name: "s".into(), arity: 1, formula: ProbFormula::constant(Num::ratio(1, 2)) },
            RelDef {
                name: "r".into(),
                arity: 1,
                formula: ProbFormula::mix(
                    ProbFormula::atom("s", &["x1"]),
                    ProbFormula::constant(Num::ratio(7, 10)),
                    ProbFormula::constant(Num::ratio(1, 5)),
                ),
            },
        ],
    }
}

/// Mean combiner over the whole domain: same one-point marginal as an
/// independent coin, but correlated across elements, hence not projective.
pub fn b2() -> Rbn {
    Rbn {
        ext: BTreeMap::new(),
        relations: vec![
            RelDef { name: "s".into(), arity: 1, formula: ProbFormula::constant(Num::ratio(1, 2)) },
            RelDef {
                name: "r".into(),
                arity: 1,
                formula: ProbFormula::Comb {
                    op: CombOp::ArithmeticMean,
                    formulas: vec![ProbFormula::atom("s", &["y"])],
                    bound: vec!["y".into()],
                },
            },
        ],
    }
}

/// Unary intensional attribute over a binary extensional graph the
/// attribute never reads: the witness that high-arity extensional data
/// cannot influence low-arity marginals of a projective family.
pub fn attribute_over_graph() -> Program {
    parse_program("ext e/2.\n3/4 :: r(X) :- c1(X).\n1/4 :: r(X) :- \\+c1(X).\n").unwrap()
}

/// Every corpus model as a family, for oracle-equivalence sweeps.
pub fn all_families() -> Result<Vec<(&'static str, Family)>> {
    Ok(vec![
        ("pi1", Family::from_plp(&pi1())?),
        ("pi2", Family::from_plp(&pi2())?),
        ("sbm-plp", Family::from_plp(&sbm_plp())?),
        ("struct-sbm-plp", Family::from_plp(&struct_sbm_plp())?),
        ("t1", Family::from_mln(&t1())?),
        ("t2", Family::from_mln(&t2())?),
        ("t3", Family::from_mln(&t3())?),
        ("b1", Family::from_rbn(&b1())?),
        ("b2", Family::from_rbn(&b2())?),
        ("sbm-ahk", Family::from_ahk(&sbm_ahk())?),
        ("struct-sbm-ahk", Family::from_ahk(&struct_sbm_ahk())?),
        ("mixture-ahk", Family::from_ahk(&mixture_ahk())?),
    ])
}

/// The corpus members in the projective fragments: determinate programs,
/// σ-determinate networks, comb-free networks, equivariant models.
pub fn projective_families() -> Result<Vec<(&'static str, Family)>> {
    Ok(vec![
        ("pi1", Family::from_plp(&pi1())?),
        ("sbm-plp", Family::from_plp(&sbm_plp())?),
        ("struct-sbm-plp", Family::from_plp(&struct_sbm_plp())?),
        ("t1", Family::from_mln(&t1())?),
        ("t3", Family::from_mln(&t3())?),
        ("b1", Family::from_rbn(&b1())?),
        ("sbm-ahk", Family::from_ahk(&sbm_ahk())?),
        ("struct-sbm-ahk", Family::from_ahk(&struct_sbm_ahk())?),
        ("mixture-ahk", Family::from_ahk(&mixture_ahk())?),
        ("attribute-over-graph", Family::from_plp(&attribute_over_graph())?),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_query, Structure, Vocabulary};
    use crate::plp::semantics;

    fn bare(n: usize) -> Structure {
        let domain = (0..n).map(|i| format!("e{}", i + 1)).collect();
        Structure::new(Vocabulary::new(), domain).unwrap()
    }

    #[test]
    fn plp_and_uniform_function_block_models_agree() {
        // same distribution from the program and the box representation
        let plp = semantics(&sbm_plp(), &bare(2)).unwrap();
        let ahk = sbm_ahk().induced_distribution(&bare(2)).unwrap();
        assert_eq!(plp.table(), ahk.table());
    }

    #[test]
    fn struct_block_models_agree_on_every_base() {
        let plp = struct_sbm_plp();
        let model = struct_sbm_ahk();
        let ext = model.ext_vocab().clone();
        let bare = Structure::new(ext.clone(), vec!["a".into(), "b".into()]).unwrap();
        for base in crate::logic::enumerate_extensions(&bare, &ext, 6).unwrap() {
            let d1 = semantics(&plp, &base).unwrap();
            let d2 = model.induced_distribution(&base).unwrap();
            assert_eq!(d1.table(), d2.table(), "base {base:?}");
        }
    }

    #[test]
    fn block_model_edge_marginal_is_domain_independent() {
        let q = parse_query("edge(e1,e2)").unwrap();
        for n in 2..=4 {
            let d = semantics(&sbm_plp(), &bare(n)).unwrap();
            assert_eq!(d.marginal(&q).unwrap(), Num::ratio(163, 256), "size {n}");
        }
    }

    #[test]
    fn attribute_program_has_unary_intensional_only() {
        let p = attribute_over_graph();
        assert!(p.check_determinate().is_ok());
        assert_eq!(p.ext_vocab().arity("e"), Some(2));
        assert_eq!(p.ext_vocab().arity("c1"), Some(1));
        assert_eq!(p.visible_vocab().relations_minus(p.ext_vocab()), vec![("r".into(), 1)]);
    }
}
