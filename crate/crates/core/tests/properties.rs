//! Cross-module invariants: combinator laws, representation agreement,
//! lifted-vs-grounded equality, and stream consistency, checked both on the
//! corpus and on randomized inputs.

use projfam::corpus;
use projfam::infinite::{StreamModel, StreamState};
use projfam::logic::{enumerate_extensions, parse_query, Structure, TupleType, Vocabulary};
use projfam::plp::semantics;
use projfam::{check_projective, sbm_model, Family, Num};
use proptest::prelude::*;

fn bare(n: usize) -> Structure {
    let domain = (0..n).map(|i| format!("e{}", i + 1)).collect();
    Structure::new(Vocabulary::new(), domain).unwrap()
}

#[test]
fn free_completion_of_the_structured_block_model_is_the_even_block_model() {
    // composing with the uniform community assignment recovers the
    // unstructured model with community probability 1/2
    let structured = Family::from_plp(&corpus::struct_sbm_plp()).unwrap();
    let completed = structured.free_completion().unwrap();
    let [_, p00, p01, p10, p11] = corpus::sbm_params();
    let even = corpus::sbm_plp_with(&[Num::ratio(1, 2), p00, p01, p10, p11]);
    for n in 1..=3 {
        let base = bare(n);
        let lhs = completed.at(&base).unwrap();
        let rhs = semantics(&even, &base).unwrap();
        assert_eq!(lhs.table(), rhs.table(), "size {n}");
    }
}

#[test]
fn conditioning_on_the_extensional_vocabulary_is_the_identity() {
    let fam = Family::from_plp(&corpus::sbm_plp()).unwrap();
    let conditioned = fam.condition_on(fam.ext_vocab()).unwrap();
    for n in 1..=3 {
        let base = bare(n);
        assert_eq!(fam.at(&base).unwrap().table(), conditioned.at(&base).unwrap().table());
    }
}

#[test]
fn restriction_of_a_projective_family_stays_projective() {
    let fam = Family::from_plp(&corpus::sbm_plp()).unwrap();
    let mut mid = Vocabulary::new();
    mid.add_relation("c1", 1).unwrap();
    let restricted = fam.restrict(&mid).unwrap();
    assert!(check_projective(&restricted, 3).unwrap().holds_up_to());
}

#[test]
fn composition_preserves_projectivity_and_matches_free_completion() {
    let structured = Family::from_plp(&corpus::struct_sbm_plp()).unwrap();
    let communities = Family::free(structured.ext_vocab().clone()).unwrap();
    let composed = Family::compose(&communities, &structured).unwrap();
    assert!(check_projective(&composed, 3).unwrap().holds_up_to());
    let completed = structured.free_completion().unwrap();
    for n in 1..=3 {
        let base = bare(n);
        assert_eq!(composed.at(&base).unwrap().table(), completed.at(&base).unwrap().table());
    }
}

#[test]
fn lifted_inference_agrees_with_grounded_tables() {
    let p = corpus::sbm_plp();
    let q = parse_query("edge(e1,e2), c1(e1)").unwrap();
    for n in 2..=4 {
        let base = bare(n);
        let grounded = projfam::plp::marginal(&p, &base, &q).unwrap();
        let lifted = projfam::plp::lifted_marginal(&p, &base, &q).unwrap();
        assert_eq!(grounded, lifted, "size {n}");
    }
    let mln = corpus::t3();
    let t = TupleType::enumerate_distinct(&Vocabulary::new(), 1).unwrap().pop().unwrap();
    let lifted = mln.lifted_marginal(&t, &parse_query("r(X1)").unwrap()).unwrap();
    for n in 1..=3 {
        let grounded =
            mln.semantics(&bare(n)).unwrap().marginal(&parse_query("r(e1)").unwrap()).unwrap();
        assert_eq!(grounded, lifted, "size {n}");
    }
}

#[test]
fn type_marginals_agree_with_tables_on_every_base() {
    let model = corpus::struct_sbm_ahk();
    let ext = model.ext_vocab().clone();
    let shell =
        Structure::new(Vocabulary::new(), vec!["u".into(), "v".into(), "w".into()]).unwrap();
    let q = parse_query("edge(X1,X2)").unwrap();
    for base in enumerate_extensions(&shell, &ext, 6).unwrap() {
        let dist = model.induced_distribution(&base).unwrap();
        for (a, b) in [("u", "v"), ("v", "w"), ("w", "u"), ("v", "u")] {
            let t = TupleType::of(&base, &[a.to_string(), b.to_string()], &ext).unwrap();
            let by_type = model.marginal_query(&t, &q).unwrap();
            let ground = parse_query(&format!("edge({a},{b})")).unwrap();
            assert_eq!(dist.marginal(&ground).unwrap(), by_type);
        }
    }
}

#[test]
fn stream_prefix_marginals_equal_the_finite_family() {
    let model = corpus::sbm_ahk();
    let fam = Family::from_ahk(&model).unwrap();
    let mut s = StreamState::with_model(StreamModel::Ahk(model), 17).unwrap();
    s.extend(3).unwrap();
    let finite = fam.at(&bare(3)).unwrap();
    for q in ["edge(e1,e2)", "edge(e2,e1)", "c1(e2)", "edge(e1,e3), c1(e1)"] {
        let query = parse_query(q).unwrap();
        assert_eq!(s.prefix_marginal(&query).unwrap(), finite.marginal(&query).unwrap(), "{q}");
    }
    // exchangeability on the revealed prefix: position never matters
    let ab = s.prefix_marginal(&parse_query("edge(e1,e2)").unwrap()).unwrap();
    let ca = s.prefix_marginal(&parse_query("edge(e3,e1)").unwrap()).unwrap();
    assert_eq!(ab, ca);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_block_models_are_equivariant_with_exact_edge_marginals(
        pn in 0i64..=4, a in 0i64..=4, b in 0i64..=4, c in 0i64..=4, d in 0i64..=4,
    ) {
        let params = [
            Num::ratio(pn, 4),
            Num::ratio(a, 4),
            Num::ratio(b, 4),
            Num::ratio(c, 4),
            Num::ratio(d, 4),
        ];
        let model = sbm_model(&params[0], &params[1], &params[2], &params[3], &params[4]).unwrap();
        prop_assert!(model.check_equivariance().unwrap().holds_up_to());
        let t = TupleType::enumerate_distinct(&Vocabulary::new(), 2).unwrap().pop().unwrap();
        let got = model.marginal_query(&t, &parse_query("edge(X1,X2)").unwrap()).unwrap();
        let linked = |x: &Num, y: &Num| x.clone() + y - x.clone() * y;
        let p = Num::ratio(pn, 4);
        let q = Num::one() - p.clone();
        let expected = p.clone() * p.clone() * linked(&params[4], &params[4])
            + p.clone() * q.clone() * linked(&params[3], &params[2])
            + q.clone() * p * linked(&params[2], &params[3])
            + q.clone() * q * linked(&params[1], &params[1]);
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn stream_truncation_is_structural(seed in any::<u64>()) {
        let mut long = StreamState::with_model(StreamModel::Ahk(corpus::sbm_ahk()), seed).unwrap();
        let mut short = StreamState::with_model(StreamModel::Ahk(corpus::sbm_ahk()), seed).unwrap();
        long.extend(5).unwrap();
        short.extend(3).unwrap();
        let long_world = long.reveal_world().unwrap();
        let short_world = short.reveal_world().unwrap();
        prop_assert!(long_world.extends(&short_world).unwrap());
    }

    #[test]
    fn generic_streams_truncate_deterministically(seed in any::<u64>()) {
        let ext = Vocabulary::with_relations(&[("E", 2), ("P", 1)]);
        let mut a = StreamState::generic_sampler(ext.clone(), seed).unwrap();
        let mut b = StreamState::generic_sampler(ext, seed).unwrap();
        a.extend(2).unwrap();
        b.extend(4).unwrap();
        let small = a.reveal_world().unwrap();
        let big = b.reveal_world().unwrap();
        prop_assert!(big.extends(&small).unwrap());
    }
}
