//! Brute-force conformance checks: exchangeability, projectivity,
//! type-determined marginals, σ-projectivity, and arity invariance, all
//! certified on small domains by exhaustive enumeration.

use crate::error::{Error, Result};
use crate::family::{Family, WorldDistribution};
use crate::logic::{enumerate_extensions, ElementMap, Structure, TupleType, Vocabulary};
use crate::num::{Num, FLOAT_TOL};
use itertools::Itertools;
use serde::Serialize;
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Two disjoint element-name pools; checking across both catches providers
/// that hard-code element names.
const POOL_A: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
const POOL_B: [&str; 6] = ["u", "v", "w", "x", "y", "z"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Holds => write!(f, "holds"),
            Verdict::Violated => write!(f, "violated"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// A replayable counterexample: the two base structures, the embedding
/// between them, the query that separated them, and both probabilities.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub source: String,
    pub target: String,
    pub embedding: BTreeMap<String, String>,
    pub query: String,
    pub p_small: String,
    pub p_large: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub verdict: Verdict,
    pub checked_up_to: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl PropertyReport {
    fn holds(property: &str, max_size: usize) -> Self {
        PropertyReport {
            property: property.to_string(),
            verdict: Verdict::Holds,
            checked_up_to: max_size,
            witness: None,
            note: None,
        }
    }

    pub fn holds_up_to(&self) -> bool {
        self.verdict == Verdict::Holds
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} (domains up to size {})", self.property, self.verdict, self.checked_up_to)?;
        if let Some(w) = &self.witness {
            write!(
                f,
                "\n  source: {}\n  target: {}\n  map: {:?}\n  query: {}\n  p_small = {}, p_large = {}",
                w.source, w.target, w.embedding, w.query, w.p_small, w.p_large
            )?;
        }
        Ok(())
    }
}

fn witness(
    source: &Structure,
    target: &Structure,
    map: &ElementMap,
    query: &str,
    p_small: &Num,
    p_large: &Num,
) -> Witness {
    Witness {
        source: source.to_db_text().trim_end().replace('\n', " "),
        target: target.to_db_text().trim_end().replace('\n', " "),
        embedding: map.pairs().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        query: query.to_string(),
        p_small: p_small.to_string(),
        p_large: p_large.to_string(),
    }
}

/// Caches provider results per base; `None` records a base outside the
/// family's support (regularity failure) when those are tolerated.
struct DistCache<'a> {
    fam: &'a Family,
    skip_out_of_support: bool,
    cache: RefCell<BTreeMap<Structure, Option<WorldDistribution>>>,
}

impl<'a> DistCache<'a> {
    fn new(fam: &'a Family, skip_out_of_support: bool) -> Self {
        DistCache { fam, skip_out_of_support, cache: RefCell::new(BTreeMap::new()) }
    }

    fn at(&self, base: &Structure) -> Result<Option<WorldDistribution>> {
        if let Some(d) = self.cache.borrow().get(base) {
            return Ok(d.clone());
        }
        let d = match self.fam.at(base) {
            Ok(d) => Some(d),
            Err(Error::Regularity(_)) if self.skip_out_of_support => None,
            Err(e) => return Err(e),
        };
        self.cache.borrow_mut().insert(base.clone(), d.clone());
        Ok(d)
    }
}

fn pool(names: &[&str], n: usize) -> Vec<String> {
    names[..n].iter().map(|s| s.to_string()).collect()
}

/// All base structures over `vocab` on the given elements, covering every
/// constant interpretation.
fn enumerate_bases(vocab: &Vocabulary, names: &[String]) -> Result<Vec<Structure>> {
    let consts: Vec<String> = vocab.constants().map(str::to_string).collect();
    let mut const_vocab = Vocabulary::new();
    for c in &consts {
        const_vocab.add_constant(c)?;
    }
    let mut seeds = Vec::new();
    for assignment in (0..consts.len()).map(|_| names.iter()).multi_cartesian_product() {
        let mut s = Structure::new(const_vocab.clone(), names.to_vec())?;
        for (c, e) in consts.iter().zip(assignment) {
            s.set_constant(c, e)?;
        }
        seeds.push(s);
    }
    if seeds.is_empty() {
        seeds.push(Structure::new(const_vocab, names.to_vec())?);
    }
    let mut out = Vec::new();
    for seed in seeds {
        out.extend(enumerate_extensions(&seed, vocab, names.len())?);
    }
    Ok(out)
}

fn rename_map(from: &[String], to: &[String]) -> Result<ElementMap> {
    ElementMap::new(from.iter().cloned().zip(to.iter().cloned()))
}

/// Pull the large distribution back through the embedding: the induced
/// distribution over worlds on the small base.
fn pullback(
    dist_large: &WorldDistribution,
    iota: &ElementMap,
    small_base: &Structure,
) -> Result<BTreeMap<Structure, Num>> {
    let image: BTreeSet<String> =
        small_base.domain().iter().map(|e| iota.apply(e).map(str::to_string)).collect::<Result<_>>()?;
    let inv = iota.inverse();
    let mut acc: BTreeMap<Structure, Num> = BTreeMap::new();
    for (w, p) in dist_large.table() {
        let sub = w.generated_substructure(&image)?;
        let small = inv.apply_structure(&sub)?.with_domain_order(small_base.domain())?;
        let slot = acc.entry(small).or_insert_with(Num::zero);
        *slot = slot.clone() + p;
    }
    Ok(acc)
}

fn first_table_mismatch(
    small: &BTreeMap<Structure, Num>,
    pulled: &BTreeMap<Structure, Num>,
) -> Option<(Structure, Num, Num)> {
    for w in small.keys().chain(pulled.keys()) {
        let p = small.get(w).cloned().unwrap_or_else(Num::zero);
        let q = pulled.get(w).cloned().unwrap_or_else(Num::zero);
        if !p.approx_eq(&q, FLOAT_TOL) {
            return Some((w.clone(), p, q));
        }
    }
    None
}

fn run_embedding_check(
    fam: &Family,
    max_size: usize,
    property: &str,
    isos_only: bool,
    skip_out_of_support: bool,
) -> Result<PropertyReport> {
    let cache = DistCache::new(fam, skip_out_of_support);
    // ordered by (larger size, smaller size): minimal witnesses first
    let mut size_pairs: Vec<(usize, usize)> = Vec::new();
    for large in 1..=max_size {
        for small in 1..=large {
            if !isos_only || small == large {
                size_pairs.push((small, large));
            }
        }
    }
    size_pairs.sort_by_key(|&(s, l)| (l, s));

    for (n_small, n_large) in size_pairs {
        // Targets live in a disjoint name pool so element-name hard-coding in
        // the provider cannot slip through. Every embedding of an n_small-base
        // into a large base arises exactly once as an ordered selection of
        // image elements: the source is the renamed induced substructure.
        let small_names = pool(&POOL_A, n_small);
        let larges = enumerate_bases(fam.ext_vocab(), &pool(&POOL_B, n_large))?;
        for large in &larges {
            let Some(dist_large) = cache.at(large)? else { continue };
            for image in large.domain().iter().cloned().permutations(n_small) {
                let iota = ElementMap::new(small_names.iter().cloned().zip(image.iter().cloned()))?;
                let picked: BTreeSet<String> = image.iter().cloned().collect();
                let small = iota
                    .inverse()
                    .apply_structure(&large.generated_substructure(&picked)?)?
                    .with_domain_order(&small_names)?;
                let Some(dist_small) = cache.at(&small)? else { continue };
                let pulled = pullback(&dist_large, &iota, &small)?;
                if let Some((w, p, q)) = first_table_mismatch(dist_small.table(), &pulled) {
                    return Ok(PropertyReport {
                        property: property.to_string(),
                        verdict: Verdict::Violated,
                        checked_up_to: max_size,
                        witness: Some(witness(&small, large, &iota, &w.to_string(), &p, &q)),
                        note: None,
                    });
                }
            }
        }
    }
    Ok(PropertyReport::holds(property, max_size))
}

/// Invariance under isomorphisms: the distribution at an isomorphic copy of
/// the base is the pushforward of the distribution at the base.
pub fn check_exchangeable(fam: &Family, max_size: usize) -> Result<PropertyReport> {
    run_embedding_check(fam, max_size, "exchangeable", true, false)
}

/// Invariance under embeddings: marginals over an embedded substructure do
/// not depend on the ambient domain.
pub fn check_projective(fam: &Family, max_size: usize) -> Result<PropertyReport> {
    run_embedding_check(fam, max_size, "projective", false, false)
}

/// Equivalent characterization of projectivity: the distribution of the
/// intensional type of any tuple depends only on the tuple's extensional
/// type.
pub fn check_projective_via_types(fam: &Family, max_size: usize) -> Result<PropertyReport> {
    let property = "projective-via-types";
    let cache = DistCache::new(fam, false);
    // (ext type, tuple length) -> (int-type distribution, provenance)
    let mut seen: BTreeMap<TupleType, (BTreeMap<TupleType, Num>, Structure, Vec<String>)> =
        BTreeMap::new();
    for (pool_names, n) in [&POOL_A, &POOL_B]
        .into_iter()
        .cartesian_product(1..=max_size)
        .map(|(p, n)| (pool(p, n), n))
    {
        for base in enumerate_bases(fam.ext_vocab(), &pool_names)? {
            let Some(dist) = cache.at(&base)? else { continue };
            for k in 1..=n.min(3) {
                for tuple in (0..k).map(|_| base.domain().iter().cloned()).multi_cartesian_product() {
                    let ext_type = TupleType::of(&base, &tuple, fam.ext_vocab())?;
                    let mut int_dist: BTreeMap<TupleType, Num> = BTreeMap::new();
                    for (w, p) in dist.table() {
                        let t = TupleType::of(w, &tuple, fam.int_vocab())?;
                        let slot = int_dist.entry(t).or_insert_with(Num::zero);
                        *slot = slot.clone() + p;
                    }
                    match seen.get(&ext_type) {
                        None => {
                            seen.insert(ext_type, (int_dist, base.clone(), tuple.clone()));
                        }
                        Some((prev, prev_base, prev_tuple)) => {
                            for t in prev.keys().chain(int_dist.keys()) {
                                let p = prev.get(t).cloned().unwrap_or_else(Num::zero);
                                let q = int_dist.get(t).cloned().unwrap_or_else(Num::zero);
                                if !p.approx_eq(&q, FLOAT_TOL) {
                                    let map = rename_map(prev_tuple, &tuple)
                                        .unwrap_or_else(|_| ElementMap::identity(prev_tuple));
                                    return Ok(PropertyReport {
                                        property: property.to_string(),
                                        verdict: Verdict::Violated,
                                        checked_up_to: max_size,
                                        witness: Some(witness(
                                            prev_base,
                                            &base,
                                            &map,
                                            &format!("P[type of tuple = {t}]"),
                                            &p,
                                            &q,
                                        )),
                                        note: None,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(PropertyReport::holds(property, max_size))
}

/// Projectivity of every conditional family obtained by treating an
/// intermediate vocabulary as observed. Bases outside the family's support
/// are skipped (conditioning there is undefined).
pub fn check_sigma_projective(fam: &Family, max_size: usize) -> Result<PropertyReport> {
    for vocab in Vocabulary::subvocabs_between(fam.ext_vocab(), fam.int_vocab()) {
        let conditioned = fam.condition_on(&vocab)?;
        let mut report =
            run_embedding_check(&conditioned, max_size, "sigma-projective", false, true)?;
        if report.verdict == Verdict::Violated {
            let names: Vec<String> = vocab.relations().map(|(n, _)| n.to_string()).collect();
            report.note = Some(format!("conditioning on observed vocabulary {{{}}}", names.join(", ")));
            return Ok(report);
        }
    }
    Ok(PropertyReport::holds("sigma-projective", max_size))
}

/// For a projective family: marginals of queries mentioning only relations
/// of arity ≤ m are unaffected by extensional facts of arity > m.
pub fn check_arity_invariance(fam: &Family, m: usize, max_size: usize) -> Result<PropertyReport> {
    let property = "arity-invariance";
    let pre = check_projective(fam, max_size)?;
    if pre.verdict != Verdict::Holds {
        return Ok(PropertyReport {
            property: property.to_string(),
            verdict: Verdict::Inconclusive,
            checked_up_to: max_size,
            witness: pre.witness,
            note: Some("family is not projective; the invariance hypothesis is unmet".into()),
        });
    }
    let mut low = Vocabulary::new();
    for (name, a) in fam.int_vocab().relations() {
        if a <= m {
            low.add_relation(name, a)?;
        }
    }
    for c in fam.int_vocab().constants() {
        low.add_constant(c)?;
    }
    let mut low_ext = Vocabulary::new();
    for (name, a) in fam.ext_vocab().relations() {
        if a <= m {
            low_ext.add_relation(name, a)?;
        }
    }
    let cache = DistCache::new(fam, false);
    // worlds projected to the arity-≤m relations; the base's higher-arity
    // part is dropped too, so tables from different bases are comparable
    let low_table = |base: &Structure| -> Result<BTreeMap<Structure, Num>> {
        let mut table: BTreeMap<Structure, Num> = BTreeMap::new();
        for (w, p) in cache.at(base)?.unwrap().table() {
            let slot = table.entry(w.reduct(&low)?).or_insert_with(Num::zero);
            *slot = slot.clone() + p;
        }
        Ok(table)
    };
    for n in 1..=max_size {
        let bases = enumerate_bases(fam.ext_vocab(), &pool(&POOL_A, n))?;
        // group by the arity-≤m part of the base
        let mut groups: BTreeMap<Structure, Vec<&Structure>> = BTreeMap::new();
        for b in &bases {
            groups.entry(b.reduct(&low_ext)?).or_default().push(b);
        }
        for members in groups.values() {
            let first = members[0];
            let d0 = low_table(first)?;
            for other in &members[1..] {
                let d1 = low_table(other)?;
                for w in d0.keys().chain(d1.keys()) {
                    let p = d0.get(w).cloned().unwrap_or_else(Num::zero);
                    let q = d1.get(w).cloned().unwrap_or_else(Num::zero);
                    if !p.approx_eq(&q, FLOAT_TOL) {
                        return Ok(PropertyReport {
                            property: property.to_string(),
                            verdict: Verdict::Violated,
                            checked_up_to: max_size,
                            witness: Some(witness(
                                first,
                                other,
                                &ElementMap::identity(first.domain()),
                                &w.to_string(),
                                &p,
                                &q,
                            )),
                            note: None,
                        });
                    }
                }
            }
        }
    }
    Ok(PropertyReport::holds(property, max_size))
}

/// Extend an exchangeable family given on canonical domains to arbitrary
/// finite domains; errors if exchangeability fails up to `max_size`.
pub fn canonical_extension(fam: &Family, max_size: usize) -> Result<Family> {
    let report = check_exchangeable(fam, max_size)?;
    if !report.holds_up_to() {
        return Err(Error::Exchangeability(report.to_string()));
    }
    fam.canonical_extension()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Family;

    fn uniform_unary() -> Family {
        let int = Vocabulary::with_relations(&[("p", 1)]);
        Family::from_weights(Vocabulary::new(), int, |base, _| {
            Ok(Num::ratio(1, 1 << base.domain().len()))
        })
        .unwrap()
    }

    fn name_biased() -> Family {
        // hard-codes the element name "a": P(p(a)) = 1, others fair coins
        let int = Vocabulary::with_relations(&[("p", 1)]);
        Family::from_weights(Vocabulary::new(), int, |base, w| {
            if !w.holds("p", &["a".to_string()]).unwrap_or(true) && base.has_element("a") {
                return Ok(Num::zero());
            }
            let free = base.domain().len() - usize::from(base.has_element("a"));
            Ok(Num::ratio(1, 1 << free))
        })
        .unwrap()
    }

    #[test]
    fn uniform_family_is_projective() {
        let fam = uniform_unary();
        assert!(check_exchangeable(&fam, 3).unwrap().holds_up_to());
        assert!(check_projective(&fam, 3).unwrap().holds_up_to());
        assert!(check_projective_via_types(&fam, 3).unwrap().holds_up_to());
        assert!(check_sigma_projective(&fam, 3).unwrap().holds_up_to());
    }

    #[test]
    fn name_hardcoding_is_caught() {
        let fam = name_biased();
        let report = check_exchangeable(&fam, 2).unwrap();
        assert_eq!(report.verdict, Verdict::Violated);
        assert!(report.witness.is_some());
    }

    #[test]
    fn type_checker_agrees_with_embedding_checker() {
        for fam in [uniform_unary(), name_biased()] {
            let a = check_projective(&fam, 2).unwrap().holds_up_to();
            let b = check_projective_via_types(&fam, 2).unwrap().holds_up_to();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn canonical_extension_rejects_nonexchangeable() {
        assert!(matches!(
            canonical_extension(&name_biased(), 2),
            Err(Error::Exchangeability(_))
        ));
    }
}
