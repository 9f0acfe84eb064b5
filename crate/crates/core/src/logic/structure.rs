//! Vocabularies, finite relational structures, and element maps.

use crate::error::{Error, Result};
use crate::logic::lex::{lex, Cursor, Tok};
use itertools::Itertools;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

/// A relational vocabulary: relation symbols with arities, plus constants.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Vocabulary {
    relations: BTreeMap<String, usize>,
    constants: BTreeSet<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary { relations: BTreeMap::new(), constants: BTreeSet::new() }
    }

    pub fn with_relations(rels: &[(&str, usize)]) -> Self {
        let mut v = Vocabulary::new();
        for (name, arity) in rels {
            v.add_relation(name, *arity).unwrap();
        }
        v
    }

    pub fn add_relation(&mut self, name: &str, arity: usize) -> Result<()> {
        if arity == 0 {
            return Err(Error::Arity(format!("relation {name} must have arity >= 1")));
        }
        if self.constants.contains(name) {
            return Err(Error::VocabMismatch(format!("{name} is already a constant")));
        }
        if let Some(&a) = self.relations.get(name) {
            if a != arity {
                return Err(Error::Arity(format!("relation {name} declared with arities {a} and {arity}")));
            }
        }
        self.relations.insert(name.to_string(), arity);
        Ok(())
    }

    pub fn add_constant(&mut self, name: &str) -> Result<()> {
        if self.relations.contains_key(name) {
            return Err(Error::VocabMismatch(format!("{name} is already a relation")));
        }
        self.constants.insert(name.to_string());
        Ok(())
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, usize)> {
        self.relations.iter().map(|(n, a)| (n.as_str(), *a))
    }

    pub fn constants(&self) -> impl Iterator<Item = &str> {
        self.constants.iter().map(|s| s.as_str())
    }

    pub fn arity(&self, relation: &str) -> Option<usize> {
        self.relations.get(relation).copied()
    }

    pub fn has_constant(&self, name: &str) -> bool {
        self.constants.contains(name)
    }

    pub fn is_relational(&self) -> bool {
        self.constants.is_empty()
    }

    pub fn is_subvocab_of(&self, other: &Vocabulary) -> bool {
        self.relations.iter().all(|(n, a)| other.relations.get(n) == Some(a))
            && self.constants.is_subset(&other.constants)
    }

    /// Union of two vocabularies; errors on conflicting arities.
    pub fn union(&self, other: &Vocabulary) -> Result<Vocabulary> {
        let mut v = self.clone();
        for (n, a) in other.relations() {
            v.add_relation(n, a)?;
        }
        for c in other.constants() {
            v.add_constant(c)?;
        }
        Ok(v)
    }

    /// Relations of `self` that are not in `other` (constants ignored).
    pub fn relations_minus(&self, other: &Vocabulary) -> Vec<(String, usize)> {
        self.relations
            .iter()
            .filter(|(n, _)| other.arity(n).is_none())
            .map(|(n, a)| (n.clone(), *a))
            .collect()
    }

    pub fn max_arity(&self) -> usize {
        self.relations.values().copied().max().unwrap_or(0)
    }

    /// All sub-vocabularies between `lower` and `self` (inclusive), obtained
    /// by adding subsets of the extra relations. Constants always carry over.
    pub fn subvocabs_between(lower: &Vocabulary, upper: &Vocabulary) -> Vec<Vocabulary> {
        let extra = upper.relations_minus(lower);
        let mut out = Vec::new();
        for k in 0..=extra.len() {
            for subset in extra.iter().combinations(k) {
                let mut v = lower.clone();
                for (n, a) in subset {
                    v.add_relation(n, *a).unwrap();
                }
                out.push(v);
            }
        }
        out
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::new()
    }
}

/// A finite structure: an interpretation of a vocabulary over an ordered
/// domain. The domain order is part of the value (it is the canonical
/// "ascending" order used everywhere an ordering is needed).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Structure {
    vocab: Vocabulary,
    domain: Vec<String>,
    relations: BTreeMap<String, BTreeSet<Vec<String>>>,
    constants: BTreeMap<String, String>,
}

impl Structure {
    /// Bare structure: every relation empty, constants uninterpreted (must be
    /// set before use if vocab has constants).
    pub fn new(vocab: Vocabulary, domain: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &domain {
            if !seen.insert(e.clone()) {
                return Err(Error::Model(format!("duplicate domain element {e}")));
            }
        }
        let relations = vocab.relations().map(|(n, _)| (n.to_string(), BTreeSet::new())).collect();
        Ok(Structure { vocab, domain, relations, constants: BTreeMap::new() })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn domain(&self) -> &[String] {
        &self.domain
    }

    pub fn has_element(&self, e: &str) -> bool {
        self.domain.iter().any(|d| d == e)
    }

    pub fn element_index(&self, e: &str) -> Option<usize> {
        self.domain.iter().position(|d| d == e)
    }

    pub fn add_fact(&mut self, relation: &str, args: Vec<String>) -> Result<()> {
        let arity = self
            .vocab
            .arity(relation)
            .ok_or_else(|| Error::UnknownSymbol(relation.to_string()))?;
        if args.len() != arity {
            return Err(Error::Arity(format!("{relation} expects {arity} arguments")));
        }
        for a in &args {
            if !self.has_element(a) {
                return Err(Error::UnknownElement(a.clone()));
            }
        }
        self.relations.get_mut(relation).unwrap().insert(args);
        Ok(())
    }

    pub fn set_constant(&mut self, name: &str, element: &str) -> Result<()> {
        if !self.vocab.has_constant(name) {
            return Err(Error::UnknownSymbol(name.to_string()));
        }
        if !self.has_element(element) {
            return Err(Error::UnknownElement(element.to_string()));
        }
        self.constants.insert(name.to_string(), element.to_string());
        Ok(())
    }

    pub fn holds(&self, relation: &str, args: &[String]) -> Result<bool> {
        let set = self
            .relations
            .get(relation)
            .ok_or_else(|| Error::UnknownSymbol(relation.to_string()))?;
        Ok(set.contains(args))
    }

    pub fn facts(&self, relation: &str) -> impl Iterator<Item = &Vec<String>> {
        self.relations.get(relation).into_iter().flatten()
    }

    pub fn constant(&self, name: &str) -> Option<&str> {
        self.constants.get(name).map(|s| s.as_str())
    }

    /// Every constant of the vocabulary must be interpreted.
    pub fn validate(&self) -> Result<()> {
        for c in self.vocab.constants() {
            if !self.constants.contains_key(c) {
                return Err(Error::Model(format!("constant {c} is not interpreted")));
            }
        }
        Ok(())
    }

    /// Restriction to a sub-vocabulary: drop facts of relations outside it.
    pub fn reduct(&self, subvocab: &Vocabulary) -> Result<Structure> {
        if !subvocab.is_subvocab_of(&self.vocab) {
            return Err(Error::VocabMismatch("reduct vocabulary is not included".into()));
        }
        let mut s = Structure::new(subvocab.clone(), self.domain.clone())?;
        for (name, _) in subvocab.relations() {
            s.relations.insert(name.to_string(), self.relations[name].clone());
        }
        for c in subvocab.constants() {
            if let Some(e) = self.constant(c) {
                s.set_constant(c, e)?;
            }
        }
        Ok(s)
    }

    /// Expansion to a larger vocabulary with the new relations empty.
    pub fn expand_vocab(&self, vocab: &Vocabulary) -> Result<Structure> {
        if !self.vocab.is_subvocab_of(vocab) {
            return Err(Error::VocabMismatch("expansion vocabulary does not include current".into()));
        }
        let mut s = Structure::new(vocab.clone(), self.domain.clone())?;
        for (name, _) in self.vocab.relations() {
            s.relations.insert(name.to_string(), self.relations[name].clone());
        }
        s.constants = self.constants.clone();
        Ok(s)
    }

    /// `self` extends `small`: same interpretations when intersected with
    /// `small`'s domain, and constants agree.
    pub fn extends(&self, small: &Structure) -> Result<bool> {
        if self.vocab != small.vocab {
            return Err(Error::VocabMismatch("extends requires equal vocabularies".into()));
        }
        if !small.domain.iter().all(|e| self.has_element(e)) {
            return Ok(false);
        }
        let small_set: BTreeSet<&String> = small.domain.iter().collect();
        for (name, _arity) in self.vocab.relations() {
            let restricted: BTreeSet<Vec<String>> = self.relations[name]
                .iter()
                .filter(|t| t.iter().all(|e| small_set.contains(e)))
                .cloned()
                .collect();
            if restricted != small.relations[name] {
                return Ok(false);
            }
        }
        Ok(self.constants == small.constants)
    }

    /// Induced substructure on `seeds` together with all constant
    /// interpretations, in the ambient domain order.
    pub fn generated_substructure(&self, seeds: &BTreeSet<String>) -> Result<Structure> {
        for e in seeds {
            if !self.has_element(e) {
                return Err(Error::UnknownElement(e.clone()));
            }
        }
        let mut keep: BTreeSet<String> = seeds.clone();
        keep.extend(self.constants.values().cloned());
        let domain: Vec<String> = self.domain.iter().filter(|e| keep.contains(*e)).cloned().collect();
        let mut s = Structure::new(self.vocab.clone(), domain)?;
        for (name, _) in self.vocab.relations() {
            let set: BTreeSet<Vec<String>> = self.relations[name]
                .iter()
                .filter(|t| t.iter().all(|e| keep.contains(e)))
                .cloned()
                .collect();
            s.relations.insert(name.to_string(), set);
        }
        s.constants = self.constants.clone();
        Ok(s)
    }

    /// Same structure with the domain listed in the given order.
    pub fn with_domain_order(&self, order: &[String]) -> Result<Structure> {
        let as_set: BTreeSet<&String> = order.iter().collect();
        let own: BTreeSet<&String> = self.domain.iter().collect();
        if as_set != own || order.len() != self.domain.len() {
            return Err(Error::Model("reordering must permute the domain".into()));
        }
        let mut s = self.clone();
        s.domain = order.to_vec();
        Ok(s)
    }

    /// Serialize to the database text format.
    pub fn to_db_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "domain: {}", self.domain.join(", ")).unwrap();
        for (c, e) in &self.constants {
            writeln!(out, "const {c} = {e}.").unwrap();
        }
        for (name, arity) in self.vocab.relations() {
            if self.relations[name].is_empty() {
                writeln!(out, "rel {name}/{arity}.").unwrap();
            }
            for tuple in &self.relations[name] {
                writeln!(out, "{name}({}).", tuple.join(",")).unwrap();
            }
        }
        out
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_db_text().trim_end().replace('\n', " "))
    }
}

/// An injective element map between domains, used as embedding or
/// isomorphism.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ElementMap {
    map: BTreeMap<String, String>,
}

impl ElementMap {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let map: BTreeMap<String, String> = pairs.into_iter().collect();
        let mut seen = BTreeSet::new();
        for v in map.values() {
            if !seen.insert(v.clone()) {
                return Err(Error::NotInjective(v.clone()));
            }
        }
        Ok(ElementMap { map })
    }

    pub fn identity(domain: &[String]) -> Self {
        ElementMap { map: domain.iter().map(|e| (e.clone(), e.clone())).collect() }
    }

    pub fn apply(&self, e: &str) -> Result<&str> {
        self.map.get(e).map(|s| s.as_str()).ok_or_else(|| Error::UnknownElement(e.to_string()))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn inverse(&self) -> ElementMap {
        ElementMap { map: self.map.iter().map(|(a, b)| (b.clone(), a.clone())).collect() }
    }

    /// Push a structure forward along the map; the image keeps the source
    /// domain order.
    pub fn apply_structure(&self, world: &Structure) -> Result<Structure> {
        let domain: Vec<String> =
            world.domain().iter().map(|e| self.apply(e).map(str::to_string)).collect::<Result<_>>()?;
        let mut s = Structure::new(world.vocab().clone(), domain)?;
        for (name, _) in world.vocab().relations() {
            for tuple in world.facts(name) {
                let t: Vec<String> =
                    tuple.iter().map(|e| self.apply(e).map(str::to_string)).collect::<Result<_>>()?;
                s.add_fact(name, t)?;
            }
        }
        for c in world.vocab().constants().map(str::to_string).collect::<Vec<_>>() {
            if let Some(e) = world.constant(&c) {
                let img = self.apply(e)?.to_string();
                s.set_constant(&c, &img)?;
            }
        }
        Ok(s)
    }

    /// Is this map an embedding of `src` into `dst`?
    pub fn is_embedding(&self, src: &Structure, dst: &Structure) -> Result<bool> {
        if src.vocab() != dst.vocab() {
            return Err(Error::VocabMismatch("embedding requires equal vocabularies".into()));
        }
        for e in src.domain() {
            let img = self.apply(e)?;
            if !dst.has_element(img) {
                return Ok(false);
            }
        }
        for c in src.vocab().constants() {
            match (src.constant(c), dst.constant(c)) {
                (Some(a), Some(b)) => {
                    if self.apply(a)? != b {
                        return Ok(false);
                    }
                }
                _ => return Ok(false),
            }
        }
        for (name, arity) in src.vocab().relations() {
            for tuple in src.domain().iter().cloned().combinations_with_replacement(arity) {
                for perm in tuple.iter().cloned().permutations(arity).unique() {
                    let image: Vec<String> =
                        perm.iter().map(|e| self.apply(e).map(str::to_string)).collect::<Result<_>>()?;
                    if src.holds(name, &perm)? != dst.holds(name, &image)? {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }
}

/// All structures over `vocab` extending `base` by interpreting the
/// relations of `vocab` that `base`'s vocabulary lacks, each exactly once.
pub fn enumerate_extensions(base: &Structure, target: &Vocabulary, max_domain: usize) -> Result<Vec<Structure>> {
    if !base.vocab().is_subvocab_of(target) {
        return Err(Error::VocabMismatch("target vocabulary must include the base's".into()));
    }
    if target.constants().count() != base.vocab().constants().count() {
        return Err(Error::Constants("intensional constants are not permitted".into()));
    }
    let n = base.domain().len();
    if n > max_domain {
        return Err(Error::Capacity(format!("domain size {n} exceeds cap {max_domain}")));
    }
    let new_rels = target.relations_minus(base.vocab());
    let mut slots: Vec<(String, Vec<String>)> = Vec::new();
    for (name, arity) in &new_rels {
        for tuple in (0..*arity).map(|_| base.domain().iter().cloned()).multi_cartesian_product() {
            slots.push((name.clone(), tuple));
        }
        if *arity == 0 {
            unreachable!("arity >= 1 enforced by Vocabulary");
        }
    }
    if slots.len() > 24 {
        return Err(Error::Capacity(format!("{} ground atoms to enumerate", slots.len())));
    }
    let template = base.expand_vocab(target)?;
    let mut out = Vec::with_capacity(1 << slots.len());
    for mask in 0u64..(1u64 << slots.len()) {
        let mut s = template.clone();
        for (i, (name, tuple)) in slots.iter().enumerate() {
            if mask & (1 << i) != 0 {
                s.add_fact(name, tuple.clone())?;
            }
        }
        out.push(s);
    }
    Ok(out)
}

/// Parse the database text format:
/// `domain: a, b, c.`  /  `R(a,b).`  /  `const c = a.`  /  `rel r/2.`
pub fn parse_db(input: &str) -> Result<Structure> {
    let toks = lex(input)?;
    let mut cur = Cursor::new(toks);
    let mut vocab = Vocabulary::new();
    let mut domain: Vec<String> = Vec::new();
    let mut facts: Vec<(String, Vec<String>)> = Vec::new();
    let mut consts: Vec<(String, String)> = Vec::new();
    let mut have_domain = false;

    while !cur.at_end() {
        let head = match cur.next().unwrap().tok {
            Tok::Ident(s) => s,
            _ => return Err(cur.error("expected identifier")),
        };
        match head.as_str() {
            "domain" => {
                cur.expect(&Tok::Colon, "`:`")?;
                let mut elems = Vec::new();
                loop {
                    match cur.next().map(|t| t.tok) {
                        Some(Tok::Ident(e)) => elems.push(e),
                        Some(Tok::Number(e)) => elems.push(e),
                        _ => return Err(cur.error("expected domain element")),
                    }
                    if cur.eat(&Tok::Comma) {
                        continue;
                    }
                    cur.eat(&Tok::Dot);
                    break;
                }
                domain = elems;
                have_domain = true;
            }
            "const" => {
                let name = match cur.next().map(|t| t.tok) {
                    Some(Tok::Ident(s)) => s,
                    _ => return Err(cur.error("expected constant name")),
                };
                cur.expect(&Tok::Eq, "`=`")?;
                let elem = match cur.next().map(|t| t.tok) {
                    Some(Tok::Ident(s)) => s,
                    Some(Tok::Number(s)) => s,
                    _ => return Err(cur.error("expected element")),
                };
                cur.expect(&Tok::Dot, "`.`")?;
                vocab.add_constant(&name)?;
                consts.push((name, elem));
            }
            "rel" => {
                let name = match cur.next().map(|t| t.tok) {
                    Some(Tok::Ident(s)) => s,
                    _ => return Err(cur.error("expected relation name")),
                };
                cur.expect(&Tok::Slash, "`/`")?;
                let arity = match cur.next().map(|t| t.tok) {
                    Some(Tok::Number(n)) => n
                        .parse::<usize>()
                        .map_err(|_| cur.error("expected arity"))?,
                    _ => return Err(cur.error("expected arity")),
                };
                cur.expect(&Tok::Dot, "`.`")?;
                vocab.add_relation(&name, arity)?;
            }
            rel => {
                cur.expect(&Tok::LParen, "`(`")?;
                let mut args = Vec::new();
                loop {
                    match cur.next().map(|t| t.tok) {
                        Some(Tok::Ident(e)) => args.push(e),
                        Some(Tok::Number(e)) => args.push(e),
                        _ => return Err(cur.error("expected element")),
                    }
                    if cur.eat(&Tok::Comma) {
                        continue;
                    }
                    cur.expect(&Tok::RParen, "`)`")?;
                    break;
                }
                cur.expect(&Tok::Dot, "`.`")?;
                vocab.add_relation(rel, args.len())?;
                facts.push((rel.to_string(), args));
            }
        }
    }
    if !have_domain {
        return Err(Error::Parse { line: 1, col: 1, msg: "missing `domain:` line".into() });
    }
    let mut s = Structure::new(vocab, domain)?;
    for (rel, args) in facts {
        s.add_fact(&rel, args)?;
    }
    for (name, elem) in consts {
        s.set_constant(&name, &elem)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(dom: &[&str], edges: &[(&str, &str)]) -> Structure {
        let vocab = Vocabulary::with_relations(&[("edge", 2)]);
        let mut s = Structure::new(vocab, dom.iter().map(|s| s.to_string()).collect()).unwrap();
        for (a, b) in edges {
            s.add_fact("edge", vec![a.to_string(), b.to_string()]).unwrap();
        }
        s
    }

    #[test]
    fn extends_self() {
        let g = graph(&["a", "b"], &[("a", "b")]);
        assert!(g.extends(&g).unwrap());
    }

    #[test]
    fn extends_checks_restriction() {
        let small = graph(&["a"], &[]);
        let big = graph(&["a", "b"], &[("a", "b")]);
        assert!(big.extends(&small).unwrap());
        let small_loop = graph(&["a"], &[("a", "a")]);
        assert!(!big.extends(&small_loop).unwrap());
    }

    #[test]
    fn apply_map_rewrites_tuples() {
        let g = graph(&["a", "b"], &[("a", "b")]);
        let swap = ElementMap::new([("a".into(), "b".into()), ("b".into(), "a".into())]).unwrap();
        let h = swap.apply_structure(&g).unwrap();
        assert!(h.holds("edge", &["b".into(), "a".into()]).unwrap());
        assert!(!h.holds("edge", &["a".into(), "b".into()]).unwrap());
    }

    #[test]
    fn embedding_detects_nonedge_image() {
        let src = graph(&["a", "b"], &[("a", "b")]);
        let dst = graph(&["x", "y"], &[]);
        let m = ElementMap::new([("a".into(), "x".into()), ("b".into(), "y".into())]).unwrap();
        assert!(!m.is_embedding(&src, &dst).unwrap());
        let dst2 = graph(&["x", "y"], &[("x", "y")]);
        assert!(m.is_embedding(&src, &dst2).unwrap());
    }

    #[test]
    fn enumerate_extension_counts() {
        let empty = Structure::new(Vocabulary::new(), vec!["a".into(), "b".into()]).unwrap();
        let unary = Vocabulary::with_relations(&[("p", 1)]);
        assert_eq!(enumerate_extensions(&empty, &unary, 6).unwrap().len(), 4);
        let binary = Vocabulary::with_relations(&[("e", 2)]);
        assert_eq!(enumerate_extensions(&empty, &binary, 6).unwrap().len(), 16);
        assert_eq!(enumerate_extensions(&empty, &Vocabulary::new(), 6).unwrap().len(), 1);
    }

    #[test]
    fn enumerate_extensions_distinct(){
        let empty = Structure::new(Vocabulary::new(), vec!["a".into(), "b".into()]).unwrap();
        let unary = Vocabulary::with_relations(&[("p", 1)]);
        let exts = enumerate_extensions(&empty, &unary, 6).unwrap();
        let set: BTreeSet<_> = exts.iter().cloned().collect();
        assert_eq!(set.len(), exts.len());
    }

    #[test]
    fn generated_substructure_closes_constants() {
        let mut vocab = Vocabulary::with_relations(&[("p", 1)]);
        vocab.add_constant("c").unwrap();
        let mut s = Structure::new(vocab, vec!["a".into(), "b".into()]).unwrap();
        s.set_constant("c", "b").unwrap();
        s.add_fact("p", vec!["b".into()]).unwrap();
        let sub = s.generated_substructure(&BTreeSet::new()).unwrap();
        assert_eq!(sub.domain(), ["b".to_string()]);
        assert!(sub.holds("p", &["b".into()]).unwrap());
    }

    #[test]
    fn db_round_trip() {
        let g = graph(&["a", "b", "c"], &[("a", "b"), ("b", "b")]);
        let parsed = parse_db(&g.to_db_text()).unwrap();
        assert_eq!(parsed, g);
    }
}
