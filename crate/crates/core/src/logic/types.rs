//! Complete quantifier-free tuple descriptions (types) and their arity-m
//! slices (data).

use crate::error::{Error, Result};
use crate::logic::formula::QFFormula;
use crate::logic::structure::{enumerate_extensions, Structure, Vocabulary};
use itertools::Itertools;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// The complete description of a tuple: equality pattern over the tuple
/// positions (variables first, then the vocabulary's constants in sorted
/// order) plus a polarity for every relation atom over representative
/// positions. Canonical by construction, so equality is syntactic.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TupleType {
    vocab: Vocabulary,
    arity: usize,
    /// eq[i] = smallest position interpreted by the same element.
    eq: Vec<usize>,
    /// Polarity of every atom whose arguments are representative positions.
    literals: BTreeMap<(String, Vec<usize>), bool>,
}

impl TupleType {
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    fn n_positions(&self) -> usize {
        self.eq.len()
    }

    pub fn rep(&self, position: usize) -> usize {
        self.eq[position]
    }

    pub fn all_distinct(&self) -> bool {
        (0..self.arity).all(|i| self.eq[i] == i)
    }

    fn reps(&self) -> Vec<usize> {
        (0..self.n_positions()).filter(|&i| self.eq[i] == i).collect()
    }

    fn position_names(&self) -> Vec<String> {
        let consts: Vec<&str> = self.vocab.constants().collect();
        (0..self.n_positions())
            .map(|i| if i < self.arity { format!("X{}", i + 1) } else { consts[i - self.arity].to_string() })
            .collect()
    }

    /// The type of `tuple` in `world`, relative to `vocab` (which must be a
    /// sub-vocabulary of the world's). Constants of `vocab` join the tuple as
    /// extra positions.
    pub fn of(world: &Structure, tuple: &[String], vocab: &Vocabulary) -> Result<TupleType> {
        if !vocab.is_subvocab_of(world.vocab()) {
            return Err(Error::VocabMismatch("type vocabulary exceeds the world's".into()));
        }
        let mut elems: Vec<String> = Vec::new();
        for e in tuple {
            if !world.has_element(e) {
                return Err(Error::UnknownElement(e.clone()));
            }
            elems.push(e.clone());
        }
        for c in vocab.constants() {
            let e = world
                .constant(c)
                .ok_or_else(|| Error::Model(format!("constant {c} is not interpreted")))?;
            elems.push(e.to_string());
        }
        let eq: Vec<usize> =
            (0..elems.len()).map(|i| elems.iter().position(|e| *e == elems[i]).unwrap()).collect();
        let reps: Vec<usize> = (0..elems.len()).filter(|&i| eq[i] == i).collect();
        let mut literals = BTreeMap::new();
        for (name, a) in vocab.relations() {
            for args in (0..a).map(|_| reps.iter().copied()).multi_cartesian_product() {
                let tuple: Vec<String> = args.iter().map(|&i| elems[i].clone()).collect();
                literals.insert((name.to_string(), args), world.holds(name, &tuple)?);
            }
        }
        Ok(TupleType { vocab: vocab.clone(), arity: tuple.len(), eq, literals })
    }

    /// A canonical structure satisfying this type, together with the element
    /// names interpreting the tuple positions x1..xn.
    pub fn realize(&self) -> Result<(Structure, Vec<String>)> {
        let name_of = |rep: usize| format!("t{}", rep + 1);
        let domain: Vec<String> = self.reps().iter().map(|&r| name_of(r)).collect();
        let mut s = Structure::new(self.vocab.clone(), domain)?;
        for (i, c) in self.vocab.constants().map(str::to_string).collect::<Vec<_>>().iter().enumerate() {
            s.set_constant(c, &name_of(self.eq[self.arity + i]))?;
        }
        for ((rel, args), pos) in &self.literals {
            if *pos {
                s.add_fact(rel, args.iter().map(|&i| name_of(i)).collect())?;
            }
        }
        let tuple = (0..self.arity).map(|i| name_of(self.eq[i])).collect();
        Ok((s, tuple))
    }

    /// Permute the tuple positions: the type of `(t_{perm[0]+1}, ...)` where
    /// this is the type of `(t_1, ..., t_n)`.
    pub fn permute(&self, perm: &[usize]) -> Result<TupleType> {
        if perm.len() != self.arity || !(0..self.arity).all(|i| perm.contains(&i)) {
            return Err(Error::Model("not a permutation of the tuple positions".into()));
        }
        let (world, tuple) = self.realize()?;
        let permuted: Vec<String> = perm.iter().map(|&i| tuple[i].clone()).collect();
        TupleType::of(&world, &permuted, &self.vocab)
    }

    /// The datum of the subsequence at `positions` (strictly increasing,
    /// pairwise non-equal under the equality pattern): the literals
    /// mentioning exactly those positions, renumbered to x1..xm.
    pub fn datum_slice(&self, positions: &[usize]) -> Result<Datum> {
        for w in positions.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Model("positions must be strictly increasing".into()));
            }
        }
        for &p in positions {
            if p >= self.arity {
                return Err(Error::Model(format!("position {p} out of range")));
            }
        }
        let reps: Vec<usize> = positions.iter().map(|&p| self.eq[p]).collect();
        if reps.iter().duplicates().next().is_some() {
            return Err(Error::Multiplicity("positions collapse under the equality pattern".into()));
        }
        let rep_set: BTreeSet<usize> = reps.iter().copied().collect();
        let rank: BTreeMap<usize, usize> = reps.iter().enumerate().map(|(k, &r)| (r, k)).collect();
        let mut literals = BTreeMap::new();
        for ((rel, args), pos) in &self.literals {
            let used: BTreeSet<usize> = args.iter().copied().collect();
            if used == rep_set {
                literals.insert((rel.clone(), args.iter().map(|a| rank[a]).collect()), *pos);
            }
        }
        Ok(Datum { vocab: self.vocab.clone(), arity: positions.len(), literals })
    }

    /// All types of arity n over a relational vocabulary whose positions are
    /// pairwise distinct.
    pub fn enumerate_distinct(vocab: &Vocabulary, n: usize) -> Result<Vec<TupleType>> {
        if !vocab.is_relational() {
            return Err(Error::Constants("type enumeration requires a relational vocabulary".into()));
        }
        let domain: Vec<String> = (0..n).map(|i| format!("t{}", i + 1)).collect();
        let bare = Structure::new(Vocabulary::new(), domain.clone())?;
        let mut out = Vec::new();
        for w in enumerate_extensions(&bare, vocab, 6)? {
            out.push(TupleType::of(&w, &domain, vocab)?);
        }
        Ok(out)
    }

    /// All types of arity n (every equality pattern over the variables and
    /// the vocabulary's constants).
    pub fn enumerate_all(vocab: &Vocabulary, n: usize) -> Result<Vec<TupleType>> {
        let total = n + vocab.constants().count();
        let mut patterns: Vec<Vec<usize>> = vec![vec![]];
        for i in 0..total {
            let mut next = Vec::new();
            for p in &patterns {
                let reps: Vec<usize> = (0..i).filter(|&j| p[j] == j).collect();
                for r in reps.into_iter().chain([i]) {
                    let mut q = p.clone();
                    q.push(r);
                    next.push(q);
                }
            }
            patterns = next;
        }
        let mut out = Vec::new();
        for eq in patterns {
            let name_of = |rep: usize| format!("t{}", rep + 1);
            let reps: Vec<usize> = (0..total).filter(|&i| eq[i] == i).collect();
            let mut base_vocab = Vocabulary::new();
            for c in vocab.constants() {
                base_vocab.add_constant(c)?;
            }
            let mut base = Structure::new(base_vocab, reps.iter().map(|&r| name_of(r)).collect())?;
            for (k, c) in vocab.constants().map(str::to_string).collect::<Vec<_>>().iter().enumerate() {
                base.set_constant(c, &name_of(eq[n + k]))?;
            }
            let tuple: Vec<String> = (0..n).map(|i| name_of(eq[i])).collect();
            for w in enumerate_extensions(&base, vocab, 6)? {
                out.push(TupleType::of(&w, &tuple, vocab)?);
            }
        }
        Ok(out)
    }

    /// Recover a type from a formula over X1..Xn that pins it down uniquely.
    pub fn from_formula(vocab: &Vocabulary, n: usize, formula: &QFFormula) -> Result<TupleType> {
        let mut found: Option<TupleType> = None;
        for t in TupleType::enumerate_all(vocab, n)? {
            let (world, tuple) = t.realize()?;
            let assignment: BTreeMap<String, String> =
                tuple.iter().enumerate().map(|(i, e)| (format!("X{}", i + 1), e.clone())).collect();
            if formula.evaluate(&world, &assignment)? {
                if let Some(prev) = &found {
                    if *prev != t {
                        return Err(Error::Model("formula does not determine a unique type".into()));
                    }
                } else {
                    found = Some(t);
                }
            }
        }
        found.ok_or_else(|| Error::Model("formula is unsatisfiable as a type".into()))
    }
}

impl fmt::Display for TupleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.position_names();
        let mut parts: Vec<String> = Vec::new();
        for i in 0..self.n_positions() {
            if self.eq[i] != i {
                parts.push(format!("{} = {}", names[i], names[self.eq[i]]));
            }
        }
        let reps = self.reps();
        for (k, &i) in reps.iter().enumerate() {
            for &j in &reps[k + 1..] {
                parts.push(format!("{} != {}", names[i], names[j]));
            }
        }
        for ((rel, args), pos) in &self.literals {
            let body = args.iter().map(|&a| names[a].clone()).join(",");
            parts.push(format!("{}{rel}({body})", if *pos { "" } else { "!" }));
        }
        if parts.is_empty() {
            write!(f, "true")
        } else {
            write!(f, "{}", parts.join(" & "))
        }
    }
}

/// The slice of a type mentioning exactly the variables x1..xm: a polarity
/// for every atom whose argument positions cover all of 0..m-1. No equality
/// literals — the positions are implicitly pairwise distinct.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Datum {
    vocab: Vocabulary,
    arity: usize,
    literals: BTreeMap<(String, Vec<usize>), bool>,
}

impl Datum {
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn literals(&self) -> impl Iterator<Item = (&str, &[usize], bool)> {
        self.literals.iter().map(|((r, a), p)| (r.as_str(), a.as_slice(), *p))
    }

    /// Atoms whose argument tuples use every position 0..m-1.
    fn covering_atoms(vocab: &Vocabulary, m: usize) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (name, a) in vocab.relations() {
            if a < m {
                continue;
            }
            for args in (0..a).map(|_| 0..m).multi_cartesian_product() {
                if (0..m).all(|p| args.contains(&p)) {
                    out.push((name.to_string(), args));
                }
            }
        }
        out
    }

    /// All data of arity m over a relational vocabulary.
    pub fn enumerate(vocab: &Vocabulary, m: usize) -> Result<Vec<Datum>> {
        if !vocab.is_relational() {
            return Err(Error::Constants("datum enumeration requires a relational vocabulary".into()));
        }
        let atoms = Datum::covering_atoms(vocab, m);
        if atoms.len() > 24 {
            return Err(Error::Capacity(format!("{} atoms in arity-{m} data", atoms.len())));
        }
        let mut out = Vec::with_capacity(1 << atoms.len());
        for mask in 0u64..(1u64 << atoms.len()) {
            let literals = atoms
                .iter()
                .enumerate()
                .map(|(i, a)| (a.clone(), mask & (1 << i) != 0))
                .collect();
            out.push(Datum { vocab: vocab.clone(), arity: m, literals });
        }
        Ok(out)
    }

    /// Build a datum directly from a polarity assignment; the keys must be
    /// exactly the covering atoms of arity m.
    pub fn from_literals(
        vocab: &Vocabulary,
        m: usize,
        literals: BTreeMap<(String, Vec<usize>), bool>,
    ) -> Result<Datum> {
        let expected: BTreeSet<(String, Vec<usize>)> =
            Datum::covering_atoms(vocab, m).into_iter().collect();
        let given: BTreeSet<(String, Vec<usize>)> = literals.keys().cloned().collect();
        if given != expected {
            return Err(Error::Model("literals are not exactly the covering atoms".into()));
        }
        Ok(Datum { vocab: vocab.clone(), arity: m, literals })
    }

    /// Recover a datum from a conjunction of literals over X1..Xm.
    pub fn from_conjunction(vocab: &Vocabulary, m: usize, formula: &QFFormula) -> Result<Datum> {
        fn position(t: &crate::logic::formula::Term, m: usize) -> Result<usize> {
            if let crate::logic::formula::Term::Var(v) = t {
                if let Some(k) = v.strip_prefix('X').and_then(|s| s.parse::<usize>().ok()) {
                    if k >= 1 && k <= m {
                        return Ok(k - 1);
                    }
                }
            }
            Err(Error::Model(format!("datum argument {t:?} is not one of X1..X{m}")))
        }
        fn walk(
            f: &QFFormula,
            polarity: bool,
            m: usize,
            out: &mut BTreeMap<(String, Vec<usize>), bool>,
        ) -> Result<()> {
            match f {
                QFFormula::True => Ok(()),
                QFFormula::And(l, r) if polarity => {
                    walk(l, true, m, out)?;
                    walk(r, true, m, out)
                }
                QFFormula::Not(inner) => walk(inner, !polarity, m, out),
                QFFormula::Atom(rel, args) => {
                    let positions =
                        args.iter().map(|t| position(t, m)).collect::<Result<Vec<usize>>>()?;
                    if out.insert((rel.clone(), positions), polarity) == Some(!polarity) {
                        return Err(Error::Model(format!("contradictory literal on {rel}")));
                    }
                    Ok(())
                }
                _ => Err(Error::Model("datum formula must be a conjunction of literals".into())),
            }
        }
        let mut literals = BTreeMap::new();
        walk(formula, true, m, &mut literals)?;
        Datum::from_literals(vocab, m, literals)
    }

    /// The datum of a tuple of pairwise distinct elements in `world`.
    pub fn of(world: &Structure, tuple: &[String], vocab: &Vocabulary) -> Result<Datum> {
        if tuple.iter().duplicates().next().is_some() {
            return Err(Error::Multiplicity("datum tuple must be pairwise distinct".into()));
        }
        let mut literals = BTreeMap::new();
        for (rel, args) in Datum::covering_atoms(vocab, tuple.len()) {
            let ground: Vec<String> = args.iter().map(|&i| tuple[i].clone()).collect();
            let holds = world.holds(&rel, &ground)?;
            literals.insert((rel, args), holds);
        }
        Ok(Datum { vocab: vocab.clone(), arity: tuple.len(), literals })
    }

    /// Install this datum's facts about `tuple` into `world` (positive
    /// literals become facts; negatives are absence).
    pub fn apply_to(&self, world: &mut Structure, tuple: &[String]) -> Result<()> {
        if tuple.len() != self.arity {
            return Err(Error::Arity("datum arity does not match the tuple".into()));
        }
        for ((rel, args), pos) in &self.literals {
            if *pos {
                world.add_fact(rel, args.iter().map(|&i| tuple[i].clone()).collect())?;
            }
        }
        Ok(())
    }

    /// Does the (pairwise distinct) tuple satisfy this datum in `world`?
    pub fn holds_on(&self, world: &Structure, tuple: &[String]) -> Result<bool> {
        for ((rel, args), pos) in &self.literals {
            let ground: Vec<String> = args.iter().map(|&i| tuple[i].clone()).collect();
            if world.holds(rel, &ground)? != *pos {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// The datum of the permuted tuple.
    pub fn permute(&self, perm: &[usize]) -> Result<Datum> {
        if perm.len() != self.arity || !(0..self.arity).all(|i| perm.contains(&i)) {
            return Err(Error::Model("not a permutation of the datum positions".into()));
        }
        let mut inv = vec![0usize; self.arity];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let literals = self
            .literals
            .iter()
            .map(|((rel, args), pos)| ((rel.clone(), args.iter().map(|&a| inv[a]).collect()), *pos))
            .collect();
        Ok(Datum { vocab: self.vocab.clone(), arity: self.arity, literals })
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.literals.is_empty() {
            return write!(f, "true");
        }
        let parts: Vec<String> = self
            .literals
            .iter()
            .map(|((rel, args), pos)| {
                let body = args.iter().map(|&a| format!("X{}", a + 1)).join(",");
                format!("{}{rel}({body})", if *pos { "" } else { "!" })
            })
            .collect();
        write!(f, "{}", parts.join(" & "))
    }
}
