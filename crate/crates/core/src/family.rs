//! World distributions over a fixed base structure, and families of such
//! distributions indexed by extensional structures, with combinators.

use crate::error::{Error, Result};
use crate::logic::{enumerate_extensions, QFFormula, Structure, Vocabulary};
use crate::num::{Num, FLOAT_TOL};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

/// Default cap on the base-domain size for full-table enumeration.
pub const DEFAULT_MAX_DOMAIN: usize = 6;

/// A probability table over the intensional extensions of one extensional
/// base structure. The table is sparse: extensions absent from the map have
/// probability zero.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldDistribution {
    base: Structure,
    int_vocab: Vocabulary,
    table: BTreeMap<Structure, Num>,
}

impl WorldDistribution {
    pub fn new(base: Structure, int_vocab: Vocabulary, table: BTreeMap<Structure, Num>) -> Result<Self> {
        if !base.vocab().is_subvocab_of(&int_vocab) {
            return Err(Error::VocabMismatch("intensional vocabulary must include the base's".into()));
        }
        for (w, p) in &table {
            if w.vocab() != &int_vocab || w.domain() != base.domain() {
                return Err(Error::VocabMismatch("table key is not an extension of the base".into()));
            }
            if p.to_f64() < -FLOAT_TOL {
                return Err(Error::Model(format!("negative probability {p}")));
            }
        }
        let d = WorldDistribution { base, int_vocab, table };
        let total = d.normalization();
        if !total.approx_eq(&Num::one(), FLOAT_TOL) {
            return Err(Error::Model(format!("table sums to {total}, not 1")));
        }
        Ok(d)
    }

    /// Point mass on a single world.
    pub fn point_mass(world: Structure) -> Result<Self> {
        let int_vocab = world.vocab().clone();
        let base = world.clone();
        let mut table = BTreeMap::new();
        table.insert(world, Num::one());
        WorldDistribution::new(base, int_vocab, table)
    }

    pub fn base(&self) -> &Structure {
        &self.base
    }

    pub fn int_vocab(&self) -> &Vocabulary {
        &self.int_vocab
    }

    pub fn table(&self) -> &BTreeMap<Structure, Num> {
        &self.table
    }

    pub fn probability(&self, world: &Structure) -> Num {
        self.table.get(world).cloned().unwrap_or_else(Num::zero)
    }

    pub fn normalization(&self) -> Num {
        self.table.values().fold(Num::zero(), |a, b| a + b)
    }

    pub fn is_exact(&self) -> bool {
        self.table.values().all(Num::is_exact)
    }

    /// Probability of a ground query: sum over satisfying worlds.
    pub fn marginal(&self, query: &QFFormula) -> Result<Num> {
        let mut total = Num::zero();
        for (w, p) in &self.table {
            if query.evaluate_ground(w)? {
                total = total + p;
            }
        }
        Ok(total)
    }

    /// Probability that the sampled world extends `part` (same intensional
    /// vocabulary, domain a subset of the base's).
    pub fn marginal_extends(&self, part: &Structure) -> Result<Num> {
        if part.vocab() != &self.int_vocab {
            return Err(Error::VocabMismatch("part must use the intensional vocabulary".into()));
        }
        for e in part.domain() {
            if !self.base.has_element(e) {
                return Err(Error::UnknownElement(e.clone()));
            }
        }
        let mut total = Num::zero();
        for (w, p) in &self.table {
            if w.extends(part)? {
                total = total + p;
            }
        }
        Ok(total)
    }

    /// Marginal distribution over a sub-vocabulary L with L_Ext ⊆ L ⊆ L_Int.
    pub fn restrict(&self, vocab: &Vocabulary) -> Result<WorldDistribution> {
        if !self.base.vocab().is_subvocab_of(vocab) || !vocab.is_subvocab_of(&self.int_vocab) {
            return Err(Error::VocabMismatch("restriction vocabulary is not nested".into()));
        }
        let mut table: BTreeMap<Structure, Num> = BTreeMap::new();
        for (w, p) in &self.table {
            let r = w.reduct(vocab)?;
            let slot = table.entry(r).or_insert_with(Num::zero);
            *slot = slot.clone() + p;
        }
        WorldDistribution::new(self.base.clone(), vocab.clone(), table)
    }

    /// Condition on a world over an intermediate vocabulary: the
    /// distribution over full worlds whose L-reduct equals `evidence`.
    pub fn condition_on(&self, evidence: &Structure) -> Result<WorldDistribution> {
        let mut table: BTreeMap<Structure, Num> = BTreeMap::new();
        let mut total = Num::zero();
        for (w, p) in &self.table {
            if &w.reduct(evidence.vocab())? == evidence {
                total = total + p;
                table.insert(w.clone(), p.clone());
            }
        }
        if total.is_zero() {
            return Err(Error::Regularity(format!("conditioning world has probability 0: {evidence}")));
        }
        let table = table.into_iter().map(|(w, p)| (w, p / &total)).collect();
        WorldDistribution::new(evidence.clone(), self.int_vocab.clone(), table)
    }

    /// Push the table forward along an injective element map.
    pub fn map_elements(&self, map: &crate::logic::ElementMap) -> Result<WorldDistribution> {
        let base = map.apply_structure(&self.base)?;
        let table = self
            .table
            .iter()
            .map(|(w, p)| Ok((map.apply_structure(w)?, p.clone())))
            .collect::<Result<_>>()?;
        WorldDistribution::new(base, self.int_vocab.clone(), table)
    }

    /// Total-variation distance: half the sum of absolute differences over
    /// the union of supports.
    pub fn total_variation(&self, other: &WorldDistribution) -> Num {
        let mut sum = Num::zero();
        for w in self.table.keys().chain(other.table.keys()) {
            sum = sum + self.probability(w).abs_diff(&other.probability(w));
        }
        sum / &Num::ratio(2, 1)
    }

    /// Do the two tables agree within `tol` (exactly when both exact)?
    pub fn approx_eq(&self, other: &WorldDistribution, tol: f64) -> bool {
        self.table
            .keys()
            .chain(other.table.keys())
            .all(|w| self.probability(w).approx_eq(&other.probability(w), tol))
    }
}

type Provider = dyn Fn(&Structure) -> Result<WorldDistribution> + Send + Sync;

/// A family of distributions: for each finite extensional structure, a
/// distribution over its intensional extensions.
#[derive(Clone)]
pub struct Family {
    ext: Vocabulary,
    int: Vocabulary,
    provider: Arc<Provider>,
}

impl Family {
    pub fn new(
        ext: Vocabulary,
        int: Vocabulary,
        provider: impl Fn(&Structure) -> Result<WorldDistribution> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !ext.is_subvocab_of(&int) {
            return Err(Error::VocabMismatch("extensional vocabulary must embed in the intensional".into()));
        }
        if int.constants().count() != ext.constants().count() {
            return Err(Error::Constants("intensional constants are not permitted".into()));
        }
        Ok(Family { ext, int, provider: Arc::new(provider) })
    }

    pub fn ext_vocab(&self) -> &Vocabulary {
        &self.ext
    }

    pub fn int_vocab(&self) -> &Vocabulary {
        &self.int
    }

    /// The distribution at a given base structure.
    pub fn at(&self, base: &Structure) -> Result<WorldDistribution> {
        if base.vocab() != &self.ext {
            return Err(Error::VocabMismatch("base structure has the wrong vocabulary".into()));
        }
        base.validate()?;
        let d = (self.provider)(base)?;
        if d.base() != base || d.int_vocab() != &self.int {
            return Err(Error::Model("provider returned a distribution over the wrong base".into()));
        }
        Ok(d)
    }

    /// Family from an explicit enumerating provider over a sub-semantics:
    /// enumerate all extensions and weight them by `weight`.
    pub fn from_weights(
        ext: Vocabulary,
        int: Vocabulary,
        weight: impl Fn(&Structure, &Structure) -> Result<Num> + Send + Sync + 'static,
    ) -> Result<Self> {
        let int2 = int.clone();
        Family::new(ext, int.clone(), move |base| {
            let mut table = BTreeMap::new();
            for w in enumerate_extensions(base, &int2, DEFAULT_MAX_DOMAIN)? {
                let p = weight(base, &w)?;
                if !p.is_zero() {
                    table.insert(w, p);
                }
            }
            WorldDistribution::new(base.clone(), int2.clone(), table)
        })
    }

    /// Sequential composition: sample the mid-vocabulary world from `first`,
    /// then the full world from `second` at that world.
    pub fn compose(first: &Family, second: &Family) -> Result<Family> {
        if second.ext != first.int {
            return Err(Error::VocabMismatch(
                "second family's extensional vocabulary must equal the first's intensional".into(),
            ));
        }
        let (p, q) = (first.clone(), second.clone());
        let int = second.int.clone();
        Family::new(first.ext.clone(), second.int.clone(), move |base| {
            let mid = p.at(base)?;
            let mut table: BTreeMap<Structure, Num> = BTreeMap::new();
            for (m, pm) in mid.table() {
                let full = q.at(m)?;
                for (w, pw) in full.table() {
                    let slot = table.entry(w.clone()).or_insert_with(Num::zero);
                    *slot = slot.clone() + pm.clone() * pw;
                }
            }
            WorldDistribution::new(base.clone(), int.clone(), table)
        })
    }

    /// Marginalize the intensional vocabulary down to L (L_Ext ⊆ L ⊆ L_Int).
    pub fn restrict(&self, vocab: &Vocabulary) -> Result<Family> {
        if !self.ext.is_subvocab_of(vocab) || !vocab.is_subvocab_of(&self.int) {
            return Err(Error::VocabMismatch("restriction vocabulary is not nested".into()));
        }
        let inner = self.clone();
        let v = vocab.clone();
        Family::new(self.ext.clone(), vocab.clone(), move |base| inner.at(base)?.restrict(&v))
    }

    /// Prepend a uniform choice of extensional structure: the ∅-L_Int family
    /// giving equal probability to every extensional structure on the domain.
    pub fn free_completion(&self) -> Result<Family> {
        if !self.ext.is_relational() {
            return Err(Error::Constants("free completion requires a relational extensional vocabulary".into()));
        }
        let free = Family::free(self.ext.clone())?;
        Family::compose(&free, self)
    }

    /// The uniform ∅-L family: every L-structure on the domain is equally
    /// likely.
    pub fn free(vocab: Vocabulary) -> Result<Family> {
        if !vocab.is_relational() {
            return Err(Error::Constants("free family requires a relational vocabulary".into()));
        }
        let v = vocab.clone();
        Family::from_weights(Vocabulary::new(), vocab, move |base, _| {
            let n = base.domain().len() as u32;
            let atoms: u32 = v.relations().map(|(_, a)| n.pow(a as u32)).sum();
            Ok(Num::ratio(1, 1i64 << atoms))
        })
    }

    /// Treat an intermediate vocabulary L as observed: the L-L_Int family of
    /// conditionals. Errors when asked to condition on a zero-probability
    /// world (regularity).
    pub fn condition_on(&self, vocab: &Vocabulary) -> Result<Family> {
        if !self.ext.is_subvocab_of(vocab) || !vocab.is_subvocab_of(&self.int) {
            return Err(Error::VocabMismatch("conditioning vocabulary is not nested".into()));
        }
        let inner = self.clone();
        let ext = self.ext.clone();
        let observed = vocab.clone();
        // bucket each base's table by observed reduct once, so conditioning
        // on many evidence worlds over the same base costs one table pass
        let cache: Mutex<BTreeMap<Structure, BTreeMap<Structure, WorldDistribution>>> =
            Mutex::new(BTreeMap::new());
        Family::new(vocab.clone(), self.int.clone(), move |evidence| {
            let base = evidence.reduct(&ext)?;
            let mut cache = cache.lock().unwrap();
            if !cache.contains_key(&base) {
                let dist = inner.at(&base)?;
                let mut buckets: BTreeMap<Structure, BTreeMap<Structure, Num>> = BTreeMap::new();
                for (w, p) in dist.table() {
                    buckets.entry(w.reduct(&observed)?).or_default().insert(w.clone(), p.clone());
                }
                let mut conditionals = BTreeMap::new();
                for (ev, table) in buckets {
                    let total = table.values().fold(Num::zero(), |a, p| a + p);
                    let table = table.into_iter().map(|(w, p)| (w, p / &total)).collect();
                    conditionals
                        .insert(ev.clone(), WorldDistribution::new(ev, dist.int_vocab().clone(), table)?);
                }
                cache.insert(base.clone(), conditionals);
            }
            cache[&base].get(evidence).cloned().ok_or_else(|| {
                Error::Regularity(format!("conditioning world has probability 0: {evidence}"))
            })
        })
    }

    /// Extend a family defined on canonical domains `{e1..en}` to arbitrary
    /// finite domains via the enumeration-order bijection. Requires
    /// exchangeability (checked up to `max_size` by the caller).
    pub fn canonical_extension(&self) -> Result<Family> {
        let inner = self.clone();
        Family::new(self.ext.clone(), self.int.clone(), move |base| {
            let canon: Vec<String> = (0..base.domain().len()).map(canonical_name).collect();
            let to_canon = crate::logic::ElementMap::new(
                base.domain().iter().cloned().zip(canon.iter().cloned()),
            )?;
            let canon_base = to_canon.apply_structure(base)?;
            let d = inner.at(&canon_base)?;
            d.map_elements(&to_canon.inverse())
        })
    }
}

/// Canonical element names used by `canonical_extension` and the checkers.
pub fn canonical_name(i: usize) -> String {
    format!("e{}", i + 1)
}
