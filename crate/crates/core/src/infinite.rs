//! Exchangeable distributions over a countably infinite domain, handled
//! operationally: elements are revealed one at a time, extensional data is
//! either supplied or sampled uniformly per ascending tuple (almost surely
//! the generic structure), and intensional data is derived lazily from
//! deterministic keyed uniforms, so every prefix is a consistent truncation
//! of every longer one.

use crate::ahk::{keyed_u64, AhkModel};
use crate::error::{Error, Result};
use crate::family::WorldDistribution;
use crate::logic::{Datum, QFFormula, Structure, Vocabulary};
use crate::num::Num;
use crate::plp::Program;
use itertools::Itertools;

/// Name-space markers so extensional and intensional draws never reuse a key.
const EXT_MARK: &str = "\u{1}ext";
const INT_MARK: &str = "\u{1}int";

/// The finite-domain model whose projective family the stream extends.
#[derive(Clone, Debug)]
pub enum StreamModel {
    Ahk(AhkModel),
    Plp(Program),
}

impl StreamModel {
    pub fn ext_vocab(&self) -> &Vocabulary {
        match self {
            StreamModel::Ahk(m) => m.ext_vocab(),
            StreamModel::Plp(p) => p.ext_vocab(),
        }
    }

    pub fn int_vocab(&self) -> &Vocabulary {
        match self {
            StreamModel::Ahk(m) => m.int_vocab(),
            StreamModel::Plp(p) => p.visible_vocab(),
        }
    }

    fn distribution(&self, base: &Structure) -> Result<WorldDistribution> {
        match self {
            StreamModel::Ahk(m) => m.induced_distribution(base),
            StreamModel::Plp(p) => crate::plp::semantics(p, base),
        }
    }
}

/// A lazily revealed infinite world: the committed extensional prefix, plus
/// an optional committed intensional world over an initial segment of it.
#[derive(Clone, Debug)]
pub struct StreamState {
    model: Option<StreamModel>,
    seed: u64,
    ext: Vocabulary,
    int: Vocabulary,
    ext_prefix: Structure,
    committed: Option<Structure>,
}

/// Uniform index below `len` from a raw 64-bit draw.
fn keyed_index(seed: u64, key: &[String], len: usize) -> usize {
    ((u128::from(keyed_u64(seed, key)) * len as u128) >> 64) as usize
}

impl StreamState {
    /// A stream whose extensional layer is sampled uniformly per ascending
    /// tuple — with probability one the generic structure over `ext`.
    pub fn generic_sampler(ext: Vocabulary, seed: u64) -> Result<StreamState> {
        if !ext.is_relational() {
            return Err(Error::Constants("generic sampling needs a relational vocabulary".into()));
        }
        Ok(StreamState {
            model: None,
            seed,
            int: ext.clone(),
            ext_prefix: Structure::new(ext.clone(), Vec::new())?,
            ext,
            committed: None,
        })
    }

    /// A stream of the model's intensional data over a generic or externally
    /// supplied extensional layer.
    pub fn with_model(model: StreamModel, seed: u64) -> Result<StreamState> {
        let ext = model.ext_vocab().clone();
        if !ext.is_relational() {
            return Err(Error::Constants("streaming needs a relational extensional vocabulary".into()));
        }
        Ok(StreamState {
            int: model.int_vocab().clone(),
            model: Some(model),
            seed,
            ext_prefix: Structure::new(ext.clone(), Vec::new())?,
            ext,
            committed: None,
        })
    }

    pub fn ext_prefix(&self) -> &Structure {
        &self.ext_prefix
    }

    pub fn int_vocab(&self) -> &Vocabulary {
        &self.int
    }

    pub fn committed(&self) -> Option<&Structure> {
        self.committed.as_ref()
    }

    pub fn revealed(&self) -> &[String] {
        self.ext_prefix.domain()
    }

    /// Reveal one element. With `facts`, the extensional data involving it
    /// is taken as given (every fact must mention it — older data is
    /// immutable); without, the data of each new ascending tuple is drawn
    /// uniformly among the arity-m extensional data, keyed by (seed, tuple).
    pub fn add_element(
        &mut self,
        name: &str,
        facts: Option<&[(String, Vec<String>)]>,
    ) -> Result<()> {
        if self.ext_prefix.has_element(name) {
            return Err(Error::Model(format!("element {name} is already revealed")));
        }
        let mut domain: Vec<String> = self.ext_prefix.domain().to_vec();
        domain.push(name.to_string());
        let old = domain.len() - 1;
        let mut next = Structure::new(self.ext.clone(), domain.clone())?;
        for (rel, _) in self.ext.relations() {
            for args in self.ext_prefix.facts(rel) {
                next.add_fact(rel, args.clone())?;
            }
        }
        match facts {
            Some(fs) => {
                for (rel, args) in fs {
                    if self.ext.arity(rel).is_none() {
                        return Err(Error::UnknownSymbol(rel.clone()));
                    }
                    if !args.iter().any(|a| a == name) {
                        return Err(Error::Model(format!(
                            "fact {rel}({}) does not mention the new element",
                            args.join(",")
                        )));
                    }
                    next.add_fact(rel, args.clone())?;
                }
            }
            None => {
                for m in 1..=self.ext.max_arity().max(1) {
                    if m - 1 > old {
                        continue;
                    }
                    let data = Datum::enumerate(&self.ext, m)?;
                    for combo in (0..old).combinations(m - 1) {
                        let mut tuple: Vec<String> =
                            combo.iter().map(|&i| domain[i].clone()).collect();
                        tuple.push(name.to_string());
                        let mut key = vec![EXT_MARK.to_string()];
                        key.extend(tuple.iter().cloned());
                        let idx = keyed_index(self.seed, &key, data.len());
                        data[idx].apply_to(&mut next, &tuple)?;
                    }
                }
            }
        }
        self.ext_prefix = next;
        Ok(())
    }

    /// Reveal `k` generically sampled elements with canonical names.
    pub fn extend(&mut self, k: usize) -> Result<()> {
        for _ in 0..k {
            let name = crate::family::canonical_name(self.ext_prefix.domain().len());
            self.add_element(&name, None)?;
        }
        Ok(())
    }

    /// The distribution over intensional worlds on the revealed prefix,
    /// conditioned on whatever intensional data is already committed.
    fn prefix_distribution(&self) -> Result<WorldDistribution> {
        let model = match &self.model {
            Some(m) => m,
            None => return WorldDistribution::point_mass(self.ext_prefix.clone()),
        };
        let dist = model.distribution(&self.ext_prefix)?;
        match &self.committed {
            None => Ok(dist),
            Some(c) => {
                let mut table = std::collections::BTreeMap::new();
                let mut total = Num::zero();
                for (w, p) in dist.table() {
                    if w.extends(c)? {
                        total = total + p;
                        table.insert(w.clone(), p.clone());
                    }
                }
                if total.is_zero() {
                    return Err(Error::Regularity("committed data has probability zero".into()));
                }
                for p in table.values_mut() {
                    *p = p.clone() / total.clone();
                }
                WorldDistribution::new(dist.base().clone(), dist.int_vocab().clone(), table)
            }
        }
    }

    /// Probability, under the infinite-domain distribution, that the world
    /// satisfies a ground query over revealed elements: exactly the finite
    /// projective marginal on the prefix, given the committed data.
    pub fn prefix_marginal(&self, query: &QFFormula) -> Result<Num> {
        if !query.free_vars().is_empty() {
            return Err(Error::NotGround("prefix queries must be ground".into()));
        }
        self.prefix_distribution()?.marginal(query)
    }

    /// Commit and return the intensional world on the current prefix.
    /// Derived from keyed uniforms, so a later, longer reveal truncates to
    /// this exact world.
    pub fn reveal_world(&mut self) -> Result<Structure> {
        let world = match &self.model {
            None => self.ext_prefix.clone(),
            Some(StreamModel::Ahk(m)) => m.sampler(&self.ext_prefix)?.sample(self.seed)?,
            Some(StreamModel::Plp(p)) => {
                // chain one conditional draw per element so prefixes agree
                let family = crate::family::Family::from_plp(p)?;
                let domain = self.ext_prefix.domain().to_vec();
                let start = self.committed.as_ref().map_or(0, |c| c.domain().len());
                let mut committed = self.committed.clone();
                for k in start + 1..=domain.len() {
                    let base = self.ext_prefix.with_domain_order(&domain)?;
                    let base = sub_prefix(&base, k)?;
                    let dist = family.at(&base)?;
                    let mut worlds: Vec<(&Structure, f64)> = Vec::new();
                    let mut total = 0.0;
                    for (w, p) in dist.table() {
                        if committed.as_ref().map_or(Ok(true), |c| w.extends(c))? {
                            total += p.to_f64();
                            worlds.push((w, p.to_f64()));
                        }
                    }
                    if worlds.is_empty() {
                        return Err(Error::Regularity("committed data has probability zero".into()));
                    }
                    let key = vec![INT_MARK.to_string(), domain[k - 1].clone()];
                    let u = keyed_u64(self.seed, &key) as f64 / 2f64.powi(64) * total;
                    let mut acc = 0.0;
                    let mut chosen = worlds[worlds.len() - 1].0;
                    for (w, p) in &worlds {
                        acc += p;
                        if u < acc {
                            chosen = w;
                            break;
                        }
                    }
                    committed = Some(chosen.clone());
                }
                committed.expect("at least the empty prefix")
            }
        };
        self.committed = Some(world.clone());
        Ok(world)
    }
}

/// The induced substructure on the first k elements of the prefix.
fn sub_prefix(base: &Structure, k: usize) -> Result<Structure> {
    let domain: Vec<String> = base.domain()[..k].to_vec();
    let mut s = Structure::new(base.vocab().clone(), domain.clone())?;
    for (rel, _) in base.vocab().relations() {
        for args in base.facts(rel) {
            if args.iter().all(|a| domain.contains(a)) {
                s.add_fact(rel, args.clone())?;
            }
        }
    }
    Ok(s)
}
