//! Markov logic networks: weighted quantifier-free formulas with log-linear
//! semantics, σ-determinacy analysis, and domain-size-independent inference
//! for the σ-determinate fragment.

use crate::error::{Error, Result};
use crate::family::{Family, WorldDistribution};
use crate::logic::{enumerate_extensions, parse_formula, QFFormula, Structure, TupleType, Term, Vocabulary};
use crate::num::Num;
use itertools::Itertools;
use num_rational::BigRational;
use std::collections::BTreeMap;
use std::fmt;

/// A formula weight. `LnRat(r)` is the weight ln(r), which keeps the factor
/// e^(w·n) = r^n exact; `Real(w)` falls back to floats.
#[derive(Clone, Debug, PartialEq)]
pub enum Weight {
    LnRat(BigRational),
    Real(f64),
}

impl Weight {
    /// The multiplicative factor contributed by n true groundings.
    pub fn factor(&self, n: usize) -> Num {
        match self {
            Weight::LnRat(r) => Num::from_rational(r.clone()).pow(n),
            Weight::Real(w) => Num::float((w * n as f64).exp()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Weight::LnRat(r) => *r == BigRational::from_integer(1.into()),
            Weight::Real(w) => *w == 0.0,
        }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::LnRat(r) => write!(f, "ln({})", r),
            Weight::Real(w) => write!(f, "{w}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct WeightedFormula {
    pub weight: Weight,
    pub formula: QFFormula,
}

#[derive(Clone, Debug)]
pub struct Mln {
    pub formulas: Vec<WeightedFormula>,
    ext: Vocabulary,
    int: Vocabulary,
}

impl Mln {
    pub fn new(formulas: Vec<WeightedFormula>, ext: Vocabulary) -> Result<Mln> {
        let mut int = ext.clone();
        for wf in &formulas {
            for (rel, arity) in wf.formula.relations() {
                int.add_relation(&rel, arity)?;
            }
        }
        Ok(Mln { formulas, ext, int })
    }

    pub fn ext_vocab(&self) -> &Vocabulary {
        &self.ext
    }

    pub fn int_vocab(&self) -> &Vocabulary {
        &self.int
    }

    /// Number of true groundings of a formula in a world: all assignments of
    /// the formula's variables to domain elements, repetitions allowed.
    pub fn count_true_groundings(formula: &QFFormula, world: &Structure) -> Result<usize> {
        let vars: Vec<String> = formula.free_vars().into_iter().collect();
        let mut count = 0usize;
        for tuple in assignments(world.domain(), vars.len()) {
            let assignment: BTreeMap<String, String> = vars.iter().cloned().zip(tuple).collect();
            if formula.evaluate(world, &assignment)? {
                count += 1;
            }
        }
        Ok(count)
    }

    /// Unnormalized log-linear weight of a world.
    pub fn world_weight(&self, world: &Structure) -> Result<Num> {
        let mut w = Num::one();
        for wf in &self.formulas {
            let n = Mln::count_true_groundings(&wf.formula, world)?;
            w = w * wf.weight.factor(n);
        }
        Ok(w)
    }

    /// Exact distribution over the extensions of `base`: weights e^(Σ w_i
    /// n_i) normalized by the partition function.
    pub fn semantics(&self, base: &Structure) -> Result<WorldDistribution> {
        let worlds = enumerate_extensions(base, &self.int, crate::family::DEFAULT_MAX_DOMAIN)?;
        let mut table: BTreeMap<Structure, Num> = BTreeMap::new();
        let mut z = Num::zero();
        for w in worlds {
            let weight = self.world_weight(&w)?;
            z = z + weight.clone();
            table.insert(w, weight);
        }
        let table = table.into_iter().map(|(w, p)| (w, p / &z)).collect();
        WorldDistribution::new(base.clone(), self.int.clone(), table)
    }

    /// σ-determinacy: in every formula, all (non-equality) atoms carry
    /// exactly the same variable set. Returns the offending formula.
    pub fn check_sigma_determinate(&self) -> std::result::Result<(), WeightedFormula> {
        for wf in &self.formulas {
            let mut var_sets: Vec<std::collections::BTreeSet<String>> = Vec::new();
            collect_atom_var_sets(&wf.formula, &mut var_sets);
            if var_sets.iter().any(|s| s != &var_sets[0]) {
                return Err(wf.clone());
            }
        }
        Ok(())
    }

    /// Marginal of a query over X1..Xk for a tuple of the given extensional
    /// type, independent of any ambient domain: atoms group into independent
    /// blocks keyed by their exact argument set, and only blocks inside the
    /// tuple's elements touch the query, so the computation closes over the
    /// realized type structure.
    pub fn lifted_marginal(&self, tuple_type: &TupleType, query: &QFFormula) -> Result<Num> {
        if let Err(wf) = self.check_sigma_determinate() {
            return Err(Error::SigmaDeterminacy(format!(
                "formula mixes variable sets: {}",
                wf.formula
            )));
        }
        let (world, tuple) = tuple_type.realize()?;
        let base = world.reduct(&self.ext)?;
        let dist = self.semantics(&base)?;
        let assignment: BTreeMap<String, String> =
            tuple.iter().enumerate().map(|(i, e)| (format!("X{}", i + 1), e.clone())).collect();
        for v in query.free_vars() {
            if !assignment.contains_key(&v) {
                return Err(Error::Arity(format!("query variable {v} exceeds the tuple arity")));
            }
        }
        let mut total = Num::zero();
        for (w, p) in dist.table() {
            if query.evaluate(w, &assignment)? {
                total = total + p;
            }
        }
        Ok(total)
    }
}

fn collect_atom_var_sets(f: &QFFormula, out: &mut Vec<std::collections::BTreeSet<String>>) {
    match f {
        QFFormula::Atom(_, terms) => {
            out.push(
                terms
                    .iter()
                    .filter_map(|t| match t {
                        Term::Var(v) => Some(v.clone()),
                        Term::Const(_) => None,
                    })
                    .collect(),
            );
        }
        QFFormula::Not(g) => collect_atom_var_sets(g, out),
        QFFormula::And(g, h) | QFFormula::Or(g, h) => {
            collect_atom_var_sets(g, out);
            collect_atom_var_sets(h, out);
        }
        _ => {}
    }
}

fn assignments(domain: &[String], k: usize) -> Vec<Vec<String>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    (0..k).map(|_| domain.iter().cloned()).multi_cartesian_product().collect()
}

/// Parse the text format: one `weight<TAB>formula` per line (a run of spaces
/// also separates), `#` comments, optional `ext name/arity` lines. Weights
/// are decimals (float mode) or `ln(r)` with rational r (exact mode).
pub fn parse_mln(input: &str) -> Result<Mln> {
    let mut formulas = Vec::new();
    let mut ext = Vocabulary::new();
    for (lineno, raw) in input.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse { line: lineno + 1, col: 1, msg: msg.to_string() };
        if let Some(rest) = line.strip_prefix("ext ") {
            let (name, arity) = rest
                .trim()
                .split_once('/')
                .ok_or_else(|| err("expected `ext name/arity`"))?;
            let arity: usize = arity.trim().parse().map_err(|_| err("invalid arity"))?;
            ext.add_relation(name.trim(), arity)?;
            continue;
        }
        let (weight_text, formula_text) = match line.split_once('\t') {
            Some(pair) => pair,
            None => line.split_once(' ').ok_or_else(|| err("expected `weight<TAB>formula`"))?,
        };
        let weight = parse_weight(weight_text.trim()).ok_or_else(|| err("invalid weight"))?;
        let formula = parse_formula(formula_text.trim())?;
        formulas.push(WeightedFormula { weight, formula });
    }
    Mln::new(formulas, ext)
}

fn parse_weight(s: &str) -> Option<Weight> {
    if let Some(inner) = s.strip_prefix("ln(").and_then(|r| r.strip_suffix(')')) {
        let r = Num::parse_exact(inner.trim())?;
        let r = r.as_rational()?.clone();
        if r <= BigRational::from_integer(0.into()) {
            return None;
        }
        return Some(Weight::LnRat(r));
    }
    s.parse::<f64>().ok().filter(|w| w.is_finite()).map(Weight::Real)
}

impl fmt::Display for Mln {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, a) in self.ext.relations() {
            writeln!(f, "ext {r}/{a}")?;
        }
        for wf in &self.formulas {
            writeln!(f, "{}\t{}", wf.weight, wf.formula)?;
        }
        Ok(())
    }
}

impl Family {
    /// The log-linear family induced by an MLN.
    pub fn from_mln(mln: &Mln) -> Result<Family> {
        let m = mln.clone();
        Family::new(mln.ext.clone(), mln.int.clone(), move |base| m.semantics(base))
    }
}
