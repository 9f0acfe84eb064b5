//! Relational Bayesian networks: probability formulas over atoms with
//! convex combinations and combiners, grounding to a Bayesian network, and
//! inference for the combination-function-free fragment.

use crate::error::{Error, Result};
use crate::family::{Family, WorldDistribution, DEFAULT_MAX_DOMAIN};
use crate::logic::{enumerate_extensions, QFFormula, Structure, TupleType, Vocabulary};
use crate::num::Num;
use itertools::Itertools;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombOp {
    ArithmeticMean,
    NoisyOr,
    Max,
}

/// A probability formula: a constant, an atom over formal variables, the
/// convex combination F1·F2 + (1−F1)·F3, or a combiner applied to the
/// groundings of its bound variables.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbFormula {
    Const(Num),
    Atom(String, Vec<String>),
    Mix(Box<ProbFormula>, Box<ProbFormula>, Box<ProbFormula>),
    Comb {
        op: CombOp,
        formulas: Vec<ProbFormula>,
        bound: Vec<String>,
    },
}

impl ProbFormula {
    pub fn constant(n: Num) -> Self {
        ProbFormula::Const(n)
    }

    pub fn atom(rel: &str, args: &[&str]) -> Self {
        ProbFormula::Atom(rel.to_string(), args.iter().map(|s| s.to_string()).collect())
    }

    pub fn mix(f1: ProbFormula, f2: ProbFormula, f3: ProbFormula) -> Self {
        ProbFormula::Mix(Box::new(f1), Box::new(f2), Box::new(f3))
    }

    fn free_vars(&self) -> BTreeSet<String> {
        match self {
            ProbFormula::Const(_) => BTreeSet::new(),
            ProbFormula::Atom(_, args) => args.iter().cloned().collect(),
            ProbFormula::Mix(a, b, c) => {
                let mut s = a.free_vars();
                s.extend(b.free_vars());
                s.extend(c.free_vars());
                s
            }
            ProbFormula::Comb { formulas, bound, .. } => {
                let mut s: BTreeSet<String> = BTreeSet::new();
                for f in formulas {
                    s.extend(f.free_vars());
                }
                for v in bound {
                    s.remove(v);
                }
                s
            }
        }
    }

    fn has_comb(&self) -> bool {
        match self {
            ProbFormula::Const(_) | ProbFormula::Atom(_, _) => false,
            ProbFormula::Mix(a, b, c) => a.has_comb() || b.has_comb() || c.has_comb(),
            ProbFormula::Comb { .. } => true,
        }
    }

    fn relations_used(&self, out: &mut BTreeMap<String, usize>) {
        match self {
            ProbFormula::Const(_) => {}
            ProbFormula::Atom(rel, args) => {
                out.insert(rel.clone(), args.len());
            }
            ProbFormula::Mix(a, b, c) => {
                a.relations_used(out);
                b.relations_used(out);
                c.relations_used(out);
            }
            ProbFormula::Comb { formulas, .. } => {
                for f in formulas {
                    f.relations_used(out);
                }
            }
        }
    }

    /// Ground atoms this formula can read, under the given assignment of its
    /// free variables (bound variables range over the whole domain).
    fn parents(
        &self,
        assignment: &BTreeMap<String, String>,
        domain: &[String],
        out: &mut BTreeSet<(String, Vec<String>)>,
    ) -> Result<()> {
        match self {
            ProbFormula::Const(_) => Ok(()),
            ProbFormula::Atom(rel, args) => {
                let t: Vec<String> = args
                    .iter()
                    .map(|v| {
                        assignment
                            .get(v)
                            .cloned()
                            .ok_or_else(|| Error::NotGround(format!("unbound variable {v}")))
                    })
                    .collect::<Result<_>>()?;
                out.insert((rel.clone(), t));
                Ok(())
            }
            ProbFormula::Mix(a, b, c) => {
                a.parents(assignment, domain, out)?;
                b.parents(assignment, domain, out)?;
                c.parents(assignment, domain, out)
            }
            ProbFormula::Comb { formulas, bound, .. } => {
                for tuple in (0..bound.len()).map(|_| domain.iter().cloned()).multi_cartesian_product() {
                    let mut inner = assignment.clone();
                    for (v, e) in bound.iter().zip(tuple) {
                        inner.insert(v.clone(), e);
                    }
                    for f in formulas {
                        f.parents(&inner, domain, out)?;
                    }
                }
                if bound.is_empty() {
                    for f in formulas {
                        f.parents(assignment, domain, out)?;
                    }
                }
                Ok(())
            }
        }
    }

    /// Value of the formula in a fully determined world.
    fn evaluate(&self, world: &Structure, assignment: &BTreeMap<String, String>) -> Result<Num> {
        match self {
            ProbFormula::Const(q) => Ok(q.clone()),
            ProbFormula::Atom(rel, args) => {
                let t: Vec<String> = args
                    .iter()
                    .map(|v| {
                        assignment
                            .get(v)
                            .cloned()
                            .ok_or_else(|| Error::NotGround(format!("unbound variable {v}")))
                    })
                    .collect::<Result<_>>()?;
                Ok(if world.holds(rel, &t)? { Num::one() } else { Num::zero() })
            }
            ProbFormula::Mix(a, b, c) => {
                let f1 = a.evaluate(world, assignment)?;
                let f2 = b.evaluate(world, assignment)?;
                let f3 = c.evaluate(world, assignment)?;
                Ok(f1.clone() * f2 + (Num::one() - f1) * f3)
            }
            ProbFormula::Comb { op, formulas, bound } => {
                let domain: Vec<String> = world.domain().to_vec();
                let mut values: Vec<Num> = Vec::new();
                if bound.is_empty() {
                    return Err(Error::Arity("combiner must bind at least one variable".into()));
                }
                for tuple in (0..bound.len()).map(|_| domain.iter().cloned()).multi_cartesian_product() {
                    let mut inner = assignment.clone();
                    for (v, e) in bound.iter().zip(tuple) {
                        inner.insert(v.clone(), e);
                    }
                    for f in formulas {
                        values.push(f.evaluate(world, &inner)?);
                    }
                }
                if values.is_empty() {
                    return Err(Error::Arity("combiner applied to an empty multiset".into()));
                }
                Ok(match op {
                    CombOp::ArithmeticMean => {
                        let sum = values.iter().fold(Num::zero(), |a, b| a + b);
                        sum / &Num::ratio(values.len() as i64, 1)
                    }
                    CombOp::NoisyOr => {
                        let miss = values.iter().fold(Num::one(), |a, v| a * (Num::one() - v));
                        Num::one() - miss
                    }
                    CombOp::Max => values
                        .into_iter()
                        .reduce(|a, b| if a.to_f64() >= b.to_f64() { a } else { b })
                        .unwrap(),
                })
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelDef {
    pub name: String,
    pub arity: usize,
    pub formula: ProbFormula,
}

/// A relational Bayesian network: each intensional relation carries a
/// probability formula over its formal variables x1..x_arity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Rbn {
    #[serde(default)]
    pub ext: BTreeMap<String, usize>,
    pub relations: Vec<RelDef>,
}

impl Rbn {
    pub fn ext_vocab(&self) -> Result<Vocabulary> {
        let mut v = Vocabulary::new();
        for (name, arity) in &self.ext {
            v.add_relation(name, *arity)?;
        }
        Ok(v)
    }

    pub fn int_vocab(&self) -> Result<Vocabulary> {
        let mut v = self.ext_vocab()?;
        for r in &self.relations {
            v.add_relation(&r.name, r.arity)?;
        }
        Ok(v)
    }

    fn formals(arity: usize) -> Vec<String> {
        (0..arity).map(|i| format!("x{}", i + 1)).collect()
    }

    /// Structural validation: free variables within formals, known
    /// relations, acyclic relation-level dependencies.
    pub fn validate(&self) -> Result<()> {
        let int = self.int_vocab()?;
        let int_defined: BTreeSet<&str> = self.relations.iter().map(|r| r.name.as_str()).collect();
        for r in &self.relations {
            if self.ext.contains_key(&r.name) {
                return Err(Error::Model(format!("extensional relation {} has a formula", r.name)));
            }
            let formals: BTreeSet<String> = Rbn::formals(r.arity).into_iter().collect();
            if !r.formula.free_vars().is_subset(&formals) {
                return Err(Error::NotGround(format!(
                    "formula for {} uses variables outside x1..x{}",
                    r.name, r.arity
                )));
            }
            let mut used = BTreeMap::new();
            r.formula.relations_used(&mut used);
            for (rel, arity) in used {
                match int.arity(&rel) {
                    Some(a) if a == arity => {}
                    Some(a) => {
                        return Err(Error::Arity(format!("{rel} used with arity {arity}, declared {a}")))
                    }
                    None => return Err(Error::UnknownSymbol(rel)),
                }
            }
        }
        // relation-level acyclicity
        let mut deps: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
        for r in &self.relations {
            let mut used = BTreeMap::new();
            r.formula.relations_used(&mut used);
            deps.insert(
                &r.name,
                used.into_keys().filter(|k| int_defined.contains(k.as_str())).collect(),
            );
        }
        let mut done: BTreeSet<String> = BTreeSet::new();
        while done.len() < deps.len() {
            let ready: Vec<String> = deps
                .iter()
                .filter(|(n, d)| !done.contains(**n) && d.iter().all(|x| done.contains(x)))
                .map(|(n, _)| n.to_string())
                .collect();
            if ready.is_empty() {
                return Err(Error::Cyclic("cyclic dependency among relation formulas".into()));
            }
            done.extend(ready);
        }
        Ok(())
    }

    pub fn check_comb_free(&self) -> bool {
        self.relations.iter().all(|r| !r.formula.has_comb())
    }

    /// Exact joint distribution of the ground Bayesian network over the
    /// extensions of `base`.
    pub fn ground_semantics(&self, base: &Structure) -> Result<WorldDistribution> {
        self.validate()?;
        self.check_ground_acyclic(base)?;
        let int = self.int_vocab()?;
        let mut table: BTreeMap<Structure, Num> = BTreeMap::new();
        for world in enumerate_extensions(base, &int, DEFAULT_MAX_DOMAIN)? {
            let mut p = Num::one();
            for r in &self.relations {
                for tuple in (0..r.arity).map(|_| base.domain().iter().cloned()).multi_cartesian_product()
                {
                    let assignment: BTreeMap<String, String> =
                        Rbn::formals(r.arity).into_iter().zip(tuple.iter().cloned()).collect();
                    let v = r.formula.evaluate(&world, &assignment)?;
                    let vf = v.to_f64();
                    if !(-1e-12..=1.0 + 1e-12).contains(&vf) {
                        return Err(Error::Model(format!(
                            "formula for {} evaluates to {v}, outside [0,1]",
                            r.name
                        )));
                    }
                    p = p * if world.holds(&r.name, &tuple)? { v } else { Num::one() - v };
                }
                if p.is_zero() {
                    break;
                }
            }
            if !p.is_zero() {
                table.insert(world, p);
            }
        }
        WorldDistribution::new(base.clone(), int, table)
    }

    fn check_ground_acyclic(&self, base: &Structure) -> Result<()> {
        let domain: Vec<String> = base.domain().to_vec();
        let mut parents: BTreeMap<(String, Vec<String>), BTreeSet<(String, Vec<String>)>> =
            BTreeMap::new();
        for r in &self.relations {
            for tuple in (0..r.arity).map(|_| domain.iter().cloned()).multi_cartesian_product() {
                let assignment: BTreeMap<String, String> =
                    Rbn::formals(r.arity).into_iter().zip(tuple.iter().cloned()).collect();
                let mut ps = BTreeSet::new();
                r.formula.parents(&assignment, &domain, &mut ps)?;
                ps.retain(|(rel, _)| !self.ext.contains_key(rel));
                parents.insert((r.name.clone(), tuple), ps);
            }
        }
        let mut done: BTreeSet<(String, Vec<String>)> = BTreeSet::new();
        while done.len() < parents.len() {
            let ready: Vec<(String, Vec<String>)> = parents
                .iter()
                .filter(|(n, d)| !done.contains(*n) && d.iter().all(|x| done.contains(x)))
                .map(|(n, _)| n.clone())
                .collect();
            if ready.is_empty() {
                return Err(Error::Cyclic("ground Bayesian network has a cycle".into()));
            }
            done.extend(ready);
        }
        Ok(())
    }

    /// Marginal of a query over X1..Xk for a tuple of the given extensional
    /// type: for combiner-free networks the formula for each atom reads only
    /// atoms over that atom's own arguments, so the computation closes over
    /// the realized type structure.
    pub fn lifted_marginal(&self, tuple_type: &TupleType, query: &QFFormula) -> Result<Num> {
        if !self.check_comb_free() {
            return Err(Error::Fragment("network contains a combination function".into()));
        }
        let (world, tuple) = tuple_type.realize()?;
        let base = world.reduct(&self.ext_vocab()?)?;
        let dist = self.ground_semantics(&base)?;
        let assignment: BTreeMap<String, String> =
            tuple.iter().enumerate().map(|(i, e)| (format!("X{}", i + 1), e.clone())).collect();
        let mut total = Num::zero();
        for (w, p) in dist.table() {
            if query.evaluate(w, &assignment)? {
                total = total + p;
            }
        }
        Ok(total)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Rbn> {
        let rbn: Rbn = serde_json::from_str(s)?;
        rbn.validate()?;
        Ok(rbn)
    }
}

impl Family {
    /// The family induced by grounding the network on each base structure.
    pub fn from_rbn(rbn: &Rbn) -> Result<Family> {
        rbn.validate()?;
        let r = rbn.clone();
        Family::new(rbn.ext_vocab()?, rbn.int_vocab()?, move |base| r.ground_semantics(base))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::canonical_name;
    use crate::logic::{parse_formula, parse_query};

    fn base(n: usize) -> Structure {
        Structure::new(Vocabulary::new(), (0..n).map(canonical_name).collect()).unwrap()
    }

    /// Two-level network: s fair coin; r mixes 0.7 / 0.2 on s.
    fn b1() -> Rbn {
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

    /// Mean-combiner network: r averages s over the whole domain.
    fn b2() -> Rbn {
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

    #[test]
    fn b1_marginal_is_045() {
        for n in 1..=3 {
            let d = b1().ground_semantics(&base(n)).unwrap();
            let q = parse_query("r(e1)").unwrap();
            assert_eq!(d.marginal(&q).unwrap(), Num::ratio(45, 100));
        }
    }

    #[test]
    fn b2_mean_keeps_marginal_but_correlates() {
        let d = b2().ground_semantics(&base(2)).unwrap();
        let q = parse_query("r(e1)").unwrap();
        assert_eq!(d.marginal(&q).unwrap(), Num::ratio(1, 2));
        let joint = d.marginal(&parse_query("r(e1), s(e1)").unwrap()).unwrap();
        // if independent this would be 1/4; the mean combiner ties them
        assert_eq!(joint, Num::ratio(3, 8));
    }

    #[test]
    fn comb_freeness() {
        assert!(b1().check_comb_free());
        assert!(!b2().check_comb_free());
        let empty = Rbn { ext: BTreeMap::new(), relations: vec![] };
        assert!(empty.check_comb_free());
    }

    #[test]
    fn lifted_marginal_constant_in_domain() {
        let rbn = b1();
        let t = TupleType::of(&base(1), &[canonical_name(0)], &Vocabulary::new()).unwrap();
        let lifted = rbn.lifted_marginal(&t, &parse_formula("r(X1)").unwrap()).unwrap();
        assert_eq!(lifted, Num::ratio(45, 100));
        let chain = rbn.lifted_marginal(&t, &parse_formula("r(X1) & s(X1)").unwrap()).unwrap();
        assert_eq!(chain, Num::ratio(35, 100));
        assert!(matches!(
            b2().lifted_marginal(&t, &parse_formula("r(X1)").unwrap()),
            Err(Error::Fragment(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let rbn = b1();
        let again = Rbn::from_json(&rbn.to_json()).unwrap();
        let d1 = rbn.ground_semantics(&base(2)).unwrap();
        let d2 = again.ground_semantics(&base(2)).unwrap();
        assert_eq!(d1.table(), d2.table());
    }

    #[test]
    fn cyclic_network_rejected() {
        let rbn = Rbn {
            ext: BTreeMap::new(),
            relations: vec![
                RelDef { name: "p".into(), arity: 1, formula: ProbFormula::atom("q", &["x1"]) },
                RelDef { name: "q".into(), arity: 1, formula: ProbFormula::atom("p", &["x1"]) },
            ],
        };
        assert!(matches!(rbn.validate(), Err(Error::Cyclic(_))));
    }
}
