//! Stratified probabilistic logic programs: parsing, desugaring of
//! probabilistic clauses, exact distribution semantics, determinacy
//! analysis, and local-grounding inference for determinate programs.

use crate::error::{Error, Result};
use crate::family::{Family, WorldDistribution};
use crate::logic::lex::{lex, Cursor, Tok};
use crate::logic::{QFFormula, Structure, Term, Vocabulary};
use crate::num::Num;
use itertools::Itertools;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Components this large or smaller are enumerated outright; larger ones are
/// split by conditioning on a shared probabilistic fact.
const ENUM_LIMIT: usize = 12;

/// Ground atoms the exact solver will track jointly.
const TRACK_LIMIT: usize = 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PAtom {
    pub rel: String,
    pub args: Vec<Term>,
}

impl PAtom {
    fn vars(&self) -> BTreeSet<String> {
        self.args
            .iter()
            .filter_map(|t| match t {
                Term::Var(v) => Some(v.clone()),
                Term::Const(_) => None,
            })
            .collect()
    }
}

impl fmt::Display for PAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.rel, self.args.iter().map(|t| t.to_string()).join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Lit {
    Atom(PAtom, bool),
    Eq(Term, Term, bool),
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lit::Atom(a, true) => write!(f, "{a}"),
            Lit::Atom(a, false) => write!(f, "\\+{a}"),
            Lit::Eq(a, b, true) => write!(f, "{a} = {b}"),
            Lit::Eq(a, b, false) => write!(f, "{a} != {b}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub head: PAtom,
    pub body: Vec<Lit>,
}

impl Clause {
    fn vars(&self) -> BTreeSet<String> {
        let mut vs = self.head.vars();
        for l in &self.body {
            match l {
                Lit::Atom(a, _) => vs.extend(a.vars()),
                Lit::Eq(a, b, _) => {
                    for t in [a, b] {
                        if let Term::Var(v) = t {
                            vs.insert(v.clone());
                        }
                    }
                }
            }
        }
        vs
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.body.is_empty() {
            write!(f, "{}.", self.head)
        } else {
            write!(f, "{} :- {}.", self.head, self.body.iter().map(|l| l.to_string()).join(", "))
        }
    }
}

/// A stratified probabilistic logic program. Relations partition into
/// extensional (no head, no fact), probabilistic-fact, and derived (head)
/// relations; probabilistic clauses are sugar removed by `desugar`.
#[derive(Clone, Debug)]
pub struct Program {
    pub facts: Vec<(Num, PAtom)>,
    pub clauses: Vec<Clause>,
    pub prob_clauses: Vec<(Num, Clause)>,
    ext: Vocabulary,
    /// Relations of the source program (extensional, fact, and head) — the
    /// vocabulary the induced family is over.
    visible: Vocabulary,
    /// Fresh choice relations introduced by desugaring; marginalized away.
    hidden: BTreeSet<String>,
}

impl Program {
    pub fn ext_vocab(&self) -> &Vocabulary {
        &self.ext
    }

    pub fn visible_vocab(&self) -> &Vocabulary {
        &self.visible
    }

    /// All relations including hidden choice relations.
    fn full_vocab(&self) -> Result<Vocabulary> {
        let mut v = self.visible.clone();
        for (_, f) in &self.facts {
            v.add_relation(&f.rel, f.args.len())?;
        }
        for c in &self.clauses {
            v.add_relation(&c.head.rel, c.head.args.len())?;
        }
        Ok(v)
    }

    fn head_relations(&self) -> BTreeSet<String> {
        self.clauses
            .iter()
            .map(|c| c.head.rel.clone())
            .chain(self.prob_clauses.iter().map(|(_, c)| c.head.rel.clone()))
            .collect()
    }

    /// Replace each probabilistic clause `α :: H :- B` (over variables
    /// x1..xn) by a fresh fact `α :: u(x1..xn)` and the clause
    /// `H :- B, u(x1..xn)`.
    pub fn desugar(&self) -> Result<Program> {
        let mut out = self.clone();
        let used: BTreeSet<String> = self.full_vocab()?.relations().map(|(n, _)| n.to_string()).collect();
        let mut counter = 0usize;
        for (alpha, clause) in std::mem::take(&mut out.prob_clauses) {
            let mut name = format!("u_cl{counter}");
            while used.contains(&name) || out.hidden.contains(&name) {
                counter += 1;
                name = format!("u_cl{counter}");
            }
            counter += 1;
            let vars: Vec<String> = clause.vars().into_iter().collect();
            if vars.is_empty() {
                return Err(Error::Model(format!("probabilistic clause has no variables: {clause}")));
            }
            let choice = PAtom { rel: name.clone(), args: vars.iter().cloned().map(Term::Var).collect() };
            out.facts.push((alpha, choice.clone()));
            let mut body = clause.body;
            body.push(Lit::Atom(choice, true));
            out.clauses.push(Clause { head: clause.head, body });
            out.hidden.insert(name);
        }
        Ok(out)
    }

    /// Every body variable occurs in the head (checked after desugaring).
    pub fn check_determinate(&self) -> std::result::Result<(), Clause> {
        let de = match self.desugar() {
            Ok(p) => p,
            Err(_) => return Ok(()),
        };
        for c in &de.clauses {
            let head_vars = c.head.vars();
            if !c.vars().is_subset(&head_vars) {
                return Err(c.clone());
            }
        }
        Ok(())
    }

    /// Relation-level dependency graph with polarities; errors if some cycle
    /// passes through a negative edge.
    fn check_stratified(&self) -> Result<Vec<BTreeSet<String>>> {
        let heads = self.head_relations();
        let mut pos_edges: BTreeSet<(String, String)> = BTreeSet::new();
        let mut neg_edges: BTreeSet<(String, String)> = BTreeSet::new();
        let all_clauses =
            self.clauses.iter().chain(self.prob_clauses.iter().map(|(_, c)| c));
        for c in all_clauses {
            for l in &c.body {
                if let Lit::Atom(a, polarity) = l {
                    if heads.contains(&a.rel) {
                        let edge = (c.head.rel.clone(), a.rel.clone());
                        if *polarity {
                            pos_edges.insert(edge);
                        } else {
                            neg_edges.insert(edge);
                        }
                    }
                }
            }
        }
        // strongly connected components by repeated forward/backward closures
        let nodes: Vec<String> = heads.iter().cloned().collect();
        let succ = |r: &String| -> BTreeSet<String> {
            pos_edges
                .iter()
                .chain(neg_edges.iter())
                .filter(|(h, _)| h == r)
                .map(|(_, b)| b.clone())
                .collect()
        };
        let reach = |start: &String| -> BTreeSet<String> {
            let mut seen = BTreeSet::from([start.clone()]);
            let mut stack = vec![start.clone()];
            while let Some(r) = stack.pop() {
                for s in succ(&r) {
                    if seen.insert(s.clone()) {
                        stack.push(s);
                    }
                }
            }
            seen
        };
        let reach_map: BTreeMap<String, BTreeSet<String>> =
            nodes.iter().map(|n| (n.clone(), reach(n))).collect();
        let mut sccs: Vec<BTreeSet<String>> = Vec::new();
        let mut assigned: BTreeSet<String> = BTreeSet::new();
        for n in &nodes {
            if assigned.contains(n) {
                continue;
            }
            let scc: BTreeSet<String> = reach_map[n]
                .iter()
                .filter(|m| reach_map[*m].contains(n))
                .cloned()
                .collect();
            assigned.extend(scc.iter().cloned());
            sccs.push(scc);
        }
        for (h, b) in &neg_edges {
            let scc = sccs.iter().find(|s| s.contains(h)).unwrap();
            if scc.contains(b) {
                return Err(Error::Stratification(format!(
                    "negative dependency inside the cycle through {{{}}}",
                    scc.iter().join(", ")
                )));
            }
        }
        // order strata bottom-up: a stratum before everything that depends on it
        let mut ordered: Vec<BTreeSet<String>> = Vec::new();
        let mut placed: BTreeSet<String> = BTreeSet::new();
        while ordered.len() < sccs.len() {
            let mut progressed = false;
            for scc in &sccs {
                if scc.iter().all(|r| placed.contains(r)) {
                    continue;
                }
                let ready = scc.iter().all(|r| {
                    reach_map[r]
                        .iter()
                        .all(|d| scc.contains(d) || placed.contains(d))
                });
                if ready {
                    placed.extend(scc.iter().cloned());
                    ordered.push(scc.clone());
                    progressed = true;
                }
            }
            if !progressed {
                return Err(Error::Stratification("cyclic stratum order".into()));
            }
        }
        Ok(ordered)
    }

    fn validate(&self) -> Result<()> {
        let heads = self.head_relations();
        let mut fact_rels = BTreeSet::new();
        for (alpha, f) in &self.facts {
            let p = alpha.to_f64();
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Model(format!("fact probability {alpha} outside [0,1]")));
            }
            if heads.contains(&f.rel) {
                return Err(Error::Multiplicity(format!("{} occurs both as fact and clause head", f.rel)));
            }
            if !fact_rels.insert(f.rel.clone()) {
                return Err(Error::Multiplicity(format!("more than one probabilistic fact for {}", f.rel)));
            }
            if self.ext.arity(&f.rel).is_some() {
                return Err(Error::Model(format!("extensional relation {} has a probabilistic fact", f.rel)));
            }
        }
        for (r, _) in self.ext.relations() {
            if heads.contains(r) {
                return Err(Error::Model(format!("extensional relation {r} occurs in a clause head")));
            }
        }
        self.check_stratified()?;
        Ok(())
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, a) in self.ext.relations() {
            writeln!(f, "ext {r}/{a}.")?;
        }
        for (alpha, fact) in &self.facts {
            writeln!(f, "{alpha} :: {fact}.")?;
        }
        for (alpha, c) in &self.prob_clauses {
            writeln!(f, "{alpha} :: {c}")?;
        }
        for c in &self.clauses {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

fn parse_term(cur: &mut Cursor) -> Result<Term> {
    match cur.next().map(|t| t.tok) {
        Some(Tok::Var(v)) => Ok(Term::Var(v)),
        Some(Tok::Ident(c)) => Ok(Term::Const(c)),
        Some(Tok::Number(n)) => Ok(Term::Const(n)),
        _ => Err(cur.error("expected term")),
    }
}

fn parse_atom(cur: &mut Cursor) -> Result<PAtom> {
    let rel = match cur.next().map(|t| t.tok) {
        Some(Tok::Ident(s)) => s,
        _ => return Err(cur.error("expected relation name")),
    };
    cur.expect(&Tok::LParen, "`(`")?;
    let mut args = Vec::new();
    loop {
        args.push(parse_term(cur)?);
        if cur.eat(&Tok::Comma) {
            continue;
        }
        cur.expect(&Tok::RParen, "`)`")?;
        break;
    }
    Ok(PAtom { rel, args })
}

fn parse_literal(cur: &mut Cursor) -> Result<Lit> {
    if cur.eat(&Tok::NafNot) || cur.eat(&Tok::Not) {
        return Ok(Lit::Atom(parse_atom(cur)?, false));
    }
    // either an atom or an (in)equality between terms
    if matches!(cur.peek(), Some(Tok::Ident(_))) {
        // lookahead: ident followed by `(` is an atom
        let save = cur.clone_pos();
        let t = parse_term(cur)?;
        if matches!(cur.peek(), Some(Tok::LParen)) {
            cur.restore(save);
            return Ok(Lit::Atom(parse_atom(cur)?, true));
        }
        if cur.eat(&Tok::Eq) {
            return Ok(Lit::Eq(t, parse_term(cur)?, true));
        }
        cur.expect(&Tok::Neq, "`=` or `!=`")?;
        return Ok(Lit::Eq(t, parse_term(cur)?, false));
    }
    let t = parse_term(cur)?;
    if cur.eat(&Tok::Eq) {
        Ok(Lit::Eq(t, parse_term(cur)?, true))
    } else {
        cur.expect(&Tok::Neq, "`=` or `!=`")?;
        Ok(Lit::Eq(t, parse_term(cur)?, false))
    }
}

fn parse_body(cur: &mut Cursor) -> Result<Vec<Lit>> {
    let mut body = vec![parse_literal(cur)?];
    while cur.eat(&Tok::Comma) {
        body.push(parse_literal(cur)?);
    }
    Ok(body)
}

/// Parse a program: `ext r/2.` declarations, probabilistic facts
/// `α :: r(X).`, clauses `h(X) :- b(X), X != Y.`, and probabilistic clauses
/// `α :: h(X) :- b(X).`. Relations occurring in no head and no fact are
/// extensional.
pub fn parse_program(input: &str) -> Result<Program> {
    let toks = lex(input)?;
    let mut cur = Cursor::new(toks);
    let mut facts = Vec::new();
    let mut clauses = Vec::new();
    let mut prob_clauses = Vec::new();
    let mut declared_ext: Vec<(String, usize)> = Vec::new();
    while !cur.at_end() {
        if matches!(cur.peek(), Some(Tok::Ident(s)) if s == "ext") {
            cur.next();
            let name = match cur.next().map(|t| t.tok) {
                Some(Tok::Ident(s)) => s,
                _ => return Err(cur.error("expected relation name")),
            };
            cur.expect(&Tok::Slash, "`/`")?;
            let arity = match cur.next().map(|t| t.tok) {
                Some(Tok::Number(n)) => n.parse::<usize>().map_err(|_| cur.error("expected arity"))?,
                _ => return Err(cur.error("expected arity")),
            };
            cur.expect(&Tok::Dot, "`.`")?;
            declared_ext.push((name, arity));
            continue;
        }
        if matches!(cur.peek(), Some(Tok::Number(_))) {
            // probabilistic fact or clause
            let alpha = parse_probability(&mut cur)?;
            cur.expect(&Tok::ColonColon, "`::`")?;
            let head = parse_atom(&mut cur)?;
            if cur.eat(&Tok::ColonDash) {
                let body = parse_body(&mut cur)?;
                cur.expect(&Tok::Dot, "`.`")?;
                prob_clauses.push((alpha, Clause { head, body }));
            } else {
                cur.expect(&Tok::Dot, "`.`")?;
                facts.push((alpha, head));
            }
            continue;
        }
        let head = parse_atom(&mut cur)?;
        if cur.eat(&Tok::ColonDash) {
            let body = parse_body(&mut cur)?;
            cur.expect(&Tok::Dot, "`.`")?;
            clauses.push(Clause { head, body });
        } else {
            cur.expect(&Tok::Dot, "`.`")?;
            clauses.push(Clause { head, body: Vec::new() });
        }
    }

    // vocabulary bookkeeping
    let mut arities: BTreeMap<String, usize> = BTreeMap::new();
    let mut note = |rel: &str, arity: usize| -> Result<()> {
        if let Some(&a) = arities.get(rel) {
            if a != arity {
                return Err(Error::Arity(format!("relation {rel} used with arities {a} and {arity}")));
            }
        }
        arities.insert(rel.to_string(), arity);
        Ok(())
    };
    let mut body_only: BTreeSet<String> = BTreeSet::new();
    let mut heads_or_facts: BTreeSet<String> = BTreeSet::new();
    for (_, f) in &facts {
        note(&f.rel, f.args.len())?;
        heads_or_facts.insert(f.rel.clone());
    }
    for c in clauses.iter().chain(prob_clauses.iter().map(|(_, c)| c)) {
        note(&c.head.rel, c.head.args.len())?;
        heads_or_facts.insert(c.head.rel.clone());
        for l in &c.body {
            if let Lit::Atom(a, _) = l {
                note(&a.rel, a.args.len())?;
                body_only.insert(a.rel.clone());
            }
        }
    }
    let mut ext = Vocabulary::new();
    for (name, arity) in &declared_ext {
        note(name, *arity)?;
        ext.add_relation(name, *arity)?;
    }
    for r in body_only.difference(&heads_or_facts) {
        ext.add_relation(r, arities[r])?;
    }
    let mut visible = ext.clone();
    for r in &heads_or_facts {
        visible.add_relation(r, arities[r])?;
    }
    let program = Program { facts, clauses, prob_clauses, ext, visible, hidden: BTreeSet::new() };
    program.validate()?;
    Ok(program)
}

fn parse_probability(cur: &mut Cursor) -> Result<Num> {
    let first = match cur.next().map(|t| t.tok) {
        Some(Tok::Number(n)) => n,
        _ => return Err(cur.error("expected probability")),
    };
    if cur.eat(&Tok::Slash) {
        let denom = match cur.next().map(|t| t.tok) {
            Some(Tok::Number(n)) => n,
            _ => return Err(cur.error("expected denominator")),
        };
        Num::parse_exact(&format!("{first}/{denom}")).ok_or_else(|| cur.error("invalid probability"))
    } else {
        Num::parse_exact(&first).ok_or_else(|| cur.error("invalid probability"))
    }
}

// ---------------------------------------------------------------------------
// Grounding and the exact solver
// ---------------------------------------------------------------------------

type GAtom = (String, Vec<String>);

/// Ground program with atoms interned as indices: the fixpoint and the
/// solver's per-assignment work stay free of string comparisons.
struct Grounding {
    atoms: Vec<GAtom>,
    index: BTreeMap<GAtom, usize>,
    /// Ground probabilistic facts (atom id) with their probabilities.
    facts: Vec<(usize, Num)>,
    /// Ground clause instances with extensional and (in)equality literals
    /// already resolved; bodies mention fact and derived atoms only.
    clauses: Vec<(usize, Vec<(usize, bool)>)>,
    /// Clause indices grouped by bottom-up stratum.
    strata: Vec<Vec<usize>>,
}

fn ground_atom(atom: &PAtom, assignment: &BTreeMap<String, String>) -> Result<GAtom> {
    let args = atom
        .args
        .iter()
        .map(|t| match t {
            Term::Var(v) => assignment
                .get(v)
                .cloned()
                .ok_or_else(|| Error::NotGround(format!("variable {v}"))),
            Term::Const(c) => Ok(c.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((atom.rel.clone(), args))
}

fn ground(program: &Program, base: &Structure) -> Result<Grounding> {
    if !program.prob_clauses.is_empty() {
        return Err(Error::Model("ground a desugared program".into()));
    }
    let mut atoms: Vec<GAtom> = Vec::new();
    let mut index: BTreeMap<GAtom, usize> = BTreeMap::new();
    let mut intern = |a: GAtom| -> usize {
        if let Some(&i) = index.get(&a) {
            return i;
        }
        atoms.push(a.clone());
        index.insert(a, atoms.len() - 1);
        atoms.len() - 1
    };
    let domain: Vec<String> = base.domain().to_vec();
    let mut facts = Vec::new();
    for (alpha, f) in &program.facts {
        let vars: Vec<String> = f.vars().into_iter().collect();
        for tuple in tuples(&domain, vars.len()) {
            let assignment: BTreeMap<String, String> = vars.iter().cloned().zip(tuple).collect();
            facts.push((intern(ground_atom(f, &assignment)?), alpha.clone()));
        }
    }
    let ext_rels: BTreeSet<String> = program.ext.relations().map(|(n, _)| n.to_string()).collect();
    let mut clauses = Vec::new();
    for c in &program.clauses {
        let vars: Vec<String> = c.vars().into_iter().collect();
        'instance: for tuple in tuples(&domain, vars.len()) {
            let assignment: BTreeMap<String, String> = vars.iter().cloned().zip(tuple).collect();
            let mut body = Vec::new();
            for l in &c.body {
                match l {
                    Lit::Eq(a, b, polarity) => {
                        let ga = ground_term(a, &assignment)?;
                        let gb = ground_term(b, &assignment)?;
                        if (ga == gb) != *polarity {
                            continue 'instance;
                        }
                    }
                    Lit::Atom(a, polarity) => {
                        let g = ground_atom(a, &assignment)?;
                        if ext_rels.contains(&g.0) {
                            if base.holds(&g.0, &g.1)? != *polarity {
                                continue 'instance;
                            }
                        } else {
                            body.push((intern(g), *polarity));
                        }
                    }
                }
            }
            clauses.push((intern(ground_atom(&c.head, &assignment)?), body));
        }
    }
    let strata = program
        .check_stratified()?
        .iter()
        .map(|rels| {
            (0..clauses.len()).filter(|&i| rels.contains(&atoms[clauses[i].0].0)).collect()
        })
        .collect();
    Ok(Grounding { atoms, index, facts, clauses, strata })
}

fn ground_term(t: &Term, assignment: &BTreeMap<String, String>) -> Result<String> {
    match t {
        Term::Var(v) => {
            assignment.get(v).cloned().ok_or_else(|| Error::NotGround(format!("variable {v}")))
        }
        Term::Const(c) => Ok(c.clone()),
    }
}

/// All length-k tuples over the domain (one empty tuple when k = 0).
fn tuples(domain: &[String], k: usize) -> Vec<Vec<String>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    (0..k).map(|_| domain.iter().cloned()).multi_cartesian_product().collect()
}

impl Grounding {
    fn atom_id(&self, a: &GAtom) -> Option<usize> {
        self.index.get(a).copied()
    }

    /// Least fixpoint of the clauses given a truth assignment to the ground
    /// facts, stratum by stratum. `truths` holds one slot per interned atom.
    fn fixpoint(&self, truths: &mut Vec<bool>) {
        for stratum in &self.strata {
            loop {
                let mut changed = false;
                for &i in stratum {
                    let (head, body) = &self.clauses[i];
                    if truths[*head] {
                        continue;
                    }
                    if body.iter().all(|&(a, pol)| truths[a] == pol) {
                        truths[*head] = true;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
        }
    }

    /// For each atom id, the set of ground facts (by index) it can depend
    /// on, transitively through the clause graph.
    fn dependencies(&self) -> Vec<BTreeSet<usize>> {
        let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.atoms.len()];
        for (i, (a, _)) in self.facts.iter().enumerate() {
            deps[*a].insert(i);
        }
        loop {
            let mut changed = false;
            for (head, body) in &self.clauses {
                let mut acc = deps[*head].clone();
                let before = acc.len();
                for (a, _) in body {
                    acc.extend(deps[*a].iter().copied());
                }
                if acc.len() != before {
                    deps[*head] = acc;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        deps
    }
}

/// Exact distribution over the joint truth values of `tracked` ground atoms.
struct Solver<'a> {
    grounding: &'a Grounding,
    deps: Vec<BTreeSet<usize>>,
}

impl<'a> Solver<'a> {
    fn new(grounding: &'a Grounding) -> Self {
        let deps = grounding.dependencies();
        Solver { grounding, deps }
    }

    fn fact_weight(&self, index: usize, value: bool) -> Num {
        let alpha = &self.grounding.facts[index].1;
        if value {
            alpha.clone()
        } else {
            Num::one() - alpha
        }
    }

    fn tracked_deps(
        &self,
        tracked: &[Option<usize>],
        fixed: &BTreeMap<usize, bool>,
    ) -> Vec<BTreeSet<usize>> {
        tracked
            .iter()
            .map(|t| match t {
                // atoms absent from the grounding are never derivable
                None => BTreeSet::new(),
                Some(id) => {
                    self.deps[*id].iter().copied().filter(|i| !fixed.contains_key(i)).collect()
                }
            })
            .collect()
    }

    /// The joint over `tracked` ground atoms (by string), factorized over
    /// independent groups of probabilistic facts.
    fn solve(
        &self,
        tracked: &[GAtom],
        fixed: &mut BTreeMap<usize, bool>,
    ) -> Result<BTreeMap<Vec<bool>, Num>> {
        let ids: Vec<Option<usize>> = tracked.iter().map(|t| self.grounding.atom_id(t)).collect();
        self.solve_ids(&ids, fixed)
    }

    /// Joint distribution over the tracked atoms, recursively factorized
    /// over independent groups of probabilistic facts.
    fn solve_ids(
        &self,
        tracked: &[Option<usize>],
        fixed: &mut BTreeMap<usize, bool>,
    ) -> Result<BTreeMap<Vec<bool>, Num>> {
        let tdeps = self.tracked_deps(tracked, fixed);
        // connected components of unfixed facts, linked through tracked atoms
        let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
        fn find(parent: &mut BTreeMap<usize, usize>, x: usize) -> usize {
            let p = *parent.get(&x).unwrap_or(&x);
            if p == x {
                return x;
            }
            let root = find(parent, p);
            parent.insert(x, root);
            root
        }
        for d in &tdeps {
            let mut it = d.iter();
            if let Some(&first) = it.next() {
                let r0 = find(&mut parent, first);
                for &f in it {
                    let r = find(&mut parent, f);
                    parent.insert(r, r0);
                }
            }
        }
        let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let all_facts: BTreeSet<usize> = tdeps.iter().flatten().copied().collect();
        for f in all_facts {
            components.entry(find(&mut parent, f)).or_default().push(f);
        }
        // each component owns the tracked positions fully dependent on it;
        // positions with empty deps are deterministic given `fixed`
        let constant_positions: Vec<usize> =
            (0..tracked.len()).filter(|&i| tdeps[i].is_empty()).collect();
        let mut factor_dists: Vec<(Vec<usize>, BTreeMap<Vec<bool>, Num>)> = Vec::new();
        if !constant_positions.is_empty() {
            let mut truths = self.fixed_truths(fixed);
            self.grounding.fixpoint(&mut truths);
            let values: Vec<bool> = constant_positions
                .iter()
                .map(|&i| tracked[i].is_some_and(|id| truths[id]))
                .collect();
            factor_dists.push((constant_positions, BTreeMap::from([(values, Num::one())])));
        }
        for comp in components.values() {
            let positions: Vec<usize> = (0..tracked.len())
                .filter(|&i| !tdeps[i].is_empty() && comp.contains(tdeps[i].iter().next().unwrap()))
                .collect();
            let sub_tracked: Vec<Option<usize>> = positions.iter().map(|&i| tracked[i]).collect();
            let dist = if comp.len() <= ENUM_LIMIT {
                self.enumerate_component(comp, &sub_tracked, fixed)?
            } else {
                // condition on the fact shared by the most tracked atoms
                let branch_fact = *comp
                    .iter()
                    .max_by_key(|f| tdeps.iter().filter(|d| d.contains(f)).count())
                    .unwrap();
                let mut dist: BTreeMap<Vec<bool>, Num> = BTreeMap::new();
                for value in [true, false] {
                    fixed.insert(branch_fact, value);
                    let sub = self.solve_ids(&sub_tracked, fixed)?;
                    fixed.remove(&branch_fact);
                    let w = self.fact_weight(branch_fact, value);
                    for (k, p) in sub {
                        let slot = dist.entry(k).or_insert_with(Num::zero);
                        *slot = slot.clone() + w.clone() * p;
                    }
                }
                dist
            };
            factor_dists.push((positions, dist));
        }
        // outer product of the factors, reassembled in tracked order
        let mut joint: BTreeMap<Vec<bool>, Num> =
            BTreeMap::from([(vec![false; tracked.len()], Num::one())]);
        for (positions, dist) in factor_dists {
            let mut next: BTreeMap<Vec<bool>, Num> = BTreeMap::new();
            for (key, p) in &joint {
                for (sub, q) in &dist {
                    let mut k = key.clone();
                    for (slot, &v) in positions.iter().zip(sub) {
                        k[*slot] = v;
                    }
                    let slot = next.entry(k).or_insert_with(Num::zero);
                    *slot = slot.clone() + p.clone() * q;
                }
            }
            joint = next;
        }
        Ok(joint)
    }

    /// Like `solve_ids`, but sums out every ground probabilistic fact
    /// instead of restricting to the tracked atoms' dependency cones: the
    /// cost profile of grounded inference without query-locality. Facts are
    /// linked when they co-occur in any derived atom's dependency set.
    fn solve_exhaustive(
        &self,
        tracked: &[Option<usize>],
        fixed: &mut BTreeMap<usize, bool>,
    ) -> Result<BTreeMap<Vec<bool>, Num>> {
        let tdeps = self.tracked_deps(tracked, fixed);
        let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
        fn find(parent: &mut BTreeMap<usize, usize>, x: usize) -> usize {
            let p = *parent.get(&x).unwrap_or(&x);
            if p == x {
                return x;
            }
            let root = find(parent, p);
            parent.insert(x, root);
            root
        }
        for d in &self.deps {
            let mut it = d.iter().filter(|i| !fixed.contains_key(i));
            if let Some(&first) = it.next() {
                let r0 = find(&mut parent, first);
                for &f in it {
                    let r = find(&mut parent, f);
                    parent.insert(r, r0);
                }
            }
        }
        let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for f in 0..self.grounding.facts.len() {
            if !fixed.contains_key(&f) {
                components.entry(find(&mut parent, f)).or_default().push(f);
            }
        }
        let constant_positions: Vec<usize> =
            (0..tracked.len()).filter(|&i| tdeps[i].is_empty()).collect();
        let mut factor_dists: Vec<(Vec<usize>, BTreeMap<Vec<bool>, Num>)> = Vec::new();
        if !constant_positions.is_empty() {
            let mut truths = self.fixed_truths(fixed);
            self.grounding.fixpoint(&mut truths);
            let values: Vec<bool> = constant_positions
                .iter()
                .map(|&i| tracked[i].is_some_and(|id| truths[id]))
                .collect();
            factor_dists.push((constant_positions, BTreeMap::from([(values, Num::one())])));
        }
        for comp in components.values() {
            let positions: Vec<usize> = (0..tracked.len())
                .filter(|&i| !tdeps[i].is_empty() && comp.contains(tdeps[i].iter().next().unwrap()))
                .collect();
            let sub_tracked: Vec<Option<usize>> = positions.iter().map(|&i| tracked[i]).collect();
            let dist = if comp.len() <= ENUM_LIMIT {
                self.enumerate_component(comp, &sub_tracked, fixed)?
            } else {
                // condition on the fact linked to the most derived atoms
                let branch_fact = *comp
                    .iter()
                    .max_by_key(|f| self.deps.iter().filter(|d| d.contains(f)).count())
                    .unwrap();
                let mut dist: BTreeMap<Vec<bool>, Num> = BTreeMap::new();
                for value in [true, false] {
                    fixed.insert(branch_fact, value);
                    let sub = self.solve_exhaustive(&sub_tracked, fixed)?;
                    fixed.remove(&branch_fact);
                    let w = self.fact_weight(branch_fact, value);
                    for (k, p) in sub {
                        let slot = dist.entry(k).or_insert_with(Num::zero);
                        *slot = slot.clone() + w.clone() * p;
                    }
                }
                dist
            };
            factor_dists.push((positions, dist));
        }
        let mut joint: BTreeMap<Vec<bool>, Num> =
            BTreeMap::from([(vec![false; tracked.len()], Num::one())]);
        for (positions, dist) in factor_dists {
            let mut next: BTreeMap<Vec<bool>, Num> = BTreeMap::new();
            for (key, p) in &joint {
                for (sub, q) in &dist {
                    let mut k = key.clone();
                    for (slot, &v) in positions.iter().zip(sub) {
                        k[*slot] = v;
                    }
                    let slot = next.entry(k).or_insert_with(Num::zero);
                    *slot = slot.clone() + p.clone() * q;
                }
            }
            joint = next;
        }
        Ok(joint)
    }

    /// One truth slot per interned atom, with the fixed facts filled in.
    fn fixed_truths(&self, fixed: &BTreeMap<usize, bool>) -> Vec<bool> {
        let mut truths = vec![false; self.grounding.atoms.len()];
        for (i, v) in fixed {
            if *v {
                truths[self.grounding.facts[*i].0] = true;
            }
        }
        truths
    }

    fn enumerate_component(
        &self,
        comp: &[usize],
        tracked: &[Option<usize>],
        fixed: &BTreeMap<usize, bool>,
    ) -> Result<BTreeMap<Vec<bool>, Num>> {
        let base_truths = self.fixed_truths(fixed);
        let mut dist: BTreeMap<Vec<bool>, Num> = BTreeMap::new();
        for mask in 0u64..(1u64 << comp.len()) {
            let mut weight = Num::one();
            let mut truths = base_truths.clone();
            for (bit, &f) in comp.iter().enumerate() {
                let value = mask & (1 << bit) != 0;
                weight = weight * self.fact_weight(f, value);
                if value {
                    truths[self.grounding.facts[f].0] = true;
                }
            }
            if weight.is_zero() {
                continue;
            }
            self.grounding.fixpoint(&mut truths);
            let key: Vec<bool> = tracked.iter().map(|t| t.is_some_and(|id| truths[id])).collect();
            let slot = dist.entry(key).or_insert_with(Num::zero);
            *slot = slot.clone() + weight;
        }
        Ok(dist)
    }
}

/// All ground atoms of the visible non-extensional relations on the base
/// domain.
fn visible_int_atoms(program: &Program, base: &Structure) -> Vec<GAtom> {
    let mut out = Vec::new();
    for (name, arity) in program.visible.relations() {
        if program.ext.arity(name).is_some() {
            continue;
        }
        for tuple in tuples(base.domain(), arity) {
            out.push((name.to_string(), tuple));
        }
    }
    out
}

/// Exact distribution over the extensions of `base` by the program's
/// visible intensional relations (fresh desugaring relations marginalized).
pub fn semantics(program: &Program, base: &Structure) -> Result<WorldDistribution> {
    let de = program.desugar()?;
    let tracked = visible_int_atoms(&de, base);
    if tracked.len() > TRACK_LIMIT {
        return Err(Error::Capacity(format!("{} ground atoms to tabulate", tracked.len())));
    }
    let grounding = ground(&de, base)?;
    let solver = Solver::new(&grounding);
    let joint = solver.solve(&tracked, &mut BTreeMap::new())?;
    let template = base.expand_vocab(&de.visible)?;
    let mut table: BTreeMap<Structure, Num> = BTreeMap::new();
    for (key, p) in joint {
        if p.is_zero() {
            continue;
        }
        let mut w = template.clone();
        for (atom, &v) in tracked.iter().zip(&key) {
            if v {
                w.add_fact(&atom.0, atom.1.clone())?;
            }
        }
        let slot = table.entry(w).or_insert_with(Num::zero);
        *slot = slot.clone() + p;
    }
    WorldDistribution::new(base.clone(), de.visible.clone(), table)
}

/// Marginal probability of a ground query, computed by tracking only the
/// query's ground atoms (domain enumeration never materializes the full
/// world table).
pub fn marginal(program: &Program, base: &Structure, query: &QFFormula) -> Result<Num> {
    let de = program.desugar()?;
    let ext_rels: BTreeSet<String> = de.ext.relations().map(|(n, _)| n.to_string()).collect();
    let mut tracked: Vec<GAtom> = Vec::new();
    collect_ground_atoms(query, &mut tracked)?;
    tracked.retain(|(r, _)| !ext_rels.contains(r));
    tracked.sort();
    tracked.dedup();
    let grounding = ground(&de, base)?;
    let solver = Solver::new(&grounding);
    let joint = solver.solve(&tracked, &mut BTreeMap::new())?;
    let mut template = base.clone();
    let full = de.full_vocab()?;
    template = template.expand_vocab(&full)?;
    let mut total = Num::zero();
    for (key, p) in joint {
        let mut w = template.clone();
        for (atom, &v) in tracked.iter().zip(&key) {
            if v {
                w.add_fact(&atom.0, atom.1.clone())?;
            }
        }
        if query.evaluate_ground(&w)? {
            total = total + p;
        }
    }
    Ok(total)
}

/// Marginal of a ground query computed by summing out every ground
/// probabilistic fact of the whole grounded program — no restriction to the
/// query's dependency cone. Same answers as `marginal`; the cost grows with
/// the domain the way grounded inference does without query-locality, so
/// this is the baseline the benchmarks compare lifted inference against.
pub fn exhaustive_marginal(program: &Program, base: &Structure, query: &QFFormula) -> Result<Num> {
    let de = program.desugar()?;
    let ext_rels: BTreeSet<String> = de.ext.relations().map(|(n, _)| n.to_string()).collect();
    let mut tracked: Vec<GAtom> = Vec::new();
    collect_ground_atoms(query, &mut tracked)?;
    tracked.retain(|(r, _)| !ext_rels.contains(r));
    tracked.sort();
    tracked.dedup();
    let grounding = ground(&de, base)?;
    let solver = Solver::new(&grounding);
    let ids: Vec<Option<usize>> = tracked.iter().map(|t| grounding.atom_id(t)).collect();
    let joint = solver.solve_exhaustive(&ids, &mut BTreeMap::new())?;
    let mut template = base.clone();
    let full = de.full_vocab()?;
    template = template.expand_vocab(&full)?;
    let mut total = Num::zero();
    for (key, p) in joint {
        let mut w = template.clone();
        for (atom, &v) in tracked.iter().zip(&key) {
            if v {
                w.add_fact(&atom.0, atom.1.clone())?;
            }
        }
        if query.evaluate_ground(&w)? {
            total = total + p;
        }
    }
    Ok(total)
}

fn collect_ground_atoms(f: &QFFormula, out: &mut Vec<GAtom>) -> Result<()> {
    match f {
        QFFormula::True => Ok(()),
        QFFormula::Eq(_, _) => Ok(()),
        QFFormula::Atom(rel, terms) => {
            let args = terms
                .iter()
                .map(|t| match t {
                    Term::Const(c) => Ok(c.clone()),
                    Term::Var(v) => Err(Error::NotGround(format!("variable {v} in query"))),
                })
                .collect::<Result<Vec<_>>>()?;
            out.push((rel.clone(), args));
            Ok(())
        }
        QFFormula::Not(g) => collect_ground_atoms(g, out),
        QFFormula::And(g, h) | QFFormula::Or(g, h) => {
            collect_ground_atoms(g, out)?;
            collect_ground_atoms(h, out)
        }
    }
}

/// Local-grounding inference for determinate programs: the marginal of a
/// ground query computed on the substructure generated by the query's
/// elements, valid on any extension of the base.
pub fn lifted_marginal(program: &Program, base: &Structure, query: &QFFormula) -> Result<Num> {
    if let Err(clause) = program.check_determinate() {
        return Err(Error::Determinacy(format!("clause is not determinate: {clause}")));
    }
    let mut elements: BTreeSet<String> = BTreeSet::new();
    let mut atoms = Vec::new();
    collect_ground_atoms(query, &mut atoms)?;
    for (_, args) in &atoms {
        elements.extend(args.iter().cloned());
    }
    collect_equality_elements(query, &mut elements);
    let fragment = base.generated_substructure(&elements)?;
    marginal(program, &fragment, query)
}

fn collect_equality_elements(f: &QFFormula, out: &mut BTreeSet<String>) {
    match f {
        QFFormula::Eq(a, b) => {
            for t in [a, b] {
                if let Term::Const(c) = t {
                    out.insert(c.clone());
                }
            }
        }
        QFFormula::Not(g) => collect_equality_elements(g, out),
        QFFormula::And(g, h) | QFFormula::Or(g, h) => {
            collect_equality_elements(g, out);
            collect_equality_elements(h, out);
        }
        _ => {}
    }
}

impl Family {
    /// The family induced by a program: extensional structures to exact
    /// world distributions over the program's visible vocabulary.
    pub fn from_plp(program: &Program) -> Result<Family> {
        let p = program.clone();
        Family::new(program.ext_vocab().clone(), program.visible_vocab().clone(), move |base| {
            semantics(&p, base)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::canonical_name;
    use crate::logic::parse_query;

    fn base(n: usize, vocab: &Vocabulary) -> Structure {
        Structure::new(vocab.clone(), (0..n).map(canonical_name).collect()).unwrap()
    }

    const PI1: &str = "0.5 :: u(X,Y).\n0.5 :: s(X).\nr(X,Y) :- s(X), s(Y), u(X,Y).\n";
    const PI2: &str = "0.5 :: u(X,Y).\n0.5 :: r(X,Y).\ns(X) :- r(X,Y), u(X,Y).\n";

    #[test]
    fn pi1_marginal_is_eighth() {
        let p = parse_program(PI1).unwrap();
        let b = base(2, p.ext_vocab());
        let d = semantics(&p, &b).unwrap();
        let q = parse_query("r(e1,e2)").unwrap();
        assert_eq!(d.marginal(&q).unwrap(), Num::ratio(1, 8));
        assert_eq!(marginal(&p, &b, &q).unwrap(), Num::ratio(1, 8));
    }

    #[test]
    fn pi2_single_element() {
        let p = parse_program(PI2).unwrap();
        let b = base(1, p.ext_vocab());
        let q = parse_query("s(e1)").unwrap();
        assert_eq!(marginal(&p, &b, &q).unwrap(), Num::ratio(1, 4));
    }

    #[test]
    fn exhaustive_marginal_agrees_with_the_cone_restricted_solver() {
        for src in [PI1, PI2, "0.5 :: c1(X).\nc0(X) :- \\+c1(X).\n"] {
            let p = parse_program(src).unwrap();
            let b = base(3, p.ext_vocab());
            for q in ["s(e1)", "c0(e2)", "r(e1,e2)"] {
                let query = parse_query(q).unwrap();
                if query.relations().keys().any(|r| p.visible_vocab().arity(r).is_none()) {
                    continue;
                }
                assert_eq!(
                    exhaustive_marginal(&p, &b, &query).unwrap(),
                    marginal(&p, &b, &query).unwrap(),
                    "{src} / {q}"
                );
            }
        }
    }

    #[test]
    fn determinacy_classification() {
        assert!(parse_program(PI1).unwrap().check_determinate().is_ok());
        assert!(parse_program(PI2).unwrap().check_determinate().is_err());
    }

    #[test]
    fn sure_fact_holds_everywhere() {
        let p = parse_program("1 :: q(X).\n").unwrap();
        let b = base(2, p.ext_vocab());
        let d = semantics(&p, &b).unwrap();
        let q = parse_query("q(e1), q(e2)").unwrap();
        assert_eq!(d.marginal(&q).unwrap(), Num::one());
    }

    #[test]
    fn negative_cycle_is_rejected() {
        let src = "0.5 :: u(X).\np(X) :- \\+q(X), u(X).\nq(X) :- p(X).\n";
        assert!(matches!(parse_program(src), Err(Error::Stratification(_))));
    }

    #[test]
    fn duplicate_fact_is_rejected() {
        let src = "0.5 :: u(X).\n0.25 :: u(X).\n";
        assert!(matches!(parse_program(src), Err(Error::Multiplicity(_))));
    }

    #[test]
    fn desugar_moves_probability_to_choice_fact() {
        let src = "0.5 :: s(X) :- r(X,Y).\n";
        let p = parse_program(src).unwrap();
        let de = p.desugar().unwrap();
        assert_eq!(de.prob_clauses.len(), 0);
        assert_eq!(de.facts.len(), 1);
        assert_eq!(de.facts[0].1.args.len(), 2);
        assert_eq!(de.clauses.len(), 1);
        assert_eq!(de.clauses[0].body.len(), 2);
    }

    #[test]
    fn ext_relations_inferred_and_declared() {
        let src = "ext e/2.\nr(X) :- c(X).\n0.5 :: c(X).\nout(X) :- r(X), q(X).\n";
        let p = parse_program(src).unwrap();
        assert_eq!(p.ext_vocab().arity("e"), Some(2));
        assert_eq!(p.ext_vocab().arity("q"), Some(1));
        assert_eq!(p.ext_vocab().arity("r"), None);
    }

    #[test]
    fn stratified_negation_fixpoint() {
        // c0 is the complement of a probabilistic c1
        let src = "0.5 :: c1(X).\nc0(X) :- \\+c1(X).\n";
        let p = parse_program(src).unwrap();
        let b = base(1, p.ext_vocab());
        let d = semantics(&p, &b).unwrap();
        let q = parse_query("c0(e1), \\+c1(e1)").unwrap();
        assert_eq!(d.marginal(&q).unwrap(), Num::ratio(1, 2));
        let both = parse_query("c0(e1), c1(e1)").unwrap();
        assert_eq!(d.marginal(&both).unwrap(), Num::zero());
    }
}
