//! Quantifier-free formulas and their evaluation in finite structures.

use crate::error::{Error, Result};
use crate::logic::lex::{lex, Cursor, Tok};
use crate::logic::structure::Structure;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum QFFormula {
    True,
    Atom(String, Vec<Term>),
    Eq(Term, Term),
    Not(Box<QFFormula>),
    And(Box<QFFormula>, Box<QFFormula>),
    Or(Box<QFFormula>, Box<QFFormula>),
}

impl QFFormula {
    pub fn atom(rel: &str, terms: Vec<Term>) -> Self {
        QFFormula::Atom(rel.to_string(), terms)
    }

    pub fn and(self, other: QFFormula) -> Self {
        QFFormula::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: QFFormula) -> Self {
        QFFormula::Or(Box::new(self), Box::new(other))
    }

    pub fn negate(self) -> Self {
        QFFormula::Not(Box::new(self))
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        fn go(f: &QFFormula, out: &mut BTreeSet<String>) {
            match f {
                QFFormula::True => {}
                QFFormula::Atom(_, terms) => {
                    for t in terms {
                        if let Term::Var(v) = t {
                            out.insert(v.clone());
                        }
                    }
                }
                QFFormula::Eq(a, b) => {
                    for t in [a, b] {
                        if let Term::Var(v) = t {
                            out.insert(v.clone());
                        }
                    }
                }
                QFFormula::Not(g) => go(g, out),
                QFFormula::And(g, h) | QFFormula::Or(g, h) => {
                    go(g, out);
                    go(h, out);
                }
            }
        }
        let mut out = BTreeSet::new();
        go(self, &mut out);
        out
    }

    /// Relation symbols mentioned, with their observed arities.
    pub fn relations(&self) -> BTreeMap<String, usize> {
        fn go(f: &QFFormula, out: &mut BTreeMap<String, usize>) {
            match f {
                QFFormula::Atom(r, terms) => {
                    out.insert(r.clone(), terms.len());
                }
                QFFormula::Not(g) => go(g, out),
                QFFormula::And(g, h) | QFFormula::Or(g, h) => {
                    go(g, out);
                    go(h, out);
                }
                _ => {}
            }
        }
        let mut out = BTreeMap::new();
        go(self, &mut out);
        out
    }

    /// Evaluate under a variable assignment. Constant terms resolve via the
    /// structure's constant interpretations, falling back to domain elements
    /// named literally.
    pub fn evaluate(&self, world: &Structure, assignment: &BTreeMap<String, String>) -> Result<bool> {
        let resolve = |t: &Term| -> Result<String> {
            match t {
                Term::Var(v) => assignment
                    .get(v)
                    .cloned()
                    .ok_or_else(|| Error::NotGround(format!("variable {v} is unassigned"))),
                Term::Const(c) => {
                    if let Some(e) = world.constant(c) {
                        Ok(e.to_string())
                    } else if world.has_element(c) {
                        Ok(c.clone())
                    } else {
                        Err(Error::UnknownSymbol(c.clone()))
                    }
                }
            }
        };
        match self {
            QFFormula::True => Ok(true),
            QFFormula::Atom(r, terms) => {
                let args: Vec<String> = terms.iter().map(resolve).collect::<Result<_>>()?;
                world.holds(r, &args)
            }
            QFFormula::Eq(a, b) => Ok(resolve(a)? == resolve(b)?),
            QFFormula::Not(g) => Ok(!g.evaluate(world, assignment)?),
            QFFormula::And(g, h) => Ok(g.evaluate(world, assignment)? && h.evaluate(world, assignment)?),
            QFFormula::Or(g, h) => Ok(g.evaluate(world, assignment)? || h.evaluate(world, assignment)?),
        }
    }

    /// Evaluate a ground formula (no variables).
    pub fn evaluate_ground(&self, world: &Structure) -> Result<bool> {
        self.evaluate(world, &BTreeMap::new())
    }
}

impl fmt::Display for QFFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(x: &QFFormula, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
            match x {
                QFFormula::True => write!(f, "true"),
                QFFormula::Atom(r, terms) => {
                    write!(f, "{r}(")?;
                    for (i, t) in terms.iter().enumerate() {
                        if i > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{t}")?;
                    }
                    write!(f, ")")
                }
                QFFormula::Eq(a, b) => write!(f, "{a} = {b}"),
                QFFormula::Not(g) => {
                    write!(f, "!")?;
                    go(g, f, 3)
                }
                QFFormula::And(g, h) => {
                    if prec > 2 {
                        write!(f, "(")?;
                    }
                    go(g, f, 2)?;
                    write!(f, " & ")?;
                    go(h, f, 2)?;
                    if prec > 2 {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
                QFFormula::Or(g, h) => {
                    if prec > 1 {
                        write!(f, "(")?;
                    }
                    go(g, f, 1)?;
                    write!(f, " | ")?;
                    go(h, f, 1)?;
                    if prec > 1 {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
            }
        }
        go(self, f, 0)
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

fn parse_primary(cur: &mut Cursor) -> Result<QFFormula> {
    if cur.eat(&Tok::Not) || cur.eat(&Tok::NafNot) {
        return Ok(parse_primary(cur)?.negate());
    }
    if cur.eat(&Tok::LParen) {
        let f = parse_or(cur)?;
        cur.expect(&Tok::RParen, "`)`")?;
        return Ok(f);
    }
    // atom `r(t,...)` or bare term followed by = / !=
    let start = parse_term(cur)?;
    if let Term::Const(name) = &start {
        if name == "true" {
            return Ok(QFFormula::True);
        }
        if cur.eat(&Tok::LParen) {
            let mut terms = Vec::new();
            loop {
                terms.push(parse_term(cur)?);
                if cur.eat(&Tok::Comma) {
                    continue;
                }
                cur.expect(&Tok::RParen, "`)`")?;
                break;
            }
            return Ok(QFFormula::Atom(name.clone(), terms));
        }
    }
    if cur.eat(&Tok::Eq) {
        let rhs = parse_term(cur)?;
        Ok(QFFormula::Eq(start, rhs))
    } else if cur.eat(&Tok::Neq) {
        let rhs = parse_term(cur)?;
        Ok(QFFormula::Eq(start, rhs).negate())
    } else {
        Err(cur.error("expected `(`, `=`, or `!=`"))
    }
}

fn parse_and(cur: &mut Cursor) -> Result<QFFormula> {
    let mut f = parse_primary(cur)?;
    while cur.eat(&Tok::And) {
        f = f.and(parse_primary(cur)?);
    }
    Ok(f)
}

fn parse_or(cur: &mut Cursor) -> Result<QFFormula> {
    let mut f = parse_and(cur)?;
    while cur.eat(&Tok::Or) {
        f = f.or(parse_and(cur)?);
    }
    Ok(f)
}

/// Parse a quantifier-free formula: `!` binds tighter than `&`, which binds
/// tighter than `|`; `=` and `!=` between terms; uppercase names are
/// variables.
pub fn parse_formula(input: &str) -> Result<QFFormula> {
    let toks = lex(input)?;
    let mut cur = Cursor::new(toks);
    let f = parse_or(&mut cur)?;
    if !cur.at_end() {
        return Err(cur.error("trailing input after formula"));
    }
    Ok(f)
}

/// Parse a query: comma-separated literals, read as a conjunction.
/// `\+` and `!` both negate; terms support `=` / `!=`.
pub fn parse_query(input: &str) -> Result<QFFormula> {
    let toks = lex(input)?;
    let mut cur = Cursor::new(toks);
    let mut f = parse_or(&mut cur)?;
    while cur.eat(&Tok::Comma) {
        f = f.and(parse_or(&mut cur)?);
    }
    cur.eat(&Tok::Dot);
    if !cur.at_end() {
        return Err(cur.error("trailing input after query"));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::structure::Vocabulary;

    #[test]
    fn parse_and_display_round_trip() {
        let f = parse_formula("r(X) & !q(X,Y) | X = a").unwrap();
        let g = parse_formula(&f.to_string()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn evaluates_against_structure() {
        let vocab = Vocabulary::with_relations(&[("r", 1)]);
        let mut w = Structure::new(vocab, vec!["a".into(), "b".into()]).unwrap();
        w.add_fact("r", vec!["a".into()]).unwrap();
        let f = parse_formula("r(a) & !r(b) & a != b").unwrap();
        assert!(f.evaluate_ground(&w).unwrap());
    }

    #[test]
    fn query_commas_conjoin() {
        let f = parse_query("r(X), \\+ q(X), X != Y").unwrap();
        assert_eq!(f.free_vars().len(), 2);
        assert_eq!(f.relations().len(), 2);
    }
}
