//! Declarative record filters.
//!
//! Grammar (keywords are case-insensitive):
//!
//! ```text
//! predicate := clause ("AND" clause)*
//! clause    := "TRUE" | "FALSE"
//!            | field "IS" ["NOT"] "MISSING"
//!            | field op literal
//!            | ["NOT"] group
//! op        := "=" | "==" | "!=" | "<" | "<=" | ">" | ">="
//! literal   := number | 'quoted' | "quoted" | bare-word
//! ```
//!
//! Covariates are stored as strings and parsed as numbers only when a numeric
//! comparison needs it. A missing or non-numeric value fails every comparison.

use crate::error::{Error, Result};
use crate::population::Population;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
enum Clause {
    Const(bool),
    Missing { field: String, negate: bool },
    Compare { field: String, op: Op, literal: String },
    Group { name: String, negate: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    clauses: Vec<Clause>,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Quoted(String),
    Op(Op),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '\'' || c == '"' {
            let end = chars[i + 1..]
                .iter()
                .position(|&d| d == c)
                .ok_or_else(|| Error::PredicateSyntax("unterminated string".into()))?;
            out.push(Token::Quoted(chars[i + 1..i + 1 + end].iter().collect()));
            i += end + 2;
        } else if "=!<>".contains(c) {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let (op, len) = match two.as_str() {
                "==" => (Op::Eq, 2),
                "!=" => (Op::Ne, 2),
                "<=" => (Op::Le, 2),
                ">=" => (Op::Ge, 2),
                _ => match c {
                    '=' => (Op::Eq, 1),
                    '<' => (Op::Lt, 1),
                    '>' => (Op::Gt, 1),
                    _ => return Err(Error::PredicateSyntax(format!("unexpected `{c}`"))),
                },
            };
            out.push(Token::Op(op));
            i += len;
        } else {
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && !"=!<>'\"".contains(chars[i]) {
                i += 1;
            }
            out.push(Token::Word(chars[start..i].iter().collect()));
        }
    }
    Ok(out)
}

fn is_kw(tok: Option<&Token>, kw: &str) -> bool {
    matches!(tok, Some(Token::Word(w)) if w.eq_ignore_ascii_case(kw))
}

impl Predicate {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = tokenize(src)?;
        if tokens.is_empty() {
            return Err(Error::PredicateSyntax("empty predicate".into()));
        }
        let mut clauses = Vec::new();
        let mut pos = 0;
        loop {
            let (clause, next) = Self::clause(&tokens, pos)?;
            clauses.push(clause);
            pos = next;
            if pos == tokens.len() {
                break;
            }
            if !is_kw(tokens.get(pos), "AND") {
                return Err(Error::PredicateSyntax(format!("expected AND at token {}", pos + 1)));
            }
            pos += 1;
        }
        Ok(Predicate { clauses })
    }

    fn clause(t: &[Token], pos: usize) -> Result<(Clause, usize)> {
        let word = match t.get(pos) {
            Some(Token::Word(w)) => w.clone(),
            other => {
                return Err(Error::PredicateSyntax(format!(
                    "expected a field name, found {other:?}"
                )))
            }
        };
        if word.eq_ignore_ascii_case("TRUE") {
            return Ok((Clause::Const(true), pos + 1));
        }
        if word.eq_ignore_ascii_case("FALSE") {
            return Ok((Clause::Const(false), pos + 1));
        }
        if word.eq_ignore_ascii_case("NOT") {
            return match t.get(pos + 1) {
                Some(Token::Word(name)) => Ok((
                    Clause::Group {
                        name: name.clone(),
                        negate: true,
                    },
                    pos + 2,
                )),
                _ => Err(Error::PredicateSyntax("NOT must precede a group name".into())),
            };
        }
        if is_kw(t.get(pos + 1), "IS") {
            let negate = is_kw(t.get(pos + 2), "NOT");
            let at = pos + 2 + negate as usize;
            if !is_kw(t.get(at), "MISSING") {
                return Err(Error::PredicateSyntax("expected MISSING after IS".into()));
            }
            return Ok((Clause::Missing { field: word, negate }, at + 1));
        }
        if let Some(Token::Op(op)) = t.get(pos + 1) {
            let literal = match t.get(pos + 2) {
                Some(Token::Word(w)) | Some(Token::Quoted(w)) => w.clone(),
                _ => return Err(Error::PredicateSyntax(format!("missing literal after `{word}`"))),
            };
            return Ok((
                Clause::Compare {
                    field: word,
                    op: *op,
                    literal,
                },
                pos + 3,
            ));
        }
        Ok((
            Clause::Group {
                name: word,
                negate: false,
            },
            pos + 1,
        ))
    }

    /// Fails with `UnknownField` if any clause names a column the population lacks.
    pub fn check_fields(&self, pop: &Population) -> Result<()> {
        for c in &self.clauses {
            match c {
                Clause::Const(_) => {}
                Clause::Missing { field, .. } | Clause::Compare { field, .. } => {
                    if pop.covariate(field).is_none() {
                        return Err(Error::UnknownField(field.clone()));
                    }
                }
                Clause::Group { name, .. } => {
                    if pop.group(name).is_none() {
                        return Err(Error::UnknownField(name.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Evaluates on record `i`. Callers must run [`check_fields`](Self::check_fields) first.
    pub fn eval(&self, pop: &Population, i: usize) -> bool {
        self.clauses.iter().all(|c| match c {
            Clause::Const(b) => *b,
            Clause::Missing { field, negate } => {
                let missing = pop.covariate(field).is_some_and(|col| col[i].is_none());
                missing != *negate
            }
            Clause::Group { name, negate } => pop.group(name).is_some_and(|col| col[i]) != *negate,
            Clause::Compare { field, op, literal } => {
                let Some(value) = pop.covariate(field).and_then(|col| col[i].as_deref()) else {
                    return false;
                };
                compare(value, *op, literal)
            }
        })
    }
}

fn compare(value: &str, op: Op, literal: &str) -> bool {
    let numeric = literal.parse::<f64>().ok().zip(value.trim().parse::<f64>().ok());
    match (op, numeric) {
        (Op::Eq, Some((l, v))) => v == l,
        (Op::Ne, Some((l, v))) => v != l,
        (Op::Eq, None) => value == literal,
        (Op::Ne, None) => value != literal,
        (_, None) => false,
        (Op::Lt, Some((l, v))) => v < l,
        (Op::Le, Some((l, v))) => v <= l,
        (Op::Gt, Some((l, v))) => v > l,
        (Op::Ge, Some((l, v))) => v >= l,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{covariate_mask, Direction};

    fn fixture() -> Population {
        let s = |v: &str| Some(v.to_string());
        Population::labeled(vec![0.0; 5], vec![0.0; 5], Direction::HigherIsRisk)
            .unwrap()
            .with_covariate("age", vec![s("30"), s("40"), s("50"), s("abc"), s("36")])
            .unwrap()
            .with_covariate("last_job", vec![None, None, s("clerk"), None, None])
            .unwrap()
            .with_group("east", vec![true, false, true, false, true])
            .unwrap()
    }

    #[test]
    fn conjunction_with_missing_test() {
        let pop = fixture();
        let m = covariate_mask(&pop, "age > 35 AND last_job IS MISSING").unwrap();
        assert_eq!(m.indices().collect::<Vec<_>>(), vec![1, 4]);
    }

    #[test]
    fn constants() {
        let pop = fixture();
        assert_eq!(covariate_mask(&pop, "TRUE").unwrap().count(), 5);
        assert_eq!(covariate_mask(&pop, "age > 1000").unwrap().count(), 0);
        assert_eq!(covariate_mask(&pop, "false").unwrap().count(), 0);
    }

    #[test]
    fn string_equality_groups_and_negation() {
        let pop = fixture();
        let m = covariate_mask(&pop, "last_job = 'clerk'").unwrap();
        assert_eq!(m.indices().collect::<Vec<_>>(), vec![2]);
        let m = covariate_mask(&pop, "last_job IS NOT MISSING").unwrap();
        assert_eq!(m.indices().collect::<Vec<_>>(), vec![2]);
        let m = covariate_mask(&pop, "east and age >= 36").unwrap();
        assert_eq!(m.indices().collect::<Vec<_>>(), vec![2, 4]);
        let m = covariate_mask(&pop, "NOT east").unwrap();
        assert_eq!(m.indices().collect::<Vec<_>>(), vec![1, 3]);
        let m = covariate_mask(&pop, "age != 30").unwrap();
        assert_eq!(m.indices().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn unknown_field_and_syntax() {
        let pop = fixture();
        assert_eq!(
            covariate_mask(&pop, "height > 2"),
            Err(Error::UnknownField("height".into()))
        );
        assert_eq!(covariate_mask(&pop, "west"), Err(Error::UnknownField("west".into())));
        assert!(matches!(covariate_mask(&pop, "age >"), Err(Error::PredicateSyntax(_))));
        assert!(matches!(
            covariate_mask(&pop, "age > 3 OR east"),
            Err(Error::PredicateSyntax(_))
        ));
        assert!(matches!(covariate_mask(&pop, ""), Err(Error::PredicateSyntax(_))));
    }

    #[test]
    fn conjunction_is_intersection() {
        let pop = fixture();
        let a = covariate_mask(&pop, "age > 35").unwrap();
        let b = covariate_mask(&pop, "last_job IS MISSING").unwrap();
        let ab = covariate_mask(&pop, "age > 35 AND last_job IS MISSING").unwrap();
        assert_eq!(a.intersect(&b).unwrap().member, ab.member);
        assert_eq!(covariate_mask(&pop, "age > 35").unwrap(), a);
    }
}
