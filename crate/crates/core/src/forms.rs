//! Logical forms over concepts: AST, parser, canonical printer and per-image
//! evaluation.
//!
//! Grammar (precedence NOT > AND > OR, binary operators left-associative):
//!
//! ```text
//! form := or
//! or   := and ("OR" and)*
//! and  := not ("AND" not)*
//! not  := "NOT" not | atom
//! atom := IDENT | "(" form ")"
//! ```
//!
//! `IDENT` is `[A-Za-z0-9_-]+`; the uppercase keywords are reserved.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::datastore::ConceptCatalog;
use crate::error::{Error, Result};
use crate::masks::BitMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub u32);

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Structural equality only: no simplification is ever applied.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LogicalForm {
    Leaf(ConceptId),
    Not(Box<LogicalForm>),
    And(Box<LogicalForm>, Box<LogicalForm>),
    Or(Box<LogicalForm>, Box<LogicalForm>),
}

impl LogicalForm {
    pub fn leaf(id: u32) -> Self {
        LogicalForm::Leaf(ConceptId(id))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        LogicalForm::Not(Box::new(self))
    }

    pub fn and(self, rhs: LogicalForm) -> Self {
        LogicalForm::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: LogicalForm) -> Self {
        LogicalForm::Or(Box::new(self), Box::new(rhs))
    }

    /// Number of concept leaves. Negation does not add length.
    pub fn length(&self) -> usize {
        match self {
            LogicalForm::Leaf(_) => 1,
            LogicalForm::Not(f) => f.length(),
            LogicalForm::And(a, b) | LogicalForm::Or(a, b) => a.length() + b.length(),
        }
    }

    /// Concept ids in left-to-right leaf order.
    pub fn concepts(&self) -> Vec<ConceptId> {
        let mut out = Vec::new();
        self.collect_concepts(&mut out);
        out
    }

    fn collect_concepts(&self, out: &mut Vec<ConceptId>) {
        match self {
            LogicalForm::Leaf(c) => out.push(*c),
            LogicalForm::Not(f) => f.collect_concepts(out),
            LogicalForm::And(a, b) | LogicalForm::Or(a, b) => {
                a.collect_concepts(out);
                b.collect_concepts(out);
            }
        }
    }

    /// Evaluates the form on one image. `lookup` yields the annotation mask of a
    /// concept on that image, or `None` when the concept is absent there (an
    /// empty mask).
    pub fn eval<'a, F>(&self, lookup: &F, height: u16, width: u16) -> Result<BitMask>
    where
        F: Fn(ConceptId) -> Option<&'a BitMask>,
    {
        match self {
            LogicalForm::Leaf(c) => match lookup(*c) {
                Some(m) if m.dims() != (height, width) => Err(Error::DimensionMismatch {
                    expected: (height, width),
                    found: m.dims(),
                }),
                Some(m) => Ok(m.clone()),
                None => Ok(BitMask::new(height, width)),
            },
            LogicalForm::Not(f) => Ok(f.eval(lookup, height, width)?.not()),
            LogicalForm::And(a, b) => {
                a.eval(lookup, height, width)?.and(&b.eval(lookup, height, width)?)
            }
            LogicalForm::Or(a, b) => {
                a.eval(lookup, height, width)?.or(&b.eval(lookup, height, width)?)
            }
        }
    }

    /// Canonical text: binary operations fully parenthesized, negation
    /// parenthesized, uppercase operators, single spaces.
    pub fn to_text(&self, catalog: &ConceptCatalog) -> Result<String> {
        let mut out = String::new();
        self.write_text(catalog, &mut out)?;
        Ok(out)
    }

    fn write_text(&self, catalog: &ConceptCatalog, out: &mut String) -> Result<()> {
        match self {
            LogicalForm::Leaf(c) => {
                let name = catalog.name(*c).ok_or(Error::UnknownConceptId(c.0))?;
                out.push_str(name);
            }
            LogicalForm::Not(f) => {
                out.push_str("(NOT ");
                f.write_text(catalog, out)?;
                out.push(')');
            }
            LogicalForm::And(a, b) | LogicalForm::Or(a, b) => {
                let op = if matches!(self, LogicalForm::And(..)) {
                    " AND "
                } else {
                    " OR "
                };
                out.push('(');
                a.write_text(catalog, out)?;
                out.push_str(op);
                b.write_text(catalog, out)?;
                out.push(')');
            }
        }
        Ok(())
    }
}

pub fn form_length(form: &LogicalForm) -> usize {
    form.length()
}

pub fn print_form(form: &LogicalForm, catalog: &ConceptCatalog) -> Result<String> {
    form.to_text(catalog)
}

pub fn eval_form<'a, F>(form: &LogicalForm, lookup: &F, frame: (u16, u16)) -> Result<BitMask>
where
    F: Fn(ConceptId) -> Option<&'a BitMask>,
{
    form.eval(lookup, frame.0, frame.1)
}

pub fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

pub fn is_keyword(s: &str) -> bool {
    matches!(s, "AND" | "OR" | "NOT")
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'s> {
    Ident(&'s str),
    And,
    Or,
    Not,
    LParen,
    RParen,
    End,
}

impl Token<'_> {
    fn describe(&self) -> String {
        match self {
            Token::Ident(s) => format!("`{s}`"),
            Token::And => "`AND`".into(),
            Token::Or => "`OR`".into(),
            Token::Not => "`NOT`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::End => "end of input".into(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token<'_>)>> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '(' {
            tokens.push((pos, Token::LParen));
            chars.next();
        } else if c == ')' {
            tokens.push((pos, Token::RParen));
            chars.next();
        } else if is_ident_char(c) {
            let mut end = pos;
            while let Some(&(p, c)) = chars.peek() {
                if !is_ident_char(c) {
                    break;
                }
                end = p + c.len_utf8();
                chars.next();
            }
            let word = &text[pos..end];
            let tok = match word {
                "AND" => Token::And,
                "OR" => Token::Or,
                "NOT" => Token::Not,
                _ => Token::Ident(word),
            };
            tokens.push((pos, tok));
        } else {
            return Err(Error::Syntax {
                position: pos,
                expected: "concept name, `NOT` or `(`".into(),
                found: format!("`{c}`"),
            });
        }
    }
    tokens.push((text.len(), Token::End));
    Ok(tokens)
}

struct Parser<'s, 'c> {
    tokens: Vec<(usize, Token<'s>)>,
    pos: usize,
    catalog: &'c ConceptCatalog,
}

impl<'s> Parser<'s, '_> {
    fn peek(&self) -> &Token<'s> {
        &self.tokens[self.pos].1
    }

    fn bump(&mut self) -> (usize, Token<'s>) {
        let t = self.tokens[self.pos].clone();
        if t.1 != Token::End {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> Error {
        let (position, tok) = &self.tokens[self.pos];
        Error::Syntax {
            position: *position,
            expected: expected.into(),
            found: tok.describe(),
        }
    }

    fn or(&mut self) -> Result<LogicalForm> {
        let mut lhs = self.and()?;
        while *self.peek() == Token::Or {
            self.bump();
            lhs = lhs.or(self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<LogicalForm> {
        let mut lhs = self.not()?;
        while *self.peek() == Token::And {
            self.bump();
            lhs = lhs.and(self.not()?);
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<LogicalForm> {
        if *self.peek() == Token::Not {
            self.bump();
            return Ok(self.not()?.not());
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<LogicalForm> {
        match self.peek().clone() {
            Token::Ident(name) => {
                self.bump();
                let id = self
                    .catalog
                    .id_of(name)
                    .ok_or_else(|| Error::UnknownConcept(name.to_string()))?;
                Ok(LogicalForm::Leaf(id))
            }
            Token::LParen => {
                self.bump();
                let inner = self.or()?;
                if *self.peek() != Token::RParen {
                    return Err(self.error("`)`"));
                }
                self.bump();
                Ok(inner)
            }
            _ => Err(self.error("concept name, `NOT` or `(`")),
        }
    }
}

pub fn parse_form(text: &str, catalog: &ConceptCatalog) -> Result<LogicalForm> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
        catalog,
    };
    let form = parser.or()?;
    if *parser.peek() != Token::End {
        return Err(parser.error("`AND`, `OR` or end of input"));
    }
    Ok(form)
}
