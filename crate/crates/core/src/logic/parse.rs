//! Parser for the Prolog-like clause syntax.
//!
//! ```text
//! name(Args) :- lit1, lit2, ..., litK.
//! ```
//! Variables start with an uppercase letter or `_`; constants are lowercase
//! identifiers, integers or single-quoted strings; lists use brackets.
//! `%` starts a comment that runs to the end of the line.

use std::sync::Arc;

use super::term::{Atom, Clause, Constant, Term, Var};
use super::LogicError;

pub fn parse_program(src: &str) -> Result<Vec<Clause>, LogicError> {
    let mut p = Parser::new(src);
    let mut out = Vec::new();
    loop {
        p.skip_ws();
        if p.at_end() {
            return Ok(out);
        }
        out.push(p.clause()?);
    }
}

pub fn parse_clause(src: &str) -> Result<Clause, LogicError> {
    let mut p = Parser::new(src);
    let c = p.clause()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.err("trailing input after clause"));
    }
    Ok(c)
}

/// Parses a single atom, optionally terminated by `.`.
pub fn parse_atom(src: &str) -> Result<Atom, LogicError> {
    let mut p = Parser::new(src);
    let a = p.atom()?;
    p.skip_ws();
    p.eat('.');
    p.skip_ws();
    if !p.at_end() {
        return Err(p.err("trailing input after atom"));
    }
    Ok(a)
}

pub fn parse_term(src: &str) -> Result<Term, LogicError> {
    let mut p = Parser::new(src);
    let t = p.term()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.err("trailing input after term"));
    }
    Ok(t)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    anon: u32,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0, anon: 0 }
    }

    fn err(&self, message: &str) -> LogicError {
        let before = &self.src[..self.pos];
        let line = before.matches('\n').count() + 1;
        let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        LogicError::Parse { line, col, message: message.to_string() }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), LogicError> {
        self.skip_ws();
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{c}'")))
        }
    }

    fn skip_ws(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('%') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn clause(&mut self) -> Result<Clause, LogicError> {
        self.anon = 0;
        let head = self.atom()?;
        self.skip_ws();
        let mut body = Vec::new();
        if self.src[self.pos..].starts_with(":-") {
            self.pos += 2;
            loop {
                body.push(self.atom()?);
                self.skip_ws();
                if !self.eat(',') {
                    break;
                }
            }
        }
        self.expect('.')?;
        Ok(Clause { head, body })
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' {
                self.bump();
            } else {
                break;
            }
        }
        self.src[start..self.pos].to_string()
    }

    fn quoted(&mut self) -> Result<String, LogicError> {
        // opening quote already consumed
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(self.err("unterminated quoted atom")),
                Some('\'') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some(c) => s.push(c),
                    None => return Err(self.err("unterminated escape")),
                },
                Some(c) => s.push(c),
            }
        }
    }

    fn name(&mut self) -> Result<String, LogicError> {
        self.skip_ws();
        match self.peek() {
            Some('\'') => {
                self.bump();
                self.quoted()
            }
            Some(c) if c.is_lowercase() => Ok(self.ident()),
            _ => Err(self.err("expected predicate name")),
        }
    }

    fn atom(&mut self) -> Result<Atom, LogicError> {
        let pred = self.name()?;
        self.skip_ws();
        let args = if self.eat('(') { self.args(')')? } else { Vec::new() };
        Ok(Atom { pred: Arc::from(pred.as_str()), args })
    }

    fn args(&mut self, close: char) -> Result<Vec<Term>, LogicError> {
        let mut out = Vec::new();
        self.skip_ws();
        if self.eat(close) {
            return Ok(out);
        }
        loop {
            out.push(self.term()?);
            self.skip_ws();
            if self.eat(',') {
                continue;
            }
            if self.eat(close) {
                return Ok(out);
            }
            return Err(self.err(&format!("expected ',' or '{close}'")));
        }
    }

    fn term(&mut self) -> Result<Term, LogicError> {
        self.skip_ws();
        match self.peek() {
            Some('[') => {
                self.bump();
                Ok(Term::List(self.args(']')?))
            }
            Some('\'') => {
                self.bump();
                let s = self.quoted()?;
                self.compound_or_const(s)
            }
            Some(c) if c.is_ascii_digit() || c == '-' => {
                let start = self.pos;
                self.bump();
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.bump();
                }
                self.src[start..self.pos].parse::<i64>().map(Term::int).map_err(|_| self.err("invalid integer"))
            }
            Some(c) if c.is_uppercase() || c == '_' => {
                let name = self.ident();
                if name == "_" {
                    self.anon += 1;
                    Ok(Term::Var(Var::with_id("_", self.anon)))
                } else {
                    Ok(Term::Var(Var::named(&name)))
                }
            }
            Some(c) if c.is_lowercase() => {
                let s = self.ident();
                self.compound_or_const(s)
            }
            _ => Err(self.err("expected term")),
        }
    }

    fn compound_or_const(&mut self, name: String) -> Result<Term, LogicError> {
        if self.peek() == Some('(') {
            self.bump();
            let args = self.args(')')?;
            Ok(Term::Compound(Arc::from(name.as_str()), args))
        } else {
            Ok(Term::Const(Constant::from(name)))
        }
    }
}
