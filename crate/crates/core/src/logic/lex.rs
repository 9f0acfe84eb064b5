//! Shared lexer for the formula, program, and database grammars.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    /// Lowercase identifier: relation, element, or constant name.
    Ident(String),
    /// Uppercase identifier: a variable.
    Var(String),
    /// Integer or decimal literal, kept verbatim.
    Number(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Colon,
    ColonColon,
    ColonDash,
    Eq,
    Neq,
    And,
    Or,
    Not,
    /// Prolog-style negation `\+`.
    NafNot,
    Slash,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub fn lex(input: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = input.chars().peekable();

    macro_rules! err {
        ($msg:expr) => {
            return Err(Error::Parse { line, col, msg: $msg.to_string() })
        };
    }

    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        let mut push = |tok: Tok| out.push(Token { tok, line: tline, col: tcol });
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '%' => {
                // comment to end of line
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' => {
                chars.next();
                col += 1;
                push(Tok::LParen);
            }
            ')' => {
                chars.next();
                col += 1;
                push(Tok::RParen);
            }
            ',' => {
                chars.next();
                col += 1;
                push(Tok::Comma);
            }
            '&' => {
                chars.next();
                col += 1;
                push(Tok::And);
            }
            '|' => {
                chars.next();
                col += 1;
                push(Tok::Or);
            }
            '/' => {
                chars.next();
                col += 1;
                push(Tok::Slash);
            }
            '=' => {
                chars.next();
                col += 1;
                push(Tok::Eq);
            }
            '!' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'=') {
                    chars.next();
                    col += 1;
                    push(Tok::Neq);
                } else {
                    push(Tok::Not);
                }
            }
            '\\' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'+') {
                    chars.next();
                    col += 1;
                    push(Tok::NafNot);
                } else {
                    err!("expected `\\+`");
                }
            }
            ':' => {
                chars.next();
                col += 1;
                match chars.peek() {
                    Some(':') => {
                        chars.next();
                        col += 1;
                        push(Tok::ColonColon);
                    }
                    Some('-') => {
                        chars.next();
                        col += 1;
                        push(Tok::ColonDash);
                    }
                    _ => push(Tok::Colon),
                }
            }
            '.' => {
                chars.next();
                col += 1;
                push(Tok::Dot);
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        s.push(d);
                        chars.next();
                        col += 1;
                    } else if d == '.' {
                        // consume the dot only when a digit follows (decimal
                        // point vs. statement terminator)
                        let mut ahead = chars.clone();
                        ahead.next();
                        if ahead.peek().is_some_and(|x| x.is_ascii_digit()) {
                            s.push('.');
                            chars.next();
                            col += 1;
                        } else {
                            break;
                        }
                    } else {
                        break;
                    }
                }
                push(Tok::Number(s));
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_alphanumeric() || d == '_' {
                        s.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                if s.chars().next().unwrap().is_uppercase() {
                    push(Tok::Var(s));
                } else {
                    push(Tok::Ident(s));
                }
            }
            _ => err!(format!("unexpected character `{c}`")),
        }
    }
    Ok(out)
}

/// Cursor over a token stream with positioned errors.
pub struct Cursor {
    toks: Vec<Token>,
    pos: usize,
}

impl Cursor {
    pub fn new(toks: Vec<Token>) -> Self {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    pub fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: &Tok, what: &str) -> Result<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    pub fn error(&self, msg: &str) -> Error {
        let (line, col) = self
            .toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1));
        Error::Parse { line, col, msg: msg.to_string() }
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn clone_pos(&self) -> usize {
        self.pos
    }

    pub fn restore(&mut self, pos: usize) {
        self.pos = pos;
    }
}
