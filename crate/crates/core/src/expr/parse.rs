//! Grammar: sums and differences of products and quotients of factors, where a
//! factor is a number, an identifier or a parenthesised expression, optionally
//! raised with `^` to a (possibly negative) real literal.

use super::{ExprError, Signomial, Var};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let x = text
                .parse::<f64>()
                .map_err(|_| ExprError::Parse { col: start + 1, msg: format!("bad number `{text}`") })?;
            out.push((start, Tok::Num(x)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'\'') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            return Err(ExprError::Parse { col: i + 1, msg: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

/// Recursive-descent parser resolving identifiers through a callback.
pub struct Parser<'a, F> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
    resolve: &'a mut F,
}

impl<'a, F: FnMut(&str) -> Option<Var>> Parser<'a, F> {
    pub fn new(src: &str, resolve: &'a mut F) -> Result<Self, ExprError> {
        Ok(Parser { toks: lex(src)?, pos: 0, len: src.len(), resolve })
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.len, |t| t.0) + 1
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Parse { col: self.col(), msg: msg.into() })
    }

    fn peek_op(&self) -> Option<char> {
        match self.toks.get(self.pos) {
            Some((_, Tok::Op(c))) => Some(*c),
            _ => None,
        }
    }

    pub fn parse(mut self) -> Result<Signomial, ExprError> {
        let e = self.expr()?;
        if self.pos != self.toks.len() {
            return self.err("trailing input");
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Signomial, ExprError> {
        let mut acc = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if op == '+' { &acc + &rhs } else { &acc - &rhs };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Signomial, ExprError> {
        let mut acc = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            acc = if op == '*' {
                &acc * &rhs
            } else {
                let m = rhs.as_monomial().ok_or(ExprError::NonMonomialDivisor)?;
                &acc * &Signomial::from(m.recip())
            };
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Signomial, ExprError> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            return Ok(-self.unary()?);
        }
        self.power()
    }

    fn power(&mut self) -> Result<Signomial, ExprError> {
        let base = self.primary()?;
        if self.peek_op() != Some('^') {
            return Ok(base);
        }
        self.pos += 1;
        let neg = if self.peek_op() == Some('-') {
            self.pos += 1;
            true
        } else {
            false
        };
        match self.toks.get(self.pos) {
            Some((_, Tok::Num(x))) => {
                let e = if neg { -*x } else { *x };
                self.pos += 1;
                base.pow(e)
            }
            _ => self.err("expected a numeric exponent"),
        }
    }

    fn primary(&mut self) -> Result<Signomial, ExprError> {
        match self.toks.get(self.pos).cloned() {
            Some((_, Tok::Num(x))) => {
                self.pos += 1;
                Ok(Signomial::constant(x))
            }
            Some((_, Tok::Ident(name))) => {
                self.pos += 1;
                let v = (self.resolve)(&name).ok_or(ExprError::UnknownIdentifier(name))?;
                Ok(Signomial::var(v))
            }
            Some((_, Tok::Op('('))) => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek_op() != Some(')') {
                    return self.err("expected `)`");
                }
                self.pos += 1;
                Ok(e)
            }
            Some(_) => self.err("unexpected token"),
            None => self.err("unexpected end of input"),
        }
    }
}

pub fn parse_signomial(src: &str, mut resolve: impl FnMut(&str) -> Option<Var>) -> Result<Signomial, ExprError> {
    Parser::new(src, &mut resolve)?.parse()
}
