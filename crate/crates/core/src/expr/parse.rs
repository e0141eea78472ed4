//! Pratt parser for the infix expression grammar.
//!
//! Operators `+ - * / ^`, functions `exp`, `ln`, `abs`, `sign`, variables
//! `t`, `x`, `u`, `omega`; any other identifier is a parameter. `e^X` is
//! sugar for `exp(X)` and a bare `e` denotes Euler's number. Applied
//! function symbols with derivative marks (`phi''(omega)`) are accepted so
//! rendered ansatz expressions round-trip.

use super::Expr;
use crate::error::Error;
use num_rational::Rational64;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational64),
    BigNum(f64),
    Ident(String),
    Primes(u32),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, bytes: src.as_bytes(), pos: 0 }
    }

    fn error(&self, pos: usize, msg: &str) -> Error {
        Error::Parse { position: pos + 1, message: msg.to_string() }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, Error> {
        let mut out = Vec::new();
        while self.pos < self.bytes.len() {
            let start = self.pos;
            let c = self.bytes[self.pos];
            match c {
                b' ' | b'\t' | b'\n' | b'\r' => {
                    self.pos += 1;
                }
                b'+' => {
                    self.pos += 1;
                    out.push((start, Tok::Plus));
                }
                b'-' => {
                    self.pos += 1;
                    out.push((start, Tok::Minus));
                }
                b'*' => {
                    self.pos += 1;
                    out.push((start, Tok::Star));
                }
                b'/' => {
                    self.pos += 1;
                    out.push((start, Tok::Slash));
                }
                b'^' => {
                    self.pos += 1;
                    out.push((start, Tok::Caret));
                }
                b'(' => {
                    self.pos += 1;
                    out.push((start, Tok::LParen));
                }
                b')' => {
                    self.pos += 1;
                    out.push((start, Tok::RParen));
                }
                b'\'' => {
                    let mut n = 0u32;
                    while self.pos < self.bytes.len() && self.bytes[self.pos] == b'\'' {
                        n += 1;
                        self.pos += 1;
                    }
                    out.push((start, Tok::Primes(n)));
                }
                b'0'..=b'9' | b'.' => {
                    out.push((start, self.number()?));
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    while self.pos < self.bytes.len()
                        && (self.bytes[self.pos].is_ascii_alphanumeric()
                            || self.bytes[self.pos] == b'_')
                    {
                        self.pos += 1;
                    }
                    out.push((start, Tok::Ident(self.src[start..self.pos].to_string())));
                }
                other => {
                    return Err(self.error(start, &format!("unexpected character '{}'", other as char)))
                }
            }
        }
        Ok(out)
    }

    /// Decimal literals become exact rationals; scientific notation and
    /// overflowing mantissas fall back to floats.
    fn number(&mut self) -> Result<Tok, Error> {
        let start = self.pos;
        let mut seen_dot = false;
        let seen_exp = false;
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            match c {
                b'0'..=b'9' => self.pos += 1,
                b'.' if !seen_dot && !seen_exp => {
                    seen_dot = true;
                    self.pos += 1;
                }
                b'e' | b'E' if !seen_exp && self.pos + 1 < self.bytes.len() => {
                    let next = self.bytes[self.pos + 1];
                    let next2 = self.bytes.get(self.pos + 2);
                    let exp_digit = next.is_ascii_digit()
                        || ((next == b'+' || next == b'-')
                            && next2.is_some_and(|d| d.is_ascii_digit()));
                    if exp_digit {
                        self.pos += if next.is_ascii_digit() { 2 } else { 3 };
                        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                    }
                    break;
                }
                _ => break,
            }
        }
        let text = &self.src[start..self.pos];
        if text == "." {
            return Err(self.error(start, "malformed number"));
        }
        if let Some(r) = decimal_to_rational(text) {
            Ok(Tok::Num(r))
        } else {
            let v: f64 = text
                .parse()
                .map_err(|_| self.error(start, "malformed number"))?;
            Ok(Tok::BigNum(v))
        }
    }
}

fn decimal_to_rational(text: &str) -> Option<Rational64> {
    let (mantissa, exp10) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    let digits = format!("{int_part}{frac_part}");
    let num: i64 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    let shift = exp10 - frac_part.len() as i32;
    let mut r = Rational64::from_integer(num);
    if shift.unsigned_abs() > 18 {
        return None;
    }
    let scale = 10i64.checked_pow(shift.unsigned_abs())?;
    if shift >= 0 {
        r *= Rational64::from_integer(scale);
    } else {
        r /= Rational64::from_integer(scale);
    }
    Some(r)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    len: usize,
}

/// Parses an expression in the infix grammar.
pub fn parse(text: &str) -> Result<Expr, Error> {
    let toks = Lexer::new(text).tokens()?;
    let mut p = Parser { toks, idx: 0, len: text.len() };
    let e = p.expr(0)?;
    if let Some((pos, _)) = p.peek() {
        return Err(Error::Parse { position: pos + 1, message: "unexpected trailing input".into() });
    }
    Ok(e)
}

impl Parser {
    fn peek(&self) -> Option<(usize, &Tok)> {
        self.toks.get(self.idx).map(|(p, t)| (*p, t))
    }

    fn next(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.idx).cloned();
        self.idx += 1;
        t
    }

    fn eof_err(&self) -> Error {
        Error::Parse { position: self.len + 1, message: "unexpected end of input".into() }
    }

    fn expect_rparen(&mut self) -> Result<(), Error> {
        match self.next() {
            Some((_, Tok::RParen)) => Ok(()),
            Some((p, _)) => Err(Error::Parse { position: p + 1, message: "expected ')'".into() }),
            None => Err(self.eof_err()),
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, Error> {
        let mut lhs = self.prefix()?;
        loop {
            let (op_pos, op) = match self.peek() {
                Some((p, t)) => (p, t.clone()),
                None => break,
            };
            let (lbp, rbp) = match op {
                Tok::Plus | Tok::Minus => (10, 11),
                Tok::Star | Tok::Slash => (20, 21),
                Tok::Caret => (31, 30),
                Tok::RParen => break,
                _ => {
                    return Err(Error::Parse {
                        position: op_pos + 1,
                        message: "expected operator".into(),
                    })
                }
            };
            if lbp < min_bp {
                break;
            }
            self.idx += 1;
            let rhs = self.expr(rbp)?;
            lhs = match op {
                Tok::Plus => lhs + rhs,
                Tok::Minus => lhs - rhs,
                Tok::Star => lhs * rhs,
                Tok::Slash => lhs / rhs,
                Tok::Caret => Expr::pow(lhs, rhs),
                _ => unreachable!(),
            };
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, Error> {
        match self.next() {
            None => Err(self.eof_err()),
            Some((pos, tok)) => match tok {
                Tok::Num(r) => Ok(Expr::Rational(r)),
                Tok::BigNum(v) => Ok(Expr::float(v)),
                Tok::Minus => {
                    let operand = self.expr(15)?;
                    Ok(operand.neg())
                }
                Tok::LParen => {
                    let inner = self.expr(0)?;
                    self.expect_rparen()?;
                    Ok(inner)
                }
                Tok::Ident(name) => self.ident(pos, name),
                _ => Err(Error::Parse { position: pos + 1, message: "expected expression".into() }),
            },
        }
    }

    fn ident(&mut self, pos: usize, name: String) -> Result<Expr, Error> {
        let mut primes = 0u32;
        if let Some((_, Tok::Primes(n))) = self.peek() {
            primes = *n;
            self.idx += 1;
        }
        let applied = matches!(self.peek(), Some((_, Tok::LParen)));
        if applied {
            self.idx += 1; // consume '('
            let arg = self.expr(0)?;
            self.expect_rparen()?;
            let builtin = |arg: Expr| -> Option<Expr> {
                match name.as_str() {
                    "exp" => Some(Expr::exp(arg)),
                    "ln" => Some(Expr::ln(arg)),
                    "abs" => Some(Expr::abs(arg)),
                    "sign" => Some(Expr::sign(arg)),
                    _ => None,
                }
            };
            if let Some(e) = builtin(arg.clone()) {
                if primes > 0 {
                    return Err(Error::UnknownFunction {
                        name: format!("{name}'"),
                        position: pos + 1,
                    });
                }
                return Ok(e);
            }
            if super::VARIABLES.contains(&name.as_str()) {
                return Err(Error::UnknownFunction { name, position: pos + 1 });
            }
            return Ok(Expr::func(&name, primes, arg));
        }
        if primes > 0 {
            return Err(Error::Parse {
                position: pos + 1,
                message: "derivative marks require an applied function".into(),
            });
        }
        if name == "e" {
            // Euler's number; `e^X` folds to exp(X) through the pow constructor.
            return Ok(Expr::exp(Expr::one()));
        }
        Ok(Expr::symbol(&name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_product_with_exp_sugar() {
        let e = parse("e^u * u").unwrap();
        assert_eq!(e, Expr::mul(vec![Expr::exp(Expr::var("u")), Expr::var("u")]));
    }

    #[test]
    fn parses_rational_exponent_expression() {
        let e = parse("abs(x)^((-4-3*mu)/(1+mu))").unwrap();
        let exponent = Expr::mul(vec![
            Expr::add(vec![Expr::int(-4), Expr::int(-3) * Expr::param("mu")]),
            Expr::pow(Expr::add(vec![Expr::one(), Expr::param("mu")]), Expr::int(-1)),
        ]);
        assert_eq!(e, Expr::pow(Expr::abs(Expr::var("x")), exponent));
    }

    #[test]
    fn reports_position_of_syntax_error() {
        let err = parse("(").unwrap_err();
        match err {
            Error::Parse { position, .. } => assert_eq!(position, 2),
            other => panic!("unexpected error {other:?}"),
        }
        let err = parse(")x").unwrap_err();
        match err {
            Error::Parse { position, .. } => assert_eq!(position, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_variables_used_as_functions() {
        assert!(matches!(parse("x(t)"), Err(Error::UnknownFunction { .. })));
        assert!(matches!(parse("exp'(t)"), Err(Error::UnknownFunction { .. })));
    }

    #[test]
    fn accepts_applied_function_symbols() {
        let e = parse("phi''(omega) + phi(omega)").unwrap();
        assert_eq!(
            e,
            Expr::add(vec![
                Expr::func("phi", 2, Expr::var("omega")),
                Expr::func("phi", 0, Expr::var("omega")),
            ])
        );
    }

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(parse("0.5").unwrap(), Expr::rational(1, 2));
        assert_eq!(parse("2e-3").unwrap(), Expr::rational(1, 500));
    }

    #[test]
    fn division_folds_to_negative_power() {
        let e = parse("1/x^2").unwrap();
        assert_eq!(e, Expr::pow(Expr::var("x"), Expr::int(-2)));
    }
}
