//! Sums of monomials over indexed variables, e.g. `"w1^3 + w1*w2"` or
//! `"x2 - x1^2*x2"`. Used for configurable regressors and disturbances.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// 0-based index into the variable vector (`x1` is index 0).
    Indexed(usize),
    Time,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub factors: Vec<(Var, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    prefix: char,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(prefix: char, terms: Vec<Monomial>) -> Self {
        Polynomial { prefix, terms }
    }

    /// Parses a sum of monomials whose variables are `<prefix><k>` with
    /// `k >= 1`, plus `t` when `allow_time` is set.
    pub fn parse(src: &str, prefix: char, allow_time: bool) -> Result<Self> {
        Parser {
            src,
            chars: src.char_indices().peekable(),
            prefix,
            allow_time,
        }
        .parse()
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    /// Number of indexed variables the expression needs.
    pub fn arity(&self) -> usize {
        self.terms
            .iter()
            .flat_map(|m| m.factors.iter())
            .filter_map(|(v, _)| match v {
                Var::Indexed(k) => Some(k + 1),
                Var::Time => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, vars: &[f64], t: f64) -> f64 {
        self.terms
            .iter()
            .map(|m| {
                m.factors.iter().fold(m.coeff, |acc, &(v, p)| {
                    let base = match v {
                        Var::Indexed(k) => vars[k],
                        Var::Time => t,
                    };
                    acc * base.powi(p as i32)
                })
            })
            .sum()
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, m) in self.terms.iter().enumerate() {
            let (sign, mag) = if m.coeff < 0.0 { ("-", -m.coeff) } else { ("+", m.coeff) };
            match (n, sign) {
                (0, "-") => write!(f, "-")?,
                (0, _) => {}
                _ => write!(f, " {sign} ")?,
            }
            let mut parts = Vec::new();
            if mag != 1.0 || m.factors.is_empty() {
                parts.push(format!("{mag}"));
            }
            for &(v, p) in &m.factors {
                let name = match v {
                    Var::Indexed(k) => format!("{}{}", self.prefix, k + 1),
                    Var::Time => "t".to_string(),
                };
                parts.push(if p == 1 { name } else { format!("{name}^{p}") });
            }
            write!(f, "{}", parts.join("*"))?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    prefix: char,
    allow_time: bool,
}

impl Parser<'_> {
    fn err(&self, msg: impl fmt::Display) -> Error {
        Error::param("expression", format!("`{}`: {msg}", self.src))
    }

    fn skip_ws(&mut self) {
        while self.chars.next_if(|(_, c)| c.is_whitespace()).is_some() {}
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.peek().map(|&(_, c)| c)
    }

    fn parse(mut self) -> Result<Polynomial> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        if let Some(c @ ('+' | '-')) = self.peek() {
            self.chars.next();
            sign = if c == '-' { -1.0 } else { 1.0 };
        }
        loop {
            let mut term = self.term()?;
            term.coeff *= sign;
            terms.push(term);
            match self.peek() {
                None => break,
                Some('+') => sign = 1.0,
                Some('-') => sign = -1.0,
                Some(c) => return Err(self.err(format!("unexpected `{c}`"))),
            }
            self.chars.next();
        }
        Ok(Polynomial::new(self.prefix, terms))
    }

    fn term(&mut self) -> Result<Monomial> {
        let mut m = Monomial {
            coeff: 1.0,
            factors: Vec::new(),
        };
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_digit() || c == '.' => m.coeff *= self.number()?,
                Some(_) => {
                    let var = self.variable()?;
                    let mut power = 1;
                    if self.peek() == Some('^') {
                        self.chars.next();
                        self.skip_ws();
                        power = self.integer()?;
                    }
                    m.factors.push((var, power));
                }
                None => return Err(self.err("expected a term")),
            }
            if self.peek() == Some('*') {
                self.chars.next();
            } else {
                return Ok(m);
            }
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &str {
        let start = self.chars.peek().map(|&(i, _)| i).unwrap_or(self.src.len());
        let mut end = start;
        while let Some((i, c)) = self.chars.next_if(|&(_, c)| pred(c)) {
            end = i + c.len_utf8();
        }
        &self.src[start..end]
    }

    fn number(&mut self) -> Result<f64> {
        let text = self.take_while(|c| c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E');
        text.parse::<f64>()
            .map_err(|_| Error::param("expression", format!("bad number `{text}`")))
    }

    fn integer(&mut self) -> Result<u32> {
        let text = self.take_while(|c| c.is_ascii_digit()).to_string();
        text.parse::<u32>()
            .map_err(|_| self.err(format!("bad exponent `{text}`")))
    }

    fn variable(&mut self) -> Result<Var> {
        let name = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_').to_string();
        if name == "t" && self.allow_time {
            return Ok(Var::Time);
        }
        let index = name
            .strip_prefix(self.prefix)
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .ok_or_else(|| self.err(format!("unknown variable `{name}`")))?;
        Ok(Var::Indexed(index - 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_disturbance_expressions() {
        let p = Polynomial::parse("w1^3 + w1*w2", 'w', false).unwrap();
        assert_eq!(p.arity(), 2);
        assert_eq!(p.eval(&[1.0, 1.0], 0.0), 2.0);
        assert_eq!(p.eval(&[2.0, -1.0], 0.0), 6.0);

        let p = Polynomial::parse("-2.5*w2^4", 'w', false).unwrap();
        assert_eq!(p.eval(&[0.0, 2.0], 0.0), -40.0);

        let p = Polynomial::parse("3", 'w', false).unwrap();
        assert_eq!(p.arity(), 0);
        assert_eq!(p.eval(&[], 0.0), 3.0);
    }

    #[test]
    fn parses_time_when_allowed() {
        let p = Polynomial::parse("x2 - x1^2*x2 + 0.5*t", 'x', true).unwrap();
        assert_eq!(p.eval(&[2.0, 1.0], 4.0), 1.0 - 4.0 + 2.0);
        assert!(Polynomial::parse("x1*t", 'x', false).is_err());
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "w0", "w1 +", "w1^", "y1", "w1 ** 2", "w1 / 2"] {
            assert!(Polynomial::parse(bad, 'w', false).is_err(), "{bad}");
        }
    }

    #[test]
    fn display_round_trips() {
        for src in ["w1^2*w2^2", "w1^3 + w1*w2", "-x1", "2*x2 - 0.5*x1^2*x2"] {
            let prefix = src.chars().find(|c| c.is_alphabetic()).unwrap();
            let p = Polynomial::parse(src, prefix, false).unwrap();
            let again = Polynomial::parse(&p.to_string(), prefix, false).unwrap();
            assert_eq!(p, again);
        }
    }
}
