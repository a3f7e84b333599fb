//! Expression language for user-supplied metrics and scales.
//!
//! A small analytic grammar over chart coordinates `x1..xd`: numeric
//! literals, `pi`, the operators `+ - * / ^` with the usual precedence,
//! parentheses, unary minus, and application of `exp`, `log`, `sqrt`, `sin`,
//! `cos`. Expressions evaluate either to plain numbers or to jets, so a
//! geometry given as strings takes part in the same exact-derivative
//! calculus as the built-in charts. Inequalities between two expressions
//! carve chart domains.
//!
//! Exponents must be constant subexpressions (no coordinates); integer
//! exponents use the algebraic power and work for any base, fractional ones
//! require a positive base at the evaluation point.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::riemann::{Mat, MetricChart};

/// Parsed analytic expression over `dim` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index; the surface syntax is 1-based `x1..xd`.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Named analytic functions admitted by the grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
}

impl Expr {
    /// Plain numeric evaluation. Errors outside the analytic domain
    /// (logarithm of a nonpositive number, division by zero, ...).
    pub fn eval_f64(&self, x: &[f64]) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => {
                if *i >= x.len() {
                    return Err(Error::DimensionMismatch(x.len(), *i + 1));
                }
                x[*i]
            }
            Expr::Neg(a) => -a.eval_f64(x)?,
            Expr::Add(a, b) => a.eval_f64(x)? + b.eval_f64(x)?,
            Expr::Sub(a, b) => a.eval_f64(x)? - b.eval_f64(x)?,
            Expr::Mul(a, b) => a.eval_f64(x)? * b.eval_f64(x)?,
            Expr::Div(a, b) => {
                let den = b.eval_f64(x)?;
                if den.abs() < 1e-300 {
                    return Err(Error::SingularDivision);
                }
                a.eval_f64(x)? / den
            }
            Expr::Pow(a, b) => {
                let e = b.eval_const()?;
                let base = a.eval_f64(x)?;
                let v = base.powf(e);
                if !v.is_finite() {
                    return Err(Error::DomainViolation(format!(
                        "{base} ^ {e} is not finite"
                    )));
                }
                v
            }
            Expr::Call(f, a) => {
                let v = a.eval_f64(x)?;
                match f {
                    Func::Exp => v.exp(),
                    Func::Log => {
                        if v <= 0.0 {
                            return Err(Error::DomainViolation(format!(
                                "log of nonpositive value {v}"
                            )));
                        }
                        v.ln()
                    }
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(Error::DomainViolation(format!(
                                "sqrt of negative value {v}"
                            )));
                        }
                        v.sqrt()
                    }
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                }
            }
        })
    }

    /// Evaluate as a jet centered at `x`.
    pub fn eval_jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        let d = x.len();
        Ok(match self {
            Expr::Const(c) => Jet::constant(d, order, *c),
            Expr::Var(i) => {
                if *i >= d {
                    return Err(Error::DimensionMismatch(d, *i + 1));
                }
                Jet::variable(d, order, *i, x[*i])?
            }
            Expr::Neg(a) => a.eval_jet(x, order)?.scaled(-1.0),
            Expr::Add(a, b) => a.eval_jet(x, order)?.try_add(&b.eval_jet(x, order)?)?,
            Expr::Sub(a, b) => a.eval_jet(x, order)?.try_sub(&b.eval_jet(x, order)?)?,
            Expr::Mul(a, b) => a.eval_jet(x, order)?.try_mul(&b.eval_jet(x, order)?)?,
            Expr::Div(a, b) => a
                .eval_jet(x, order)?
                .try_mul(&b.eval_jet(x, order)?.recip()?)?,
            Expr::Pow(a, b) => {
                let e = b.eval_const()?;
                let base = a.eval_jet(x, order)?;
                if (e - e.round()).abs() < 1e-12 && e.abs() <= 64.0 {
                    base.powi(e.round() as i32)?
                } else {
                    base.powf(e)?
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval_jet(x, order)?;
                match f {
                    Func::Exp => v.exp(),
                    Func::Log => v.ln()?,
                    Func::Sqrt => v.sqrt()?,
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                }
            }
        })
    }

    /// Evaluate an expression that must not reference coordinates.
    fn eval_const(&self) -> Result<f64> {
        if self.max_var().is_some() {
            return Err(Error::Parse(
                "exponent must be a constant expression".into(),
            ));
        }
        self.eval_f64(&[])
    }

    /// Highest coordinate index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => match (a.max_var(), b.max_var()) {
                (Some(p), Some(q)) => Some(p.max(q)),
                (p, q) => p.or(q),
            },
        }
    }
}

/// Comparison operator of a domain inequality.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
}

/// One side of a chart domain: `lhs cmp rhs`. A point where either side
/// fails to evaluate (logarithm of a negative number, ...) is outside.
#[derive(Clone, Debug)]
pub struct DomainExpr {
    pub lhs: Expr,
    pub cmp: Cmp,
    pub rhs: Expr,
}

impl DomainExpr {
    pub fn holds(&self, x: &[f64]) -> bool {
        match (self.lhs.eval_f64(x), self.rhs.eval_f64(x)) {
            (Ok(a), Ok(b)) => match self.cmp {
                Cmp::Lt => a < b,
                Cmp::Le => a <= b,
                Cmp::Gt => a > b,
                Cmp::Ge => a >= b,
            },
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Lt,
    Le,
    Gt,
    Ge,
}

fn tokenize(s: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '<' | '>' => {
                let eq = i + 1 < chars.len() && chars[i + 1] == '=';
                out.push(match (c, eq) {
                    ('<', false) => Token::Lt,
                    ('<', true) => Token::Le,
                    ('>', false) => Token::Gt,
                    _ => Token::Ge,
                });
                i += if eq { 2 } else { 1 };
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // Scientific notation: 1e-3, 2.5E+10.
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number literal '{text}'")))?;
                out.push(Token::Num(v));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
                {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            _ => return Err(Error::Parse(format!("unexpected character '{c}'"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Token) -> Result<()> {
        match self.next() {
            Some(ref got) if *got == t => Ok(()),
            got => Err(Error::Parse(format!("expected {t:?}, found {got:?}"))),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    acc = Expr::Mul(Box::new(acc), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    acc = Expr::Div(Box::new(acc), Box::new(self.unary()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    // unary := '-' unary | factor; the power binds tighter, so -x1^2 is
    // -(x1^2).
    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token::Minus) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.factor()
    }

    // factor := atom ('^' unary)?   (right-associative, negative exponents
    // allowed)
    fn factor(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.pos += 1;
            let e = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(e)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => self.ident(name),
            got => Err(Error::Parse(format!(
                "expected a number, coordinate, function, or '(', found {got:?}"
            ))),
        }
    }

    fn ident(&mut self, name: String) -> Result<Expr> {
        if let Some(rest) = name.strip_prefix('x') {
            if !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()) {
                let i: usize = rest
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad coordinate '{name}'")))?;
                if i == 0 || i > self.dim {
                    return Err(Error::Parse(format!(
                        "coordinate {name} out of range for dimension {}",
                        self.dim
                    )));
                }
                return Ok(Expr::Var(i - 1));
            }
        }
        if name == "pi" {
            return Ok(Expr::Const(std::f64::consts::PI));
        }
        let f = match name.as_str() {
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            _ => return Err(Error::Parse(format!("unknown identifier '{name}'"))),
        };
        self.expect(Token::LParen)?;
        let arg = self.expr()?;
        self.expect(Token::RParen)?;
        Ok(Expr::Call(f, Box::new(arg)))
    }
}

/// Parse an expression over `x1..x{dim}`.
pub fn parse(s: &str, dim: usize) -> Result<Expr> {
    let mut p = Parser {
        tokens: tokenize(s)?,
        pos: 0,
        dim,
    };
    let e = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(Error::Parse(format!(
            "trailing input at token {:?}",
            p.tokens[p.pos]
        )));
    }
    Ok(e)
}

/// Parse a single inequality `expr (< | <= | > | >=) expr`.
pub fn parse_inequality(s: &str, dim: usize) -> Result<DomainExpr> {
    let mut p = Parser {
        tokens: tokenize(s)?,
        pos: 0,
        dim,
    };
    let lhs = p.expr()?;
    let cmp = match p.next() {
        Some(Token::Lt) => Cmp::Lt,
        Some(Token::Le) => Cmp::Le,
        Some(Token::Gt) => Cmp::Gt,
        Some(Token::Ge) => Cmp::Ge,
        got => {
            return Err(Error::Parse(format!(
                "expected a comparison operator, found {got:?}"
            )))
        }
    };
    let rhs = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(Error::Parse(format!(
            "trailing input at token {:?}",
            p.tokens[p.pos]
        )));
    }
    Ok(DomainExpr { lhs, cmp, rhs })
}

/// Build a metric chart from expression entries. The matrix is symmetrized
/// (`(g_ij + g_ji)/2`), so mildly asymmetric input is tolerated; the domain
/// is the conjunction of the inequalities intersected with where every
/// metric entry evaluates.
pub fn chart_from_expressions(
    name: impl Into<String>,
    dim: usize,
    signature: Vec<i8>,
    metric: Vec<Vec<Expr>>,
    domain: Vec<DomainExpr>,
) -> Result<MetricChart> {
    if metric.len() != dim || metric.iter().any(|row| row.len() != dim) {
        return Err(Error::Parse(format!(
            "metric must be a {dim}x{dim} matrix of expressions"
        )));
    }
    if signature.len() != dim {
        return Err(Error::Parse(format!(
            "signature must list {dim} entries"
        )));
    }
    for row in &metric {
        for e in row {
            if let Some(v) = e.max_var() {
                if v >= dim {
                    return Err(Error::Parse(format!(
                        "metric entry references x{} beyond dimension {dim}",
                        v + 1
                    )));
                }
            }
        }
    }
    let entries = Arc::new(metric);
    let gen_entries = entries.clone();
    let generator = Arc::new(move |x: &[f64], order: usize| -> Result<Mat> {
        let mut g = vec![vec![Jet::constant(x.len(), order, 0.0); x.len()]; x.len()];
        for i in 0..x.len() {
            for j in 0..=i {
                let e = gen_entries[i][j]
                    .eval_jet(x, order)?
                    .try_add(&gen_entries[j][i].eval_jet(x, order)?)?
                    .scaled(0.5);
                g[i][j] = e.clone();
                g[j][i] = e;
            }
        }
        Ok(g)
    });
    let dom = Arc::new(move |x: &[f64]| {
        domain.iter().all(|d| d.holds(x))
            && entries
                .iter()
                .all(|row| row.iter().all(|e| e.eval_f64(x).is_ok()))
    });
    Ok(MetricChart::new(name, dim, signature, generator, dom))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_functions_evaluate_like_rust() {
        let x = [0.3, -0.7];
        let e = parse("2 + 3 * x1 ^ 2", 2).unwrap();
        assert!((e.eval_f64(&x).unwrap() - (2.0 + 3.0 * 0.09)).abs() < 1e-15);
        // Unary minus binds looser than the power.
        let e = parse("-x1^2", 2).unwrap();
        assert!((e.eval_f64(&x).unwrap() + 0.09).abs() < 1e-15);
        // The power is right-associative.
        let e = parse("2^3^2", 1).unwrap();
        assert!((e.eval_f64(&[0.0]).unwrap() - 512.0).abs() < 1e-12);
        let e = parse("exp(sin(x1) * cos(x2)) / sqrt(1 + x2^2)", 2).unwrap();
        let want = (0.3f64.sin() * (-0.7f64).cos()).exp() / (1.0 + 0.49f64).sqrt();
        assert!((e.eval_f64(&x).unwrap() - want).abs() < 1e-14);
        assert!((parse("pi", 1).unwrap().eval_f64(&[0.0]).unwrap()
            - std::f64::consts::PI)
            .abs()
            < 1e-15);

        // Jet evaluation agrees with the checked jet constructors.
        let e = parse("4 / (1 + x1^2 + x2^2)^2", 2).unwrap();
        let j = e.eval_jet(&x, 5).unwrap();
        let x1 = Jet::variable(2, 5, 0, x[0]).unwrap();
        let x2 = Jet::variable(2, 5, 1, x[1]).unwrap();
        let s = x1
            .try_mul(&x1)
            .unwrap()
            .try_add(&x2.try_mul(&x2).unwrap())
            .unwrap()
            .add_scalar(1.0);
        let want = s.try_mul(&s).unwrap().recip().unwrap().scaled(4.0);
        assert!(j.try_sub(&want).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn malformed_input_is_rejected_with_parse_errors() {
        assert!(matches!(parse("x1 +", 2), Err(Error::Parse(_))));
        assert!(matches!(parse("foo(x1)", 2), Err(Error::Parse(_))));
        assert!(matches!(parse("x5", 3), Err(Error::Parse(_))));
        assert!(matches!(parse("x0", 3), Err(Error::Parse(_))));
        assert!(matches!(parse("(x1", 2), Err(Error::Parse(_))));
        assert!(matches!(parse("x1 x2", 2), Err(Error::Parse(_))));
        assert!(matches!(parse("x1 ^ x1", 2), Ok(_)));
        // Non-constant exponents fail at evaluation time.
        let e = parse("x1 ^ x1", 2).unwrap();
        assert!(matches!(e.eval_f64(&[2.0, 0.0]), Err(Error::Parse(_))));
        assert!(matches!(
            parse_inequality("x1 + x2", 2),
            Err(Error::Parse(_))
        ));
        let d = parse_inequality("x1^2 + x2^2 < 1", 2).unwrap();
        assert!(d.holds(&[0.5, 0.5]));
        assert!(!d.holds(&[0.9, 0.9]));
        // A side that cannot evaluate counts as outside.
        let d = parse_inequality("log(x1) < 1", 1).unwrap();
        assert!(!d.holds(&[-1.0]));
        assert!(d.holds(&[1.0]));
    }
}
