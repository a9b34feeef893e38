//! A small arithmetic expression language for defining integrands, maps and
//! gauges in text form.
//!
//! Grammar (no implicit multiplication, no user functions):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?          -- right associative, binds above neg
//! atom   := number | 'pi' | var | call | '(' expr ')'
//! var    := 'x' digits                 -- x1 .. xm
//! call   := name '(' expr (',' expr)* ')'
//! ```
//!
//! Known functions: `abs`, `sin`, `cos`, `exp`, `ln`, `sqrt` (one argument),
//! `min`, `max` (two arguments). Domain faults at evaluation (division by
//! zero, `ln` of a nonpositive value, `sqrt` of a negative value, non-finite
//! results) are reported as located errors instead of leaking NaN or infinity
//! into sums.

use std::fmt;

use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unknown identifier `{name}` at byte {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("variable x{index} at byte {position} exceeds the declared dimension {dim}")]
    Dimension {
        index: usize,
        dim: usize,
        position: usize,
    },
    #[error("`{name}` takes {expected} argument(s), got {got} (byte {position})")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
        position: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalFault {
    DivZero,
    LogDomain,
    SqrtDomain,
    PowDomain,
    NonFinite,
}

impl fmt::Display for EvalFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EvalFault::DivZero => "division by zero",
            EvalFault::LogDomain => "ln of a nonpositive value",
            EvalFault::SqrtDomain => "sqrt of a negative value",
            EvalFault::PowDomain => "pow outside its real domain",
            EvalFault::NonFinite => "non-finite value",
        };
        f.write_str(s)
    }
}

/// A located evaluation fault.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at {}", format_coords(.at))]
pub struct EvalError {
    pub kind: EvalFault,
    pub at: Vec<f64>,
}

fn format_coords(c: &[f64]) -> String {
    let inner: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
    format!("({})", inner.join(", "))
}

impl EvalError {
    pub fn new(kind: EvalFault, at: &[f64]) -> Self {
        EvalError {
            kind,
            at: at.to_vec(),
        }
    }

    pub fn non_finite(at: &[f64]) -> Self {
        Self::new(EvalFault::NonFinite, at)
    }
}

/// Abstract syntax tree of a scalar expression over `x1..xm`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(f64),
    /// 0-based variable index.
    Var(usize),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    Sqrt(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, p: &Point) -> Result<f64, EvalError> {
        self.eval_coords(p.coords())
    }

    pub fn eval_coords(&self, x: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Lit(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval_coords(x)?,
            Expr::Abs(a) => a.eval_coords(x)?.abs(),
            Expr::Sin(a) => a.eval_coords(x)?.sin(),
            Expr::Cos(a) => a.eval_coords(x)?.cos(),
            Expr::Exp(a) => a.eval_coords(x)?.exp(),
            Expr::Ln(a) => {
                let v = a.eval_coords(x)?;
                if v <= 0.0 {
                    return Err(EvalError::new(EvalFault::LogDomain, x));
                }
                v.ln()
            }
            Expr::Sqrt(a) => {
                let v = a.eval_coords(x)?;
                if v < 0.0 {
                    return Err(EvalError::new(EvalFault::SqrtDomain, x));
                }
                v.sqrt()
            }
            Expr::Add(a, b) => a.eval_coords(x)? + b.eval_coords(x)?,
            Expr::Sub(a, b) => a.eval_coords(x)? - b.eval_coords(x)?,
            Expr::Mul(a, b) => a.eval_coords(x)? * b.eval_coords(x)?,
            Expr::Div(a, b) => {
                let d = b.eval_coords(x)?;
                if d == 0.0 {
                    return Err(EvalError::new(EvalFault::DivZero, x));
                }
                a.eval_coords(x)? / d
            }
            Expr::Pow(a, b) => {
                let base = a.eval_coords(x)?;
                let exp = b.eval_coords(x)?;
                let v = base.powf(exp);
                if v.is_nan() {
                    return Err(EvalError::new(EvalFault::PowDomain, x));
                }
                v
            }
            Expr::Min(a, b) => a.eval_coords(x)?.min(b.eval_coords(x)?),
            Expr::Max(a, b) => a.eval_coords(x)?.max(b.eval_coords(x)?),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::new(EvalFault::NonFinite, x))
        }
    }

    /// Largest variable index used, if any (0-based).
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Lit(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a)
            | Expr::Abs(a)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Exp(a)
            | Expr::Ln(a)
            | Expr::Sqrt(a) => a.max_var(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, None) => x,
                (None, y) => y,
            },
        }
    }

    /// Canonical text form; parses back to an equal tree.
    pub fn print(&self) -> String {
        self.print_prec(0)
    }

    // precedence levels: 0 add, 1 mul, 2 unary, 3 pow, 4 atom
    fn print_prec(&self, parent: u8) -> String {
        let (s, prec) = match self {
            Expr::Lit(v) => (format!("{v:?}"), 4),
            Expr::Var(i) => (format!("x{}", i + 1), 4),
            Expr::Neg(a) => (format!("-{}", a.print_prec(2)), 2),
            Expr::Abs(a) => (format!("abs({})", a.print_prec(0)), 4),
            Expr::Sin(a) => (format!("sin({})", a.print_prec(0)), 4),
            Expr::Cos(a) => (format!("cos({})", a.print_prec(0)), 4),
            Expr::Exp(a) => (format!("exp({})", a.print_prec(0)), 4),
            Expr::Ln(a) => (format!("ln({})", a.print_prec(0)), 4),
            Expr::Sqrt(a) => (format!("sqrt({})", a.print_prec(0)), 4),
            Expr::Add(a, b) => (format!("{} + {}", a.print_prec(0), b.print_prec(1)), 0),
            Expr::Sub(a, b) => (format!("{} - {}", a.print_prec(0), b.print_prec(1)), 0),
            Expr::Mul(a, b) => (format!("{} * {}", a.print_prec(1), b.print_prec(2)), 1),
            Expr::Div(a, b) => (format!("{} / {}", a.print_prec(1), b.print_prec(2)), 1),
            // left side of ^ must be an atom; right side binds a full unary
            Expr::Pow(a, b) => (format!("{}^{}", a.print_prec(4), b.print_prec(2)), 3),
            Expr::Min(a, b) => (format!("min({}, {})", a.print_prec(0), b.print_prec(0)), 4),
            Expr::Max(a, b) => (format!("max({}, {})", a.print_prec(0), b.print_prec(0)), 4),
        };
        if prec < parent {
            format!("({s})")
        } else {
            s
        }
    }
}

/// Components of a map `R^m -> R^n`, all over the same domain dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorExpr {
    pub components: Vec<Expr>,
    pub dim: usize,
}

impl VectorExpr {
    pub fn new(components: Vec<Expr>, dim: usize) -> Self {
        assert!(!components.is_empty());
        for c in &components {
            if let Some(v) = c.max_var() {
                assert!(v < dim, "component uses x{} beyond dimension {dim}", v + 1);
            }
        }
        VectorExpr { components, dim }
    }

    pub fn parse(sources: &[&str], dim: usize) -> Result<Self, ParseError> {
        let components = sources
            .iter()
            .map(|s| parse(s, dim))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VectorExpr { components, dim })
    }

    pub fn eval(&self, p: &Point) -> Result<Vec<f64>, EvalError> {
        self.components.iter().map(|c| c.eval(p)).collect()
    }
}

/// Parses `src` as an expression over `x1..x{dim}`.
pub fn parse(src: &str, dim: usize) -> Result<Expr, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        dim,
        src_len: src.len(),
    };
    let e = p.expr()?;
    match p.peek() {
        None => Ok(e),
        Some(t) => Err(ParseError::Syntax {
            position: t.pos,
            expected: "end of input".to_string(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let pos = i;
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                i += 1;
            }
            '+' => {
                out.push(Token {
                    tok: Tok::Plus,
                    pos,
                });
                i += 1;
            }
            '-' => {
                out.push(Token {
                    tok: Tok::Minus,
                    pos,
                });
                i += 1;
            }
            '*' => {
                out.push(Token {
                    tok: Tok::Star,
                    pos,
                });
                i += 1;
            }
            '/' => {
                out.push(Token {
                    tok: Tok::Slash,
                    pos,
                });
                i += 1;
            }
            '^' => {
                out.push(Token {
                    tok: Tok::Caret,
                    pos,
                });
                i += 1;
            }
            '(' => {
                out.push(Token {
                    tok: Tok::LParen,
                    pos,
                });
                i += 1;
            }
            ')' => {
                out.push(Token {
                    tok: Tok::RParen,
                    pos,
                });
                i += 1;
            }
            ',' => {
                out.push(Token {
                    tok: Tok::Comma,
                    pos,
                });
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // exponent part
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    position: start,
                    expected: "a number".to_string(),
                })?;
                out.push(Token {
                    tok: Tok::Num(v),
                    pos: start,
                });
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(src[start..i].to_string()),
                    pos: start,
                });
            }
            _ => {
                return Err(ParseError::Syntax {
                    position: pos,
                    expected: "a token".to_string(),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
    src_len: usize,
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

    fn here(&self) -> usize {
        self.peek().map(|t| t.pos).unwrap_or(self.src_len)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t.tok == tok => Ok(()),
            Some(t) => Err(ParseError::Syntax {
                position: t.pos,
                expected: what.to_string(),
            }),
            None => Err(ParseError::Syntax {
                position: self.src_len,
                expected: what.to_string(),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::Plus) => {
                    self.next();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.next();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::Star) => {
                    self.next();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.next();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::Minus)) {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::Caret)) {
            self.next();
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let t = match self.next() {
            Some(t) => t,
            None => {
                return Err(ParseError::Syntax {
                    position: self.src_len,
                    expected: "an expression".to_string(),
                })
            }
        };
        match t.tok {
            Tok::Num(v) => Ok(Expr::Lit(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => self.ident(name, t.pos),
            _ => Err(ParseError::Syntax {
                position: t.pos,
                expected: "a number, variable, function or `(`".to_string(),
            }),
        }
    }

    fn ident(&mut self, name: String, pos: usize) -> Result<Expr, ParseError> {
        if name == "pi" {
            return Ok(Expr::Lit(std::f64::consts::PI));
        }
        if let Some(rest) = name.strip_prefix('x') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = rest.parse().map_err(|_| ParseError::Syntax {
                    position: pos,
                    expected: "a variable index".to_string(),
                })?;
                if index == 0 || index > self.dim {
                    return Err(ParseError::Dimension {
                        index,
                        dim: self.dim,
                        position: pos,
                    });
                }
                return Ok(Expr::Var(index - 1));
            }
        }
        let arity = match name.as_str() {
            "abs" | "sin" | "cos" | "exp" | "ln" | "sqrt" => 1,
            "min" | "max" => 2,
            _ => {
                return Err(ParseError::UnknownIdentifier {
                    name,
                    position: pos,
                })
            }
        };
        self.expect(Tok::LParen, "`(` after a function name")?;
        let mut args = vec![self.expr()?];
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Comma)) {
            self.next();
            args.push(self.expr()?);
        }
        let close = self.here();
        self.expect(Tok::RParen, "`)`")?;
        if args.len() != arity {
            return Err(ParseError::Arity {
                name,
                expected: arity,
                got: args.len(),
                position: close,
            });
        }
        let mut it = args.into_iter();
        let a = Box::new(it.next().unwrap());
        Ok(match name.as_str() {
            "abs" => Expr::Abs(a),
            "sin" => Expr::Sin(a),
            "cos" => Expr::Cos(a),
            "exp" => Expr::Exp(a),
            "ln" => Expr::Ln(a),
            "sqrt" => Expr::Sqrt(a),
            "min" => Expr::Min(a, Box::new(it.next().unwrap())),
            "max" => Expr::Max(a, Box::new(it.next().unwrap())),
            _ => unreachable!(),
        })
    }
}
