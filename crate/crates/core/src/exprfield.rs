//! Analytic expressions of `(x, t)` used to describe environments and
//! dispersal strategies in configuration files.
//!
//! Grammar (EBNF, whitespace ignored between tokens):
//!
//! ```text
//! expr    = term , { ( "+" | "-" ) , term } ;
//! term    = unary , { ( "*" | "/" ) , unary } ;
//! unary   = "-" , unary | power ;
//! power   = primary , [ "^" , unary ] ;          (* right-associative *)
//! primary = number | ident | ident , "(" , args , ")" | "(" , expr , ")" ;
//! args    = expr , { "," , expr } ;
//! number  = digits , [ "." , [ digits ] ] , [ exponent ]
//!         | "." , digits , [ exponent ] ;
//! exponent= ( "e" | "E" ) , [ "+" | "-" ] , digits ;
//! ```
//!
//! Identifiers resolve to the variables `x`, `t`, the constants `pi`, `e`,
//! or a named parameter bound at evaluation time. Functions: `sin`, `cos`,
//! `exp`, `log`, `abs`, `tanh` (one argument) and `min`, `max` (two).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Named scalars bound at evaluation time.
pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Tanh,
    Min,
    Max,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Log,
        Func::Abs,
        Func::Tanh,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, args: &[f64]) -> f64 {
        match self {
            Func::Sin => args[0].sin(),
            Func::Cos => args[0].cos(),
            Func::Exp => args[0].exp(),
            Func::Log => args[0].ln(),
            Func::Abs => args[0].abs(),
            Func::Tanh => args[0].tanh(),
            Func::Min => args[0].min(args[1]),
            Func::Max => args[0].max(args[1]),
        }
    }
}

/// Parsed expression tree. Numeric literals are always non-negative;
/// a leading minus is a [`Expr::Neg`] node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Const(Constant),
    Param(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at byte {offset}: found {found}, expected one of {expected:?}")]
    Syntax {
        offset: usize,
        found: String,
        expected: Vec<&'static str>,
    },
    #[error("unknown identifier `{name}` at byte {offset}; known names: {known:?}")]
    UnknownIdentifier {
        name: String,
        offset: usize,
        known: Vec<String>,
    },
    #[error("function `{name}` at byte {offset} takes {expected} argument(s), got {found}")]
    Arity {
        name: &'static str,
        offset: usize,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("non-finite result {value} from `{subexpr}`")]
    NonFinite { subexpr: String, value: f64 },
}

// ---------------------------------------------------------------------------
// Lexer

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
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                let end = scan_number(bytes, i).ok_or_else(|| ParseError::Syntax {
                    offset: i,
                    found: format!("`{}`", c as char),
                    expected: vec!["number"],
                })?;
                let text = &src[i..end];
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: i,
                    found: format!("`{text}`"),
                    expected: vec!["number"],
                })?;
                i = end;
                out.push((Tok::Num(value), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = i + 1;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                    end += 1;
                }
                out.push((Tok::Ident(src[i..end].to_string()), start));
                i = end;
                continue;
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: i,
                    found: format!("`{ch}`"),
                    expected: vec!["number", "identifier", "`(`", "`-`"],
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

/// Returns the end offset of a decimal literal starting at `i`.
fn scan_number(b: &[u8], mut i: usize) -> Option<usize> {
    let digits = |b: &[u8], mut i: usize| {
        let s = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        (i, i - s)
    };
    let (j, n_int) = digits(b, i);
    i = j;
    let mut n_frac = 0;
    if i < b.len() && b[i] == b'.' {
        let (j, n) = digits(b, i + 1);
        i = j;
        n_frac = n;
    }
    if n_int == 0 && n_frac == 0 {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut k = i + 1;
        if k < b.len() && (b[k] == b'+' || b[k] == b'-') {
            k += 1;
        }
        let (j, n) = digits(b, k);
        if n == 0 {
            return None;
        }
        i = j;
    }
    Some(i)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    declared: Option<&'a BTreeSet<String>>,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: Vec<&'static str>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            found: self.peek().describe(),
            expected,
        })
    }

    fn expect(&mut self, tok: Tok, name: &'static str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.fail(vec![name])
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.call(name, offset)
                } else {
                    self.identifier(name, offset)
                }
            }
            _ => self.fail(vec!["number", "identifier", "`(`", "`-`"]),
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        let Some(func) = Func::from_name(&name) else {
            return Err(ParseError::UnknownIdentifier {
                name,
                offset,
                known: Func::ALL.iter().map(|f| f.name().to_string()).collect(),
            });
        };
        self.bump(); // `(`
        let mut args = Vec::with_capacity(func.arity());
        loop {
            args.push(self.expr()?);
            match self.peek() {
                Tok::Comma if args.len() < func.arity() => {
                    self.bump();
                }
                Tok::RParen if args.len() == func.arity() => {
                    self.bump();
                    return Ok(Expr::Call(func, args));
                }
                Tok::Comma | Tok::RParen => {
                    return Err(ParseError::Arity {
                        name: func.name(),
                        offset,
                        expected: func.arity(),
                        found: args.len() + usize::from(*self.peek() == Tok::Comma),
                    });
                }
                _ if args.len() < func.arity() => return self.fail(vec!["`,`"]),
                _ => return self.fail(vec!["`)`"]),
            }
        }
    }

    fn identifier(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        Ok(match name.as_str() {
            "x" => Expr::Var(Var::X),
            "t" => Expr::Var(Var::T),
            "pi" => Expr::Const(Constant::Pi),
            "e" => Expr::Const(Constant::E),
            _ => {
                if Func::from_name(&name).is_some() {
                    return self.fail(vec!["`(`"]);
                }
                if let Some(declared) = self.declared {
                    if !declared.contains(&name) {
                        let mut known: Vec<String> = ["x", "t", "pi", "e"].iter().map(|s| s.to_string()).collect();
                        known.extend(declared.iter().cloned());
                        known.extend(Func::ALL.iter().map(|f| f.name().to_string()));
                        return Err(ParseError::UnknownIdentifier { name, offset, known });
                    }
                }
                Expr::Param(name)
            }
        })
    }
}

fn parse_impl(src: &str, declared: Option<&BTreeSet<String>>) -> Result<Expr, ParseError> {
    if src.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, declared };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail(vec!["operator", "end of input"]);
    }
    Ok(e)
}

/// Parses `src`; identifiers other than `x`, `t`, `pi`, `e` become parameters.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    parse_impl(src, None)
}

/// Like [`parse`], but only the listed parameter names are accepted.
pub fn parse_with_params(src: &str, params: &BTreeSet<String>) -> Result<Expr, ParseError> {
    parse_impl(src, Some(params))
}

// ---------------------------------------------------------------------------
// Evaluation and printing

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 5,
        }
    }

    /// Names of all parameters referenced by the expression.
    pub fn free_params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Param(p) => {
                out.insert(p.clone());
            }
            Expr::Neg(e) => e.collect_params(out),
            Expr::Bin(_, a, b) => {
                a.collect_params(out);
                b.collect_params(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_params(out)),
            _ => {}
        }
    }

    /// True when the expression does not reference `t`.
    pub fn is_time_independent(&self) -> bool {
        match self {
            Expr::Var(Var::T) => false,
            Expr::Neg(e) => e.is_time_independent(),
            Expr::Bin(_, a, b) => a.is_time_independent() && b.is_time_independent(),
            Expr::Call(_, args) => args.iter().all(Expr::is_time_independent),
            _ => true,
        }
    }

    pub fn eval(&self, x: f64, t: f64, params: &Params) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => return Ok(*v),
            Expr::Var(Var::X) => x,
            Expr::Var(Var::T) => t,
            Expr::Const(c) => return Ok(c.value()),
            Expr::Param(name) => *params
                .get(name)
                .ok_or_else(|| EvalError::UnboundParameter(name.clone()))?,
            Expr::Neg(e) => -e.eval(x, t, params)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval(x, t, params)?;
                let b = b.eval(x, t, params)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let mut vals = [0.0; 2];
                for (slot, a) in vals.iter_mut().zip(args) {
                    *slot = a.eval(x, t, params)?;
                }
                f.apply(&vals[..args.len()])
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite {
                subexpr: self.to_string(),
                value: v,
            })
        }
    }

    /// Prints with every operator node parenthesised.
    pub fn unparse_full(&self) -> String {
        match self {
            Expr::Neg(e) => format!("(-{})", e.unparse_full()),
            Expr::Bin(op, a, b) => {
                format!("({} {} {})", a.unparse_full(), op.symbol(), b.unparse_full())
            }
            Expr::Call(f, args) => {
                let args: Vec<String> = args.iter().map(Expr::unparse_full).collect();
                format!("{}({})", f.name(), args.join(", "))
            }
            leaf => leaf.to_string(),
        }
    }

    /// Prints with the minimum parentheses needed to reparse to the same tree.
    pub fn unparse(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool| {
            if paren {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Const(Constant::Pi) => f.write_str("pi"),
            Expr::Const(Constant::E) => f.write_str("e"),
            Expr::Param(p) => f.write_str(p),
            Expr::Neg(e) => {
                f.write_str("-")?;
                wrap(f, e, e.precedence() < 3)
            }
            Expr::Bin(BinOp::Pow, a, b) => {
                wrap(f, a, a.precedence() <= 4)?;
                f.write_str("^")?;
                wrap(f, b, b.precedence() < 3)
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                wrap(f, a, a.precedence() < p)?;
                write!(f, " {} ", op.symbol())?;
                wrap(f, b, b.precedence() <= p)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: f64, t: f64) -> f64 {
        parse(src).unwrap().eval(x, t, &Params::new()).unwrap()
    }

    #[test]
    fn literal_one() {
        assert_eq!(parse("1").unwrap(), Expr::Num(1.0));
    }

    #[test]
    fn seasonal_expression_at_zero() {
        assert_eq!(ev("1.5+0.5*cos(2*pi*t/1.0)", 0.3, 0.0), 2.0);
    }

    #[test]
    fn unbalanced_paren_reports_end_of_input() {
        match parse("sin(pi*x") {
            Err(ParseError::Syntax {
                offset,
                expected,
                found,
            }) => {
                assert_eq!(offset, 8);
                assert!(expected.contains(&"`)`"));
                assert_eq!(found, "end of input");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn basic_eval() {
        assert_eq!(ev("x*t", 2.0, 3.0), 6.0);
        assert_eq!(ev("exp(0)+log(1)", 0.0, 0.0), 1.0);
    }

    #[test]
    fn pole_is_a_runtime_error() {
        let e = parse("1/ (x-1)").unwrap();
        match e.eval(1.0, 0.0, &Params::new()) {
            Err(EvalError::NonFinite { subexpr, .. }) => assert_eq!(subexpr, "1.0 / (x - 1.0)"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unbound_parameter() {
        let e = parse("a*x").unwrap();
        assert_eq!(
            e.eval(1.0, 0.0, &Params::new()),
            Err(EvalError::UnboundParameter("a".into()))
        );
        let mut p = Params::new();
        p.insert("a".into(), 2.5);
        assert_eq!(e.eval(2.0, 0.0, &p), Ok(5.0));
    }

    #[test]
    fn strict_mode_lists_known_names() {
        let declared: BTreeSet<String> = ["amp".to_string()].into();
        match parse_with_params("amp*y", &declared) {
            Err(ParseError::UnknownIdentifier { name, offset, known }) => {
                assert_eq!(name, "y");
                assert_eq!(offset, 4);
                assert!(known.contains(&"amp".to_string()));
                assert!(known.contains(&"x".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_function() {
        assert!(matches!(
            parse("sqrt(x)"),
            Err(ParseError::UnknownIdentifier { offset: 0, .. })
        ));
    }

    #[test]
    fn min_max_are_binary() {
        assert!(matches!(
            parse("min(x)"),
            Err(ParseError::Arity {
                expected: 2,
                found: 1,
                ..
            })
        ));
        assert!(matches!(parse("max(1,2,3)"), Err(ParseError::Arity { found: 3, .. })));
        assert!(matches!(parse("sin(1,2)"), Err(ParseError::Arity { found: 2, .. })));
        assert_eq!(ev("max(x, 2)", 1.0, 0.0), 2.0);
    }

    #[test]
    fn time_independence() {
        assert!(parse("sin(x)+2").unwrap().is_time_independent());
        assert!(!parse("x*t").unwrap().is_time_independent());
    }
}
