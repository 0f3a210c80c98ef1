//! Kernel expression language.
//!
//! A small recursive-descent parser for scalar expressions over the variables
//! `t, s, theta, x, v, u`, the constant `pi`, the operators `+ - * / ^` (with `^`
//! right-associative and binding tighter than unary minus) and the functions
//! `exp, sin, cos, abs, tanh, min, max`.
//!
//! ```
//! use ppap::expr::{parse_expression, Env};
//! let e = parse_expression("2+3*4").unwrap();
//! assert_eq!(e.eval(&Env::default()), 14.0);
//! ```

use std::fmt;

use thiserror::Error;

/// Maximum nesting of parentheses, unary operators and calls, and maximum tree depth.
pub const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    T,
    S,
    Theta,
    X,
    V,
    U,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::S => "s",
            Var::Theta => "theta",
            Var::X => "x",
            Var::V => "v",
            Var::U => "u",
        }
    }

    fn from_name(name: &str) -> Option<Var> {
        Some(match name {
            "t" => Var::T,
            "s" => Var::S,
            "theta" => Var::Theta,
            "x" => Var::X,
            "v" => Var::V,
            "u" => Var::U,
            _ => return None,
        })
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
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
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
    Exp,
    Sin,
    Cos,
    Abs,
    Tanh,
    Min,
    Max,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
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
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Variable bindings for evaluation. Unused variables may be left at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    pub t: f64,
    pub s: f64,
    pub theta: f64,
    pub x: f64,
    pub v: f64,
    pub u: f64,
}

impl Env {
    fn get(&self, var: Var) -> f64 {
        match var {
            Var::T => self.t,
            Var::S => self.s,
            Var::Theta => self.theta,
            Var::X => self.x,
            Var::V => self.v,
            Var::U => self.u,
        }
    }
}

impl Expr {
    /// Evaluates the tree. Total on finite inputs except for division by zero,
    /// which yields an infinite or NaN result for the caller to reject.
    pub fn eval(&self, env: &Env) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(var) => env.get(*var),
            Expr::Neg(e) => -e.eval(env),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(env), b.eval(env));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(env);
                match f {
                    Func::Exp => a.exp(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Abs => a.abs(),
                    Func::Tanh => a.tanh(),
                    Func::Min => a.min(args[1].eval(env)),
                    Func::Max => a.max(args[1].eval(env)),
                }
            }
        }
    }

    /// Whether `var` occurs anywhere in the tree.
    pub fn uses(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) => e.uses(var),
            Expr::Binary(_, a, b) => a.uses(var) || b.uses(var),
            Expr::Call(_, args) => args.iter().any(|a| a.uses(var)),
        }
    }

    /// Whether the tree has no free variables.
    pub fn is_constant(&self) -> bool {
        [Var::T, Var::S, Var::Theta, Var::X, Var::V, Var::U]
            .iter()
            .all(|&v| !self.uses(v))
    }

    /// Free variables that are not in `allowed`.
    pub fn unexpected_vars(&self, allowed: &[Var]) -> Vec<Var> {
        [Var::T, Var::S, Var::Theta, Var::X, Var::V, Var::U]
            .into_iter()
            .filter(|v| !allowed.contains(v) && self.uses(*v))
            .collect()
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 5,
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn wrap(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(e) => {
                f.write_str("-")?;
                wrap(f, e, e.precedence() < 3)
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                if *op == BinOp::Pow {
                    wrap(f, a, a.precedence() < 5)?;
                    write!(f, "^")?;
                    wrap(f, b, b.precedence() < 3)
                } else {
                    wrap(f, a, a.precedence() < p)?;
                    write!(f, " {} ", op.symbol())?;
                    wrap(f, b, b.precedence() <= p)
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: expected {}, found {found}", .expected.join(" or "))]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v:?}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Op(c) => format!("'{c}'"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::End => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn error(&self, offset: usize, expected: &[&str], found: String) -> ParseError {
        ParseError {
            offset,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        }
    }

    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((start, Tok::End));
        };
        let tok = match c {
            b'0'..=b'9' | b'.' => return self.number(start),
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while self.pos < bytes.len()
                    && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                return Ok((start, Tok::Ident(self.src[start..self.pos].to_string())));
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(self.error(start, &["expression token"], format!("{ch:?}")));
            }
        };
        self.pos += 1;
        Ok((start, tok))
    }

    fn number(&mut self, start: usize) -> Result<(usize, Tok), ParseError> {
        let bytes = self.src.as_bytes();
        let digits = |pos: &mut usize| {
            let s = *pos;
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
            *pos - s
        };
        let mut n = digits(&mut self.pos);
        if bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(&mut self.pos);
        }
        if n == 0 {
            return Err(self.error(start, &["digit"], "'.'".into()));
        }
        if matches!(bytes.get(self.pos), Some(b'e' | b'E')) {
            let mut p = self.pos + 1;
            if matches!(bytes.get(p), Some(b'+' | b'-')) {
                p += 1;
            }
            if bytes.get(p).is_some_and(|b| b.is_ascii_digit()) {
                self.pos = p;
                digits(&mut self.pos);
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>()
            .map(|v| (start, Tok::Num(v)))
            .map_err(|_| self.error(start, &["number"], format!("'{text}'")))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    offset: usize,
    nesting: usize,
}

type Parsed = (Expr, usize);

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let (offset, tok) = lexer.next()?;
        Ok(Parser {
            lexer,
            tok,
            offset,
            nesting: 0,
        })
    }

    fn bump(&mut self) -> Result<(), ParseError> {
        let (offset, tok) = self.lexer.next()?;
        self.offset = offset;
        self.tok = tok;
        Ok(())
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        Err(self.lexer.error(self.offset, expected, self.tok.describe()))
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.nesting += 1;
        if self.nesting > MAX_DEPTH {
            return Err(self.lexer.error(
                self.offset,
                &["shallower nesting"],
                format!("nesting deeper than {MAX_DEPTH}"),
            ));
        }
        Ok(())
    }

    fn node(&self, depth: usize) -> Result<usize, ParseError> {
        if depth > MAX_DEPTH {
            return Err(self.lexer.error(
                self.offset,
                &["shorter operator chain"],
                format!("expression deeper than {MAX_DEPTH}"),
            ));
        }
        Ok(depth)
    }

    fn expr(&mut self) -> Result<Parsed, ParseError> {
        let (mut lhs, mut depth) = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = self.tok {
            self.bump()?;
            let (rhs, d) = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            depth = self.node(1 + depth.max(d))?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok((lhs, depth))
    }

    fn term(&mut self) -> Result<Parsed, ParseError> {
        let (mut lhs, mut depth) = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = self.tok {
            self.bump()?;
            let (rhs, d) = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            depth = self.node(1 + depth.max(d))?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok((lhs, depth))
    }

    fn unary(&mut self) -> Result<Parsed, ParseError> {
        if self.tok == Tok::Op('-') {
            self.enter()?;
            self.bump()?;
            let (e, d) = self.unary()?;
            self.nesting -= 1;
            return Ok((Expr::Neg(Box::new(e)), self.node(d + 1)?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Parsed, ParseError> {
        let (base, d) = self.atom()?;
        if self.tok != Tok::Op('^') {
            return Ok((base, d));
        }
        self.enter()?;
        self.bump()?;
        let (exp, e) = self.unary()?;
        self.nesting -= 1;
        let depth = self.node(1 + d.max(e))?;
        Ok((
            Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)),
            depth,
        ))
    }

    fn atom(&mut self) -> Result<Parsed, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok((Expr::Num(v), 1))
            }
            Tok::LParen => {
                self.enter()?;
                self.bump()?;
                let inner = self.expr()?;
                self.expect_rparen()?;
                self.nesting -= 1;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if name == "pi" {
                    self.bump()?;
                    return Ok((Expr::Num(std::f64::consts::PI), 1));
                }
                if let Some(var) = Var::from_name(&name) {
                    self.bump()?;
                    return Ok((Expr::Var(var), 1));
                }
                let Some(func) = Func::from_name(&name) else {
                    return self.fail(&["variable", "function", "pi"]);
                };
                self.bump()?;
                if self.tok != Tok::LParen {
                    return self.fail(&["'('"]);
                }
                self.enter()?;
                self.bump()?;
                let mut args = Vec::with_capacity(func.arity());
                let mut depth = 0;
                loop {
                    let (a, d) = self.expr()?;
                    depth = depth.max(d);
                    args.push(a);
                    if args.len() == func.arity() {
                        break;
                    }
                    if self.tok != Tok::Comma {
                        return self.fail(&["','"]);
                    }
                    self.bump()?;
                }
                self.expect_rparen()?;
                self.nesting -= 1;
                Ok((Expr::Call(func, args), self.node(depth + 1)?))
            }
            _ => self.fail(&["number", "variable", "function", "'('", "'-'"]),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if self.tok != Tok::RParen {
            return self.fail(&["')'"]);
        }
        self.bump()
    }
}

/// Parses `source` into an expression tree.
pub fn parse_expression(source: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(source)?;
    let (e, _) = p.expr()?;
    if p.tok != Tok::End {
        return p.fail(&["operator", "end of input"]);
    }
    Ok(e)
}

/// Parses and checks that only `allowed` variables occur.
pub fn parse_with_vars(source: &str, allowed: &[Var]) -> Result<Expr, ParseError> {
    let e = parse_expression(source)?;
    let bad = e.unexpected_vars(allowed);
    if let Some(v) = bad.first() {
        let offset = source.find(v.name()).unwrap_or(0);
        return Err(ParseError {
            offset,
            expected: allowed.iter().map(|v| v.name().to_string()).collect(),
            found: format!("variable '{}'", v.name()),
        });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str) -> f64 {
        parse_expression(src).unwrap().eval(&Env::default())
    }

    #[test]
    fn precedence() {
        assert_eq!(eval("2+3*4"), 14.0);
        assert_eq!(eval("(2+3)*4"), 20.0);
        assert_eq!(eval("2^3^2"), 512.0);
        assert_eq!(eval("-2^2"), -4.0);
        assert_eq!(eval("2^-1"), 0.5);
        assert_eq!(eval("8/4/2"), 1.0);
        assert_eq!(eval("10-4-3"), 3.0);
        assert_eq!(eval("--3"), 3.0);
        assert_eq!(eval("2*-3"), -6.0);
    }

    #[test]
    fn functions_and_variables() {
        let e = parse_expression("exp(2*s)").unwrap();
        assert_eq!(e.eval(&Env::default()), 1.0);
        let e = parse_expression("max(u, v) - min(u, v)").unwrap();
        let env = Env {
            u: 3.0,
            v: -1.0,
            ..Env::default()
        };
        assert_eq!(e.eval(&env), 4.0);
        assert!((eval("cos(pi)") + 1.0).abs() < 1e-15);
        assert_eq!(eval("abs(-2.5e1)"), 25.0);
        assert_eq!(eval("tanh(0)"), 0.0);
    }

    #[test]
    fn errors_carry_offsets() {
        let err = parse_expression("1 + * 2").unwrap_err();
        assert_eq!(err.offset, 4);
        assert!(err.expected.iter().any(|e| e == "number"));

        let err = parse_expression("sin(1, 2)").unwrap_err();
        assert_eq!(err.offset, 5);

        let err = parse_expression("foo(1)").unwrap_err();
        assert_eq!(err.offset, 0);

        let err = parse_expression("(1 + 2").unwrap_err();
        assert_eq!(err.offset, 6);
        assert_eq!(err.found, "end of input");

        assert!(parse_expression("").is_err());
        assert!(parse_expression("1 2").is_err());
        assert!(parse_expression("é").is_err());
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let deep = "(".repeat(100_000) + "1" + &")".repeat(100_000);
        assert!(parse_expression(&deep).is_err());
        let chain = vec!["1"; 50_000].join("+");
        assert!(parse_expression(&chain).is_err());
        let neg = "-".repeat(50_000) + "1";
        assert!(parse_expression(&neg).is_err());
    }

    #[test]
    fn variable_restrictions() {
        assert!(parse_with_vars("theta + 1", &[Var::Theta]).is_ok());
        let err = parse_with_vars("theta + t", &[Var::Theta]).unwrap_err();
        assert!(err.found.contains("'t'"));
    }

    #[test]
    fn display_round_trips() {
        for src in [
            "2+3*4",
            "-(a)".replace('a', "u").as_str(),
            "2^3^2",
            "(2^3)^2",
            "-2^2",
            "(-2)^2",
            "2^-x",
            "1-(2-3)",
            "1/(2/3)",
            "min(u, -v)*exp(-theta^2)",
            "1e300 + 1e-7",
        ] {
            let e = parse_expression(src).unwrap();
            let again = parse_expression(&e.to_string()).unwrap();
            assert_eq!(e, again, "{src} -> {e}");
        }
    }
}
