//! Arithmetic expressions over the sampled node count `N` and the variable
//! cardinality `V`.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | 'N' | 'V' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func    := log | sqrt | floor | ceil | min | max
//! ```
//!
//! `log` is the natural logarithm. `×`, `÷` and `−` are accepted as aliases.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Log,
    Sqrt,
    Floor,
    Ceil,
    Min,
    Max,
}

impl Function {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "log" => Function::Log,
            "sqrt" => Function::Sqrt,
            "floor" => Function::Floor,
            "ceil" => Function::Ceil,
            "min" => Function::Min,
            "max" => Function::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Function::Log => "log",
            Function::Sqrt => "sqrt",
            Function::Floor => "floor",
            Function::Ceil => "ceil",
            Function::Min => "min",
            Function::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Function::Min | Function::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SymbolicExpr {
    Literal(f64),
    NodeCount,
    Cardinality,
    Neg(Box<SymbolicExpr>),
    Binary(BinaryOp, Box<SymbolicExpr>, Box<SymbolicExpr>),
    Call(Function, Vec<SymbolicExpr>),
}

impl SymbolicExpr {
    pub fn literal(value: f64) -> Self {
        SymbolicExpr::Literal(value)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let tokens = tokenize(text)?;
        let mut parser = Parser { tokens, pos: 0 };
        let expr = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Syntax(format!(
                "unexpected trailing input in expression `{text}`"
            )));
        }
        Ok(expr)
    }

    pub fn uses_cardinality(&self) -> bool {
        match self {
            SymbolicExpr::Cardinality => true,
            SymbolicExpr::Literal(_) | SymbolicExpr::NodeCount => false,
            SymbolicExpr::Neg(e) => e.uses_cardinality(),
            SymbolicExpr::Binary(_, a, b) => a.uses_cardinality() || b.uses_cardinality(),
            SymbolicExpr::Call(_, args) => args.iter().any(|a| a.uses_cardinality()),
        }
    }

    /// Evaluates the expression at node count `n` and cardinality `v`.
    pub fn resolve(&self, n: u64, v: u64) -> Result<f64> {
        if n < 1 {
            return Err(Error::Domain("node count must be at least 1".into()));
        }
        let value = self.eval(n as f64, v as f64)?;
        if !value.is_finite() {
            return Err(Error::Domain(format!(
                "`{self}` is not finite at N={n}, V={v}"
            )));
        }
        Ok(value)
    }

    /// Evaluates in an integer context: the value is floored and must be non-negative.
    pub fn resolve_count(&self, n: u64, v: u64) -> Result<u64> {
        let value = self.resolve(n, v)?.floor();
        if value < 0.0 {
            return Err(Error::Domain(format!(
                "`{self}` evaluates to a negative count at N={n}, V={v}"
            )));
        }
        Ok(value as u64)
    }

    fn eval(&self, n: f64, v: f64) -> Result<f64> {
        Ok(match self {
            SymbolicExpr::Literal(x) => *x,
            SymbolicExpr::NodeCount => n,
            SymbolicExpr::Cardinality => v,
            SymbolicExpr::Neg(e) => -e.eval(n, v)?,
            SymbolicExpr::Binary(op, a, b) => {
                let (a, b) = (a.eval(n, v)?, b.eval(n, v)?);
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(Error::Domain(format!("division by zero in `{self}`")));
                        }
                        a / b
                    }
                }
            }
            SymbolicExpr::Call(f, args) => {
                let x = args[0].eval(n, v)?;
                match f {
                    Function::Log => {
                        if x <= 0.0 {
                            return Err(Error::Domain(format!("log of non-positive value {x}")));
                        }
                        x.ln()
                    }
                    Function::Sqrt => {
                        if x < 0.0 {
                            return Err(Error::Domain(format!("sqrt of negative value {x}")));
                        }
                        x.sqrt()
                    }
                    Function::Floor => x.floor(),
                    Function::Ceil => x.ceil(),
                    Function::Min => x.min(args[1].eval(n, v)?),
                    Function::Max => x.max(args[1].eval(n, v)?),
                }
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            SymbolicExpr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            SymbolicExpr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            SymbolicExpr::Neg(_) => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for SymbolicExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &SymbolicExpr, min_prec: u8) -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            SymbolicExpr::Literal(x) => write!(f, "{x}"),
            SymbolicExpr::NodeCount => f.write_str("N"),
            SymbolicExpr::Cardinality => f.write_str("V"),
            SymbolicExpr::Neg(e) => {
                f.write_str("-")?;
                child(f, e, 3)
            }
            SymbolicExpr::Binary(op, a, b) => {
                let (sym, prec) = match op {
                    BinaryOp::Add => ("+", 1),
                    BinaryOp::Sub => ("-", 1),
                    BinaryOp::Mul => ("*", 2),
                    BinaryOp::Div => ("/", 2),
                };
                // Left-associative: the right operand needs parens at equal precedence.
                child(f, a, prec)?;
                write!(f, " {sym} ")?;
                child(f, b, prec + 1)
            }
            SymbolicExpr::Call(func, args) => {
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

impl FromStr for SymbolicExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SymbolicExpr::parse(s)
    }
}

impl Serialize for SymbolicExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SymbolicExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(x) => Ok(SymbolicExpr::Literal(x)),
            Raw::Text(t) => SymbolicExpr::parse(&t).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
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
                let lexeme: String = chars[start..i].iter().collect();
                let value = lexeme
                    .parse::<f64>()
                    .map_err(|_| Error::Syntax(format!("bad number `{lexeme}`")))?;
                tokens.push(Token::Number(value));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push(Token::Ident(chars[start..i].iter().collect()));
            }
            '+' | '*' | '/' | '-' => {
                tokens.push(Token::Op(c));
                i += 1;
            }
            '×' => {
                tokens.push(Token::Op('*'));
                i += 1;
            }
            '÷' => {
                tokens.push(Token::Op('/'));
                i += 1;
            }
            '−' => {
                tokens.push(Token::Op('-'));
                i += 1;
            }
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            ',' => {
                tokens.push(Token::Comma);
                i += 1;
            }
            other => {
                return Err(Error::Syntax(format!(
                    "unexpected character `{other}` in expression `{text}`"
                )))
            }
        }
    }
    if tokens.is_empty() {
        return Err(Error::Syntax("empty expression".into()));
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(Error::Syntax(format!("expected {want:?}, found {other:?}"))),
        }
    }

    fn expr(&mut self) -> Result<SymbolicExpr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if op == '+' {
                BinaryOp::Add
            } else {
                BinaryOp::Sub
            };
            lhs = SymbolicExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<SymbolicExpr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if op == '*' {
                BinaryOp::Mul
            } else {
                BinaryOp::Div
            };
            lhs = SymbolicExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<SymbolicExpr> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(SymbolicExpr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<SymbolicExpr> {
        match self.next() {
            Some(Token::Number(x)) => Ok(SymbolicExpr::Literal(x)),
            Some(Token::Ident(name)) => match name.as_str() {
                "N" => Ok(SymbolicExpr::NodeCount),
                "V" => Ok(SymbolicExpr::Cardinality),
                _ => {
                    let func = Function::from_name(&name)
                        .ok_or_else(|| Error::Syntax(format!("unknown symbol `{name}`")))?;
                    self.expect(Token::LParen)?;
                    let mut args = vec![self.expr()?];
                    while let Some(Token::Comma) = self.peek() {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Token::RParen)?;
                    if args.len() != func.arity() {
                        return Err(Error::Syntax(format!(
                            "{name} takes {} argument(s), got {}",
                            func.arity(),
                            args.len()
                        )));
                    }
                    Ok(SymbolicExpr::Call(func, args))
                }
            },
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            other => Err(Error::Syntax(format!("unexpected token {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(text: &str, n: u64, v: u64) -> f64 {
        SymbolicExpr::parse(text).unwrap().resolve(n, v).unwrap()
    }

    #[test]
    fn identity_and_scaling() {
        assert_eq!(eval("N", 7, 2), 7.0);
        assert_eq!(eval("2*N", 20, 2), 40.0);
        assert_eq!(eval("2 × N", 20, 2), 40.0);
        assert_eq!(eval("0.5*N", 10, 2), 5.0);
    }

    #[test]
    fn natural_log() {
        assert_eq!(eval("log(N)", 1, 2), 0.0);
        assert!((eval("log(N)", 10, 2) - 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_functions() {
        assert_eq!(eval("1 + 2 * 3", 1, 2), 7.0);
        assert_eq!(eval("(1 + 2) * 3", 1, 2), 9.0);
        assert_eq!(eval("10 - 4 - 3", 1, 2), 3.0);
        assert_eq!(eval("-N + 1", 3, 2), -2.0);
        assert_eq!(eval("min(N, V) * max(2, V)", 5, 3), 9.0);
        assert_eq!(eval("floor(N / 2) + ceil(0.1)", 7, 2), 4.0);
        assert_eq!(eval("sqrt(N*V)", 8, 2), 4.0);
        assert_eq!(eval("N*(N-1)/2*0.4", 5, 2), 4.0);
    }

    #[test]
    fn domain_errors() {
        let e = SymbolicExpr::parse("log(N - 1)").unwrap();
        assert!(matches!(e.resolve(1, 2), Err(Error::Domain(_))));
        let e = SymbolicExpr::parse("N / (V - 2)").unwrap();
        assert!(matches!(e.resolve(3, 2), Err(Error::Domain(_))));
        let e = SymbolicExpr::parse("1 - N").unwrap();
        assert!(matches!(e.resolve_count(3, 2), Err(Error::Domain(_))));
        assert_eq!(
            SymbolicExpr::parse("N / 2")
                .unwrap()
                .resolve_count(5, 2)
                .unwrap(),
            2
        );
    }

    #[test]
    fn syntax_errors() {
        for bad in ["", "N +", "foo(N)", "min(N)", "(N", "N N", "2 ^ N", "log N"] {
            assert!(
                matches!(SymbolicExpr::parse(bad), Err(Error::Syntax(_))),
                "{bad} should not parse"
            );
        }
    }

    #[test]
    fn display_keeps_structure() {
        for text in [
            "10 - (4 - 3)",
            "-(N + 1)",
            "N / (V * 2)",
            "max(N, 2) - -V",
            "1e-7 * N",
        ] {
            let e = SymbolicExpr::parse(text).unwrap();
            assert_eq!(SymbolicExpr::parse(&e.to_string()).unwrap(), e, "{text}");
        }
    }

    fn arb_expr() -> impl Strategy<Value = SymbolicExpr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(SymbolicExpr::Literal),
            Just(SymbolicExpr::NodeCount),
            Just(SymbolicExpr::Cardinality),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| SymbolicExpr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinaryOp::Add),
                        Just(BinaryOp::Sub),
                        Just(BinaryOp::Mul),
                        Just(BinaryOp::Div)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| SymbolicExpr::Binary(
                        op,
                        Box::new(a),
                        Box::new(b)
                    )),
                inner
                    .clone()
                    .prop_map(|e| SymbolicExpr::Call(Function::Floor, vec![e])),
                (inner.clone(), inner)
                    .prop_map(|(a, b)| SymbolicExpr::Call(Function::Max, vec![a, b])),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let reparsed = SymbolicExpr::parse(&e.to_string()).unwrap();
            prop_assert_eq!(reparsed, e);
        }

        #[test]
        fn resolve_is_pure(e in arb_expr(), n in 1u64..50, v in 2u64..10) {
            let a = e.resolve(n, v);
            let b = e.resolve(n, v);
            match (a, b) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "inconsistent outcome"),
            }
        }
    }
}
