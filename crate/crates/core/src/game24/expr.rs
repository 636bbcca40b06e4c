//! Exact rational arithmetic expressions: literal parsing, a small
//! precedence-climbing parser, and evaluation without floating point.

use std::fmt;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Signed, Zero};

use super::Game24Error;

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            Op::Add | Op::Sub => 1,
            Op::Mul | Op::Div => 2,
        }
    }

    fn from_char(c: char) -> Option<Op> {
        match c {
            '+' => Some(Op::Add),
            '-' | '−' | '–' => Some(Op::Sub),
            '*' | '×' | '·' => Some(Op::Mul),
            '/' | '÷' => Some(Op::Div),
            _ => None,
        }
    }

    /// Applies the operator exactly. Division by zero and overflow are errors.
    pub fn apply(self, lhs: Rational, rhs: Rational) -> Result<Rational, EvalError> {
        let out = match self {
            Op::Add => lhs.checked_add(&rhs),
            Op::Sub => lhs.checked_sub(&rhs),
            Op::Mul => lhs.checked_mul(&rhs),
            Op::Div => {
                if rhs.is_zero() {
                    return Err(EvalError::DivZero);
                }
                lhs.checked_div(&rhs)
            }
        };
        out.ok_or(EvalError::Overflow)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalError {
    DivZero,
    Overflow,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::DivZero => write!(f, "division by zero"),
            EvalError::Overflow => write!(f, "arithmetic overflow"),
        }
    }
}

impl std::error::Error for EvalError {}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExprNode {
    Leaf(Rational),
    Node {
        op: Op,
        left: Box<ExprNode>,
        right: Box<ExprNode>,
    },
}

impl ExprNode {
    pub fn leaf(value: impl Into<Rational>) -> Self {
        ExprNode::Leaf(value.into())
    }

    pub fn node(op: Op, left: ExprNode, right: ExprNode) -> Self {
        ExprNode::Node {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn eval(&self) -> Result<Rational, EvalError> {
        match self {
            ExprNode::Leaf(v) => Ok(*v),
            ExprNode::Node { op, left, right } => op.apply(left.eval()?, right.eval()?),
        }
    }

    /// Leaf values in left-to-right order.
    pub fn leaves(&self) -> Vec<Rational> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<Rational>) {
        match self {
            ExprNode::Leaf(v) => out.push(*v),
            ExprNode::Node { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// A literal is a leaf, or an integer-over-integer division (a written fraction).
    pub fn as_literal(&self) -> Option<Rational> {
        match self {
            ExprNode::Leaf(v) => Some(*v),
            ExprNode::Node {
                op: Op::Div,
                left,
                right,
            } => match (left.as_ref(), right.as_ref()) {
                (ExprNode::Leaf(n), ExprNode::Leaf(d)) if n.is_integer() && d.is_integer() => {
                    Op::Div.apply(*n, *d).ok()
                }
                _ => None,
            },
            _ => None,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ExprNode::Leaf(v) if v.is_integer() && !v.is_negative() => 3,
            // fractions and negatives always get parenthesised as operands
            ExprNode::Leaf(_) => 0,
            ExprNode::Node { op, .. } => op.precedence(),
        }
    }
}

impl fmt::Display for ExprNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprNode::Leaf(v) => write!(f, "{}", format_rational(*v)),
            ExprNode::Node { op, left, right } => {
                let p = op.precedence();
                let wrap_left = left.precedence() < p;
                let wrap_right = right.precedence() <= p;
                write_operand(f, left, wrap_left)?;
                write!(f, " {} ", op)?;
                write_operand(f, right, wrap_right)
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &ExprNode, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({})", e)
    } else {
        write!(f, "{}", e)
    }
}

/// Renders `3`, `-5`, or `8/3`.
pub fn format_rational(v: Rational) -> String {
    if v.is_integer() {
        v.to_integer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Renders a value as a step operand: fractions are parenthesised so that
/// `8 / (1/3)` cannot be misread as `(8 / 1) / 3`.
pub fn format_operand(v: Rational) -> String {
    if v.is_integer() && !v.is_negative() {
        format_rational(v)
    } else {
        format!("({})", format_rational(v))
    }
}

/// Parses a single rational literal: `12`, `-5`, `2.5`, `8/3`, `(8/3)`.
pub fn parse_rational(text: &str) -> Result<Rational, Game24Error> {
    let expr = parse_expr(text)?;
    expr.as_literal()
        .ok_or_else(|| Game24Error::malformed(text, "expected a number"))
}

/// Parses an arithmetic expression over numeric literals with `+ - * /`
/// (and the unicode `− × ÷`), parentheses, and unary minus on literals.
pub fn parse_expr(text: &str) -> Result<ExprNode, Game24Error> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        source: text,
    };
    let expr = parser.expression(0)?;
    if parser.pos != tokens.len() {
        return Err(Game24Error::malformed(text, "trailing input after expression"));
    }
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(Rational),
    Op(Op),
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<Token>, Game24Error> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let lexeme: String = chars[start..i].iter().collect();
            tokens.push(Token::Num(decimal_to_rational(&lexeme).ok_or_else(|| {
                Game24Error::malformed(text, "number out of range")
            })?));
        } else if c == '(' || c == '[' {
            tokens.push(Token::Open);
            i += 1;
        } else if c == ')' || c == ']' {
            tokens.push(Token::Close);
            i += 1;
        } else if let Some(op) = Op::from_char(c) {
            tokens.push(Token::Op(op));
            i += 1;
        } else {
            return Err(Game24Error::malformed(
                text,
                format!("unexpected character {c:?}"),
            ));
        }
    }
    Ok(tokens)
}

fn decimal_to_rational(lexeme: &str) -> Option<Rational> {
    match lexeme.split_once('.') {
        None => lexeme.parse::<i64>().ok().map(Rational::from_integer),
        Some((int, frac)) => {
            let scale = 10i64.checked_pow(u32::try_from(frac.len()).ok()?)?;
            let digits: i64 = format!("{int}{frac}").parse().ok()?;
            Some(Rational::new(digits, scale))
        }
    }
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    source: &'a str,
}

impl Parser<'_> {
    fn expression(&mut self, min_prec: u8) -> Result<ExprNode, Game24Error> {
        let mut lhs = self.primary()?;
        while let Some(Token::Op(op)) = self.tokens.get(self.pos) {
            let op = *op;
            if op.precedence() < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.expression(op.precedence() + 1)?;
            lhs = ExprNode::node(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<ExprNode, Game24Error> {
        match self.tokens.get(self.pos) {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(ExprNode::Leaf(*v))
            }
            Some(Token::Op(Op::Sub)) => {
                self.pos += 1;
                match self.tokens.get(self.pos) {
                    Some(Token::Num(v)) => {
                        self.pos += 1;
                        Ok(ExprNode::Leaf(-*v))
                    }
                    _ => Err(Game24Error::malformed(
                        self.source,
                        "unary minus is only allowed before a number",
                    )),
                }
            }
            Some(Token::Open) => {
                self.pos += 1;
                let inner = self.expression(0)?;
                match self.tokens.get(self.pos) {
                    Some(Token::Close) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(Game24Error::malformed(self.source, "unbalanced parenthesis")),
                }
            }
            _ => Err(Game24Error::malformed(self.source, "expected a number or '('")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("(13 - (10 - 4)) * 9").unwrap();
        assert_eq!(e.eval().unwrap(), r(63, 1));
        let e = parse_expr("10 + 4 + 9 + 13").unwrap();
        assert_eq!(e.eval().unwrap(), r(36, 1));
        let e = parse_expr("1 + 8 / 4 * 8").unwrap();
        assert_eq!(e.eval().unwrap(), r(17, 1));
        let e = parse_expr("8 - 3 - 2").unwrap();
        assert_eq!(e.eval().unwrap(), r(3, 1));
    }

    #[test]
    fn unicode_operators() {
        let e = parse_expr("(13 − 9) × (10 − 4)").unwrap();
        assert_eq!(e.eval().unwrap(), r(24, 1));
        assert_eq!(parse_expr("48 ÷ 2").unwrap().eval().unwrap(), r(24, 1));
    }

    #[test]
    fn exact_division_chain() {
        let e = parse_expr("8 / (3 - 8 / 3)").unwrap();
        assert_eq!(e.eval().unwrap(), r(24, 1));
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e = parse_expr("4 / (2 - 2)").unwrap();
        assert_eq!(e.eval(), Err(EvalError::DivZero));
    }

    #[test]
    fn literals() {
        assert_eq!(parse_rational("8/3").unwrap(), r(8, 3));
        assert_eq!(parse_rational("(1/3)").unwrap(), r(1, 3));
        assert_eq!(parse_rational("-5").unwrap(), r(-5, 1));
        assert_eq!(parse_rational("2.5").unwrap(), r(5, 2));
        assert!(parse_rational("2 + 3").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "(6 - 4) * (4 + 8)",
            "8 / (3 - 8 / 3)",
            "4 * (9 - (13 - 10))",
            "1 + 8 / 4 * 8",
            "24 * 1 * 1 * 1",
        ] {
            let e = parse_expr(text).unwrap();
            assert_eq!(e.to_string(), text);
            assert_eq!(parse_expr(&e.to_string()).unwrap(), e);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_expr("(1 + 2").is_err());
        assert!(parse_expr("1 + ").is_err());
        assert!(parse_expr("1 2").is_err());
        assert!(parse_expr("-(1 + 2)").is_err());
    }
}
