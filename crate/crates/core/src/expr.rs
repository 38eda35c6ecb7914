//! Transfer-function expressions.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right-associative
//! primary := number | 'pi' | name | func '(' expr ')' | '(' expr ')'
//! func    := 'sqrt' | 'ln' | 'exp'
//! ```
//!
//! Exponents must fold to a finite constant when parsed. Names match
//! `[A-Za-z][A-Za-z0-9_]*`; `pi` and the function names are reserved.
//! There is no implicit multiplication.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::scalar::Scalar;
use crate::{Assignment, Error, Result};

/// Names that cannot be used as variables.
pub const RESERVED: [&str; 4] = ["pi", "sqrt", "ln", "exp"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Ln,
    Exp,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sqrt" => Some(Func::Sqrt),
            "ln" => Some(Func::Ln),
            "exp" => Some(Func::Exp),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Ln => "ln",
            Func::Exp => "exp",
        }
    }
}

/// Expression tree node. `Var` holds an index into the owning
/// [`Expr`]'s sorted variable list.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Pi,
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, f64),
    Call(Func, Box<Node>),
}

/// A parsed, validated transfer function.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    vars: Vec<String>,
}

/// Checks that `name` can be used as a variable.
pub fn validate_name(name: &str) -> Result<()> {
    if RESERVED.contains(&name) {
        return Err(Error::ReservedName {
            name: name.to_string(),
        });
    }
    let mut chars = name.chars();
    let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidName(name.to_string()))
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self> {
        let tokens = lex(text)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            end: text.len(),
            names: Vec::new(),
        };
        let root = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(syntax(tok.offset, "unexpected trailing input"));
        }

        // Renumber variables so slots follow sorted name order.
        let mut sorted = parser.names.clone();
        sorted.sort();
        let remap: Vec<usize> = parser
            .names
            .iter()
            .map(|n| sorted.binary_search(n).unwrap())
            .collect();
        let mut root = root;
        renumber(&mut root, &remap);
        Ok(Self { root, vars: sorted })
    }

    /// Sorted, duplicate-free variable names.
    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn slot_of(&self, name: &str) -> Option<usize> {
        self.vars.binary_search_by(|v| v.as_str().cmp(name)).ok()
    }

    /// Looks up every variable of the expression in `a`, in slot order.
    pub fn bind(&self, a: &Assignment) -> Result<Vec<f64>> {
        self.vars
            .iter()
            .map(|v| a.get(v).ok_or_else(|| Error::MissingBinding(v.clone())))
            .collect()
    }

    pub fn evaluate(&self, a: &Assignment) -> Result<f64> {
        let slots = self.bind(a)?;
        self.eval_slots(&slots)
    }

    /// Evaluates with variable values given in slot order.
    pub fn eval_slots<S: Scalar>(&self, slots: &[S]) -> Result<S> {
        assert_eq!(slots.len(), self.vars.len(), "slot count mismatch");
        self.eval_node(&self.root, slots)
    }

    fn eval_node<S: Scalar>(&self, node: &Node, slots: &[S]) -> Result<S> {
        Ok(match node {
            Node::Const(c) => S::constant(*c),
            Node::Pi => S::constant(core::f64::consts::PI),
            Node::Var(i) => slots[*i],
            Node::Neg(inner) => -self.eval_node(inner, slots)?,
            Node::Binary(op, lhs, rhs) => {
                let l = self.eval_node(lhs, slots)?;
                let r = self.eval_node(rhs, slots)?;
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r.value() == 0.0 {
                            return Err(self.domain(node, "division by zero"));
                        }
                        l / r
                    }
                }
            }
            Node::Pow(base, exponent) => {
                let b = self.eval_node(base, slots)?;
                if b.value() < 0.0 && libm::trunc(*exponent) != *exponent {
                    return Err(self.domain(node, "fractional power of a negative number"));
                }
                if b.value() == 0.0 && *exponent < 0.0 {
                    return Err(self.domain(node, "zero raised to a negative power"));
                }
                b.powf(*exponent)
            }
            Node::Call(func, arg) => {
                let x = self.eval_node(arg, slots)?;
                match func {
                    Func::Sqrt => {
                        if x.value() < 0.0 {
                            return Err(self.domain(node, "square root of a negative number"));
                        }
                        x.sqrt()
                    }
                    Func::Ln => {
                        if x.value() <= 0.0 {
                            return Err(self.domain(node, "logarithm of a non-positive number"));
                        }
                        x.ln()
                    }
                    Func::Exp => x.exp(),
                }
            }
        })
    }

    fn domain(&self, node: &Node, reason: &'static str) -> Error {
        Error::Domain {
            node: NodeDisplay {
                node,
                names: &self.vars,
            }
            .to_string(),
            reason,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        NodeDisplay {
            node: &self.root,
            names: &self.vars,
        }
        .fmt(f)
    }
}

impl core::str::FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

fn renumber(node: &mut Node, remap: &[usize]) {
    match node {
        Node::Var(i) => *i = remap[*i],
        Node::Neg(n) | Node::Pow(n, _) | Node::Call(_, n) => renumber(n, remap),
        Node::Binary(_, l, r) => {
            renumber(l, remap);
            renumber(r, remap);
        }
        Node::Const(_) | Node::Pi => {}
    }
}

// ---- printing ----

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        Node::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        Node::Neg(_) => PREC_NEG,
        Node::Pow(..) => PREC_POW,
        Node::Const(c) if c.is_sign_negative() => PREC_NEG,
        _ => PREC_ATOM,
    }
}

struct NodeDisplay<'a> {
    node: &'a Node,
    names: &'a [String],
}

impl NodeDisplay<'_> {
    fn child<'b>(&'b self, node: &'b Node) -> NodeDisplay<'b> {
        NodeDisplay {
            node,
            names: self.names,
        }
    }

    fn wrapped(&self, f: &mut fmt::Formatter<'_>, node: &Node, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({})", self.child(node))
        } else {
            write!(f, "{}", self.child(node))
        }
    }
}

impl fmt::Display for NodeDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Node::Const(c) => write!(f, "{c}"),
            Node::Pi => f.write_str("pi"),
            Node::Var(i) => f.write_str(&self.names[*i]),
            Node::Neg(inner) => {
                f.write_str("-")?;
                self.wrapped(f, inner, precedence(inner) < PREC_NEG)
            }
            Node::Binary(op, lhs, rhs) => {
                let p = precedence(self.node);
                self.wrapped(f, lhs, precedence(lhs) < p)?;
                f.write_str(match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                })?;
                self.wrapped(f, rhs, precedence(rhs) <= p)
            }
            Node::Pow(base, exponent) => {
                self.wrapped(f, base, precedence(base) <= PREC_POW)?;
                if exponent.is_sign_negative() {
                    write!(f, "^({exponent})")
                } else {
                    write!(f, "^{exponent}")
                }
            }
            Node::Call(func, arg) => write!(f, "{}({})", func.name(), self.child(arg)),
        }
    }
}

// ---- lexing ----

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn syntax(offset: usize, message: &str) -> Error {
    Error::Syntax {
        offset,
        message: message.to_string(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push(Token {
                    tok: Tok::Op(c as char),
                    offset: start,
                });
                i += 1;
            }
            b'(' => {
                out.push(Token {
                    tok: Tok::LParen,
                    offset: start,
                });
                i += 1;
            }
            b')' => {
                out.push(Token {
                    tok: Tok::RParen,
                    offset: start,
                });
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let value: f64 = lit
                    .parse()
                    .map_err(|_| syntax(start, "malformed number"))?;
                if !value.is_finite() {
                    return Err(syntax(start, "number out of range"));
                }
                out.push(Token {
                    tok: Tok::Num(value),
                    offset: start,
                });
            }
            c if c.is_ascii_alphabetic() => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(text[start..i].to_string()),
                    offset: start,
                });
            }
            _ => return Err(syntax(start, "unexpected character")),
        }
    }
    Ok(out)
}

// ---- parsing ----

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    end: usize,
    names: Vec<String>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token { tok: Tok::Op(c), .. }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if op == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if op == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat_op(&['-']).is_some() {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.eat_op(&['^']).is_none() {
            return Ok(base);
        }
        let at = self.offset();
        let before = self.names.len();
        let exponent = self.unary()?;
        if self.names.len() != before || contains_var(&exponent) {
            return Err(syntax(at, "exponent must be a constant"));
        }
        let value = fold(&exponent);
        if !value.is_finite() {
            return Err(syntax(at, "exponent does not fold to a finite number"));
        }
        Ok(Node::Pow(Box::new(base), value))
    }

    fn primary(&mut self) -> Result<Node> {
        let Some(tok) = self.peek().cloned() else {
            return Err(syntax(self.end, "unexpected end of input"));
        };
        self.pos += 1;
        match tok.tok {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let call = matches!(self.peek(), Some(Token { tok: Tok::LParen, .. }));
                if call {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(Error::UnknownFunction {
                            name,
                            offset: tok.offset,
                        });
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Node::Pi);
                }
                if Func::from_name(&name).is_some() {
                    return Err(syntax(self.offset(), "expected `(` after function name"));
                }
                let slot = match self.names.iter().position(|n| *n == name) {
                    Some(i) => i,
                    None => {
                        self.names.push(name);
                        self.names.len() - 1
                    }
                };
                Ok(Node::Var(slot))
            }
            Tok::Op(c) => Err(syntax(tok.offset, &format!("unexpected operator `{c}`"))),
            Tok::RParen => Err(syntax(tok.offset, "unexpected `)`")),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.peek() {
            Some(Token {
                tok: Tok::RParen, ..
            }) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(syntax(self.offset(), "expected `)`")),
        }
    }
}

fn contains_var(node: &Node) -> bool {
    match node {
        Node::Var(_) => true,
        Node::Const(_) | Node::Pi => false,
        Node::Neg(n) | Node::Pow(n, _) | Node::Call(_, n) => contains_var(n),
        Node::Binary(_, l, r) => contains_var(l) || contains_var(r),
    }
}

fn fold(node: &Node) -> f64 {
    let empty: &[String] = &[];
    let tmp = Expr {
        root: node.clone(),
        vars: empty.to_vec(),
    };
    tmp.eval_slots::<f64>(&[]).unwrap_or(f64::NAN)
}
