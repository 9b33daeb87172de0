//! Arithmetic expression language for warping functions and map components.
//!
//! Grammar (right-associative `^`, IEEE double semantics):
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := unary ("^" factor)?
//! unary  := "-" unary | atom
//! atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"
//! ```
//!
//! Functions: `sin cos tan sinh cosh tanh exp log sqrt`. The identifier `pi`
//! is the constant π; every other identifier is a free variable bound to a
//! coordinate at compile time.

use std::fmt;

use crate::error::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn apply(&self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Tanh => v.tanh(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Expr::Neg(e) | Expr::Call(_, e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// True when the expression contains no free variables.
    pub fn is_constant(&self) -> bool {
        let mut vars = Vec::new();
        self.collect_vars(&mut vars);
        vars.is_empty()
    }

    /// Symbolic derivative with respect to `var`.
    pub fn derivative(&self, var: &str) -> Expr {
        use Expr::*;
        match self {
            Num(_) => Num(0.0),
            Var(v) => Num(if v == var { 1.0 } else { 0.0 }),
            Neg(e) => neg(e.derivative(var)),
            Bin(BinOp::Add, a, b) => add(a.derivative(var), b.derivative(var)),
            Bin(BinOp::Sub, a, b) => sub(a.derivative(var), b.derivative(var)),
            Bin(BinOp::Mul, a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Bin(BinOp::Div, a, b) => div(
                sub(
                    mul(a.derivative(var), (**b).clone()),
                    mul((**a).clone(), b.derivative(var)),
                ),
                mul((**b).clone(), (**b).clone()),
            ),
            Bin(BinOp::Pow, a, b) => {
                if b.is_constant() {
                    // d(a^c) = c · a^(c−1) · a'
                    mul(
                        mul((**b).clone(), pow((**a).clone(), sub((**b).clone(), Num(1.0)))),
                        a.derivative(var),
                    )
                } else {
                    // d(a^b) = a^b (b' log a + b a'/a)
                    mul(
                        pow((**a).clone(), (**b).clone()),
                        add(
                            mul(b.derivative(var), Expr::Call(Func::Log, Box::new((**a).clone()))),
                            div(mul((**b).clone(), a.derivative(var)), (**a).clone()),
                        ),
                    )
                }
            }
            Call(f, a) => {
                let inner = a.derivative(var);
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Call(Func::Sin, a.clone())),
                    Func::Tan => div(Num(1.0), pow(Call(Func::Cos, a.clone()), Num(2.0))),
                    Func::Sinh => Call(Func::Cosh, a.clone()),
                    Func::Cosh => Call(Func::Sinh, a.clone()),
                    Func::Tanh => div(Num(1.0), pow(Call(Func::Cosh, a.clone()), Num(2.0))),
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Log => div(Num(1.0), (**a).clone()),
                    Func::Sqrt => div(Num(0.5), Call(Func::Sqrt, a.clone())),
                };
                mul(outer, inner)
            }
        }
    }
}

// light simplification so that derivative trees stay readable
fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 0.0)
}
fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 1.0)
}
fn add(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        b
    } else if is_zero(&b) {
        a
    } else {
        Expr::Bin(BinOp::Add, Box::new(a), Box::new(b))
    }
}
fn sub(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        a
    } else if is_zero(&a) {
        neg(b)
    } else {
        Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b))
    }
}
fn neg(a: Expr) -> Expr {
    if is_zero(&a) {
        a
    } else {
        Expr::Neg(Box::new(a))
    }
}
fn mul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        Expr::Num(0.0)
    } else if is_one(&a) {
        b
    } else if is_one(&b) {
        a
    } else {
        Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b))
    }
}
fn div(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        a
    } else if is_one(&b) {
        a
    } else {
        Expr::Bin(BinOp::Div, Box::new(a), Box::new(b))
    }
}
fn pow(a: Expr, b: Expr) -> Expr {
    if is_one(&b) {
        a
    } else {
        Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b))
    }
}

/// A parsed warping/map expression: source text, AST and free variables.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpExpression {
    source: String,
    ast: Expr,
    free_variables: Vec<String>,
}

impl WarpExpression {
    /// Parse `src`; errors carry the byte offset and the expected token set.
    pub fn parse(src: &str) -> Result<WarpExpression, ParseError> {
        let ast = Parser::new(src).parse()?;
        Ok(Self::from_ast(ast))
    }

    pub fn from_ast(ast: Expr) -> WarpExpression {
        let mut vars = Vec::new();
        ast.collect_vars(&mut vars);
        vars.sort();
        WarpExpression { source: print_expr(&ast), ast, free_variables: vars }
    }

    pub fn source_text(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn free_variables(&self) -> &[String] {
        &self.free_variables
    }

    /// Canonical text form; `parse(canonical_text)` reproduces the AST.
    pub fn canonical_text(&self) -> String {
        print_expr(&self.ast)
    }

    /// Derivative with respect to one variable, as an expression.
    pub fn derivative(&self, var: &str) -> WarpExpression {
        Self::from_ast(self.ast.derivative(var))
    }

    /// Bind free variables to coordinate slots for fast evaluation.
    pub fn compile(&self, coords: &[String]) -> Result<CompiledExpr, ParseError> {
        for v in &self.free_variables {
            if !coords.contains(v) {
                return Err(ParseError::UnknownIdentifier {
                    name: v.clone(),
                    known: coords.join(", "),
                });
            }
        }
        Ok(CompiledExpr { expr: bind(&self.ast, coords) })
    }
}

impl fmt::Display for WarpExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// Expression with variables resolved to coordinate indices.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    expr: Bound,
}

#[derive(Debug, Clone)]
enum Bound {
    Num(f64),
    Slot(usize),
    Neg(Box<Bound>),
    Bin(BinOp, Box<Bound>, Box<Bound>),
    Call(Func, Box<Bound>),
}

fn bind(e: &Expr, coords: &[String]) -> Bound {
    match e {
        Expr::Num(v) => Bound::Num(*v),
        Expr::Var(v) => Bound::Slot(coords.iter().position(|c| c == v).expect("checked in compile")),
        Expr::Neg(a) => Bound::Neg(Box::new(bind(a, coords))),
        Expr::Bin(op, a, b) => Bound::Bin(*op, Box::new(bind(a, coords)), Box::new(bind(b, coords))),
        Expr::Call(f, a) => Bound::Call(*f, Box::new(bind(a, coords))),
    }
}

impl CompiledExpr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        eval_bound(&self.expr, x)
    }
}

fn eval_bound(e: &Bound, x: &[f64]) -> f64 {
    match e {
        Bound::Num(v) => *v,
        Bound::Slot(i) => x[*i],
        Bound::Neg(a) => -eval_bound(a, x),
        Bound::Bin(op, a, b) => {
            let (a, b) = (eval_bound(a, x), eval_bound(b, x));
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
            }
        }
        Bound::Call(f, a) => f.apply(eval_bound(a, x)),
    }
}

// ---------------------------------------------------------------------------
// printer

fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(e, 0, &mut s);
    s
}

/// `min_level`: 0 expr, 1 term, 2 factor, 3 unary, 4 atom.
fn level(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 0,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 1,
        Expr::Bin(BinOp::Pow, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 4,
    }
}

fn write_expr(e: &Expr, min_level: u8, out: &mut String) {
    if level(e) < min_level {
        out.push('(');
        write_expr(e, 0, out);
        out.push(')');
        return;
    }
    match e {
        Expr::Num(v) => {
            // `{}` prints the shortest text that round-trips the f64
            out.push_str(&format!("{v}"));
        }
        Expr::Var(v) => out.push_str(v),
        Expr::Neg(a) => {
            out.push('-');
            write_expr(a, 3, out);
        }
        Expr::Bin(op, a, b) => {
            let (sym, la, lb) = match op {
                BinOp::Add => ("+", 0, 1),
                BinOp::Sub => ("-", 0, 1),
                BinOp::Mul => ("*", 1, 2),
                BinOp::Div => ("/", 1, 2),
                // '^' binds a unary on the left and a factor on the right
                BinOp::Pow => ("^", 3, 2),
            };
            write_expr(a, la, out);
            out.push_str(sym);
            write_expr(b, lb, out);
        }
        Expr::Call(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(a, 0, out);
            out.push(')');
        }
    }
}

// ---------------------------------------------------------------------------
// parser

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src: src.as_bytes(), pos: 0 }
    }

    fn parse(mut self) -> Result<Expr, ParseError> {
        let e = self.expr()?;
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(self.err("end of input"));
        }
        Ok(e)
    }

    fn err(&self, expected: &str) -> ParseError {
        ParseError::Syntax { offset: self.pos, expected: expected.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    e = Expr::Bin(BinOp::Add, Box::new(e), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    e = Expr::Bin(BinOp::Sub, Box::new(e), Box::new(rhs));
                }
                _ => return Ok(e),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    e = Expr::Bin(BinOp::Mul, Box::new(e), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    e = Expr::Bin(BinOp::Div, Box::new(e), Box::new(rhs));
                }
                _ => return Ok(e),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.unary()?;
        if self.eat(b'^') {
            let exp = self.factor()?; // right-associative
            Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            _ => Err(self.err("number, identifier or '('")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        // exponent part
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            let mut probe = self.pos + 1;
            if probe < self.src.len() && (self.src[probe] == b'+' || self.src[probe] == b'-') {
                probe += 1;
            }
            if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                self.pos = probe;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>().map(Expr::Num).map_err(|_| ParseError::Syntax {
            offset: start,
            expected: "number".to_string(),
        })
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        if self.eat(b'(') {
            let f = Func::from_name(&name).ok_or(ParseError::UnknownFunction { name: name.clone() })?;
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.err("')'"));
            }
            Ok(Expr::Call(f, Box::new(arg)))
        } else if name == "pi" {
            Ok(Expr::Num(std::f64::consts::PI))
        } else {
            Ok(Expr::Var(name))
        }
    }
}
