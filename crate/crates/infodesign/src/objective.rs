//! Objectives f: R^n -> R over expectation vectors, with gradients.
//!
//! Three serializable kinds back the CLI schema: linear, quadratic, and a
//! small arithmetic expression grammar over the coordinates v1..vn.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// An objective over expectation vectors.
pub trait Objective: Sync + Send {
    fn eval(&self, v: &[f64]) -> f64;

    /// Gradient; the default is a central finite difference.
    fn grad(&self, v: &[f64]) -> Vec<f64> {
        finite_difference_grad(&|x| self.eval(x), v)
    }

    fn has_analytic_grad(&self) -> bool {
        false
    }
}

pub fn finite_difference_grad(f: &dyn Fn(&[f64]) -> f64, v: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; v.len()];
    let mut x = v.to_vec();
    for i in 0..v.len() {
        let h = 1e-6 * (1.0 + v[i].abs());
        x[i] = v[i] + h;
        let fp = f(&x);
        x[i] = v[i] - h;
        let fm = f(&x);
        x[i] = v[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

impl<F: Fn(&[f64]) -> f64 + Sync + Send> Objective for F {
    fn eval(&self, v: &[f64]) -> f64 {
        self(v)
    }
}

/// Serializable objective description consumed by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// f(v) = weights . v + constant
    Linear {
        weights: Vec<f64>,
        #[serde(default)]
        constant: f64,
    },
    /// f(v) = constant + linear . v + v' Q v
    Quadratic {
        #[serde(default)]
        constant: f64,
        linear: Vec<f64>,
        quad: Vec<Vec<f64>>,
    },
    /// f(v) = expression over v1..vn with + - * / ^ min max abs
    CustomExpression { formula: String },
}

impl ObjectiveSpec {
    /// Compiles into an evaluatable objective for dimension `n`.
    pub fn compile(&self, n: usize) -> Result<CompiledObjective> {
        match self {
            ObjectiveSpec::Linear { weights, constant } => {
                if weights.len() != n {
                    return Err(Error::InvalidSpec(format!(
                        "linear objective has {} weights, expected {n}",
                        weights.len()
                    )));
                }
                Ok(CompiledObjective::Linear { weights: weights.clone(), constant: *constant })
            }
            ObjectiveSpec::Quadratic { constant, linear, quad } => {
                if linear.len() != n || quad.len() != n || quad.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidSpec("quadratic objective dimension mismatch".into()));
                }
                Ok(CompiledObjective::Quadratic {
                    constant: *constant,
                    linear: linear.clone(),
                    quad: quad.clone(),
                })
            }
            ObjectiveSpec::CustomExpression { formula } => {
                let ast = expr::parse(formula)?;
                ast.check_vars(n)?;
                Ok(CompiledObjective::Expr { ast })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum CompiledObjective {
    Linear { weights: Vec<f64>, constant: f64 },
    Quadratic { constant: f64, linear: Vec<f64>, quad: Vec<Vec<f64>> },
    Expr { ast: expr::Expr },
}

impl Objective for CompiledObjective {
    fn eval(&self, v: &[f64]) -> f64 {
        match self {
            CompiledObjective::Linear { weights, constant } => {
                constant + weights.iter().zip(v).map(|(w, x)| w * x).sum::<f64>()
            }
            CompiledObjective::Quadratic { constant, linear, quad } => {
                let mut acc = *constant;
                for (w, x) in linear.iter().zip(v) {
                    acc += w * x;
                }
                for (i, row) in quad.iter().enumerate() {
                    for (j, q) in row.iter().enumerate() {
                        acc += q * v[i] * v[j];
                    }
                }
                acc
            }
            CompiledObjective::Expr { ast } => ast.eval(v),
        }
    }

    fn grad(&self, v: &[f64]) -> Vec<f64> {
        match self {
            CompiledObjective::Linear { weights, .. } => weights.clone(),
            CompiledObjective::Quadratic { linear, quad, .. } => {
                let n = v.len();
                let mut g = linear.clone();
                for i in 0..n {
                    for j in 0..n {
                        g[i] += (quad[i][j] + quad[j][i]) * v[j];
                    }
                }
                g
            }
            CompiledObjective::Expr { .. } => finite_difference_grad(&|x| self.eval(x), v),
        }
    }

    fn has_analytic_grad(&self) -> bool {
        !matches!(self, CompiledObjective::Expr { .. })
    }
}

/// Checks an analytic gradient against central differences at a handful of
/// deterministic probe points in [0,1]^n.
pub fn validate_gradient(obj: &dyn Objective, n: usize) -> Result<()> {
    if !obj.has_analytic_grad() {
        return Ok(());
    }
    let mut seed = 0.37f64;
    for _ in 0..5 {
        let v: Vec<f64> = (0..n)
            .map(|_| {
                seed = (seed * 97.31 + 0.177).fract();
                seed
            })
            .collect();
        let g = obj.grad(&v);
        let fd = finite_difference_grad(&|x| obj.eval(x), &v);
        for i in 0..n {
            let scale = 1.0 + g[i].abs().max(fd[i].abs());
            if (g[i] - fd[i]).abs() > 1e-4 * scale {
                return Err(Error::InvalidSpec(format!(
                    "gradient component {i} disagrees with finite differences: {} vs {}",
                    g[i], fd[i]
                )));
            }
        }
    }
    Ok(())
}

pub mod expr {
    //! Tiny recursive-descent parser for objective formulas.
    //!
    //! Grammar: + - * / ^ (right-assoc), unary minus, min(a,b), max(a,b),
    //! abs(a), parentheses, numeric literals, coordinates v1..vn.

    use crate::error::{Error, Result};

    #[derive(Debug, Clone)]
    pub enum Expr {
        Num(f64),
        Var(usize),
        Neg(Box<Expr>),
        Add(Box<Expr>, Box<Expr>),
        Sub(Box<Expr>, Box<Expr>),
        Mul(Box<Expr>, Box<Expr>),
        Div(Box<Expr>, Box<Expr>),
        Pow(Box<Expr>, Box<Expr>),
        Min(Box<Expr>, Box<Expr>),
        Max(Box<Expr>, Box<Expr>),
        Abs(Box<Expr>),
    }

    impl Expr {
        pub fn eval(&self, v: &[f64]) -> f64 {
            match self {
                Expr::Num(x) => *x,
                Expr::Var(i) => v[*i],
                Expr::Neg(a) => -a.eval(v),
                Expr::Add(a, b) => a.eval(v) + b.eval(v),
                Expr::Sub(a, b) => a.eval(v) - b.eval(v),
                Expr::Mul(a, b) => a.eval(v) * b.eval(v),
                Expr::Div(a, b) => a.eval(v) / b.eval(v),
                Expr::Pow(a, b) => a.eval(v).powf(b.eval(v)),
                Expr::Min(a, b) => a.eval(v).min(b.eval(v)),
                Expr::Max(a, b) => a.eval(v).max(b.eval(v)),
                Expr::Abs(a) => a.eval(v).abs(),
            }
        }

        pub fn check_vars(&self, n: usize) -> Result<()> {
            match self {
                Expr::Var(i) => {
                    if *i >= n {
                        Err(Error::InvalidSpec(format!(
                            "formula references v{} but the problem has {n} coordinates",
                            i + 1
                        )))
                    } else {
                        Ok(())
                    }
                }
                Expr::Num(_) => Ok(()),
                Expr::Neg(a) | Expr::Abs(a) => a.check_vars(n),
                Expr::Add(a, b)
                | Expr::Sub(a, b)
                | Expr::Mul(a, b)
                | Expr::Div(a, b)
                | Expr::Pow(a, b)
                | Expr::Min(a, b)
                | Expr::Max(a, b) => {
                    a.check_vars(n)?;
                    b.check_vars(n)
                }
            }
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

    fn tokenize(s: &str) -> Result<Vec<Tok>> {
        let mut toks = Vec::new();
        let chars: Vec<char> = s.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            match c {
                ' ' | '\t' | '\n' => i += 1,
                '+' => {
                    toks.push(Tok::Plus);
                    i += 1;
                }
                '-' | '−' => {
                    toks.push(Tok::Minus);
                    i += 1;
                }
                '*' => {
                    toks.push(Tok::Star);
                    i += 1;
                }
                '/' => {
                    toks.push(Tok::Slash);
                    i += 1;
                }
                '^' => {
                    toks.push(Tok::Caret);
                    i += 1;
                }
                '(' => {
                    toks.push(Tok::LParen);
                    i += 1;
                }
                ')' => {
                    toks.push(Tok::RParen);
                    i += 1;
                }
                ',' => {
                    toks.push(Tok::Comma);
                    i += 1;
                }
                '0'..='9' | '.' => {
                    let start = i;
                    while i < chars.len()
                        && (chars[i].is_ascii_digit() || chars[i] == '.' || chars[i] == 'e'
                            || chars[i] == 'E'
                            || ((chars[i] == '+' || chars[i] == '-')
                                && i > start
                                && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                    {
                        i += 1;
                    }
                    let lit: String = chars[start..i].iter().collect();
                    let x: f64 = lit
                        .parse()
                        .map_err(|_| Error::InvalidSpec(format!("bad number literal '{lit}'")))?;
                    toks.push(Tok::Num(x));
                }
                c if c.is_ascii_alphabetic() => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                        i += 1;
                    }
                    toks.push(Tok::Ident(chars[start..i].iter().collect()));
                }
                _ => return Err(Error::InvalidSpec(format!("unexpected character '{c}'"))),
            }
        }
        Ok(toks)
    }

    struct Parser {
        toks: Vec<Tok>,
        pos: usize,
    }

    impl Parser {
        fn peek(&self) -> Option<&Tok> {
            self.toks.get(self.pos)
        }

        fn next(&mut self) -> Option<Tok> {
            let t = self.toks.get(self.pos).cloned();
            if t.is_some() {
                self.pos += 1;
            }
            t
        }

        fn expect(&mut self, t: Tok) -> Result<()> {
            match self.next() {
                Some(got) if got == t => Ok(()),
                other => Err(Error::InvalidSpec(format!("expected {t:?}, got {other:?}"))),
            }
        }

        fn expr(&mut self) -> Result<Expr> {
            let mut lhs = self.term()?;
            loop {
                match self.peek() {
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

        fn term(&mut self) -> Result<Expr> {
            let mut lhs = self.factor()?;
            loop {
                match self.peek() {
                    Some(Tok::Star) => {
                        self.next();
                        lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                    }
                    Some(Tok::Slash) => {
                        self.next();
                        lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                    }
                    _ => return Ok(lhs),
                }
            }
        }

        fn factor(&mut self) -> Result<Expr> {
            let base = self.unary()?;
            if let Some(Tok::Caret) = self.peek() {
                self.next();
                let exp = self.factor()?; // right associative
                return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
            }
            Ok(base)
        }

        fn unary(&mut self) -> Result<Expr> {
            if let Some(Tok::Minus) = self.peek() {
                self.next();
                return Ok(Expr::Neg(Box::new(self.unary()?)));
            }
            self.primary()
        }

        fn primary(&mut self) -> Result<Expr> {
            match self.next() {
                Some(Tok::Num(x)) => Ok(Expr::Num(x)),
                Some(Tok::LParen) => {
                    let e = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(e)
                }
                Some(Tok::Ident(name)) => match name.as_str() {
                    "min" | "max" => {
                        self.expect(Tok::LParen)?;
                        let a = self.expr()?;
                        self.expect(Tok::Comma)?;
                        let b = self.expr()?;
                        self.expect(Tok::RParen)?;
                        Ok(if name == "min" {
                            Expr::Min(Box::new(a), Box::new(b))
                        } else {
                            Expr::Max(Box::new(a), Box::new(b))
                        })
                    }
                    "abs" => {
                        self.expect(Tok::LParen)?;
                        let a = self.expr()?;
                        self.expect(Tok::RParen)?;
                        Ok(Expr::Abs(Box::new(a)))
                    }
                    _ => {
                        if let Some(idx) = name.strip_prefix('v').and_then(|s| s.parse::<usize>().ok())
                        {
                            if idx == 0 {
                                return Err(Error::InvalidSpec("coordinates start at v1".into()));
                            }
                            Ok(Expr::Var(idx - 1))
                        } else {
                            Err(Error::InvalidSpec(format!("unknown identifier '{name}'")))
                        }
                    }
                },
                other => Err(Error::InvalidSpec(format!("unexpected token {other:?}"))),
            }
        }
    }

    pub fn parse(s: &str) -> Result<Expr> {
        let toks = tokenize(s)?;
        let mut p = Parser { toks, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(Error::InvalidSpec(format!(
                "trailing tokens after position {}",
                p.pos
            )));
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_eval_and_grad() {
        let o = ObjectiveSpec::Linear { weights: vec![2.0, -1.0], constant: 0.5 }
            .compile(2)
            .unwrap();
        assert!((o.eval(&[1.0, 3.0]) - (-0.5)).abs() < 1e-15);
        assert_eq!(o.grad(&[0.0, 0.0]), vec![2.0, -1.0]);
        validate_gradient(&o, 2).unwrap();
    }

    #[test]
    fn quadratic_grad_matches_fd() {
        let o = ObjectiveSpec::Quadratic {
            constant: 1.0,
            linear: vec![1.0, 2.0],
            quad: vec![vec![-1.0, 0.3], vec![0.1, -2.0]],
        }
        .compile(2)
        .unwrap();
        validate_gradient(&o, 2).unwrap();
    }

    #[test]
    fn expression_parsing() {
        let o = ObjectiveSpec::CustomExpression {
            formula: "v1 - 2*(v2 - 0.3)^2 + min(v1, abs(-v2))".into(),
        }
        .compile(2)
        .unwrap();
        let v = [0.4, 0.5];
        let want = 0.4 - 2.0 * (0.5f64 - 0.3).powi(2) + 0.4f64.min(0.5);
        assert!((o.eval(&v) - want).abs() < 1e-12);
    }

    #[test]
    fn expression_rejects_bad_input() {
        assert!(expr::parse("v1 +").is_err());
        assert!(expr::parse("foo(v1)").is_err());
        assert!(ObjectiveSpec::CustomExpression { formula: "v3".into() }.compile(2).is_err());
    }

    #[test]
    fn power_right_associative() {
        let e = expr::parse("2^3^2").unwrap();
        assert!((e.eval(&[]) - 512.0).abs() < 1e-12);
    }
}
