//! Canonical s-expression form of expressions and policy trees.
//!
//! ```text
//! node  := (if <bexpr> <node> <node>) | (act <nexpr> [set <0|1>])
//! nexpr := (<op> nexpr...) | (slope <series>) | (get <series> <int>) | (state) | <float>
//! bexpr := (is_lt|is_le|is_eq nexpr nexpr) | (and|or bexpr bexpr) | (not bexpr)
//! series := obs_inflation | obs_ratio | obs_send
//! ```
//!
//! `(get obs <i> <j>)` is accepted as an alias for history entry `i` of the
//! `j`-th statistic.

use std::fmt::Write as _;

use super::expr::{BinaryOp, CmpOp, Expr, LogicOp, Sort, UnaryOp};
use super::tree::{Node, PolicyTree};
use crate::netsim::Statistic;
use crate::{Error, Result};

pub fn series_name(s: Statistic) -> &'static str {
    match s {
        Statistic::LatencyInflation => "obs_inflation",
        Statistic::LatencyRatio => "obs_ratio",
        Statistic::SendRatio => "obs_send",
    }
}

fn series_from_name(name: &str) -> Option<Statistic> {
    Statistic::ALL.into_iter().find(|s| series_name(*s) == name)
}

fn write_f64(out: &mut String, v: f64) {
    let _ = write!(out, "{v:?}");
}

pub fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Const(c) => write_f64(out, *c),
        Expr::Get(s, i) => {
            let _ = write!(out, "(get {} {i})", series_name(*s));
        }
        Expr::Slope(s) => {
            let _ = write!(out, "(slope {})", series_name(*s));
        }
        Expr::State => out.push_str("(state)"),
        Expr::Unary(op, a) => {
            let _ = write!(out, "({} ", op.name());
            write_expr(out, a);
            out.push(')');
        }
        Expr::Not(a) => {
            out.push_str("(not ");
            write_expr(out, a);
            out.push(')');
        }
        Expr::Binary(op, a, b) => write_pair(out, op.name(), a, b),
        Expr::Compare(op, a, b) => write_pair(out, op.name(), a, b),
        Expr::Logic(op, a, b) => write_pair(out, op.name(), a, b),
    }
}

fn write_pair(out: &mut String, name: &str, a: &Expr, b: &Expr) {
    let _ = write!(out, "({name} ");
    write_expr(out, a);
    out.push(' ');
    write_expr(out, b);
    out.push(')');
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_node(out: &mut String, n: &Node, indent: usize) {
    match n {
        Node::Condition {
            condition,
            if_true,
            if_false,
        } => {
            out.push_str("(if ");
            write_expr(out, condition);
            for child in [if_true, if_false] {
                out.push('\n');
                out.push_str(&" ".repeat(indent + 2));
                write_node(out, child, indent + 2);
            }
            out.push(')');
        }
        Node::Action { policy, set } => {
            out.push_str("(act ");
            write_expr(out, policy);
            if let Some(s) = set {
                let _ = write!(out, " set {s}");
            }
            out.push(')');
        }
    }
}

impl PolicyTree {
    /// Canonical text: one node per line, children indented by two spaces.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        write_node(&mut s, &self.root, 0);
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Parser::new(text);
        let root = p.node()?;
        p.end()?;
        Ok(PolicyTree::new(root))
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&expr_to_string(self))
    }
}

pub fn parse_expr(text: &str) -> Result<Expr> {
    let mut p = Parser::new(text);
    let e = p.expr()?;
    p.end()?;
    Ok(e)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Open => "`(`".into(),
            Tok::Close => "`)`".into(),
            Tok::Atom(a) => format!("`{a}`"),
            Tok::End => "end of input".into(),
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Self {
        let mut toks = Vec::new();
        let (mut line, mut col) = (1, 1);
        let mut atom: Option<(String, usize, usize)> = None;
        let flush = |atom: &mut Option<(String, usize, usize)>, toks: &mut Vec<_>| {
            if let Some((a, l, c)) = atom.take() {
                toks.push((Tok::Atom(a), l, c));
            }
        };
        for ch in text.chars() {
            match ch {
                '(' | ')' => {
                    flush(&mut atom, &mut toks);
                    toks.push((if ch == '(' { Tok::Open } else { Tok::Close }, line, col));
                }
                c if c.is_whitespace() => flush(&mut atom, &mut toks),
                c => match &mut atom {
                    Some((a, ..)) => a.push(c),
                    None => atom = Some((c.to_string(), line, col)),
                },
            }
            if ch == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        flush(&mut atom, &mut toks);
        toks.push((Tok::End, line, col));
        Self { toks, pos: 0 }
    }

    fn peek(&self) -> &(Tok, usize, usize) {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn next(&mut self) -> (Tok, usize, usize) {
        let t = self.peek().clone();
        self.pos += 1;
        t
    }

    fn error_at(&self, at: &(Tok, usize, usize), expected: &str) -> Error {
        Error::Parse {
            line: at.1,
            column: at.2,
            expected: expected.into(),
            found: at.0.describe(),
        }
    }

    fn expect_open(&mut self) -> Result<()> {
        let t = self.next();
        match t.0 {
            Tok::Open => Ok(()),
            _ => Err(self.error_at(&t, "`(`")),
        }
    }

    fn expect_close(&mut self) -> Result<()> {
        let t = self.next();
        match t.0 {
            Tok::Close => Ok(()),
            _ => Err(self.error_at(&t, "`)`")),
        }
    }

    fn atom(&mut self, expected: &str) -> Result<(String, (Tok, usize, usize))> {
        let t = self.next();
        match &t.0 {
            Tok::Atom(a) => Ok((a.clone(), t)),
            _ => Err(self.error_at(&t, expected)),
        }
    }

    fn end(&mut self) -> Result<()> {
        let t = self.next();
        match t.0 {
            Tok::End => Ok(()),
            _ => Err(self.error_at(&t, "end of input")),
        }
    }

    fn node(&mut self) -> Result<Node> {
        self.expect_open()?;
        let (head, at) = self.atom("`if` or `act`")?;
        match head.as_str() {
            "if" => {
                let condition = self.typed_expr(Sort::Bool)?;
                let if_true = self.node()?;
                let if_false = self.node()?;
                self.expect_close()?;
                Ok(Node::condition(condition, if_true, if_false))
            }
            "act" => {
                let policy = self.typed_expr(Sort::Num)?;
                let set = if matches!(&self.peek().0, Tok::Atom(a) if a == "set") {
                    self.next();
                    let (v, at) = self.atom("`0` or `1`")?;
                    match v.as_str() {
                        "0" => Some(0),
                        "1" => Some(1),
                        _ => return Err(self.error_at(&at, "`0` or `1`")),
                    }
                } else {
                    None
                };
                self.expect_close()?;
                Ok(Node::Action { policy, set })
            }
            _ => Err(self.error_at(&at, "`if` or `act`")),
        }
    }

    fn typed_expr(&mut self, sort: Sort) -> Result<Expr> {
        let at = self.peek().clone();
        let e = self.expr()?;
        if e.sort() == sort {
            Ok(e)
        } else {
            let expected = match sort {
                Sort::Num => "numeric expression",
                Sort::Bool => "boolean expression",
            };
            Err(Error::Parse {
                line: at.1,
                column: at.2,
                expected: expected.into(),
                found: format!("`{e}`"),
            })
        }
    }

    fn series(&mut self) -> Result<Statistic> {
        let (name, at) = self.atom("series name")?;
        series_from_name(&name)
            .ok_or_else(|| self.error_at(&at, "`obs_inflation`, `obs_ratio` or `obs_send`"))
    }

    fn index(&mut self) -> Result<usize> {
        let (v, at) = self.atom("non-negative integer")?;
        v.parse().map_err(|_| self.error_at(&at, "non-negative integer"))
    }

    fn expr(&mut self) -> Result<Expr> {
        let t = self.next();
        match &t.0 {
            Tok::Atom(a) => match a.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Expr::Const(v)),
                _ => Err(self.error_at(&t, "number or `(`")),
            },
            Tok::Open => {
                let (head, at) = self.atom("operator")?;
                let e = match head.as_str() {
                    "get" => {
                        if matches!(&self.peek().0, Tok::Atom(a) if a == "obs") {
                            self.next();
                            let i = self.index()?;
                            let jt = self.peek().clone();
                            let j = self.index()?;
                            let s = Statistic::from_index(j)
                                .ok_or_else(|| self.error_at(&jt, "statistic index 0, 1 or 2"))?;
                            Expr::Get(s, i)
                        } else {
                            let s = self.series()?;
                            Expr::Get(s, self.index()?)
                        }
                    }
                    "slope" => Expr::Slope(self.series()?),
                    "state" => Expr::State,
                    "not" => Expr::negate(self.typed_expr(Sort::Bool)?),
                    name => {
                        if let Some(op) = UnaryOp::ALL.into_iter().find(|o| o.name() == name) {
                            Expr::unary(op, self.typed_expr(Sort::Num)?)
                        } else if let Some(op) = BinaryOp::ALL.into_iter().find(|o| o.name() == name) {
                            let a = self.typed_expr(Sort::Num)?;
                            Expr::binary(op, a, self.typed_expr(Sort::Num)?)
                        } else if let Some(op) = CmpOp::ALL.into_iter().find(|o| o.name() == name) {
                            let a = self.typed_expr(Sort::Num)?;
                            Expr::compare(op, a, self.typed_expr(Sort::Num)?)
                        } else if let Some(op) = LogicOp::ALL.into_iter().find(|o| o.name() == name) {
                            let a = self.typed_expr(Sort::Bool)?;
                            Expr::logic(op, a, self.typed_expr(Sort::Bool)?)
                        } else {
                            return Err(self.error_at(&at, "operator"));
                        }
                    }
                };
                self.expect_close()?;
                Ok(e)
            }
            _ => Err(self.error_at(&t, "expression")),
        }
    }
}
