//! Textual process tree notation.
//!
//! ```text
//! tree   := leaf | 'tau' | seq | choice | par | loop
//! leaf   := "'" label "'"            (\' and \\ escape inside labels)
//! seq    := '->(' tree (',' tree)+ ')'
//! choice := 'X(' tree '[' num ']' (',' tree '[' num ']')+ ')'
//! par    := '+(' tree (',' tree)+ ')'
//! loop   := '*(' tree ',' tree ')' '[' num ']'    exit probability
//! ```
//!
//! Whitespace between tokens is ignored. Numbers are written in their
//! shortest round-trip decimal form.

use std::fmt;

use super::ProcessTree;
use crate::error::{Error, Result};

pub(super) fn write_tree(tree: &ProcessTree, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match tree {
        ProcessTree::Leaf(a) => {
            f.write_str("'")?;
            for ch in a.chars() {
                if ch == '\'' || ch == '\\' {
                    f.write_str("\\")?;
                }
                write!(f, "{ch}")?;
            }
            f.write_str("'")
        }
        ProcessTree::Silent => f.write_str("tau"),
        ProcessTree::Sequence(c) => write_list(f, "->", c.iter().map(|x| (x, None))),
        ProcessTree::Parallel(c) => write_list(f, "+", c.iter().map(|x| (x, None))),
        ProcessTree::Choice { children, weights } => write_list(
            f,
            "X",
            children.iter().zip(weights.iter().map(|w| Some(*w))),
        ),
        ProcessTree::Loop {
            body,
            redo,
            exit_prob,
        } => {
            write_list(
                f,
                "*",
                [(body.as_ref(), None), (redo.as_ref(), None)].into_iter(),
            )?;
            write!(f, "[{exit_prob}]")
        }
    }
}

fn write_list<'a>(
    f: &mut fmt::Formatter<'_>,
    op: &str,
    items: impl Iterator<Item = (&'a ProcessTree, Option<f64>)>,
) -> fmt::Result {
    write!(f, "{op}( ")?;
    for (i, (child, weight)) in items.enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write_tree(child, f)?;
        if let Some(w) = weight {
            write!(f, "[{w}]")?;
        }
    }
    f.write_str(" )")
}

/// Parses the textual notation produced by `ProcessTree`'s `Display`.
pub fn parse_tree(text: &str) -> Result<ProcessTree> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let tree = p.tree()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("trailing input after tree"));
    }
    tree.validate()?;
    Ok(tree)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        let line = 1 + self.src[..self.pos.min(self.src.len())]
            .iter()
            .filter(|b| **b == b'\n')
            .count();
        Error::parse(line, format!("{msg} (offset {})", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {token:?}")))
        }
    }

    fn tree(&mut self) -> Result<ProcessTree> {
        self.skip_ws();
        if self.eat("'") {
            return self.label();
        }
        if self.eat("tau") {
            return Ok(ProcessTree::Silent);
        }
        if self.eat("->") {
            let items = self.list(false)?;
            return Ok(ProcessTree::Sequence(
                items.into_iter().map(|x| x.0).collect(),
            ));
        }
        if self.eat("+") {
            let items = self.list(false)?;
            return Ok(ProcessTree::Parallel(
                items.into_iter().map(|x| x.0).collect(),
            ));
        }
        if self.eat("X") {
            let items = self.list(true)?;
            let (children, weights) = items
                .into_iter()
                .map(|(c, w)| (c, w.unwrap_or_default()))
                .unzip();
            return Ok(ProcessTree::Choice { children, weights });
        }
        if self.eat("*") {
            let mut items = self.list(false)?;
            if items.len() != 2 {
                return Err(self.error("loop takes exactly a body and a redo part"));
            }
            let exit_prob = self.weight()?;
            let redo = items.pop().expect("two items").0;
            let body = items.pop().expect("two items").0;
            return Ok(ProcessTree::Loop {
                body: Box::new(body),
                redo: Box::new(redo),
                exit_prob,
            });
        }
        Err(self.error("expected a tree"))
    }

    fn label(&mut self) -> Result<ProcessTree> {
        let mut bytes = Vec::new();
        loop {
            match self.src.get(self.pos) {
                None => return Err(self.error("unterminated label")),
                Some(b'\'') => {
                    self.pos += 1;
                    break;
                }
                Some(b'\\') => {
                    let next = *self
                        .src
                        .get(self.pos + 1)
                        .ok_or_else(|| self.error("dangling escape"))?;
                    bytes.push(next);
                    self.pos += 2;
                }
                Some(b) => {
                    bytes.push(*b);
                    self.pos += 1;
                }
            }
        }
        let label = String::from_utf8(bytes).map_err(|_| self.error("label is not UTF-8"))?;
        Ok(ProcessTree::Leaf(label))
    }

    fn list(&mut self, weighted: bool) -> Result<Vec<(ProcessTree, Option<f64>)>> {
        self.expect("(")?;
        let mut items = Vec::new();
        loop {
            let child = self.tree()?;
            let w = if weighted { Some(self.weight()?) } else { None };
            items.push((child, w));
            if self.eat(")") {
                break;
            }
            self.expect(",")?;
        }
        Ok(items)
    }

    fn weight(&mut self) -> Result<f64> {
        self.expect("[")?;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos] != b']' {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos])
            .map_err(|_| self.error("number is not UTF-8"))?;
        let value: f64 = text
            .trim()
            .parse()
            .map_err(|_| self.error(&format!("bad number {text:?}")))?;
        self.expect("]")?;
        Ok(value)
    }
}
