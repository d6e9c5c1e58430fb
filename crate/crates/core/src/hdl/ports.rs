// SPDX-License-Identifier: Apache-2.0

//! Lightweight Verilog interface scanner: module names, port directions and
//! widths, and instantiation edges. It is not a parser; it only needs to be
//! right for the declarations that specs describe.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
    Inout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortDecl {
    pub name: String,
    pub direction: Direction,
    /// `None` when the range could not be evaluated.
    pub width: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleInterface {
    pub name: String,
    pub ports: Vec<PortDecl>,
    pub instantiates: Vec<String>,
}

impl ModuleInterface {
    pub fn port(&self, name: &str) -> Option<&PortDecl> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &PortDecl> {
        self.ports.iter().filter(|p| p.direction == Direction::Output)
    }
}

static MODULE_START: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(?:module|macromodule)\s+([A-Za-z_][A-Za-z0-9_$]*)").unwrap());
static ENDMODULE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bendmodule\b").unwrap());
static PARAM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:parameter|localparam)\b(?:\s+(?:integer|signed|unsigned|int))?(?:\s*\[[^\]]*\])?\s*([A-Za-z_]\w*)\s*=\s*([^,;)]+)").unwrap()
});
static BODY_DECL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(input|output|inout)\b([^;]*);").unwrap());

/// Removes `//` and `/* */` comments and string literal contents.
pub fn strip_comments(src: &str) -> String {
    let bytes = src.as_bytes();
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    while i < bytes.len() {
        match (bytes[i], bytes.get(i + 1)) {
            (b'/', Some(b'/')) => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            (b'/', Some(b'*')) => {
                i += 2;
                while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                    if bytes[i] == b'\n' {
                        out.push('\n');
                    }
                    i += 1;
                }
                i += 2;
                out.push(' ');
            }
            (b'"', _) => {
                out.push('"');
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                out.push('"');
                i += 1;
            }
            _ => {
                let ch = src[i..].chars().next().expect("in bounds");
                out.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    out
}

/// Index just past the parenthesis matching the `(` at `open`.
fn matching_paren(text: &str, open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in text[open..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Splits on commas outside parentheses, brackets and braces.
fn split_top_level(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}

fn parse_number(tok: &str) -> Option<i64> {
    let tok = tok.replace('_', "");
    if let Some((_, rest)) = tok.split_once('\'') {
        let rest = rest.trim_start_matches(['s', 'S']);
        let (radix, digits) = match rest.chars().next()? {
            'd' | 'D' => (10, &rest[1..]),
            'h' | 'H' => (16, &rest[1..]),
            'b' | 'B' => (2, &rest[1..]),
            'o' | 'O' => (8, &rest[1..]),
            _ => (10, rest),
        };
        return i64::from_str_radix(digits.trim(), radix).ok();
    }
    tok.parse().ok()
}

/// Integer constant-expression evaluator over `+ - * / %`, parentheses,
/// numbers and known parameters.
struct ExprEval<'a> {
    toks: Vec<String>,
    pos: usize,
    params: &'a HashMap<String, i64>,
}

impl<'a> ExprEval<'a> {
    fn eval(expr: &str, params: &'a HashMap<String, i64>) -> Option<i64> {
        static TOKEN: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"\d*'[sS]?[dDhHbBoO]?[0-9a-fA-F_]+|[A-Za-z_]\w*|\d[\d_]*|[-+*/%()]|\S").unwrap());
        let toks = TOKEN.find_iter(expr).map(|m| m.as_str().to_string()).collect();
        let mut ev = ExprEval { toks, pos: 0, params };
        let v = ev.sum()?;
        (ev.pos == ev.toks.len()).then_some(v)
    }

    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn sum(&mut self) -> Option<i64> {
        let mut v = self.product()?;
        while let Some(op) = self.peek().filter(|t| *t == "+" || *t == "-").map(str::to_string) {
            self.pos += 1;
            let r = self.product()?;
            v = if op == "+" { v.checked_add(r)? } else { v.checked_sub(r)? };
        }
        Some(v)
    }

    fn product(&mut self) -> Option<i64> {
        let mut v = self.atom()?;
        while let Some(op) = self.peek().filter(|t| matches!(*t, "*" | "/" | "%")).map(str::to_string) {
            self.pos += 1;
            let r = self.atom()?;
            v = match op.as_str() {
                "*" => v.checked_mul(r)?,
                "/" => v.checked_div(r)?,
                _ => v.checked_rem(r)?,
            };
        }
        Some(v)
    }

    fn atom(&mut self) -> Option<i64> {
        let tok = self.peek()?.to_string();
        self.pos += 1;
        match tok.as_str() {
            "(" => {
                let v = self.sum()?;
                (self.peek() == Some(")")).then(|| self.pos += 1)?;
                Some(v)
            }
            "-" => self.atom().map(|v| -v),
            "+" => self.atom(),
            t if t.starts_with(|c: char| c.is_ascii_digit() || c == '\'') => parse_number(t),
            t => self.params.get(t).copied(),
        }
    }
}

fn range_width(range: &str, params: &HashMap<String, i64>) -> Option<u32> {
    let inner = range.trim().strip_prefix('[')?.strip_suffix(']')?;
    let (hi, lo) = inner.split_once(':')?;
    let hi = ExprEval::eval(hi, params)?;
    let lo = ExprEval::eval(lo, params)?;
    u32::try_from((hi - lo).abs() + 1).ok()
}

const TYPE_WORDS: &[&str] = &["wire", "reg", "logic", "signed", "unsigned", "var", "tri", "bit"];

/// Parses one declaration fragment such as `output reg [3:0] q` into
/// (direction keyword if present, width, names).
fn parse_decl(fragment: &str, params: &HashMap<String, i64>) -> (Option<Direction>, Option<Option<u32>>, Vec<String>) {
    static WORD: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"\[[^\]]*\]|[A-Za-z_][A-Za-z0-9_$]*|=.*").unwrap());
    let mut direction = None;
    let mut width: Option<Option<u32>> = None;
    let mut names = Vec::new();
    let mut saw_range = false;
    for m in WORD.find_iter(fragment) {
        let w = m.as_str();
        match w {
            "input" => direction = Some(Direction::Input),
            "output" => direction = Some(Direction::Output),
            "inout" => direction = Some(Direction::Inout),
            "integer" => width = Some(Some(32)),
            _ if TYPE_WORDS.contains(&w) => {
                width.get_or_insert(Some(1));
            }
            _ if w.starts_with('=') => break,
            _ if w.starts_with('[') => {
                // Unpacked dimensions after a name are ignored.
                if names.is_empty() && !saw_range {
                    width = Some(range_width(w, params));
                    saw_range = true;
                }
            }
            _ => names.push(w.to_string()),
        }
    }
    (direction, width, names)
}

fn collect_params(text: &str, params: &mut HashMap<String, i64>) {
    for cap in PARAM.captures_iter(text) {
        if let Some(v) = ExprEval::eval(&cap[2], params) {
            params.insert(cap[1].to_string(), v);
        }
    }
}

fn scan_one(name: &str, header_rest: &str, body: &str) -> ModuleInterface {
    let mut params = HashMap::new();
    let mut rest = header_rest.trim_start();
    if let Some(after_hash) = rest.strip_prefix('#') {
        let after_hash = after_hash.trim_start();
        if after_hash.starts_with('(') {
            let offset = header_rest.len() - after_hash.len();
            if let Some(end) = matching_paren(header_rest, offset) {
                collect_params(&header_rest[offset..end], &mut params);
                rest = header_rest[end..].trim_start();
            }
        }
    }
    collect_params(body, &mut params);

    let mut ports: Vec<PortDecl> = Vec::new();
    let mut order: Vec<String> = Vec::new();
    if rest.starts_with('(') {
        if let Some(end) = matching_paren(rest, 0) {
            let list = &rest[1..end - 1];
            let mut current: Option<(Direction, Option<u32>)> = None;
            for item in split_top_level(list) {
                if item.trim().is_empty() {
                    continue;
                }
                let (dir, width, names) = parse_decl(item, &params);
                if let Some(d) = dir {
                    current = Some((d, width.unwrap_or(Some(1))));
                } else if let (Some(w), Some(cur)) = (width, current.as_mut()) {
                    cur.1 = w;
                }
                for n in names {
                    match current {
                        Some((d, w)) => ports.push(PortDecl { name: n.clone(), direction: d, width: w }),
                        None => order.push(n.clone()),
                    }
                }
            }
        }
    }
    // Non-ANSI declarations in the body.
    let body_decls = if ports.is_empty() { BODY_DECL.captures_iter(body).collect() } else { Vec::new() };
    for cap in body_decls {
        let (_, width, names) = parse_decl(&cap[0], &params);
        let direction = match &cap[1] {
            "input" => Direction::Input,
            "output" => Direction::Output,
            _ => Direction::Inout,
        };
        for n in names {
            if !ports.iter().any(|p| p.name == n) {
                ports.push(PortDecl { name: n, direction, width: width.unwrap_or(Some(1)) });
            }
        }
    }
    if !order.is_empty() {
        ports.sort_by_key(|p| order.iter().position(|o| *o == p.name).unwrap_or(usize::MAX));
    }
    ModuleInterface { name: name.to_string(), ports, instantiates: Vec::new() }
}

/// Scans every module defined in `src`.
pub fn scan_modules(src: &str) -> Vec<ModuleInterface> {
    let clean = strip_comments(src);
    let mut modules = Vec::new();
    let mut bodies = Vec::new();
    let mut pos = 0;
    while let Some(cap) = MODULE_START.captures(&clean[pos..]) {
        let whole = cap.get(0).expect("match");
        let after_name = pos + whole.end();
        let Some(semi) = find_header_end(&clean, after_name) else { break };
        let end = ENDMODULE
            .find(&clean[semi..])
            .map(|m| semi + m.start())
            .unwrap_or(clean.len());
        let body = &clean[semi..end];
        modules.push(scan_one(&cap[1], &clean[after_name..semi], body));
        bodies.push(body.to_string());
        pos = (end + "endmodule".len()).min(clean.len());
    }
    let names: Vec<String> = modules.iter().map(|m| m.name.clone()).collect();
    for (module, body) in modules.iter_mut().zip(&bodies) {
        for other in &names {
            let re = Regex::new(&format!(r"\b{}\b\s*(?:#|[A-Za-z_]\w*\s*(?:\[[^\]]*\]\s*)?\()", regex::escape(other)))
                .expect("escaped name");
            if re.is_match(body) && !module.instantiates.contains(other) {
                module.instantiates.push(other.clone());
            }
        }
    }
    modules
}

/// Position just after the `;` closing a module header.
fn find_header_end(text: &str, from: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in text[from..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ';' if depth == 0 => return Some(from + i + 1),
            _ => {}
        }
    }
    None
}

/// Top module: the single uninstantiated module; among several, `TopModule`
/// if present, otherwise the last defined.
pub fn top_module(modules: &[ModuleInterface]) -> Option<&ModuleInterface> {
    let roots: Vec<&ModuleInterface> = modules
        .iter()
        .filter(|m| !modules.iter().any(|o| o.name != m.name && o.instantiates.contains(&m.name)))
        .collect();
    match roots.as_slice() {
        [only] => Some(only),
        [] => modules.last(),
        many => many.iter().find(|m| m.name == "TopModule").or(many.last()).copied(),
    }
}

pub fn top_module_name(src: &str) -> Option<String> {
    top_module(&scan_modules(src)).map(|m| m.name.clone())
}
