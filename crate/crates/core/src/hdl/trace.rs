// SPDX-License-Identifier: Apache-2.0

//! Counterexample extraction from equivalence-checker VCD traces.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use vcd::{Command, IdCode, ScopeItem, Value};

use super::{Counterexample, HdlError};

/// One top-level gold/gate signal pair in a miter trace.
#[derive(Debug, Clone)]
struct Pair {
    signal: String,
    width: usize,
    gold: IdCode,
    gate: IdCode,
}

fn strip_escape(name: &str) -> &str {
    name.strip_prefix('\\').unwrap_or(name)
}

/// Finds gold/gate output pairs: `gold_X`/`gate_X` vars in the top scope,
/// or var `X` in sibling `gold` and `gate` scopes. Dotted (internal) names
/// are skipped.
fn find_pairs(items: &[ScopeItem]) -> Vec<Pair> {
    let mut vars: Vec<&vcd::Var> = Vec::new();
    let mut scopes: Vec<&vcd::Scope> = Vec::new();
    for item in items {
        match item {
            ScopeItem::Var(v) => vars.push(v),
            ScopeItem::Scope(s) => scopes.push(s),
            _ => {}
        }
    }
    let mut pairs = Vec::new();
    let top_level = |v: &vcd::Var| !strip_escape(&v.reference).contains('.');
    let golds: BTreeMap<&str, &vcd::Var> = vars
        .iter()
        .filter(|v| top_level(v))
        .filter_map(|v| strip_escape(&v.reference).strip_prefix("gold_").map(|s| (s, *v)))
        .collect();
    for v in vars.iter().filter(|v| top_level(v)) {
        if let Some(sig) = strip_escape(&v.reference).strip_prefix("gate_") {
            if let Some(g) = golds.get(sig) {
                pairs.push(Pair { signal: sig.to_string(), width: g.size as usize, gold: g.code, gate: v.code });
            }
        }
    }
    let named = |name: &str| scopes.iter().find(|s| strip_escape(&s.identifier) == name).copied();
    if let (Some(gold), Some(gate)) = (named("gold"), named("gate")) {
        for item in &gold.items {
            let ScopeItem::Var(g) = item else { continue };
            let sig = strip_escape(&g.reference);
            if sig.contains('.') || pairs.iter().any(|p| p.signal == sig) {
                continue;
            }
            let twin = gate.items.iter().find_map(|i| match i {
                ScopeItem::Var(v) if strip_escape(&v.reference) == sig => Some(v),
                _ => None,
            });
            if let Some(t) = twin {
                pairs.push(Pair { signal: sig.to_string(), width: g.size as usize, gold: g.code, gate: t.code });
            }
        }
    }
    if pairs.is_empty() {
        for s in scopes {
            pairs = find_pairs(&s.items);
            if !pairs.is_empty() {
                break;
            }
        }
    }
    pairs.sort_by(|a, b| a.signal.cmp(&b.signal));
    pairs
}

fn bit(v: Value) -> char {
    match v {
        Value::V0 => '0',
        Value::V1 => '1',
        Value::X => 'x',
        Value::Z => 'z',
    }
}

/// Left-extends a VCD vector to `width` bits per IEEE 1364 rules.
fn extend(bits: String, width: usize) -> String {
    if bits.len() >= width {
        return bits[bits.len() - width..].to_string();
    }
    let fill = match bits.chars().next() {
        Some('x') => 'x',
        Some('z') => 'z',
        _ => '0',
    };
    let mut out: String = std::iter::repeat_n(fill, width - bits.len()).collect();
    out.push_str(&bits);
    out
}

/// Earliest divergence of each paired signal in one trace.
pub fn counterexamples_from_reader<R: BufRead>(reader: R) -> Result<Vec<Counterexample>, HdlError> {
    let mut parser = vcd::Parser::new(reader);
    let header = parser
        .parse_header()
        .map_err(|e| HdlError::TraceParse(e.to_string()))?;
    let pairs = find_pairs(&header.items);
    let mut watched: HashMap<IdCode, usize> = HashMap::new();
    for p in &pairs {
        watched.insert(p.gold, p.width);
        watched.insert(p.gate, p.width);
    }
    let mut values: HashMap<IdCode, String> = HashMap::new();
    let mut found: BTreeMap<String, Counterexample> = BTreeMap::new();
    let mut time: Option<u64> = None;

    let check = |time: u64, values: &HashMap<IdCode, String>, found: &mut BTreeMap<String, Counterexample>| {
        for p in &pairs {
            if found.contains_key(&p.signal) {
                continue;
            }
            let (Some(g), Some(t)) = (values.get(&p.gold), values.get(&p.gate)) else { continue };
            // Undefined gold bits are don't-cares in the miter.
            if g.contains(['x', 'z']) {
                continue;
            }
            if g != t {
                found.insert(
                    p.signal.clone(),
                    Counterexample { time, signal: p.signal.clone(), gold_value: g.clone(), gate_value: t.clone() },
                );
            }
        }
    };

    for cmd in parser {
        let cmd = cmd.map_err(|e| HdlError::TraceParse(e.to_string()))?;
        match cmd {
            Command::Timestamp(t) => {
                if let Some(prev) = time {
                    if t != prev {
                        check(prev, &values, &mut found);
                    }
                }
                time = Some(t);
            }
            Command::ChangeScalar(id, v) => {
                if let Some(w) = watched.get(&id) {
                    values.insert(id, extend(bit(v).to_string(), *w));
                }
            }
            Command::ChangeVector(id, v) => {
                if let Some(w) = watched.get(&id) {
                    values.insert(id, extend(v.iter().map(bit).collect(), *w));
                }
            }
            _ => {}
        }
    }
    check(time.unwrap_or(0), &values, &mut found);
    let mut out: Vec<Counterexample> = found.into_values().collect();
    out.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.signal.cmp(&b.signal)));
    Ok(out)
}

pub fn counterexamples_from_file(path: &Path) -> Result<Vec<Counterexample>, HdlError> {
    let file = std::fs::File::open(path).map_err(|e| HdlError::Io(format!("{}: {e}", path.display())))?;
    counterexamples_from_reader(std::io::BufReader::new(file))
}
