// SPDX-License-Identifier: Apache-2.0

//! Structured specification documents: marker extraction, parsing, canonical
//! rendering and lint rules.
//!
//! The canonical layout is the sectioned text format the spec generator is
//! asked to produce:
//!
//! ```text
//! [SPEC_START]
//! Summary:
//! ...
//! Module Name: TopModule
//! Inputs:
//! - clk (1-bit): clock
//! Outputs:
//! - q (10-bit): counter value
//! Detailed Functional Description:
//! ...
//! Clocking and Reset Behavior:
//! ...
//! Notes:
//! ...
//! [SPEC_END]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SPEC_START: &str = "[SPEC_START]";
pub const SPEC_END: &str = "[SPEC_END]";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("no complete {start} ... {end} block in model output")]
    MissingMarkers { start: String, end: String },
    #[error("specification is missing the `{0}` section")]
    MissingSection(String),
    #[error("port line has no parsable bit width: `{0}`")]
    MalformedPortLine(String),
    #[error("`{0}` is not a legal Verilog module name")]
    InvalidModuleName(String),
}

/// One port entry, `<name> (<width>-bit): <purpose>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortDesc {
    pub name: String,
    pub width_bits: u32,
    pub purpose: String,
}

impl PortDesc {
    pub fn new(name: impl Into<String>, width_bits: u32, purpose: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            width_bits,
            purpose: purpose.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredSpec {
    pub summary: String,
    pub module_name: String,
    pub inputs: Vec<PortDesc>,
    pub outputs: Vec<PortDesc>,
    pub functional_description: String,
    pub clocking_and_reset: String,
    pub notes: Option<String>,
    /// Additional modules of a multi-module design, described one after the
    /// other. Nesting is not modelled.
    #[serde(default)]
    pub extra_modules: Vec<StructuredSpec>,
}

impl StructuredSpec {
    /// Stable artifact identifier derived from the canonical rendering.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(render_spec(self).as_bytes());
        let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
        format!("spec:{}:{hex}", self.module_name)
    }

    /// Checks the structural invariants of a well-formed spec.
    pub fn validate(&self) -> Result<(), SpecError> {
        if !is_verilog_identifier(&self.module_name) {
            return Err(SpecError::InvalidModuleName(self.module_name.clone()));
        }
        for port in self.inputs.iter().chain(&self.outputs) {
            if port.name.is_empty() || port.width_bits == 0 {
                return Err(SpecError::MalformedPortLine(render_port(port)));
            }
        }
        if self.summary.trim().is_empty() {
            return Err(SpecError::MissingSection("Summary".into()));
        }
        if self.functional_description.trim().is_empty() {
            return Err(SpecError::MissingSection(
                "Detailed Functional Description".into(),
            ));
        }
        for extra in &self.extra_modules {
            extra.validate()?;
        }
        Ok(())
    }
}

/// Text found strictly between a `[SPEC_START]` / `[SPEC_END]` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSpecText(String);

impl RawSpecText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for RawSpecText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Returns the trimmed content of the last complete `start ... end` pair.
///
/// Each end marker closes the nearest preceding start marker that has not
/// already been closed, so drafts followed by a final block resolve to the
/// final block and a stray start marker inside a block discards the text
/// before it.
pub fn extract_marked_block<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let mut open: Option<usize> = None;
    let mut last: Option<(usize, usize)> = None;
    let mut pos = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        let next_start = rest.find(start).map(|i| pos + i);
        let next_end = rest.find(end).map(|i| pos + i);
        match (next_start, next_end) {
            (Some(s), Some(e)) if s < e => {
                open = Some(s + start.len());
                pos = s + start.len();
            }
            (Some(s), None) => {
                open = Some(s + start.len());
                pos = s + start.len();
            }
            (_, Some(e)) => {
                if let Some(o) = open.take() {
                    last = Some((o, e));
                }
                pos = e + end.len();
            }
            (None, None) => break,
        }
    }
    last.map(|(a, b)| text[a..b].trim())
}

pub fn extract_spec_block(llm_output: &str) -> Result<RawSpecText, SpecError> {
    extract_marked_block(llm_output, SPEC_START, SPEC_END)
        .map(|s| RawSpecText(s.to_string()))
        .ok_or_else(|| SpecError::MissingMarkers {
            start: SPEC_START.into(),
            end: SPEC_END.into(),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Summary,
    ModuleName,
    Inputs,
    Outputs,
    Functional,
    Clocking,
    Notes,
}

impl Section {
    fn title(self) -> &'static str {
        match self {
            Section::Summary => "Summary",
            Section::ModuleName => "Module Name",
            Section::Inputs => "Inputs",
            Section::Outputs => "Outputs",
            Section::Functional => "Detailed Functional Description",
            Section::Clocking => "Clocking and Reset Behavior",
            Section::Notes => "Notes",
        }
    }
}

const HEADER_ALIASES: &[(&str, Section)] = &[
    ("summary", Section::Summary),
    ("overview", Section::Summary),
    ("module name", Section::ModuleName),
    ("top module name", Section::ModuleName),
    ("top module", Section::ModuleName),
    ("module", Section::ModuleName),
    ("inputs", Section::Inputs),
    ("input", Section::Inputs),
    ("input ports", Section::Inputs),
    ("input signals", Section::Inputs),
    ("outputs", Section::Outputs),
    ("output", Section::Outputs),
    ("output ports", Section::Outputs),
    ("output signals", Section::Outputs),
    ("detailed functional description", Section::Functional),
    ("functional description", Section::Functional),
    ("detailed description", Section::Functional),
    ("functionality", Section::Functional),
    ("clocking and reset behavior", Section::Clocking),
    ("clocking and reset behaviour", Section::Clocking),
    ("clocking and reset", Section::Clocking),
    ("clock and reset behavior", Section::Clocking),
    ("clock and reset", Section::Clocking),
    ("clocking/reset behavior", Section::Clocking),
    ("notes", Section::Notes),
    ("note", Section::Notes),
];

static PARENTHETICAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*\([^)]*\)\s*$").unwrap());
static WS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());
static UNKNOWN_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[#*\s]*([A-Z][A-Za-z0-9 /&'()-]{1,40}?)\s*:\s*\**\s*$").unwrap()
});

fn strip_line_decoration(line: &str) -> &str {
    line.trim()
        .trim_start_matches(|c: char| c == '#' || c == '*' || c == '-' || c == '•' || c.is_whitespace())
}

/// Recognizes a section header line and returns the text after its colon.
fn match_header(line: &str) -> Option<(Section, &str)> {
    let body = strip_line_decoration(line);
    let colon = body.find(':')?;
    let head: String = body[..colon].chars().filter(|c| *c != '*' && *c != '`' && *c != '_').collect();
    let head = WS.replace_all(head.trim(), " ").to_lowercase();
    if head.is_empty() || head.len() > 48 {
        return None;
    }
    let head = PARENTHETICAL.replace(&head, "").to_string();
    let section = HEADER_ALIASES.iter().find_map(|(alias, section)| {
        let multiword = alias.contains(' ');
        let hit = head == *alias || (multiword && head.starts_with(alias));
        hit.then_some(*section)
    })?;
    let rest = body[colon + 1..].trim_start_matches(|c: char| c == '*' || c.is_whitespace());
    Some((section, rest.trim_end()))
}

#[derive(Default)]
struct ModuleBuilder {
    sections: BTreeMap<Section, Vec<String>>,
    trailing: Vec<String>,
}

impl ModuleBuilder {
    fn has(&self, section: Section) -> bool {
        self.sections.contains_key(&section)
    }

    fn text(&self, section: Section) -> Option<String> {
        self.sections
            .get(&section)
            .map(|lines| lines.join("\n").trim().to_string())
    }

    fn build(self) -> Result<StructuredSpec, SpecError> {
        let module_raw = self
            .text(Section::ModuleName)
            .ok_or_else(|| SpecError::MissingSection(Section::ModuleName.title().into()))?;
        let module_name = clean_module_name(&module_raw)?;
        let inputs = match self.sections.get(&Section::Inputs) {
            Some(lines) => parse_port_lines(lines)?,
            None => return Err(SpecError::MissingSection(Section::Inputs.title().into())),
        };
        let outputs = match self.sections.get(&Section::Outputs) {
            Some(lines) => parse_port_lines(lines)?,
            None => return Err(SpecError::MissingSection(Section::Outputs.title().into())),
        };
        let functional_description = self
            .text(Section::Functional)
            .ok_or_else(|| SpecError::MissingSection(Section::Functional.title().into()))?;
        let mut notes = self.text(Section::Notes).unwrap_or_default();
        let trailing = self.trailing.join("\n").trim().to_string();
        if !trailing.is_empty() {
            if !notes.is_empty() {
                notes.push_str("\n\n");
            }
            notes.push_str(&trailing);
        }
        Ok(StructuredSpec {
            summary: self.text(Section::Summary).unwrap_or_default(),
            module_name,
            inputs,
            outputs,
            functional_description,
            clocking_and_reset: self.text(Section::Clocking).unwrap_or_default(),
            notes: (!notes.is_empty()).then_some(notes),
            extra_modules: Vec::new(),
        })
    }
}

fn clean_module_name(raw: &str) -> Result<String, SpecError> {
    let token = raw
        .split_whitespace()
        .next()
        .unwrap_or("")
        .trim_matches(|c: char| c == '`' || c == '*' || c == '"' || c == '\'' || c == '.' || c == ',');
    if is_verilog_identifier(token) {
        Ok(token.to_string())
    } else if token.is_empty() {
        Err(SpecError::MissingSection(Section::ModuleName.title().into()))
    } else {
        Err(SpecError::InvalidModuleName(token.to_string()))
    }
}

pub fn is_verilog_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

static PORT_NAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[`*]*([A-Za-z_][A-Za-z0-9_$]*)[`*]*\s*").unwrap());
static RANGE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[\s*(\d+)\s*:\s*(\d+)\s*\]").unwrap());
static BITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)(\d+)\s*-?\s*bits?\b").unwrap());
static BARE_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\d+)\s*$").unwrap());
static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*•+]|\d+[.)])\s+").unwrap());

fn width_from_group(group: &str) -> Option<u32> {
    let width = if let Some(c) = RANGE.captures(group) {
        let hi: u64 = c[1].parse().ok()?;
        let lo: u64 = c[2].parse().ok()?;
        hi.abs_diff(lo) + 1
    } else if let Some(c) = BITS.captures(group) {
        c[1].parse().ok()?
    } else if let Some(c) = BARE_NUMBER.captures(group) {
        c[1].parse().ok()?
    } else {
        return None;
    };
    u32::try_from(width).ok().filter(|w| *w >= 1)
}

/// Parses `name (<width>): purpose`, `name [hi:lo]: purpose` and the
/// purpose-less forms of both.
fn parse_port(text: &str) -> Result<PortDesc, SpecError> {
    let malformed = || SpecError::MalformedPortLine(text.trim().to_string());
    let caps = PORT_NAME.captures(text).ok_or_else(malformed)?;
    let name = caps[1].to_string();
    let rest = &text[caps.get(0).unwrap().end()..];
    let (width, after) = if let Some(inner) = rest.strip_prefix('(') {
        let close = inner.find(')').ok_or_else(malformed)?;
        (width_from_group(&inner[..close]), &inner[close + 1..])
    } else if rest.starts_with('[') {
        let close = rest.find(']').ok_or_else(malformed)?;
        (width_from_group(&rest[..=close]), &rest[close + 1..])
    } else {
        (None, rest)
    };
    let width_bits = width.ok_or_else(malformed)?;
    let purpose = after
        .trim_start()
        .trim_start_matches(|c: char| c == ':' || c == '-' || c == '–' || c == '—')
        .trim();
    Ok(PortDesc {
        name,
        width_bits,
        purpose: purpose.to_string(),
    })
}

fn is_none_marker(s: &str) -> bool {
    matches!(
        s.trim().trim_end_matches('.').to_ascii_lowercase().as_str(),
        "none" | "n/a" | "na" | "-"
    )
}

/// Splits on commas that are not enclosed in parentheses or brackets.
fn split_top_level_commas(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn parse_port_lines(lines: &[String]) -> Result<Vec<PortDesc>, SpecError> {
    let mut ports: Vec<PortDesc> = Vec::new();
    for line in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() || is_none_marker(trimmed) {
            continue;
        }
        let bulleted = BULLET.is_match(trimmed);
        let body = BULLET.replace(trimmed, "");
        let body = body.trim();
        if is_none_marker(body) {
            continue;
        }
        if !bulleted && !body.contains(':') && body.contains(',') {
            // Inline list such as `a (1-bit), b (1-bit).`
            for item in split_top_level_commas(body) {
                let item = item.trim().trim_end_matches('.');
                if !item.is_empty() {
                    ports.push(parse_port(item)?);
                }
            }
            continue;
        }
        match parse_port(body) {
            Ok(mut port) => {
                if port.purpose == "." {
                    port.purpose.clear();
                }
                ports.push(port)
            }
            Err(err) => match ports.last_mut() {
                // Wrapped purpose text from the previous bullet.
                Some(prev) if !bulleted => {
                    if !prev.purpose.is_empty() {
                        prev.purpose.push(' ');
                    }
                    prev.purpose.push_str(body);
                }
                _ => return Err(err),
            },
        }
    }
    Ok(ports)
}

pub fn parse_spec(raw: &RawSpecText) -> Result<StructuredSpec, SpecError> {
    parse_spec_text(raw.as_str())
}

/// Parses spec text that has already been stripped of its markers.
pub fn parse_spec_text(text: &str) -> Result<StructuredSpec, SpecError> {
    let mut modules: Vec<ModuleBuilder> = vec![ModuleBuilder::default()];
    let mut current: Option<Section> = None;
    let mut in_trailing = false;

    for line in text.lines() {
        let port_bullet =
            matches!(current, Some(Section::Inputs) | Some(Section::Outputs)) && BULLET.is_match(line);
        if let Some((section, rest)) = match_header(line).filter(|_| !port_bullet) {
            let starts_new_module = {
                let cur = modules.last().unwrap();
                match section {
                    Section::Summary => cur.has(Section::Summary) || cur.has(Section::ModuleName),
                    Section::ModuleName => cur.has(Section::ModuleName),
                    _ => false,
                }
            };
            if starts_new_module {
                modules.push(ModuleBuilder::default());
            }
            let cur = modules.last_mut().unwrap();
            let entry = cur.sections.entry(section).or_default();
            if !rest.is_empty() {
                entry.push(rest.to_string());
            }
            current = Some(section);
            in_trailing = false;
            continue;
        }
        let cur = modules.last_mut().unwrap();
        if matches!(current, Some(Section::Clocking) | Some(Section::Notes))
            && UNKNOWN_HEADER.is_match(line)
        {
            in_trailing = true;
        }
        if in_trailing {
            cur.trailing.push(line.trim_end().to_string());
            continue;
        }
        if let Some(section) = current {
            cur.sections.entry(section).or_default().push(line.trim_end().to_string());
        }
    }

    let mut built = modules.into_iter().map(ModuleBuilder::build);
    let mut top = built.next().expect("at least one module")?;
    for extra in built {
        top.extra_modules.push(extra?);
    }
    Ok(top)
}

fn render_port(port: &PortDesc) -> String {
    if port.purpose.is_empty() {
        format!("{} ({}-bit)", port.name, port.width_bits)
    } else {
        format!("{} ({}-bit): {}", port.name, port.width_bits, port.purpose)
    }
}

fn push_section(out: &mut String, title: &str, body: &str) {
    if !out.is_empty() && !out.ends_with("\n\n") {
        out.push('\n');
    }
    out.push_str(title);
    out.push_str(":\n");
    out.push_str(body);
    out.push('\n');
}

fn render_ports(list: &[PortDesc]) -> String {
    if list.is_empty() {
        return "- None".to_string();
    }
    list.iter()
        .map(|p| format!("- {}", render_port(p)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_module(spec: &StructuredSpec, out: &mut String) {
    if !spec.summary.is_empty() {
        push_section(out, "Summary", &spec.summary);
    }
    if !out.is_empty() && !out.ends_with("\n\n") {
        out.push('\n');
    }
    out.push_str(&format!("Module Name: {}\n", spec.module_name));
    push_section(out, "Inputs", &render_ports(&spec.inputs));
    push_section(out, "Outputs", &render_ports(&spec.outputs));
    push_section(out, Section::Functional.title(), &spec.functional_description);
    if !spec.clocking_and_reset.is_empty() {
        push_section(out, Section::Clocking.title(), &spec.clocking_and_reset);
    }
    if let Some(notes) = spec.notes.as_deref().filter(|n| !n.is_empty()) {
        push_section(out, "Notes", notes);
    }
}

/// Canonical text form, including the spec markers.
pub fn render_spec(spec: &StructuredSpec) -> String {
    let mut body = String::new();
    render_module(spec, &mut body);
    for extra in &spec.extra_modules {
        render_module(extra, &mut body);
    }
    format!("{SPEC_START}\n{}\n{SPEC_END}\n", body.trim_end())
}

/// Canonical form with all whitespace runs collapsed, used to decide whether
/// two specs say the same thing.
pub fn canonical_form(spec: &StructuredSpec) -> String {
    WS.replace_all(render_spec(spec).trim(), " ").into_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// Verilog source in a free-text field.
    EmbeddedCode { field: String, line: String },
    /// Port named in the spec that the RTL does not declare.
    UnknownPort(String),
    WidthMismatch {
        port: String,
        spec_width: u32,
        rtl_width: u32,
    },
    /// Output port never mentioned in the functional description.
    UnexplainedOutput(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmbeddedCode { field, line } => {
                write!(f, "Verilog code in {field}: `{line}`")
            }
            Violation::UnknownPort(p) => write!(f, "port `{p}` does not exist in the RTL"),
            Violation::WidthMismatch {
                port,
                spec_width,
                rtl_width,
            } => write!(f, "port `{port}` is {spec_width} bits in the spec but {rtl_width} in the RTL"),
            Violation::UnexplainedOutput(p) => {
                write!(f, "output `{p}` is not explained in the functional description")
            }
        }
    }
}

static CODE_PATTERNS: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        r"```",
        r"^\s*module\s+[A-Za-z_]\w*\s*(?:[(#;]|$)",
        r"\bendmodule\b",
        r"\bassign\s+[^=]+=",
        r"\balways\s*@",
        r"\balways_(?:ff|comb|latch)\b",
        r"\b(?:posedge|negedge)\s+\w+\s+or\s+(?:posedge|negedge)\b",
    ]
    .iter()
    .map(|p| Regex::new(p).unwrap())
    .collect()
});

fn code_lines(field: &str, text: &str, out: &mut Vec<Violation>) {
    for line in text.lines() {
        if CODE_PATTERNS.iter().any(|re| re.is_match(line)) {
            out.push(Violation::EmbeddedCode {
                field: field.to_string(),
                line: line.trim().to_string(),
            });
        }
    }
}

fn mentions_word(text: &str, word: &str) -> bool {
    text.match_indices(word).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + word.len()..].chars().next();
        let is_ident = |c: Option<char>| c.is_some_and(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$');
        !is_ident(before) && !is_ident(after)
    })
}

/// Lints a spec against the output rules and, when given, the ports declared
/// by the original RTL. Ports whose RTL width could not be resolved should be
/// passed through [`lint_spec_with_widths`] instead.
pub fn lint_spec(spec: &StructuredSpec, original_ports: Option<&[PortDesc]>) -> Vec<Violation> {
    let widths: Option<Vec<(String, Option<u32>)>> = original_ports
        .map(|ports| ports.iter().map(|p| (p.name.clone(), Some(p.width_bits))).collect());
    lint_spec_with_widths(spec, widths.as_deref())
}

pub fn lint_spec_with_widths(
    spec: &StructuredSpec,
    original_ports: Option<&[(String, Option<u32>)]>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    code_lines("Summary", &spec.summary, &mut out);
    code_lines(Section::Functional.title(), &spec.functional_description, &mut out);
    code_lines(Section::Clocking.title(), &spec.clocking_and_reset, &mut out);
    if let Some(notes) = &spec.notes {
        code_lines("Notes", notes, &mut out);
    }
    for port in spec.inputs.iter().chain(&spec.outputs) {
        code_lines(&format!("port {}", port.name), &port.purpose, &mut out);
    }

    if let Some(rtl) = original_ports {
        let rtl: BTreeMap<&str, Option<u32>> = rtl.iter().map(|(n, w)| (n.as_str(), *w)).collect();
        let mut seen = BTreeSet::new();
        for port in spec.inputs.iter().chain(&spec.outputs) {
            if !seen.insert(port.name.as_str()) {
                continue;
            }
            match rtl.get(port.name.as_str()) {
                None => out.push(Violation::UnknownPort(port.name.clone())),
                Some(Some(w)) if *w != port.width_bits => out.push(Violation::WidthMismatch {
                    port: port.name.clone(),
                    spec_width: port.width_bits,
                    rtl_width: *w,
                }),
                _ => {}
            }
        }
    }

    for port in &spec.outputs {
        if !mentions_word(&spec.functional_description, &port.name) {
            out.push(Violation::UnexplainedOutput(port.name.clone()));
        }
    }
    out
}
