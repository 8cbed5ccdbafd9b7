//! ISO 10303-21 (STEP Physical File) reader and writer.
//!
//! The reader is schema-agnostic: any `#id=KEYWORD(...)` instance is accepted
//! and kept as a generic [`EntityInstance`]. Only the IFC layer on top of it
//! knows what the attributes mean.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use super::diagnostic::{Diagnostic, Severity};

/// How malformed entity instances are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Skip the offending instance, record a diagnostic and keep going.
    #[default]
    Lenient,
    /// Stop at the first malformed instance or dangling reference.
    Strict,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error("syntax error at {line}:{col}: expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },
    #[error("duplicate instance id #{0}")]
    DuplicateId(u64),
    #[error("instance #{referenced_by} references missing instance #{id}")]
    DanglingReference { id: u64, referenced_by: u64 },
}

/// One attribute value of an entity instance.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    /// `$`
    Unset,
    /// `*`
    Derived,
    Integer(i64),
    Real(f64),
    /// Decoded string contents.
    Text(String),
    /// `.NAME.` without the dots.
    Enum(String),
    EntityRef(u64),
    /// `IFCLABEL('x')` style typed parameter.
    Typed(String, Box<AttrValue>),
    List(Vec<AttrValue>),
    /// Hex digits of a `"..."` binary literal.
    Binary(String),
}

impl AttrValue {
    pub fn as_ref_id(&self) -> Option<u64> {
        match self {
            AttrValue::EntityRef(id) => Some(*id),
            _ => None,
        }
    }

    /// Numeric value, looking through typed wrappers such as `IFCLENGTHMEASURE(2.1)`.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Integer(i) => Some(*i as f64),
            AttrValue::Real(r) => Some(*r),
            AttrValue::Typed(_, inner) => inner.as_f64(),
            _ => None,
        }
    }

    /// Text value, looking through typed wrappers such as `IFCLABEL('x')`.
    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            AttrValue::Typed(_, inner) => inner.as_text(),
            _ => None,
        }
    }

    pub fn as_enum(&self) -> Option<&str> {
        match self {
            AttrValue::Enum(s) => Some(s),
            AttrValue::Typed(_, inner) => inner.as_enum(),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[AttrValue]> {
        match self {
            AttrValue::List(items) => Some(items),
            _ => None,
        }
    }

    /// Entity ids referenced by this value or a list of them.
    pub fn ref_ids(&self) -> Vec<u64> {
        match self {
            AttrValue::EntityRef(id) => vec![*id],
            AttrValue::List(items) => items.iter().filter_map(AttrValue::as_ref_id).collect(),
            _ => Vec::new(),
        }
    }

    fn collect_refs(&self, out: &mut Vec<u64>) {
        match self {
            AttrValue::EntityRef(id) => out.push(*id),
            AttrValue::Typed(_, inner) => inner.collect_refs(out),
            AttrValue::List(items) => items.iter().for_each(|v| v.collect_refs(out)),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityInstance {
    pub id: u64,
    pub type_name: String,
    pub attrs: Vec<AttrValue>,
}

impl EntityInstance {
    pub fn attr(&self, index: usize) -> Option<&AttrValue> {
        self.attrs.get(index)
    }

    pub fn text(&self, index: usize) -> Option<&str> {
        self.attr(index).and_then(AttrValue::as_text)
    }

    pub fn number(&self, index: usize) -> Option<f64> {
        self.attr(index).and_then(AttrValue::as_f64)
    }

    pub fn reference(&self, index: usize) -> Option<u64> {
        self.attr(index).and_then(AttrValue::as_ref_id)
    }

    pub fn references(&self, index: usize) -> Vec<u64> {
        self.attr(index).map(AttrValue::ref_ids).unwrap_or_default()
    }

    /// Every entity id referenced anywhere in the attributes, in order.
    pub fn all_refs(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for a in &self.attrs {
            a.collect_refs(&mut out);
        }
        out
    }
}

/// A HEADER section record such as `FILE_NAME(...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeaderEntity {
    pub name: String,
    pub params: Vec<AttrValue>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepFile {
    pub header: Vec<HeaderEntity>,
    pub header_description: Vec<String>,
    pub schema_name: String,
    pub entities: BTreeMap<u64, EntityInstance>,
    pub diagnostics: Vec<Diagnostic>,
}

impl StepFile {
    pub fn get(&self, id: u64) -> Option<&EntityInstance> {
        self.entities.get(&id)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Instances whose type name is one of `types`, ascending by id.
    pub fn of_types<'a>(&'a self, types: &'a [&str]) -> impl Iterator<Item = &'a EntityInstance> {
        self.entities
            .values()
            .filter(move |e| types.iter().any(|t| e.type_name == *t))
    }

    pub fn of_type<'a>(&'a self, ty: &'a str) -> impl Iterator<Item = &'a EntityInstance> {
        self.entities.values().filter(move |e| e.type_name == ty)
    }

    /// Count of instances with the given type name.
    pub fn count_type(&self, ty: &str) -> usize {
        self.of_type(ty).count()
    }

    /// Serializes back to SPF text. Parsing the output yields the same header
    /// and entity graph.
    pub fn to_spf(&self) -> String {
        let mut out = String::from("ISO-10303-21;\nHEADER;\n");
        for h in &self.header {
            out.push_str(&h.name);
            write_params(&mut out, &h.params);
            out.push_str(";\n");
        }
        out.push_str("ENDSEC;\nDATA;\n");
        for e in self.entities.values() {
            let _ = write!(out, "#{}={}", e.id, e.type_name);
            write_params(&mut out, &e.attrs);
            out.push_str(";\n");
        }
        out.push_str("ENDSEC;\nEND-ISO-10303-21;\n");
        out
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_value(&mut s, self);
        f.write_str(&s)
    }
}

fn write_params(out: &mut String, params: &[AttrValue]) {
    out.push('(');
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_value(out, p);
    }
    out.push(')');
}

fn write_value(out: &mut String, v: &AttrValue) {
    match v {
        AttrValue::Unset => out.push('$'),
        AttrValue::Derived => out.push('*'),
        AttrValue::Integer(i) => {
            let _ = write!(out, "{i}");
        }
        AttrValue::Real(r) => out.push_str(&format_real(*r)),
        AttrValue::Text(s) => {
            out.push('\'');
            out.push_str(&encode_string(s));
            out.push('\'');
        }
        AttrValue::Enum(e) => {
            let _ = write!(out, ".{e}.");
        }
        AttrValue::EntityRef(id) => {
            let _ = write!(out, "#{id}");
        }
        AttrValue::Typed(name, inner) => {
            out.push_str(name);
            out.push('(');
            write_value(out, inner);
            out.push(')');
        }
        AttrValue::List(items) => write_params(out, items),
        AttrValue::Binary(hex) => {
            let _ = write!(out, "\"{hex}\"");
        }
    }
}

/// Shortest round-trip representation that is still a valid STEP real
/// (always carries a decimal point, exponent marker `E`).
pub fn format_real(r: f64) -> String {
    let s = format!("{r:?}");
    match s.find(['e', 'E']) {
        Some(pos) => {
            let (mantissa, exp) = s.split_at(pos);
            let mantissa = if mantissa.contains('.') {
                mantissa.to_string()
            } else {
                format!("{mantissa}.")
            };
            format!("{mantissa}E{}", &exp[1..])
        }
        None if s.contains('.') => s,
        None => format!("{s}."),
    }
}

/// Encodes text with STEP escapes: `'` doubled, `\` doubled, anything outside
/// printable ASCII as `\X2\...\X0\` (or `\X4\` beyond the BMP).
pub fn encode_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if (' '..='~').contains(&c) {
            match c {
                '\'' => out.push_str("''"),
                '\\' => out.push_str("\\\\"),
                _ => out.push(c),
            }
            i += 1;
            continue;
        }
        let wide = (c as u32) > 0xFFFF;
        out.push_str(if wide { "\\X4\\" } else { "\\X2\\" });
        while i < chars.len() {
            let c = chars[i];
            if (' '..='~').contains(&c) || ((c as u32) > 0xFFFF) != wide {
                break;
            }
            if wide {
                let _ = write!(out, "{:08X}", c as u32);
            } else {
                let _ = write!(out, "{:04X}", c as u32);
            }
            i += 1;
        }
        out.push_str("\\X0\\");
    }
    out
}

/// Decodes the body of a STEP string literal (quotes already removed, `''`
/// already collapsed).
pub fn decode_string(raw: &str) -> String {
    let chars: Vec<char> = raw.chars().collect();
    let mut out = String::with_capacity(raw.len());
    let mut i = 0;
    let hex_at = |i: usize, n: usize| -> Option<u32> {
        if i + n > chars.len() {
            return None;
        }
        let s: String = chars[i..i + n].iter().collect();
        u32::from_str_radix(&s, 16).ok()
    };
    while i < chars.len() {
        let c = chars[i];
        if c != '\\' {
            out.push(c);
            i += 1;
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 4)].iter().collect();
        if rest.starts_with("\\\\") {
            out.push('\\');
            i += 2;
        } else if rest.starts_with("\\X2\\") || rest.starts_with("\\X4\\") {
            let width = if rest.starts_with("\\X2\\") { 4 } else { 8 };
            let mut j = i + 4;
            let mut units: Vec<u32> = Vec::new();
            while let Some(u) = hex_at(j, width) {
                units.push(u);
                j += width;
            }
            let terminated: String = chars[j..chars.len().min(j + 4)].iter().collect();
            if terminated != "\\X0\\" {
                // not a well-formed group, keep it verbatim
                out.push(c);
                i += 1;
                continue;
            }
            if width == 4 {
                let u16s: Vec<u16> = units.iter().map(|u| *u as u16).collect();
                out.push_str(&String::from_utf16_lossy(&u16s));
            } else {
                for u in units {
                    out.push(char::from_u32(u).unwrap_or(char::REPLACEMENT_CHARACTER));
                }
            }
            i = j + 4;
        } else if rest.starts_with("\\X\\") {
            match hex_at(i + 3, 2) {
                Some(b) => {
                    out.push(char::from_u32(b).unwrap_or(char::REPLACEMENT_CHARACTER));
                    i += 5;
                }
                None => {
                    out.push(c);
                    i += 1;
                }
            }
        } else if rest.starts_with("\\S\\") && i + 3 < chars.len() {
            let base = chars[i + 3] as u32;
            out.push(char::from_u32(base + 128).unwrap_or(char::REPLACEMENT_CHARACTER));
            i += 4;
        } else if chars.len() >= i + 4
            && chars[i + 1] == 'P'
            && chars[i + 3] == '\\'
            && chars[i + 2].is_ascii_uppercase()
        {
            // code page switch, only ISO 8859-1 is supported
            i += 4;
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

pub fn parse_step(bytes: &[u8]) -> Result<StepFile, StepError> {
    parse_step_with(bytes, Strictness::Lenient)
}

pub fn parse_step_with(bytes: &[u8], strictness: Strictness) -> Result<StepFile, StepError> {
    let text = String::from_utf8_lossy(bytes);
    let mut p = Parser::new(&text);
    let mut file = StepFile::default();

    p.skip_trivia();
    p.expect_literal("ISO-10303-21")?;
    p.expect_char(';')?;
    p.skip_trivia();
    p.expect_keyword("HEADER")?;
    p.expect_char(';')?;
    loop {
        p.skip_trivia();
        let kw = p.keyword()?;
        if kw == "ENDSEC" {
            p.expect_char(';')?;
            break;
        }
        let params = p.params()?;
        p.expect_char(';')?;
        file.header.push(HeaderEntity { name: kw, params });
    }
    fill_header_fields(&mut file);

    loop {
        p.skip_trivia();
        if p.try_literal("END-ISO-10303-21") {
            p.expect_char(';')?;
            break;
        }
        if p.at_end() {
            let (line, col) = p.position();
            file.diagnostics.push(Diagnostic::new(
                Severity::Warning,
                line,
                col,
                "missing END-ISO-10303-21 terminator",
            ));
            break;
        }
        p.expect_keyword("DATA")?;
        p.skip_trivia();
        if p.peek() == Some('(') {
            p.params()?;
        }
        p.expect_char(';')?;
        parse_data_section(&mut p, &mut file, strictness)?;
    }

    check_references(&mut file, strictness)?;
    Ok(file)
}

fn fill_header_fields(file: &mut StepFile) {
    for h in &file.header {
        match h.name.as_str() {
            "FILE_DESCRIPTION" => {
                if let Some(AttrValue::List(items)) = h.params.first() {
                    file.header_description = items
                        .iter()
                        .filter_map(|v| v.as_text().map(str::to_string))
                        .collect();
                }
            }
            "FILE_SCHEMA" => {
                if let Some(AttrValue::List(items)) = h.params.first() {
                    if let Some(s) = items.first().and_then(AttrValue::as_text) {
                        file.schema_name = s.to_string();
                    }
                }
            }
            _ => {}
        }
    }
    let schema = file.schema_name.to_ascii_uppercase();
    if !schema.starts_with("IFC") {
        file.diagnostics.push(Diagnostic::new(
            Severity::Warning,
            0,
            0,
            format!("unsupported schema `{}`; parsing anyway", file.schema_name),
        ));
    }
}

fn parse_data_section(
    p: &mut Parser<'_>,
    file: &mut StepFile,
    strictness: Strictness,
) -> Result<(), StepError> {
    loop {
        p.skip_trivia();
        if p.try_keyword("ENDSEC") {
            p.expect_char(';')?;
            return Ok(());
        }
        if p.at_end() {
            let (line, col) = p.position();
            return Err(StepError::Syntax {
                line,
                col,
                expected: "ENDSEC".into(),
            });
        }
        let start = p.position();
        match p.instance() {
            Ok(Some(e)) => {
                if file.entities.contains_key(&e.id) {
                    return Err(StepError::DuplicateId(e.id));
                }
                file.entities.insert(e.id, e);
            }
            Ok(None) => {
                file.diagnostics.push(Diagnostic::new(
                    Severity::Warning,
                    start.0,
                    start.1,
                    "complex entity instance skipped",
                ));
            }
            Err(err) => {
                if strictness == Strictness::Strict {
                    return Err(err);
                }
                let (line, col) = match &err {
                    StepError::Syntax { line, col, .. } => (*line, *col),
                    _ => start,
                };
                file.diagnostics
                    .push(Diagnostic::new(Severity::Error, line, col, err.to_string()));
                p.recover();
            }
        }
    }
}

fn check_references(file: &mut StepFile, strictness: Strictness) -> Result<(), StepError> {
    for e in file.entities.values() {
        for r in e.all_refs() {
            if !file.entities.contains_key(&r) {
                let err = StepError::DanglingReference {
                    id: r,
                    referenced_by: e.id,
                };
                if strictness == Strictness::Strict {
                    return Err(err);
                }
                file.diagnostics
                    .push(Diagnostic::new(Severity::Error, 0, 0, err.to_string()));
            }
        }
    }
    Ok(())
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    _src: std::marker::PhantomData<&'a str>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
            line: 1,
            col: 1,
            _src: std::marker::PhantomData,
        }
    }

    fn position(&self) -> (usize, usize) {
        (self.line, self.col)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn error<T>(&self, expected: impl Into<String>) -> Result<T, StepError> {
        Err(StepError::Syntax {
            line: self.line,
            col: self.col,
            expected: expected.into(),
        })
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') if self.peek_at(1) == Some('*') => {
                    self.bump();
                    self.bump();
                    while !self.at_end() {
                        if self.peek() == Some('*') && self.peek_at(1) == Some('/') {
                            self.bump();
                            self.bump();
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn expect_char(&mut self, c: char) -> Result<(), StepError> {
        self.skip_trivia();
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("`{c}`"))
        }
    }

    fn try_literal(&mut self, lit: &str) -> bool {
        let n = lit.chars().count();
        if self.pos + n > self.chars.len() {
            return false;
        }
        let matches = self.chars[self.pos..self.pos + n]
            .iter()
            .zip(lit.chars())
            .all(|(a, b)| a.eq_ignore_ascii_case(&b));
        let boundary = self.chars.get(self.pos + n).map_or(true, |c| {
            !(c.is_ascii_alphanumeric() || *c == '_' || *c == '-')
        });
        if matches && boundary {
            for _ in 0..n {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    fn expect_literal(&mut self, lit: &str) -> Result<(), StepError> {
        if self.try_literal(lit) {
            Ok(())
        } else {
            self.error(lit)
        }
    }

    fn try_keyword(&mut self, kw: &str) -> bool {
        self.try_literal(kw)
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), StepError> {
        self.skip_trivia();
        self.expect_literal(kw)
    }

    fn keyword(&mut self) -> Result<String, StepError> {
        self.skip_trivia();
        let mut s = String::new();
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '!' => {}
            _ => return self.error("keyword"),
        }
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' || (c == '!' && s.is_empty()) {
                s.push(c.to_ascii_uppercase());
                self.bump();
            } else {
                break;
            }
        }
        Ok(s)
    }

    fn unsigned(&mut self) -> Result<u64, StepError> {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if s.is_empty() {
            return self.error("digits");
        }
        s.parse()
            .or_else(|_| self.error("instance id within range"))
    }

    /// `#id = KEYWORD(params);` Returns `None` for complex instances, which are
    /// consumed but not represented.
    fn instance(&mut self) -> Result<Option<EntityInstance>, StepError> {
        self.expect_char('#')?;
        let id = self.unsigned()?;
        if id == 0 {
            return self.error("positive instance id");
        }
        self.expect_char('=')?;
        self.skip_trivia();
        if self.peek() == Some('(') {
            self.recover();
            return Ok(None);
        }
        let type_name = self.keyword()?;
        let attrs = self.params()?;
        self.expect_char(';')?;
        Ok(Some(EntityInstance {
            id,
            type_name,
            attrs,
        }))
    }

    fn params(&mut self) -> Result<Vec<AttrValue>, StepError> {
        self.expect_char('(')?;
        let mut out = Vec::new();
        self.skip_trivia();
        if self.peek() == Some(')') {
            self.bump();
            return Ok(out);
        }
        loop {
            out.push(self.value()?);
            self.skip_trivia();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(')') => {
                    self.bump();
                    return Ok(out);
                }
                _ => return self.error("`,` or `)`"),
            }
        }
    }

    fn value(&mut self) -> Result<AttrValue, StepError> {
        self.skip_trivia();
        match self.peek() {
            Some('$') => {
                self.bump();
                Ok(AttrValue::Unset)
            }
            Some('*') => {
                self.bump();
                Ok(AttrValue::Derived)
            }
            Some('#') => {
                self.bump();
                Ok(AttrValue::EntityRef(self.unsigned()?))
            }
            Some('\'') => self.string(),
            Some('"') => self.binary(),
            Some('.')
                if self
                    .peek_at(1)
                    .is_some_and(|c| c.is_ascii_alphabetic() || c == '_') =>
            {
                self.enumeration()
            }
            Some('(') => Ok(AttrValue::List(self.params()?)),
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let name = self.keyword()?;
                let mut inner = self.params()?;
                let inner = if inner.len() == 1 {
                    inner.remove(0)
                } else {
                    AttrValue::List(inner)
                };
                Ok(AttrValue::Typed(name, Box::new(inner)))
            }
            _ => self.error("attribute value"),
        }
    }

    fn string(&mut self) -> Result<AttrValue, StepError> {
        self.bump();
        let mut raw = String::new();
        loop {
            match self.bump() {
                Some('\'') => {
                    if self.peek() == Some('\'') {
                        self.bump();
                        raw.push('\'');
                    } else {
                        break;
                    }
                }
                Some(c) => raw.push(c),
                None => return self.error("closing `'`"),
            }
        }
        Ok(AttrValue::Text(decode_string(&raw)))
    }

    fn binary(&mut self) -> Result<AttrValue, StepError> {
        self.bump();
        let mut hex = String::new();
        loop {
            match self.bump() {
                Some('"') => break,
                Some(c) if c.is_ascii_hexdigit() => hex.push(c),
                Some(_) => return self.error("hex digit"),
                None => return self.error("closing `\"`"),
            }
        }
        Ok(AttrValue::Binary(hex))
    }

    fn enumeration(&mut self) -> Result<AttrValue, StepError> {
        self.bump();
        let mut name = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                name.push(c.to_ascii_uppercase());
                self.bump();
            } else {
                break;
            }
        }
        if self.peek() != Some('.') {
            return self.error("`.` closing enumeration");
        }
        self.bump();
        Ok(AttrValue::Enum(name))
    }

    fn number(&mut self) -> Result<AttrValue, StepError> {
        let (line, col) = self.position();
        let mut s = String::new();
        if let Some(c @ ('+' | '-')) = self.peek() {
            s.push(c);
            self.bump();
        }
        let mut is_real = false;
        while let Some(c) = self.peek() {
            match c {
                '0'..='9' => s.push(c),
                '.' => {
                    is_real = true;
                    s.push(c);
                }
                'e' | 'E' => {
                    is_real = true;
                    s.push('E');
                    self.bump();
                    if let Some(sign @ ('+' | '-')) = self.peek() {
                        s.push(sign);
                    } else {
                        continue;
                    }
                }
                _ => break,
            }
            self.bump();
        }
        let bad = || StepError::Syntax {
            line,
            col,
            expected: "number".into(),
        };
        if is_real {
            // `1.E-5` and `0.` are valid STEP, normalise for Rust's parser
            let normalised = s.replace(".E", ".0E");
            let normalised = if normalised.ends_with('.') {
                format!("{normalised}0")
            } else {
                normalised
            };
            normalised
                .parse::<f64>()
                .map(AttrValue::Real)
                .map_err(|_| bad())
        } else {
            s.parse::<i64>().map(AttrValue::Integer).map_err(|_| bad())
        }
    }

    /// Skip to just after the next `;` outside string and binary literals.
    fn recover(&mut self) {
        while let Some(c) = self.bump() {
            match c {
                ';' => return,
                '\'' => {
                    while let Some(c) = self.bump() {
                        if c == '\'' {
                            if self.peek() == Some('\'') {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                }
                '"' => while self.bump().is_some_and(|c| c != '"') {},
                _ => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wrap(data: &str) -> String {
        format!(
            "ISO-10303-21;\nHEADER;\nFILE_DESCRIPTION(('ViewDefinition [CoordinationView]'),'2;1');\n\
             FILE_NAME('t.ifc','2024-01-01T00:00:00',(''),(''),'','','');\nFILE_SCHEMA(('IFC4'));\nENDSEC;\n\
             DATA;\n{data}\nENDSEC;\nEND-ISO-10303-21;\n"
        )
    }

    #[test]
    fn single_project() {
        let f = parse_step(wrap("#1=IFCPROJECT('0abc',$,'P',$,$,$,$,$,$);").as_bytes()).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.get(1).unwrap().type_name, "IFCPROJECT");
        assert_eq!(f.schema_name, "IFC4");
        assert_eq!(
            f.header_description,
            vec!["ViewDefinition [CoordinationView]"]
        );
    }

    #[test]
    fn decodes_x2_escape() {
        assert_eq!(decode_string(r"Terrassent\X2\00FC\X0\er"), "Terrassentüer");
        assert_eq!(decode_string(r"\X\E4"), "ä");
        assert_eq!(decode_string(r"a\\b"), "a\\b");
        assert_eq!(decode_string(r"\X4\0001F600\X0\"), "😀");
        assert_eq!(decode_string(r"\PA\\S\d"), "ä");
    }

    #[test]
    fn encode_then_decode_is_identity() {
        for s in ["Terrassentüer", "it's", "back\\slash", "😀 and ü", ""] {
            assert_eq!(decode_string(&encode_string(s).replace("''", "'")), s);
        }
    }

    #[test]
    fn attribute_kinds() {
        let f = parse_step(
            wrap("#1=IFCX($,*,12,-3.5E-2,'it''s',.T.,#1,IFCLABEL('l'),(1,2.,(#1)),\"0F\",1.E-05);")
                .as_bytes(),
        )
        .unwrap();
        let a = &f.get(1).unwrap().attrs;
        assert_eq!(a[0], AttrValue::Unset);
        assert_eq!(a[1], AttrValue::Derived);
        assert_eq!(a[2], AttrValue::Integer(12));
        assert_eq!(a[3], AttrValue::Real(-0.035));
        assert_eq!(a[4], AttrValue::Text("it's".into()));
        assert_eq!(a[5], AttrValue::Enum("T".into()));
        assert_eq!(a[6], AttrValue::EntityRef(1));
        assert_eq!(
            a[7],
            AttrValue::Typed("IFCLABEL".into(), Box::new(AttrValue::Text("l".into())))
        );
        assert_eq!(
            a[8],
            AttrValue::List(vec![
                AttrValue::Integer(1),
                AttrValue::Real(2.0),
                AttrValue::List(vec![AttrValue::EntityRef(1)])
            ])
        );
        assert_eq!(a[9], AttrValue::Binary("0F".into()));
        assert_eq!(a[10], AttrValue::Real(1e-5));
    }

    #[test]
    fn comments_are_stripped() {
        let f = parse_step(wrap("/* a; comment */ #1=IFCWALL(/*x*/'w');").as_bytes()).unwrap();
        assert_eq!(f.get(1).unwrap().text(0), Some("w"));
    }

    #[test]
    fn duplicate_id_is_an_error() {
        let err = parse_step(wrap("#1=IFCA();\n#1=IFCB();").as_bytes()).unwrap_err();
        assert_eq!(err, StepError::DuplicateId(1));
    }

    #[test]
    fn lenient_mode_skips_malformed_instances() {
        let src = wrap("#1=IFCA(1,2);\n#2=IFCB(1,,2);\n#3=IFCC('ok');");
        let f = parse_step(src.as_bytes()).unwrap();
        assert_eq!(f.len(), 2);
        assert!(f.get(2).is_none());
        let d = &f.diagnostics[0];
        assert_eq!(d.severity, Severity::Error);
        assert_eq!(d.line, 9);
    }

    #[test]
    fn strict_mode_fails_fast() {
        let src = wrap("#1=IFCA(1,2);\n#2=IFCB(1,,2);\n#3=IFCC('ok');");
        match parse_step_with(src.as_bytes(), Strictness::Strict) {
            Err(StepError::Syntax { line, .. }) => assert_eq!(line, 9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_references_are_reported() {
        let src = wrap("#1=IFCA(#7);");
        let f = parse_step(src.as_bytes()).unwrap();
        assert!(f.diagnostics.iter().any(|d| d.message.contains("#7")));
        assert_eq!(
            parse_step_with(src.as_bytes(), Strictness::Strict).unwrap_err(),
            StepError::DanglingReference {
                id: 7,
                referenced_by: 1
            }
        );
    }

    #[test]
    fn unknown_schema_only_warns() {
        let src = wrap("#1=IFCA();").replace("IFC4", "AP214");
        let f = parse_step(src.as_bytes()).unwrap();
        assert_eq!(f.len(), 1);
        assert!(f
            .diagnostics
            .iter()
            .any(|d| d.severity == Severity::Warning));
    }

    #[test]
    fn real_formatting_round_trips() {
        for r in [0.0, 2.375, 3600.0, 1e-5, -1.5e300, 0.1 + 0.2] {
            let s = format_real(r);
            assert!(s.contains('.'), "{s}");
            let f = parse_step(wrap(&format!("#1=IFCA({s});")).as_bytes()).unwrap();
            assert_eq!(f.get(1).unwrap().attrs[0], AttrValue::Real(r), "{s}");
        }
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let src = wrap("#1=IFCX($,*,12,-3.5E-2,'it''s \\X2\\00FC\\X0\\',.T.,#1,IFCLABEL('l'),(1,2.,(#1)),\"0F\");");
        let a = parse_step(src.as_bytes()).unwrap();
        let b = parse_step(a.to_spf().as_bytes()).unwrap();
        assert_eq!(a.entities, b.entities);
        assert_eq!(a.header, b.header);
    }
}
