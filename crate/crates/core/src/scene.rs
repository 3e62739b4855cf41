//! Scene description language.
//!
//! A scene names the dynamic objects an output image must contain, either
//! through one of the five dataset group templates or by listing objects:
//!
//! ```text
//! scene {
//!     group = 2;
//!     object pathology { pivots = 8; max_pivot_dist = 20; }
//! }
//! ```
//!
//! When a group is given, `object` blocks customize the template's objects and
//! may not introduce classes the template lacks. The full grammar lives in
//! `docs/scene-grammar.ebnf`.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{CellGrid, SemClass};
use crate::seed::derive_seed;

/// Source position, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    Syntax,
    UnknownClass,
    UnknownField,
    DuplicateField,
    Constraint,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagnosticKind::Syntax => "syntax error",
            DiagnosticKind::UnknownClass => "unknown class",
            DiagnosticKind::UnknownField => "unknown field",
            DiagnosticKind::DuplicateField => "duplicate field",
            DiagnosticKind::Constraint => "constraint violation",
        })
    }
}

/// A single located parse diagnostic.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}:{}: {kind}: {message}", pos.line, pos.col)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub pos: Pos,
    pub message: String,
}

impl Diagnostic {
    fn new(kind: DiagnosticKind, pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic { kind, pos, message: message.into() }
    }
}

/// Parameters of one object class to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub cls: SemClass,
    /// Background classes the object may overwrite.
    pub placement: Vec<SemClass>,
    pub count: usize,
    /// Minimum share of placement cells for a block to host a pathology.
    pub coverage: f64,
    pub pivots: usize,
    pub min_pivot_dist: usize,
    pub max_pivot_dist: usize,
    pub center_margin: usize,
    /// Dilation of per-pair bounding rectangles, in cells.
    pub padding: usize,
    /// Height of the bottom band holding intubation centers.
    pub band: usize,
    pub half_width: usize,
    pub min_length: usize,
    pub max_length: usize,
}

impl ObjectSpec {
    pub fn defaults(cls: SemClass) -> ObjectSpec {
        let placement = match cls {
            SemClass::Intubation => vec![SemClass::GlottalSpace],
            SemClass::SurgicalTool => vec![SemClass::VocalFolds, SemClass::GlottalSpace],
            _ => vec![SemClass::VocalFolds],
        };
        ObjectSpec {
            cls,
            placement,
            count: 1,
            coverage: 1.0,
            pivots: 8,
            min_pivot_dist: 4,
            max_pivot_dist: 24,
            center_margin: 16,
            padding: 0,
            band: 48,
            half_width: 6,
            min_length: 64,
            max_length: 256,
        }
    }

    /// The single placement class of contour objects.
    pub fn primary_placement(&self) -> SemClass {
        self.placement[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FieldKind {
    Classes,
    Int,
    Ratio,
}

struct FieldDef {
    name: &'static str,
    kind: FieldKind,
    classes: &'static [SemClass],
}

const P: SemClass = SemClass::Pathology;
const I: SemClass = SemClass::Intubation;
const T: SemClass = SemClass::SurgicalTool;

const FIELDS: &[FieldDef] = &[
    FieldDef { name: "placement", kind: FieldKind::Classes, classes: &[P, I, T] },
    FieldDef { name: "count", kind: FieldKind::Int, classes: &[P, I, T] },
    FieldDef { name: "coverage", kind: FieldKind::Ratio, classes: &[P] },
    FieldDef { name: "pivots", kind: FieldKind::Int, classes: &[P, I] },
    FieldDef { name: "min_pivot_dist", kind: FieldKind::Int, classes: &[P, I] },
    FieldDef { name: "max_pivot_dist", kind: FieldKind::Int, classes: &[P, I] },
    FieldDef { name: "center_margin", kind: FieldKind::Int, classes: &[P, I] },
    FieldDef { name: "padding", kind: FieldKind::Int, classes: &[P, I] },
    FieldDef { name: "band", kind: FieldKind::Int, classes: &[I] },
    FieldDef { name: "half_width", kind: FieldKind::Int, classes: &[T] },
    FieldDef { name: "min_length", kind: FieldKind::Int, classes: &[T] },
    FieldDef { name: "max_length", kind: FieldKind::Int, classes: &[T] },
];

const GENERATION_ORDER: [SemClass; 3] = [P, I, T];
const BACKGROUND: [SemClass; 3] = [SemClass::VocalFolds, SemClass::OtherTissue, SemClass::GlottalSpace];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("group {0} does not exist (groups are 1 to 5)")]
pub struct UnknownGroup(pub u8);

/// Object classes present in each dataset group, in generation order.
///
/// Group 5 additionally shows blood and surgical dressing, which have no class
/// in the label space, so at the label level it coincides with group 4.
pub fn group_classes(n: u8) -> Result<&'static [SemClass], UnknownGroup> {
    Ok(match n {
        1 => &[P],
        2 => &[P, I, T],
        3 => &[I],
        4 | 5 => &[I, T],
        _ => return Err(UnknownGroup(n)),
    })
}

pub fn expand_group_template(n: u8) -> Result<Vec<ObjectSpec>, UnknownGroup> {
    Ok(group_classes(n)?.iter().map(|&c| ObjectSpec::defaults(c)).collect())
}

/// A parsed scene. `objects` is always fully expanded and in generation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub group: Option<u8>,
    pub objects: Vec<ObjectSpec>,
}

impl SceneSpec {
    pub fn for_group(n: u8) -> Result<SceneSpec, UnknownGroup> {
        Ok(SceneSpec { group: Some(n), objects: expand_group_template(n)? })
    }

    /// Object classes the output must contain.
    pub fn expected_classes(&self) -> Vec<SemClass> {
        self.objects.iter().map(|o| o.cls).collect()
    }

    /// SHA-256 of the canonical text form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_string().as_bytes()))
    }
}

fn write_classes(f: &mut fmt::Formatter<'_>, classes: &[SemClass]) -> fmt::Result {
    for (i, c) in classes.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{c}")?;
    }
    Ok(())
}

impl fmt::Display for SceneSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scene {{")?;
        if let Some(g) = self.group {
            writeln!(f, "    group = {g};")?;
        }
        for o in &self.objects {
            writeln!(f, "    object {} {{", o.cls)?;
            for def in FIELDS.iter().filter(|d| d.classes.contains(&o.cls)) {
                write!(f, "        {} = ", def.name)?;
                match def.name {
                    "placement" => write_classes(f, &o.placement)?,
                    "coverage" => write!(f, "{}", o.coverage)?,
                    name => write!(f, "{}", int_field(o, name))?,
                }
                writeln!(f, ";")?;
            }
            writeln!(f, "    }}")?;
        }
        writeln!(f, "}}")
    }
}

fn int_field(o: &ObjectSpec, name: &str) -> usize {
    match name {
        "count" => o.count,
        "pivots" => o.pivots,
        "min_pivot_dist" => o.min_pivot_dist,
        "max_pivot_dist" => o.max_pivot_dist,
        "center_margin" => o.center_margin,
        "padding" => o.padding,
        "band" => o.band,
        "half_width" => o.half_width,
        "min_length" => o.min_length,
        "max_length" => o.max_length,
        _ => unreachable!("not an integer field: {name}"),
    }
}

fn int_field_mut<'a>(o: &'a mut ObjectSpec, name: &str) -> &'a mut usize {
    match name {
        "count" => &mut o.count,
        "pivots" => &mut o.pivots,
        "min_pivot_dist" => &mut o.min_pivot_dist,
        "max_pivot_dist" => &mut o.max_pivot_dist,
        "center_margin" => &mut o.center_margin,
        "padding" => &mut o.padding,
        "band" => &mut o.band,
        "half_width" => &mut o.half_width,
        "min_length" => &mut o.min_length,
        "max_length" => &mut o.max_length,
        _ => unreachable!("not an integer field: {name}"),
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    LBrace,
    RBrace,
    Eq,
    Semi,
    Comma,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, Diagnostic> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
            continue;
        }
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '=' => Some(Tok::Eq),
            ';' => Some(Tok::Semi),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, pos));
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        if c.is_ascii_digit() {
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
            col += i - start;
            out.push((Tok::Number(chars[start..i].iter().collect()), pos));
            continue;
        }
        return Err(Diagnostic::new(DiagnosticKind::Syntax, pos, format!("unexpected character {c:?}")));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

/// One parsed `object` block before template merging.
struct ParsedObject {
    spec: ObjectSpec,
    pos: Pos,
}

impl Parser {
    fn peek(&self) -> &(Tok, Pos) {
        &self.toks[self.at]
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Pos, Diagnostic> {
        let (tok, pos) = self.bump();
        if tok == want {
            Ok(pos)
        } else {
            Err(Diagnostic::new(
                DiagnosticKind::Syntax,
                pos,
                format!("expected {}, found {}", want.describe(), tok.describe()),
            ))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, Pos), Diagnostic> {
        match self.bump() {
            (Tok::Ident(s), pos) => Ok((s, pos)),
            (tok, pos) => Err(Diagnostic::new(
                DiagnosticKind::Syntax,
                pos,
                format!("expected {what}, found {}", tok.describe()),
            )),
        }
    }

    fn scene(&mut self) -> Result<SceneSpec, Diagnostic> {
        let (kw, scene_pos) = self.expect_ident("`scene`")?;
        if kw != "scene" {
            return Err(Diagnostic::new(DiagnosticKind::Syntax, scene_pos, format!("expected `scene`, found `{kw}`")));
        }
        self.expect(Tok::LBrace)?;
        let mut group: Option<(u8, Pos)> = None;
        let mut objects: Vec<ParsedObject> = Vec::new();
        loop {
            let (tok, pos) = self.peek().clone();
            match tok {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Ident(ref s) if s == "group" => {
                    self.bump();
                    self.expect(Tok::Eq)?;
                    let (n, npos) = self.int_value()?;
                    self.expect(Tok::Semi)?;
                    if group.is_some() {
                        return Err(Diagnostic::new(DiagnosticKind::DuplicateField, pos, "`group` is already set"));
                    }
                    if !(1..=5).contains(&n) {
                        return Err(Diagnostic::new(
                            DiagnosticKind::Constraint,
                            npos,
                            format!("group must be between 1 and 5, got {n}"),
                        ));
                    }
                    group = Some((n as u8, pos));
                }
                Tok::Ident(ref s) if s == "object" => {
                    self.bump();
                    let obj = self.object(pos)?;
                    if objects.iter().any(|o| o.spec.cls == obj.spec.cls) {
                        return Err(Diagnostic::new(
                            DiagnosticKind::DuplicateField,
                            pos,
                            format!("object `{}` is already defined; use `count` for several instances", obj.spec.cls),
                        ));
                    }
                    objects.push(obj);
                }
                other => {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Syntax,
                        pos,
                        format!("expected `group`, `object` or `}}`, found {}", other.describe()),
                    ));
                }
            }
        }
        let (tok, pos) = self.bump();
        if tok != Tok::Eof {
            return Err(Diagnostic::new(
                DiagnosticKind::Syntax,
                pos,
                format!("expected end of input, found {}", tok.describe()),
            ));
        }

        let mut merged: Vec<ObjectSpec> = match group {
            Some((n, _)) => expand_group_template(n).expect("group validated"),
            None => Vec::new(),
        };
        for obj in objects {
            match (group, merged.iter_mut().find(|m| m.cls == obj.spec.cls)) {
                (Some(_), Some(slot)) => *slot = obj.spec,
                (Some((n, _)), None) => {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Constraint,
                        obj.pos,
                        format!("group {n} does not contain `{}`", obj.spec.cls),
                    ));
                }
                (None, _) => merged.push(obj.spec),
            }
        }
        if merged.is_empty() {
            return Err(Diagnostic::new(DiagnosticKind::Constraint, scene_pos, "scene has no objects"));
        }
        merged.sort_by_key(|o| GENERATION_ORDER.iter().position(|&c| c == o.cls));
        Ok(SceneSpec { group: group.map(|(n, _)| n), objects: merged })
    }

    fn int_value(&mut self) -> Result<(u64, Pos), Diagnostic> {
        match self.bump() {
            (Tok::Number(s), pos) => parse_int(&s, pos).map(|n| (n, pos)),
            (tok, pos) => Err(Diagnostic::new(
                DiagnosticKind::Syntax,
                pos,
                format!("expected a number, found {}", tok.describe()),
            )),
        }
    }

    fn object(&mut self, obj_pos: Pos) -> Result<ParsedObject, Diagnostic> {
        let (name, name_pos) = self.expect_ident("an object class")?;
        let cls = SemClass::from_name(&name)
            .ok_or_else(|| Diagnostic::new(DiagnosticKind::UnknownClass, name_pos, format!("`{name}` is not a class")))?;
        if !cls.is_dynamic() {
            return Err(Diagnostic::new(
                DiagnosticKind::Constraint,
                name_pos,
                format!("`{cls}` is background and cannot be generated; expected pathology, intubation or surgical_tool"),
            ));
        }
        self.expect(Tok::LBrace)?;
        let mut spec = ObjectSpec::defaults(cls);
        // (field name, value position) in source order
        let mut seen: Vec<(&'static str, Pos)> = Vec::new();
        loop {
            let (tok, pos) = self.bump();
            let key = match tok {
                Tok::RBrace => break,
                Tok::Ident(k) => k,
                other => {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Syntax,
                        pos,
                        format!("expected a field name or `}}`, found {}", other.describe()),
                    ));
                }
            };
            let def = FIELDS
                .iter()
                .find(|d| d.name == key)
                .ok_or_else(|| Diagnostic::new(DiagnosticKind::UnknownField, pos, format!("unknown field `{key}`")))?;
            if seen.iter().any(|(n, _)| *n == def.name) {
                return Err(Diagnostic::new(DiagnosticKind::DuplicateField, pos, format!("field `{key}` is already set")));
            }
            self.expect(Tok::Eq)?;
            let (value_tok, value_pos) = self.peek().clone();
            if !def.classes.contains(&cls) {
                return Err(Diagnostic::new(
                    DiagnosticKind::Constraint,
                    pos,
                    format!("field `{key}` does not apply to `{cls}`"),
                ));
            }
            match def.kind {
                FieldKind::Classes => {
                    let mut classes = Vec::new();
                    loop {
                        let (cname, cpos) = self.expect_ident("a class name")?;
                        let c = SemClass::from_name(&cname).ok_or_else(|| {
                            Diagnostic::new(DiagnosticKind::UnknownClass, cpos, format!("`{cname}` is not a class"))
                        })?;
                        if !BACKGROUND.contains(&c) {
                            return Err(Diagnostic::new(
                                DiagnosticKind::Constraint,
                                cpos,
                                format!("placement class must be vocal_folds, other_tissue or glottal_space, got `{c}`"),
                            ));
                        }
                        if classes.contains(&c) {
                            return Err(Diagnostic::new(DiagnosticKind::Constraint, cpos, format!("`{c}` listed twice")));
                        }
                        classes.push(c);
                        if self.peek().0 == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    if cls != SemClass::SurgicalTool && classes.len() != 1 {
                        return Err(Diagnostic::new(
                            DiagnosticKind::Constraint,
                            value_pos,
                            format!("`{cls}` takes exactly one placement class"),
                        ));
                    }
                    spec.placement = classes;
                }
                FieldKind::Int => {
                    let (n, _) = self.int_value()?;
                    *int_field_mut(&mut spec, def.name) = usize::try_from(n).unwrap_or(usize::MAX);
                }
                FieldKind::Ratio => {
                    let Tok::Number(s) = value_tok else {
                        return Err(Diagnostic::new(
                            DiagnosticKind::Syntax,
                            value_pos,
                            format!("expected a number, found {}", value_tok.describe()),
                        ));
                    };
                    self.bump();
                    spec.coverage = s.parse().map_err(|_| {
                        Diagnostic::new(DiagnosticKind::Constraint, value_pos, format!("bad number `{s}`"))
                    })?;
                }
            }
            self.expect(Tok::Semi)?;
            check_field(&spec, def.name, &seen, value_pos)?;
            seen.push((def.name, value_pos));
        }
        check_deferred(&spec, &seen, obj_pos)?;
        Ok(ParsedObject { spec, pos: obj_pos })
    }
}

fn parse_int(s: &str, pos: Pos) -> Result<u64, Diagnostic> {
    if s.contains('.') {
        return Err(Diagnostic::new(DiagnosticKind::Constraint, pos, format!("expected an integer, got `{s}`")));
    }
    s.parse()
        .map_err(|_| Diagnostic::new(DiagnosticKind::Constraint, pos, format!("number `{s}` is too large")))
}

/// Validates `field` just after it was set. Cross-field rules fire on whichever
/// partner appears second.
fn check_field(o: &ObjectSpec, field: &str, seen: &[(&str, Pos)], pos: Pos) -> Result<(), Diagnostic> {
    let fail = |msg: String| Err(Diagnostic::new(DiagnosticKind::Constraint, pos, msg));
    match field {
        "count" => {
            if o.count == 0 {
                return fail("count must be at least 1".into());
            }
            if o.cls != SemClass::SurgicalTool && o.count != 1 {
                return fail(format!("an image holds exactly one `{}`", o.cls));
            }
            if o.count > 8 {
                return fail("at most 8 surgical tools per image".into());
            }
        }
        "coverage" => {
            if !(o.coverage > 0.0 && o.coverage <= 1.0) {
                return fail(format!("coverage must be in (0, 1], got {}", o.coverage));
            }
        }
        "pivots" => {
            if !o.pivots.is_multiple_of(2) {
                return fail("pivot count must be even".into());
            }
            if !(4..=32).contains(&o.pivots) {
                return fail(format!("pivot count must be between 4 and 32, got {}", o.pivots));
            }
        }
        "min_pivot_dist" | "max_pivot_dist" => {
            if o.min_pivot_dist < 1 {
                return fail("min_pivot_dist must be at least 1".into());
            }
            if o.max_pivot_dist > 4096 {
                return fail("max_pivot_dist must be at most 4096".into());
            }
            if has(seen, partner_of(field)) {
                check_pair(o, field, pos)?;
            }
        }
        "center_margin" | "padding" | "half_width" => {
            if int_field(o, field) > 256 {
                return fail(format!("{field} must be at most 256"));
            }
        }
        "band" => {
            if o.band == 0 {
                return fail("band must be at least 1".into());
            }
        }
        "min_length" | "max_length" => {
            if o.min_length < 1 {
                return fail("min_length must be at least 1".into());
            }
            if has(seen, partner_of(field)) {
                check_pair(o, field, pos)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn has(seen: &[(&str, Pos)], name: &str) -> bool {
    seen.iter().any(|(n, _)| *n == name)
}

fn partner_of(field: &str) -> &'static str {
    match field {
        "min_pivot_dist" => "max_pivot_dist",
        "max_pivot_dist" => "min_pivot_dist",
        "min_length" => "max_length",
        "max_length" => "min_length",
        _ => unreachable!("no partner for {field}"),
    }
}

fn check_pair(o: &ObjectSpec, field: &str, pos: Pos) -> Result<(), Diagnostic> {
    let msg = if field.ends_with("pivot_dist") {
        (o.max_pivot_dist <= o.min_pivot_dist).then(|| {
            format!("max_pivot_dist ({}) must exceed min_pivot_dist ({})", o.max_pivot_dist, o.min_pivot_dist)
        })
    } else {
        (o.max_length < o.min_length)
            .then(|| format!("max_length ({}) must be at least min_length ({})", o.max_length, o.min_length))
    };
    match msg {
        Some(m) => Err(Diagnostic::new(DiagnosticKind::Constraint, pos, m)),
        None => Ok(()),
    }
}

/// Range checks deferred until the block closes because only one side, or
/// neither, was written explicitly.
fn check_deferred(o: &ObjectSpec, seen: &[(&str, Pos)], obj_pos: Pos) -> Result<(), Diagnostic> {
    for (lo, hi) in [("min_pivot_dist", "max_pivot_dist"), ("min_length", "max_length")] {
        let lo_pos = seen.iter().find(|(n, _)| *n == lo).map(|p| p.1);
        let hi_pos = seen.iter().find(|(n, _)| *n == hi).map(|p| p.1);
        if lo_pos.is_some() && hi_pos.is_some() {
            continue;
        }
        let pos = lo_pos.or(hi_pos).unwrap_or(obj_pos);
        check_pair(o, hi, pos)?;
    }
    Ok(())
}

/// Parses scene text. Every input yields either a spec or exactly one diagnostic.
pub fn parse_scene_spec(text: &str) -> Result<SceneSpec, Diagnostic> {
    let toks = lex(text)?;
    Parser { toks, at: 0 }.scene()
}

// ---------------------------------------------------------------------------
// Compilation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTask {
    pub index: usize,
    pub spec: ObjectSpec,
    pub seed: u64,
}

/// Ordered object-generation tasks with resolved parameters and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPlan {
    pub master_seed: u64,
    pub group: Option<u8>,
    pub spec_digest: String,
    pub tasks: Vec<PlanTask>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("task {index} ({cls}): {reason}")]
    Infeasible { index: usize, cls: SemClass, reason: String },
}

/// Expands `spec` into tasks for `grid`, checking each task has somewhere to go.
pub fn compile(spec: &SceneSpec, grid: &CellGrid, master_seed: u64) -> Result<GenerationPlan, CompileError> {
    let mut tasks = Vec::new();
    for cls in GENERATION_ORDER {
        for o in spec.objects.iter().filter(|o| o.cls == cls) {
            for _ in 0..o.count {
                let index = tasks.len();
                let mut single = o.clone();
                single.count = 1;
                if let Err(reason) = crate::synth::precheck(grid, &single) {
                    return Err(CompileError::Infeasible { index, cls, reason });
                }
                tasks.push(PlanTask { index, spec: single, seed: derive_seed(master_seed, index as u64) });
            }
        }
    }
    Ok(GenerationPlan { master_seed, group: spec.group, spec_digest: spec.digest(), tasks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;

    #[test]
    fn group_only_scene_uses_template() {
        let s = parse_scene_spec("scene { group = 1; }").unwrap();
        assert_eq!(s.group, Some(1));
        assert_eq!(s.expected_classes(), vec![SemClass::Pathology]);
    }

    #[test]
    fn single_object_scene() {
        let s = parse_scene_spec("scene { object pathology { placement = vocal_folds; pivots = 8; } }").unwrap();
        assert_eq!(s.group, None);
        assert_eq!(s.objects, vec![ObjectSpec::defaults(SemClass::Pathology)]);
    }

    #[test]
    fn odd_pivot_count_is_rejected() {
        let e = parse_scene_spec("scene { object pathology { pivots = 7; } }").unwrap_err();
        assert_eq!(e.kind, DiagnosticKind::Constraint);
        assert_eq!(e.message, "pivot count must be even");
        assert_eq!(e.pos, Pos { line: 1, col: 37 });
    }

    #[test]
    fn templates_match_group_descriptions() {
        let classes = |n| expand_group_template(n).unwrap().into_iter().map(|o| o.cls).collect::<Vec<_>>();
        assert_eq!(classes(1), vec![P]);
        assert_eq!(classes(2), vec![P, I, T]);
        assert_eq!(classes(3), vec![I]);
        assert_eq!(classes(4), vec![I, T]);
        assert_eq!(classes(5), vec![I, T]);
        assert_eq!(expand_group_template(0), Err(UnknownGroup(0)));
        assert_eq!(expand_group_template(6), Err(UnknownGroup(6)));
    }

    #[test]
    fn group_customization_and_foreign_class() {
        let s = parse_scene_spec("scene { group = 2; object surgical_tool { count = 2; } }").unwrap();
        assert_eq!(s.objects.len(), 3);
        assert_eq!(s.objects[2].count, 2);
        let e = parse_scene_spec("scene { group = 3; object pathology { } }").unwrap_err();
        assert_eq!(e.kind, DiagnosticKind::Constraint);
        assert_eq!(e.pos, Pos { line: 1, col: 20 });
    }

    #[test]
    fn objects_are_sorted_into_generation_order() {
        let s = parse_scene_spec("scene { object surgical_tool {} object intubation {} object pathology {} }").unwrap();
        assert_eq!(s.expected_classes(), vec![P, I, T]);
    }

    #[test]
    fn printed_form_reparses_to_itself() {
        let src = "scene { group = 2; object pathology { coverage = 0.75; max_pivot_dist = 12; } }";
        let s = parse_scene_spec(src).unwrap();
        let printed = s.to_string();
        let again = parse_scene_spec(&printed).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.to_string(), printed);
    }

    #[test]
    fn cross_field_errors_point_at_later_field() {
        let e = parse_scene_spec("scene { object pathology { max_pivot_dist = 3; } }").unwrap_err();
        assert_eq!((e.kind, e.pos.col), (DiagnosticKind::Constraint, 45));
        let e = parse_scene_spec("scene { object pathology { max_pivot_dist = 10; min_pivot_dist = 12; } }")
            .unwrap_err();
        assert_eq!(e.pos.col, 66);
        // raising the minimum first, then the maximum, is fine
        assert!(parse_scene_spec("scene { object pathology { min_pivot_dist = 30; max_pivot_dist = 40; } }").is_ok());
    }

    #[test]
    fn compile_orders_tasks_and_is_deterministic() {
        let g = GridGeometry::default();
        let grid = crate::synthetic::synthetic_background(&g, 3);
        let spec = SceneSpec::for_group(2).unwrap();
        let plan = compile(&spec, &grid, 99).unwrap();
        let classes: Vec<_> = plan.tasks.iter().map(|t| t.spec.cls).collect();
        assert_eq!(classes, vec![P, I, T]);
        assert_eq!(plan, compile(&spec, &grid, 99).unwrap());
        assert_ne!(plan.tasks[0].seed, compile(&spec, &grid, 100).unwrap().tasks[0].seed);
    }

    #[test]
    fn compile_reports_infeasible_pathology() {
        let grid = CellGrid::filled(GridGeometry::default(), SemClass::Void);
        let spec = SceneSpec::for_group(1).unwrap();
        let e = compile(&spec, &grid, 1).unwrap_err();
        assert_eq!(e.to_string(), "task 0 (pathology): no eligible block for pathology");
    }
}
