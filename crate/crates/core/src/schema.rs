//! Declarative document schemas and the closed-world validator that gates
//! every generated document before it may enter the world.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::sync::{Arc, RwLock};

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

/// Reserved wire key carrying the schema name.
pub const SCHEMA_KEY: &str = "$schema";
/// Reserved wire key carrying the schema version.
pub const VERSION_KEY: &str = "$v";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldKind {
    Text,
    Enum { values: Vec<String> },
    Integer { min: i64, max: i64 },
    Real { min: f64, max: f64 },
    List { element: Box<FieldKind>, max_len: usize },
    Record { schema: Box<SchemaDef> },
}

impl FieldKind {
    pub fn enumeration<I, S>(values: I) -> FieldKind
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        FieldKind::Enum {
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    pub fn list(element: FieldKind, max_len: usize) -> FieldKind {
        FieldKind::List {
            element: Box::new(element),
            max_len,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            FieldKind::Text => "text",
            FieldKind::Enum { .. } => "enum",
            FieldKind::Integer { .. } => "integer",
            FieldKind::Real { .. } => "real",
            FieldKind::List { .. } => "list",
            FieldKind::Record { .. } => "record",
        }
    }
}

fn default_required() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
    #[serde(default = "default_required")]
    pub required: bool,
}

impl FieldSpec {
    pub fn required(name: impl Into<String>, kind: FieldKind) -> Self {
        FieldSpec {
            name: name.into(),
            kind,
            required: true,
        }
    }

    pub fn optional(name: impl Into<String>, kind: FieldKind) -> Self {
        FieldSpec {
            name: name.into(),
            kind,
            required: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDef {
    pub name: String,
    pub version: u32,
    pub fields: Vec<FieldSpec>,
}

impl SchemaDef {
    pub fn new(name: impl Into<String>, version: u32, fields: Vec<FieldSpec>) -> Self {
        SchemaDef {
            name: name.into(),
            version,
            fields,
        }
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Structural sanity: unique field names, non-empty enums, ordered ranges.
    pub fn check(&self) -> Result<(), SchemaError> {
        let malformed = |reason: String| {
            Err(SchemaError::Malformed {
                name: self.name.clone(),
                reason,
            })
        };
        if self.name.trim().is_empty() {
            return malformed("empty schema name".into());
        }
        if self.version == 0 {
            return malformed("version must be positive".into());
        }
        let mut seen = HashSet::new();
        for field in &self.fields {
            if field.name.is_empty() || field.name.starts_with('$') {
                return malformed(format!("illegal field name {:?}", field.name));
            }
            if !seen.insert(field.name.as_str()) {
                return malformed(format!("duplicate field {}", field.name));
            }
            if let Err(reason) = check_kind(&field.kind) {
                return malformed(format!("{}: {reason}", field.name));
            }
        }
        Ok(())
    }
}

fn check_kind(kind: &FieldKind) -> Result<(), String> {
    match kind {
        FieldKind::Text => Ok(()),
        FieldKind::Enum { values } => {
            if values.is_empty() {
                return Err("enum with no values".into());
            }
            let unique: HashSet<_> = values.iter().collect();
            if unique.len() != values.len() {
                return Err("enum values repeat".into());
            }
            Ok(())
        }
        FieldKind::Integer { min, max } => {
            if min > max {
                Err(format!("min {min} > max {max}"))
            } else {
                Ok(())
            }
        }
        FieldKind::Real { min, max } => {
            if !(min.is_finite() && max.is_finite()) || min > max {
                Err(format!("bad real range [{min}, {max}]"))
            } else {
                Ok(())
            }
        }
        FieldKind::List { element, max_len } => {
            if *max_len == 0 {
                return Err("list max_len must be positive".into());
            }
            check_kind(element)
        }
        FieldKind::Record { schema } => schema.check().map_err(|e| e.to_string()),
    }
}

/// A document as produced by a provider or a template.
///
/// On the wire this is a flat JSON object: the reserved keys `$schema` and
/// `$v` plus one key per field.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDocument {
    pub schema_name: String,
    pub schema_version: u32,
    pub values: Map<String, Value>,
}

impl GeneratedDocument {
    pub fn new(schema: &SchemaDef) -> Self {
        GeneratedDocument {
            schema_name: schema.name.clone(),
            schema_version: schema.version,
            values: Map::new(),
        }
    }

    pub fn with(mut self, field: &str, value: impl Into<Value>) -> Self {
        self.values.insert(field.to_string(), value.into());
        self
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("documents serialize")
    }

    /// Canonical wire bytes.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("documents serialize")
    }

    /// Parses loosely-addressed model output. Missing reserved keys are filled
    /// in from `schema`; present ones are kept so a mismatch is reported by
    /// validation rather than silently overwritten.
    pub fn from_model_text(text: &str, schema: &SchemaDef) -> Result<Self, Vec<Violation>> {
        let trimmed = strip_code_fence(text);
        let value: Value = serde_json::from_str(trimmed).map_err(|e| {
            vec![Violation::WrongKind {
                path: "$".into(),
                expected: "json object".into(),
                detail: e.to_string(),
            }]
        })?;
        let Value::Object(mut map) = value else {
            return Err(vec![Violation::WrongKind {
                path: "$".into(),
                expected: "json object".into(),
                detail: "top level is not an object".into(),
            }]);
        };
        let name = match map.remove(SCHEMA_KEY) {
            Some(Value::String(s)) => s,
            _ => schema.name.clone(),
        };
        let version = match map.remove(VERSION_KEY) {
            Some(v) => v
                .as_u64()
                .and_then(|v| u32::try_from(v).ok())
                .unwrap_or(0),
            None => schema.version,
        };
        Ok(GeneratedDocument {
            schema_name: name,
            schema_version: version,
            values: map,
        })
    }
}

fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphabetic());
        return rest.strip_suffix("```").unwrap_or(rest).trim();
    }
    t
}

impl Serialize for GeneratedDocument {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.values.len() + 2))?;
        map.serialize_entry(SCHEMA_KEY, &self.schema_name)?;
        map.serialize_entry(VERSION_KEY, &self.schema_version)?;
        for (k, v) in &self.values {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for GeneratedDocument {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let mut map = Map::<String, Value>::deserialize(deserializer)?;
        let schema_name = match map.remove(SCHEMA_KEY) {
            Some(Value::String(s)) => s,
            _ => return Err(D::Error::custom("missing string `$schema`")),
        };
        let schema_version = map
            .remove(VERSION_KEY)
            .and_then(|v| v.as_u64())
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| D::Error::custom("missing integer `$v`"))?;
        Ok(GeneratedDocument {
            schema_name,
            schema_version,
            values: map,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationClass {
    MissingField,
    WrongKind,
    EnumViolation,
    RangeViolation,
    UnknownField,
    ListTooLong,
    SchemaMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class")]
pub enum Violation {
    MissingField { path: String },
    WrongKind { path: String, expected: String, detail: String },
    EnumViolation { path: String, value: String, allowed: Vec<String> },
    RangeViolation { path: String, value: String, min: String, max: String },
    UnknownField { path: String },
    ListTooLong { path: String, len: usize, max: usize },
    SchemaMismatch { expected: String, found: String },
}

impl Violation {
    pub fn class(&self) -> ViolationClass {
        match self {
            Violation::MissingField { .. } => ViolationClass::MissingField,
            Violation::WrongKind { .. } => ViolationClass::WrongKind,
            Violation::EnumViolation { .. } => ViolationClass::EnumViolation,
            Violation::RangeViolation { .. } => ViolationClass::RangeViolation,
            Violation::UnknownField { .. } => ViolationClass::UnknownField,
            Violation::ListTooLong { .. } => ViolationClass::ListTooLong,
            Violation::SchemaMismatch { .. } => ViolationClass::SchemaMismatch,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingField { path } => write!(f, "MissingField({path})"),
            Violation::WrongKind {
                path,
                expected,
                detail,
            } => write!(f, "WrongKind({path}): expected {expected}, {detail}"),
            Violation::EnumViolation {
                path,
                value,
                allowed,
            } => write!(f, "EnumViolation({path}): {value:?} not in {allowed:?}"),
            Violation::RangeViolation {
                path,
                value,
                min,
                max,
            } => write!(f, "RangeViolation({path}): {value} outside [{min}, {max}]"),
            Violation::UnknownField { path } => write!(f, "UnknownField({path})"),
            Violation::ListTooLong { path, len, max } => {
                write!(f, "ListTooLong({path}): {len} items, at most {max}")
            }
            Violation::SchemaMismatch { expected, found } => {
                write!(f, "SchemaMismatch: expected {expected}, found {found}")
            }
        }
    }
}

/// Checks `doc` against `def` and reports every violation found.
pub fn validate_document(doc: &GeneratedDocument, def: &SchemaDef) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if doc.schema_name != def.name || doc.schema_version != def.version {
        out.push(Violation::SchemaMismatch {
            expected: format!("{} v{}", def.name, def.version),
            found: format!("{} v{}", doc.schema_name, doc.schema_version),
        });
    }
    validate_fields(&doc.values, def, "", &mut out);
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn validate_fields(values: &Map<String, Value>, def: &SchemaDef, prefix: &str, out: &mut Vec<Violation>) {
    for field in &def.fields {
        let path = join(prefix, &field.name);
        match values.get(&field.name) {
            None | Some(Value::Null) => {
                if field.required {
                    out.push(Violation::MissingField { path });
                }
            }
            Some(v) => validate_value(v, &field.kind, &path, out),
        }
    }
    for key in values.keys() {
        if def.field(key).is_none() {
            out.push(Violation::UnknownField {
                path: join(prefix, key),
            });
        }
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn validate_value(v: &Value, kind: &FieldKind, path: &str, out: &mut Vec<Violation>) {
    let wrong = |out: &mut Vec<Violation>| {
        out.push(Violation::WrongKind {
            path: path.to_string(),
            expected: kind.label().to_string(),
            detail: format!("got {}", json_kind(v)),
        })
    };
    match kind {
        FieldKind::Text => {
            if !v.is_string() {
                wrong(out);
            }
        }
        FieldKind::Enum { values } => match v.as_str() {
            None => wrong(out),
            Some(s) if !values.iter().any(|a| a == s) => out.push(Violation::EnumViolation {
                path: path.to_string(),
                value: s.to_string(),
                allowed: values.clone(),
            }),
            Some(_) => {}
        },
        FieldKind::Integer { min, max } => {
            let Value::Number(n) = v else {
                return wrong(out);
            };
            if !(n.is_i64() || n.is_u64()) {
                return wrong(out);
            }
            let in_range = match n.as_i64() {
                Some(i) => (*min..=*max).contains(&i),
                None => false, // above i64::MAX
            };
            if !in_range {
                out.push(Violation::RangeViolation {
                    path: path.to_string(),
                    value: n.to_string(),
                    min: min.to_string(),
                    max: max.to_string(),
                });
            }
        }
        FieldKind::Real { min, max } => {
            let Some(x) = v.as_f64() else {
                return wrong(out);
            };
            if !(*min..=*max).contains(&x) {
                out.push(Violation::RangeViolation {
                    path: path.to_string(),
                    value: x.to_string(),
                    min: min.to_string(),
                    max: max.to_string(),
                });
            }
        }
        FieldKind::List { element, max_len } => {
            let Some(items) = v.as_array() else {
                return wrong(out);
            };
            if items.len() > *max_len {
                out.push(Violation::ListTooLong {
                    path: path.to_string(),
                    len: items.len(),
                    max: *max_len,
                });
            }
            for (i, item) in items.iter().enumerate() {
                validate_value(item, element, &format!("{path}[{i}]"), out);
            }
        }
        FieldKind::Record { schema } => {
            let Some(map) = v.as_object() else {
                return wrong(out);
            };
            validate_fields(map, schema, path, out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("schema {name} v{version} is already registered")]
    Duplicate { name: String, version: u32 },
    #[error("schema {name} is malformed: {reason}")]
    Malformed { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SchemaHandle {
    pub name: String,
    pub version: u32,
}

/// Write-once-per-entry schema store.
#[derive(Debug, Default)]
pub struct SchemaRegistry {
    entries: RwLock<HashMap<(String, u32), Arc<SchemaDef>>>,
}

impl SchemaRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, def: SchemaDef) -> Result<SchemaHandle, SchemaError> {
        def.check()?;
        let key = (def.name.clone(), def.version);
        let mut entries = self.entries.write().unwrap();
        if entries.contains_key(&key) {
            return Err(SchemaError::Duplicate {
                name: key.0,
                version: key.1,
            });
        }
        entries.insert(key.clone(), Arc::new(def));
        Ok(SchemaHandle {
            name: key.0,
            version: key.1,
        })
    }

    pub fn get(&self, name: &str, version: u32) -> Option<Arc<SchemaDef>> {
        self.entries
            .read()
            .unwrap()
            .get(&(name.to_string(), version))
            .cloned()
    }

    pub fn resolve(&self, handle: &SchemaHandle) -> Option<Arc<SchemaDef>> {
        self.get(&handle.name, handle.version)
    }

    pub fn latest(&self, name: &str) -> Option<Arc<SchemaDef>> {
        self.entries
            .read()
            .unwrap()
            .iter()
            .filter(|((n, _), _)| n == name)
            .max_by_key(|((_, v), _)| *v)
            .map(|(_, def)| def.clone())
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Renders `def` as instructions a model can follow. The first line is
/// always `schema <name> v<version>`.
pub fn schema_to_prompt_fragment(def: &SchemaDef) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "schema {} v{}", def.name, def.version);
    out.push_str("Respond with one JSON object containing exactly these fields and no others:\n");
    render_fields(&def.fields, 0, &mut out);
    out
}

fn render_fields(fields: &[FieldSpec], depth: usize, out: &mut String) {
    for field in fields {
        let _ = write!(out, "{}- {}: ", "  ".repeat(depth), field.name);
        render_kind(&field.kind, out);
        out.push_str(if field.required {
            " (required)\n"
        } else {
            " (optional)\n"
        });
        if let FieldKind::Record { schema } = &field.kind {
            render_fields(&schema.fields, depth + 1, out);
        }
    }
}

fn render_kind(kind: &FieldKind, out: &mut String) {
    match kind {
        FieldKind::Text => out.push_str("string"),
        FieldKind::Enum { values } => {
            let quoted: Vec<String> = values.iter().map(|v| format!("\"{v}\"")).collect();
            let _ = write!(out, "one of {}", quoted.join(", "));
        }
        FieldKind::Integer { min, max } => {
            let _ = write!(out, "integer from {min} to {max}");
        }
        FieldKind::Real { min, max } => {
            let _ = write!(out, "number from {min} to {max}");
        }
        FieldKind::List { element, max_len } => {
            out.push_str("list of ");
            render_kind(element, out);
            let _ = write!(out, ", at most {max_len} items");
        }
        FieldKind::Record { schema } => {
            let _ = write!(out, "object with fields of {}", schema.name);
        }
    }
}

/// Reads back the `(name, version)` header of a rendered fragment.
pub fn parse_fragment_header(fragment: &str) -> Option<(String, u32)> {
    let line = fragment.lines().next()?;
    let mut parts = line.split_whitespace();
    if parts.next()? != "schema" {
        return None;
    }
    let name = parts.next()?.to_string();
    let version = parts.next()?.strip_prefix('v')?.parse().ok()?;
    Some((name, version))
}
