//! Domain vocabulary: the validity time axis, intervals, folder paths,
//! payload schemas and payload values. Nothing in here touches storage.

use std::cmp::{max, min};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A point on the unit-free validity axis.
///
/// `0` and `u64::MAX` are reserved for minus and plus infinity; ordinary
/// points lie strictly between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TimePoint(pub u64);

impl TimePoint {
    pub const MINUS_INF: TimePoint = TimePoint(0);
    pub const PLUS_INF: TimePoint = TimePoint(u64::MAX);

    pub const fn ticks(self) -> u64 {
        self.0
    }

    pub fn is_sentinel(self) -> bool {
        self == Self::MINUS_INF || self == Self::PLUS_INF
    }

    /// Rejects the sentinels, which are bounds and never query points.
    pub fn queryable(self) -> Result<Self> {
        if self.is_sentinel() {
            Err(Error::InvalidTime(self.0))
        } else {
            Ok(self)
        }
    }
}

impl From<u64> for TimePoint {
    fn from(v: u64) -> Self {
        TimePoint(v)
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::MINUS_INF => f.write_str("-inf"),
            Self::PLUS_INF => f.write_str("+inf"),
            TimePoint(t) => write!(f, "{t}"),
        }
    }
}

impl FromStr for TimePoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "-inf" => Ok(Self::MINUS_INF),
            "+inf" | "inf" => Ok(Self::PLUS_INF),
            _ => s
                .parse::<u64>()
                .map(TimePoint)
                .map_err(|_| Error::InvalidArgument(format!("not a time point: {s:?}"))),
        }
    }
}

/// Half-open interval of validity `[since, till)`, never empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValidityInterval {
    since: TimePoint,
    till: TimePoint,
}

impl ValidityInterval {
    pub fn new(since: impl Into<TimePoint>, till: impl Into<TimePoint>) -> Result<Self> {
        let (since, till) = (since.into(), till.into());
        if since >= till {
            return Err(Error::InvalidInterval { since: since.0, till: till.0 });
        }
        Ok(Self { since, till })
    }

    /// The whole axis, `[-inf, +inf)`.
    pub fn all() -> Self {
        Self { since: TimePoint::MINUS_INF, till: TimePoint::PLUS_INF }
    }

    pub fn since(&self) -> TimePoint {
        self.since
    }

    pub fn till(&self) -> TimePoint {
        self.till
    }

    pub fn contains(&self, t: TimePoint) -> bool {
        self.since <= t && t < self.till
    }

    pub fn overlaps(&self, other: &ValidityInterval) -> bool {
        max(self.since, other.since) < min(self.till, other.till)
    }

    pub fn intersect(&self, other: &ValidityInterval) -> Option<ValidityInterval> {
        ValidityInterval::new(max(self.since, other.since), min(self.till, other.till)).ok()
    }
}

impl fmt::Display for ValidityInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.since, self.till)
    }
}

/// `true` iff the two intervals share at least one point.
pub fn interval_overlaps(a: &ValidityInterval, b: &ValidityInterval) -> bool {
    a.overlaps(b)
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 64
        && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Location of a node in the folder hierarchy; `/` is the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FolderPath {
    segments: Vec<String>,
}

impl FolderPath {
    pub fn root() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |why| Error::InvalidPath(text.to_string(), why);
        if text.is_empty() {
            return Err(bad("empty"));
        }
        let Some(rest) = text.strip_prefix('/') else {
            return Err(bad("missing leading '/'"));
        };
        if rest.is_empty() {
            return Ok(Self::root());
        }
        let mut segments = Vec::new();
        for seg in rest.split('/') {
            match seg {
                "" => return Err(bad("empty segment")),
                "." | ".." => return Err(bad("relative segment")),
                s if !valid_name(s) => return Err(bad("segment must match [A-Za-z0-9_-]{1,64}")),
                s => segments.push(s.to_string()),
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn is_root(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    pub fn name(&self) -> Option<&str> {
        self.segments.last().map(String::as_str)
    }

    pub fn parent(&self) -> Option<FolderPath> {
        if self.is_root() {
            return None;
        }
        Some(Self { segments: self.segments[..self.segments.len() - 1].to_vec() })
    }

    pub fn child(&self, name: &str) -> Result<FolderPath> {
        if !valid_name(name) {
            return Err(Error::InvalidPath(name.to_string(), "segment must match [A-Za-z0-9_-]{1,64}"));
        }
        let mut segments = self.segments.clone();
        segments.push(name.to_string());
        Ok(Self { segments })
    }

    /// `true` for strict descendants only.
    pub fn is_ancestor_of(&self, other: &FolderPath) -> bool {
        other.segments.len() > self.segments.len() && other.segments.starts_with(&self.segments)
    }
}

impl fmt::Display for FolderPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.segments.is_empty() {
            return f.write_str("/");
        }
        for s in &self.segments {
            write!(f, "/{s}")?;
        }
        Ok(())
    }
}

impl FromStr for FolderPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

pub fn parse_path(text: &str) -> Result<FolderPath> {
    FolderPath::parse(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Bool,
    Int32,
    Int64,
    Float32,
    Float64,
    String,
    Blob,
    ArrayInt32,
    ArrayInt64,
    ArrayFloat32,
    ArrayFloat64,
}

impl Kind {
    pub const ALL: [Kind; 11] = [
        Kind::Bool,
        Kind::Int32,
        Kind::Int64,
        Kind::Float32,
        Kind::Float64,
        Kind::String,
        Kind::Blob,
        Kind::ArrayInt32,
        Kind::ArrayInt64,
        Kind::ArrayFloat32,
        Kind::ArrayFloat64,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Bool => "bool",
            Kind::Int32 => "int32",
            Kind::Int64 => "int64",
            Kind::Float32 => "float32",
            Kind::Float64 => "float64",
            Kind::String => "string",
            Kind::Blob => "blob",
            Kind::ArrayInt32 => "array-of-int32",
            Kind::ArrayInt64 => "array-of-int64",
            Kind::ArrayFloat32 => "array-of-float32",
            Kind::ArrayFloat64 => "array-of-float64",
        }
    }

    pub(crate) fn code(self) -> u8 {
        Kind::ALL.iter().position(|k| *k == self).unwrap() as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Kind> {
        Kind::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidSchema(format!("unknown kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Attribute {
    pub name: String,
    pub kind: Kind,
}

/// Ordered, named, typed attributes of every object in a folder.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PayloadSchema {
    attributes: Vec<Attribute>,
}

impl PayloadSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::InvalidSchema("schema needs at least one attribute".into()));
        }
        for (i, a) in attributes.iter().enumerate() {
            if !valid_name(&a.name) {
                return Err(Error::InvalidSchema(format!("bad attribute name {:?}", a.name)));
            }
            if attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidSchema(format!("duplicate attribute {:?}", a.name)));
            }
        }
        Ok(Self { attributes })
    }

    /// Parses `name:kind(,name:kind)*`.
    pub fn parse(spec: &str) -> Result<Self> {
        let attributes = spec
            .split(',')
            .map(|item| {
                let (name, kind) = item
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidSchema(format!("expected name:kind, got {item:?}")))?;
                Ok(Attribute { name: name.trim().to_string(), kind: kind.trim().parse()? })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(attributes)
    }

    pub fn single(name: &str, kind: Kind) -> Result<Self> {
        Self::new(vec![Attribute { name: name.to_string(), kind }])
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }
}

impl fmt::Display for PayloadSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.attributes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", a.name, a.kind)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int32(i32),
    Int64(i64),
    Float32(f32),
    Float64(f64),
    String(String),
    Blob(Vec<u8>),
    ArrayInt32(Vec<i32>),
    ArrayInt64(Vec<i64>),
    ArrayFloat32(Vec<f32>),
    ArrayFloat64(Vec<f64>),
}

impl Value {
    pub fn kind(&self) -> Kind {
        match self {
            Value::Bool(_) => Kind::Bool,
            Value::Int32(_) => Kind::Int32,
            Value::Int64(_) => Kind::Int64,
            Value::Float32(_) => Kind::Float32,
            Value::Float64(_) => Kind::Float64,
            Value::String(_) => Kind::String,
            Value::Blob(_) => Kind::Blob,
            Value::ArrayInt32(_) => Kind::ArrayInt32,
            Value::ArrayInt64(_) => Kind::ArrayInt64,
            Value::ArrayFloat32(_) => Kind::ArrayFloat32,
            Value::ArrayFloat64(_) => Kind::ArrayFloat64,
        }
    }

    /// Text form used by the CLI. Inverse of [`Value::parse`].
    pub fn render(&self) -> String {
        fn list<T: fmt::Display>(xs: &[T]) -> String {
            let inner: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
            format!("[{}]", inner.join(";"))
        }
        match self {
            Value::Bool(b) => b.to_string(),
            Value::Int32(v) => v.to_string(),
            Value::Int64(v) => v.to_string(),
            Value::Float32(v) => v.to_string(),
            Value::Float64(v) => v.to_string(),
            Value::String(s) => escape(s),
            Value::Blob(b) => {
                let mut out = String::with_capacity(2 + 2 * b.len());
                out.push_str("0x");
                for byte in b {
                    out.push_str(&format!("{byte:02x}"));
                }
                out
            }
            Value::ArrayInt32(xs) => list(xs),
            Value::ArrayInt64(xs) => list(xs),
            Value::ArrayFloat32(xs) => list(xs),
            Value::ArrayFloat64(xs) => list(xs),
        }
    }

    pub fn parse(kind: Kind, text: &str) -> Result<Value> {
        fn num<T: FromStr>(s: &str) -> Result<T> {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("cannot parse {s:?}")))
        }
        fn list<T: FromStr>(s: &str) -> Result<Vec<T>> {
            let inner = s
                .trim()
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| Error::InvalidArgument(format!("array must be [a;b;...], got {s:?}")))?;
            if inner.trim().is_empty() {
                return Ok(Vec::new());
            }
            inner.split(';').map(num).collect()
        }
        Ok(match kind {
            Kind::Bool => Value::Bool(num(text)?),
            Kind::Int32 => Value::Int32(num(text)?),
            Kind::Int64 => Value::Int64(num(text)?),
            Kind::Float32 => Value::Float32(num(text)?),
            Kind::Float64 => Value::Float64(num(text)?),
            Kind::String => Value::String(unescape(text)?),
            Kind::Blob => {
                let hex = text
                    .strip_prefix("0x")
                    .ok_or_else(|| Error::InvalidArgument(format!("blob must be 0x-prefixed hex, got {text:?}")))?;
                if hex.len() % 2 != 0 {
                    return Err(Error::InvalidArgument("odd-length hex blob".into()));
                }
                (0..hex.len())
                    .step_by(2)
                    .map(|i| {
                        u8::from_str_radix(&hex[i..i + 2], 16)
                            .map_err(|_| Error::InvalidArgument(format!("bad hex in {text:?}")))
                    })
                    .collect::<Result<Vec<u8>>>()
                    .map(Value::Blob)?
            }
            Kind::ArrayInt32 => Value::ArrayInt32(list(text)?),
            Kind::ArrayInt64 => Value::ArrayInt64(list(text)?),
            Kind::ArrayFloat32 => Value::ArrayFloat32(list(text)?),
            Kind::ArrayFloat64 => Value::ArrayFloat64(list(text)?),
        })
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ',' => out.push_str("\\,"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some(',') => out.push(','),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            other => return Err(Error::InvalidArgument(format!("bad escape \\{other:?}"))),
        }
    }
    Ok(out)
}

/// Positional attribute values of one stored object.
#[derive(Debug, Clone, PartialEq)]
pub struct PayloadValue(pub Vec<Value>);

impl PayloadValue {
    pub fn new(values: Vec<Value>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    /// Comma-separated text; commas inside strings are backslash-escaped.
    pub fn to_csv(&self) -> String {
        self.0.iter().map(Value::render).collect::<Vec<_>>().join(",")
    }

    pub fn from_csv(schema: &PayloadSchema, text: &str) -> Result<Self> {
        let fields = split_csv(text);
        if fields.len() != schema.len() {
            return Err(Error::SchemaMismatch {
                position: fields.len().min(schema.len()),
                reason: format!("expected {} values, got {}", schema.len(), fields.len()),
            });
        }
        schema
            .attributes()
            .iter()
            .zip(fields)
            .enumerate()
            .map(|(i, (a, f))| {
                Value::parse(a.kind, &f).map_err(|e| Error::SchemaMismatch { position: i, reason: e.to_string() })
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

fn split_csv(text: &str) -> Vec<String> {
    let mut fields = vec![String::new()];
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                let cur = fields.last_mut().unwrap();
                cur.push('\\');
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            }
            ',' => fields.push(String::new()),
            c => fields.last_mut().unwrap().push(c),
        }
    }
    fields
}

/// Checks arity and positional kinds; reports the first offending position.
pub fn validate_payload(schema: &PayloadSchema, value: &PayloadValue) -> Result<()> {
    for (i, attr) in schema.attributes().iter().enumerate() {
        match value.0.get(i) {
            None => {
                return Err(Error::SchemaMismatch {
                    position: i,
                    reason: format!("missing value for {}", attr.name),
                })
            }
            Some(v) if v.kind() != attr.kind => {
                return Err(Error::SchemaMismatch {
                    position: i,
                    reason: format!("{} expects {}, got {}", attr.name, attr.kind, v.kind()),
                })
            }
            Some(_) => {}
        }
    }
    if value.0.len() > schema.len() {
        return Err(Error::SchemaMismatch {
            position: schema.len(),
            reason: format!("{} values for {} attributes", value.0.len(), schema.len()),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Folderset,
    Folder,
    TinyFolder,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Folderset => "folderset",
            NodeKind::Folder => "folder",
            NodeKind::TinyFolder => "tiny-folder",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
