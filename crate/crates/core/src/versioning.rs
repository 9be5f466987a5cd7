//! Versions, version constraints and calendar release versions.
//!
//! A [`Version`] is a dotted list of non-negative integers with an optional
//! `-tag` suffix (`8.15`, `1.0.0-rc1`). Comparison zero-pads the shorter
//! segment list, so `1.0` and `1.0.0` are equal, and a version without a
//! suffix sorts after the same version with one.
//!
//! A [`Constraint`] is either `*` or a disjunction (`|`) of clauses, each a
//! conjunction (`,`) of `op version` atoms.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A parse failure, located by byte offset into the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{what} at byte {offset}: {message}")]
pub struct ParseError {
    pub what: &'static str,
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    fn new(what: &'static str, offset: usize, message: impl Into<String>) -> Self {
        Self {
            what,
            offset,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Version {
    segments: Vec<u64>,
    suffix: Option<String>,
}

fn is_tag_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-')
}

impl Version {
    pub fn new(segments: Vec<u64>, suffix: Option<String>) -> Result<Self, ParseError> {
        if segments.is_empty() {
            return Err(ParseError::new(
                "version",
                0,
                "at least one segment is required",
            ));
        }
        if let Some(tag) = &suffix {
            if tag.is_empty() || !tag.bytes().all(is_tag_byte) {
                return Err(ParseError::new("version", 0, "invalid suffix"));
            }
        }
        Ok(Self { segments, suffix })
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let (version, used) = Self::parse_prefix(text, 0)?;
        if used != text.len() {
            return Err(ParseError::new(
                "version",
                used,
                format!("unexpected character {:?}", char_at(text, used)),
            ));
        }
        Ok(version)
    }

    /// Parses the longest version prefix of `text[start..]`. Returns the
    /// version and the offset one past its last byte.
    fn parse_prefix(text: &str, start: usize) -> Result<(Self, usize), ParseError> {
        let bytes = text.as_bytes();
        let mut pos = start;
        let mut segments = Vec::new();
        loop {
            let seg_start = pos;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            if pos == seg_start {
                let message = match bytes.get(pos) {
                    None | Some(b'.') => "empty segment".to_string(),
                    Some(_) => format!("expected digit, found {:?}", char_at(text, pos)),
                };
                return Err(ParseError::new("version", pos, message));
            }
            let digits = &text[seg_start..pos];
            if digits.len() > 1 && digits.starts_with('0') {
                return Err(ParseError::new(
                    "version",
                    seg_start,
                    "leading zero in segment",
                ));
            }
            let value = digits
                .parse::<u64>()
                .map_err(|_| ParseError::new("version", seg_start, "segment out of range"))?;
            segments.push(value);
            if pos < bytes.len() && bytes[pos] == b'.' {
                pos += 1;
                continue;
            }
            break;
        }
        let mut suffix = None;
        if pos < bytes.len() && bytes[pos] == b'-' {
            pos += 1;
            let tag_start = pos;
            while pos < bytes.len() && is_tag_byte(bytes[pos]) {
                pos += 1;
            }
            if pos == tag_start {
                return Err(ParseError::new("version", tag_start, "empty suffix"));
            }
            suffix = Some(text[tag_start..pos].to_string());
        }
        Ok((Self { segments, suffix }, pos))
    }

    pub fn segments(&self) -> &[u64] {
        &self.segments
    }

    pub fn suffix(&self) -> Option<&str> {
        self.suffix.as_deref()
    }

    pub fn major(&self) -> u64 {
        self.segments[0]
    }

    fn significant_len(&self) -> usize {
        self.segments
            .iter()
            .rposition(|&s| s != 0)
            .map_or(0, |i| i + 1)
    }
}

fn char_at(text: &str, offset: usize) -> char {
    text[offset..].chars().next().unwrap_or('\0')
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        let len = self.segments.len().max(other.segments.len());
        for i in 0..len {
            let a = self.segments.get(i).copied().unwrap_or(0);
            let b = other.segments.get(i).copied().unwrap_or(0);
            match a.cmp(&b) {
                Ordering::Equal => {}
                ord => return ord,
            }
        }
        match (&self.suffix, &other.suffix) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Greater,
            (Some(_), None) => Ordering::Less,
            (Some(a), Some(b)) => a.as_bytes().cmp(b.as_bytes()),
        }
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Equality and hashing follow the total order, so `1.0 == 1.0.0`.
impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Version {}

impl Hash for Version {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.segments[..self.significant_len()].hash(state);
        self.suffix.hash(state);
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{s}")?;
        }
        if let Some(tag) = &self.suffix {
            write!(f, "-{tag}")?;
        }
        Ok(())
    }
}

impl FromStr for Version {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

pub fn parse_version(text: &str) -> Result<Version, ParseError> {
    Version::parse(text)
}

pub fn compare_versions(a: &Version, b: &Version) -> Ordering {
    a.cmp(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Eq,
    Ne,
    Ge,
    Gt,
    Le,
    Lt,
}

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Ne => "!=",
            Op::Ge => ">=",
            Op::Gt => ">",
            Op::Le => "<=",
            Op::Lt => "<",
        }
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            Op::Eq => ord == Ordering::Equal,
            Op::Ne => ord != Ordering::Equal,
            Op::Ge => ord != Ordering::Less,
            Op::Gt => ord == Ordering::Greater,
            Op::Le => ord != Ordering::Greater,
            Op::Lt => ord == Ordering::Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub op: Op,
    pub version: Version,
}

impl Atom {
    pub fn matches(&self, v: &Version) -> bool {
        self.op.holds(v.cmp(&self.version))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.op.as_str(), self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Constraint {
    /// `*`, satisfied by every version.
    Any,
    /// Disjunction of non-empty conjunctions.
    AnyOf(Vec<Vec<Atom>>),
}

impl Constraint {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        ConstraintParser { text, pos: 0 }.parse()
    }

    pub fn exact(v: &Version) -> Self {
        Constraint::AnyOf(vec![vec![Atom {
            op: Op::Eq,
            version: v.clone(),
        }]])
    }

    pub fn matches(&self, v: &Version) -> bool {
        match self {
            Constraint::Any => true,
            Constraint::AnyOf(clauses) => clauses
                .iter()
                .any(|clause| clause.iter().all(|atom| atom.matches(v))),
        }
    }
}

struct ConstraintParser<'a> {
    text: &'a str,
    pos: usize,
}

impl ConstraintParser<'_> {
    fn err(&self, offset: usize, message: impl Into<String>) -> ParseError {
        ParseError::new("constraint", offset, message)
    }

    fn skip_ws(&mut self) {
        let bytes = self.text.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.text.as_bytes().get(self.pos).copied()
    }

    fn parse(mut self) -> Result<Constraint, ParseError> {
        self.skip_ws();
        if self.peek().is_none() {
            return Err(self.err(self.pos, "empty constraint"));
        }
        if self.peek() == Some(b'*') {
            self.pos += 1;
            self.skip_ws();
            if self.pos != self.text.len() {
                return Err(self.err(self.pos, "`*` must stand alone"));
            }
            return Ok(Constraint::Any);
        }
        let mut clauses = vec![self.clause()?];
        loop {
            self.skip_ws();
            match self.peek() {
                None => break,
                Some(b'|') => {
                    self.pos += 1;
                    clauses.push(self.clause()?);
                }
                Some(_) => {
                    return Err(self.err(
                        self.pos,
                        format!(
                            "expected `,` or `|`, found {:?}",
                            char_at(self.text, self.pos)
                        ),
                    ))
                }
            }
        }
        Ok(Constraint::AnyOf(clauses))
    }

    fn clause(&mut self) -> Result<Vec<Atom>, ParseError> {
        let mut atoms = vec![self.atom()?];
        loop {
            self.skip_ws();
            if self.peek() == Some(b',') {
                self.pos += 1;
                atoms.push(self.atom()?);
            } else {
                return Ok(atoms);
            }
        }
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let start = self.pos;
        let op = if rest.starts_with("==") {
            return Err(self.err(start, "unknown operator `==`"));
        } else if rest.starts_with(">=") {
            Op::Ge
        } else if rest.starts_with("<=") {
            Op::Le
        } else if rest.starts_with("!=") {
            Op::Ne
        } else if rest.starts_with('>') {
            Op::Gt
        } else if rest.starts_with('<') {
            Op::Lt
        } else if rest.starts_with('=') {
            Op::Eq
        } else if rest.is_empty() {
            return Err(self.err(start, "expected operator, found end of input"));
        } else {
            return Err(self.err(
                start,
                format!("expected operator, found {:?}", char_at(self.text, start)),
            ));
        };
        self.pos += op.as_str().len();
        self.skip_ws();
        let (version, end) =
            Version::parse_prefix(self.text, self.pos).map_err(|e| ParseError {
                what: "constraint",
                ..e
            })?;
        self.pos = end;
        Ok(Atom { op, version })
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Any => f.write_str("*"),
            Constraint::AnyOf(clauses) => {
                for (i, clause) in clauses.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    for (j, atom) in clause.iter().enumerate() {
                        if j > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{atom}")?;
                    }
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Constraint {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

pub fn parse_constraint(text: &str) -> Result<Constraint, ParseError> {
    Constraint::parse(text)
}

pub fn satisfies(v: &Version, c: &Constraint) -> bool {
    c.matches(v)
}

/// A `YYYY.MM.P` release identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CalendarVersion {
    pub year: u32,
    pub month: u8,
    pub patch: u32,
}

impl CalendarVersion {
    pub fn new(year: u32, month: u8, patch: u32) -> Result<Self, ParseError> {
        if year < 2000 {
            return Err(ParseError::new(
                "calendar version",
                0,
                "year must be at least 2000",
            ));
        }
        if !(1..=12).contains(&month) {
            return Err(ParseError::new("calendar version", 0, "month must be 1-12"));
        }
        Ok(Self { year, month, patch })
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        const WHAT: &str = "calendar version";
        let fields: Vec<&str> = text.split('.').collect();
        if fields.len() != 3 {
            return Err(ParseError::new(
                WHAT,
                0,
                format!("expected 3 fields YYYY.MM.P, found {}", fields.len()),
            ));
        }
        let year_off = 0;
        let month_off = fields[0].len() + 1;
        let patch_off = month_off + fields[1].len() + 1;
        let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());

        if fields[0].len() != 4 || !all_digits(fields[0]) {
            return Err(ParseError::new(WHAT, year_off, "year must be four digits"));
        }
        if fields[1].len() != 2 || !all_digits(fields[1]) {
            return Err(ParseError::new(WHAT, month_off, "month must be two digits"));
        }
        if !all_digits(fields[2]) || (fields[2].len() > 1 && fields[2].starts_with('0')) {
            return Err(ParseError::new(
                WHAT,
                patch_off,
                "patch must be a plain integer",
            ));
        }
        let year: u32 = fields[0].parse().expect("four digits");
        let month: u8 = fields[1].parse().expect("two digits");
        let patch: u32 = fields[2]
            .parse()
            .map_err(|_| ParseError::new(WHAT, patch_off, "patch out of range"))?;
        if year < 2000 {
            return Err(ParseError::new(
                WHAT,
                year_off,
                "year must be at least 2000",
            ));
        }
        if !(1..=12).contains(&month) {
            return Err(ParseError::new(WHAT, month_off, "month must be 1-12"));
        }
        Ok(Self { year, month, patch })
    }
}

impl fmt::Display for CalendarVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}.{:02}.{}", self.year, self.month, self.patch)
    }
}

impl FromStr for CalendarVersion {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

pub fn parse_calendar_version(text: &str) -> Result<CalendarVersion, ParseError> {
    CalendarVersion::parse(text)
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let text = String::deserialize(deserializer)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Version);
string_serde!(Constraint);
string_serde!(CalendarVersion);

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Version {
        s.parse().unwrap()
    }

    #[test]
    fn parses_dotted_versions() {
        let ver = v("8.15");
        assert_eq!(ver.segments(), &[8, 15]);
        assert_eq!(ver.suffix(), None);
        assert_eq!(ver.major(), 8);

        let rc = v("1.0.0-rc1");
        assert_eq!(rc.segments(), &[1, 0, 0]);
        assert_eq!(rc.suffix(), Some("rc1"));
    }

    #[test]
    fn rejects_malformed_versions_with_offsets() {
        assert_eq!(Version::parse("1..2").unwrap_err().offset, 2);
        assert_eq!(Version::parse("").unwrap_err().offset, 0);
        assert_eq!(Version::parse("1.x").unwrap_err().offset, 2);
        assert_eq!(Version::parse("1.0-").unwrap_err().offset, 4);
        assert_eq!(Version::parse("1.0.").unwrap_err().offset, 4);
        assert_eq!(Version::parse("1.02").unwrap_err().offset, 2);
        assert_eq!(Version::parse("1.0 ").unwrap_err().offset, 3);
    }

    #[test]
    fn ordering_examples() {
        assert_eq!(compare_versions(&v("8.12"), &v("8.15")), Ordering::Less);
        assert_eq!(compare_versions(&v("1.0"), &v("1.0.0")), Ordering::Equal);
        assert_eq!(
            compare_versions(&v("2.0.0-rc1"), &v("2.0.0")),
            Ordering::Less
        );
        assert_eq!(
            compare_versions(&v("2.0-alpha"), &v("2.0-beta")),
            Ordering::Less
        );
        assert_eq!(compare_versions(&v("8.9"), &v("8.10")), Ordering::Less);
    }

    #[test]
    fn equal_versions_hash_alike() {
        use std::collections::HashSet;
        let set: HashSet<Version> = [v("1.0"), v("1.0.0"), v("1")].into_iter().collect();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn constraint_grammar() {
        let c = Constraint::parse(">=8.13, <8.15").unwrap();
        match &c {
            Constraint::AnyOf(clauses) => {
                assert_eq!(clauses.len(), 1);
                assert_eq!(clauses[0].len(), 2);
            }
            Constraint::Any => panic!("expected clauses"),
        }
        assert_eq!(Constraint::parse("*").unwrap(), Constraint::Any);
        assert_eq!(
            Constraint::parse("  >=1 ,<2|=3.0-rc1 ")
                .unwrap()
                .to_string(),
            ">=1, <2 | =3.0-rc1"
        );
    }

    #[test]
    fn constraint_errors() {
        let e = Constraint::parse("==1.0").unwrap_err();
        assert_eq!(e.offset, 0);
        assert!(e.message.contains("=="));
        assert!(Constraint::parse("").is_err());
        assert!(Constraint::parse("   ").is_err());
        assert_eq!(Constraint::parse(">=1.0,").unwrap_err().offset, 6);
        assert_eq!(Constraint::parse("~1.0").unwrap_err().offset, 0);
        assert_eq!(Constraint::parse(">=1.0 <2").unwrap_err().offset, 6);
        assert!(Constraint::parse("* | >=1").is_err());
        assert_eq!(Constraint::parse(">=1..0").unwrap_err().offset, 4);
    }

    #[test]
    fn satisfaction_examples() {
        let c = Constraint::parse(">=8.13, <8.15").unwrap();
        assert!(satisfies(&v("8.14"), &c));
        assert!(!satisfies(&v("8.15"), &c));
        assert!(!satisfies(&v("8.12"), &c));
        let either = Constraint::parse("<8.13 | >=8.15").unwrap();
        assert!(satisfies(&v("8.12"), &either));
        assert!(!satisfies(&v("8.14"), &either));
        assert!(satisfies(&v("8.16"), &either));
        assert!(satisfies(&v("0.0.1-dev"), &Constraint::Any));
        assert!(satisfies(&v("1.0.0"), &Constraint::parse("=1.0").unwrap()));
        assert!(satisfies(&v("1.1"), &Constraint::parse("!=1.0").unwrap()));
    }

    #[test]
    fn calendar_versions() {
        let cv = parse_calendar_version("2022.01.0").unwrap();
        assert_eq!((cv.year, cv.month, cv.patch), (2022, 1, 0));
        assert_eq!(cv.to_string(), "2022.01.0");
        assert!(parse_calendar_version("2022.13.0").is_err());
        assert!(parse_calendar_version("2022.00.0").is_err());
        assert!(parse_calendar_version("2022.01").is_err());
        assert!(parse_calendar_version("2022.1.0").is_err());
        assert!(parse_calendar_version("1999.01.0").is_err());
        assert!(parse_calendar_version("2022.01.0.1").is_err());
        let earlier = parse_calendar_version("2021.09.1").unwrap();
        assert_eq!((earlier.year, earlier.month, earlier.patch), (2021, 9, 1));
        assert!(earlier < cv);
    }

    #[test]
    fn serde_uses_text_form() {
        let json = serde_json::to_string(&v("1.0.0-rc1")).unwrap();
        assert_eq!(json, "\"1.0.0-rc1\"");
        let c: Constraint = serde_json::from_str("\">=1.0, <2\"").unwrap();
        assert_eq!(c.to_string(), ">=1.0, <2");
        assert!(serde_json::from_str::<CalendarVersion>("\"2022.13.0\"").is_err());
    }
}
