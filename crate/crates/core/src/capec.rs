//! Catalog of reusable attack patterns that concrete device attacks map into.
//!
//! Patterns are identified by string ids (e.g. `"CAPEC-542"`), carry an
//! abstraction level plus optional default scores, and may reference a parent
//! pattern that lives outside the loaded subset.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Abstraction level of a pattern, from broad grouping to concrete technique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Abstraction {
    Category,
    Meta,
    Standard,
}

/// One attack-pattern record. Score fields use small integer scales:
/// `severity_default` and `likelihood_default` in 1..=5, `skill_required`
/// in 1..=3. All prose fields are free-form lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPattern {
    pub id: String,
    pub name: String,
    pub abstraction: Abstraction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prerequisites: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity_default: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood_default: Option<u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_required: Option<u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mitigations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_of: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct CatalogDocument {
    #[serde(default)]
    source_label: String,
    patterns: Vec<AttackPattern>,
}

/// An id-keyed collection of patterns with a label describing where the
/// records came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternCatalog {
    patterns: BTreeMap<String, AttackPattern>,
    pub source_label: String,
}

impl PatternCatalog {
    /// Builds a catalog from records, rejecting duplicate ids.
    pub fn new(source_label: impl Into<String>, records: Vec<AttackPattern>) -> Result<Self> {
        let mut patterns = BTreeMap::new();
        for record in records {
            if let Some(previous) = patterns.insert(record.id.clone(), record) {
                return Err(Error::DuplicateId {
                    kind: "pattern",
                    id: previous.id,
                });
            }
        }
        Ok(PatternCatalog {
            patterns,
            source_label: source_label.into(),
        })
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let doc: CatalogDocument =
            serde_json::from_str(json).map_err(|e| Error::parse("pattern catalog", e))?;
        PatternCatalog::new(doc.source_label, doc.patterns)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: CatalogDocument = serde_json::from_str(&text)
            .map_err(|e| Error::parse(format!("pattern catalog {}", path.display()), e))?;
        PatternCatalog::new(doc.source_label, doc.patterns)
    }

    /// Serializes back to the document form, patterns in id order.
    pub fn to_json_string(&self) -> String {
        let doc = CatalogDocument {
            source_label: self.source_label.clone(),
            patterns: self.patterns.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("catalog serialization cannot fail")
    }

    pub fn lookup(&self, id: &str) -> Result<&AttackPattern> {
        self.patterns.get(id).ok_or_else(|| Error::NotFound {
            kind: "pattern",
            id: id.to_string(),
        })
    }

    pub fn contains(&self, id: &str) -> bool {
        self.patterns.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Pattern ids in sorted order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.patterns.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AttackPattern> {
        self.patterns.values()
    }

    /// Checks score ranges and internal references. Violations make the
    /// catalog unusable; notices (a parent outside the loaded subset) are
    /// informational only.
    pub fn validate(&self) -> CatalogReport {
        let mut report = CatalogReport::default();
        for pattern in self.patterns.values() {
            if pattern.id.trim().is_empty() {
                report.violations.push(CatalogViolation::EmptyId {
                    name: pattern.name.clone(),
                });
            }
            let mut check_range = |field: &'static str, value: Option<u8>, min: u8, max: u8| {
                if let Some(v) = value {
                    if v < min || v > max {
                        report.violations.push(CatalogViolation::ScoreOutOfRange {
                            pattern: pattern.id.clone(),
                            field,
                            value: v,
                            min,
                            max,
                        });
                    }
                }
            };
            check_range("severity_default", pattern.severity_default, 1, 5);
            check_range("likelihood_default", pattern.likelihood_default, 1, 5);
            check_range("skill_required", pattern.skill_required, 1, 3);
            if let Some(parent) = &pattern.parent_of {
                if !self.patterns.contains_key(parent) {
                    report.notices.push(CatalogNotice::ExternalParent {
                        pattern: pattern.id.clone(),
                        parent: parent.clone(),
                    });
                }
            }
        }
        report
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatalogViolation {
    EmptyId { name: String },
    ScoreOutOfRange {
        pattern: String,
        field: &'static str,
        value: u8,
        min: u8,
        max: u8,
    },
}

impl fmt::Display for CatalogViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CatalogViolation::EmptyId { name } => {
                write!(f, "pattern named {name:?} has an empty id")
            }
            CatalogViolation::ScoreOutOfRange {
                pattern,
                field,
                value,
                min,
                max,
            } => write!(
                f,
                "pattern {pattern} has {field} {value} outside {min}..={max}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatalogNotice {
    /// `parent_of` points at a pattern that is not part of the loaded subset.
    ExternalParent { pattern: String, parent: String },
}

impl fmt::Display for CatalogNotice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CatalogNotice::ExternalParent { pattern, parent } => write!(
                f,
                "pattern {pattern} references external parent {parent}"
            ),
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct CatalogReport {
    pub violations: Vec<CatalogViolation>,
    pub notices: Vec<CatalogNotice>,
}

impl CatalogReport {
    /// True when no violations are present; notices do not count.
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}
