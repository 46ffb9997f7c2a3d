//! Expert panels and their aggregation into consensus score vectors.
//!
//! Individual experts score subjects (patterns, attacks, or severity aspects)
//! on a 0–5 scale; panels are combined by (optionally weighted) arithmetic
//! mean. Likelihood vectors for attacks come in two flavours: derived from
//! pattern-level consensus, or elicited directly and normalized to [0, 1].

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::attacks::AttackCatalog;
use crate::error::{Error, Result};
use crate::risk::{self, Aggregation};

pub const SCORE_MIN: f64 = 0.0;
pub const SCORE_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpertRole {
    InformationSecurity,
    Medical,
}

impl ExpertRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExpertRole::InformationSecurity => "ise",
            ExpertRole::Medical => "me",
        }
    }

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ise" => Ok(ExpertRole::InformationSecurity),
            "me" => Ok(ExpertRole::Medical),
            other => Err(Error::Integrity(format!("unknown expert role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expert {
    pub id: String,
    pub role: ExpertRole,
    pub note: Option<String>,
}

/// What a score vector is about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubjectKind {
    /// Pattern-level likelihood, keyed by pattern id.
    CapecLikelihood,
    /// Attack-level likelihood elicited directly, keyed by attack id.
    DirectAttackLikelihood,
    /// Severity magnitude for one named aspect, keyed by attack id.
    SeverityMagnitude(String),
}

impl fmt::Display for SubjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubjectKind::CapecLikelihood => f.write_str("pattern likelihood"),
            SubjectKind::DirectAttackLikelihood => f.write_str("direct attack likelihood"),
            SubjectKind::SeverityMagnitude(aspect) => write!(f, "severity ({aspect})"),
        }
    }
}

/// One expert's scores for one subject kind, on the 0–5 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub expert: String,
    pub kind: SubjectKind,
    pub scores: BTreeMap<String, f64>,
}

/// How a consensus vector was produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub panel_size: Option<u32>,
    pub aggregation: String,
    /// Pre-normalization values for vectors rescaled to [0, 1].
    pub raw_scale_values: Option<BTreeMap<String, f64>>,
    pub note: Option<String>,
}

/// Panel-level consensus scores for one subject kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusVector {
    pub kind: SubjectKind,
    pub values: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

impl ConsensusVector {
    pub fn score(&self, subject: &str) -> Option<f64> {
        self.values.get(subject).copied()
    }
}

fn check_score(owner: &str, subject: &str, value: f64, max: f64) -> Result<()> {
    if !value.is_finite() || value < SCORE_MIN || value > max {
        return Err(Error::OutOfRange {
            context: format!("{owner} score for {subject}"),
            value,
            min: SCORE_MIN,
            max,
        });
    }
    Ok(())
}

/// Combines a panel of estimate sets into a consensus vector by weighted
/// arithmetic mean. All sets must share `kind` and cover the same subjects.
pub fn aggregate_panel_weighted(
    sets: &[EstimateSet],
    kind: &SubjectKind,
    weights: &[f64],
) -> Result<ConsensusVector> {
    if sets.is_empty() {
        return Err(Error::EmptyPanel);
    }
    if weights.len() != sets.len() {
        return Err(Error::LengthMismatch {
            left: sets.len(),
            right: weights.len(),
        });
    }
    for (set, &weight) in sets.iter().zip(weights) {
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::OutOfRange {
                context: format!("panel weight for expert {}", set.expert),
                value: weight,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
    }
    let total_weight: f64 = weights.iter().sum();
    if total_weight <= 0.0 {
        return Err(Error::Integrity("panel weights sum to zero".to_string()));
    }

    let mut seen_experts = BTreeMap::new();
    for set in sets {
        if set.kind != *kind {
            return Err(Error::Integrity(format!(
                "expert {} scored {} but the panel is about {}",
                set.expert, set.kind, kind
            )));
        }
        if seen_experts.insert(set.expert.clone(), ()).is_some() {
            return Err(Error::DuplicateId {
                kind: "expert",
                id: set.expert.clone(),
            });
        }
    }

    let mut subjects: BTreeMap<String, ()> = BTreeMap::new();
    for set in sets {
        for subject in set.scores.keys() {
            subjects.entry(subject.clone()).or_insert(());
        }
    }
    for set in sets {
        let missing: Vec<String> = subjects
            .keys()
            .filter(|s| !set.scores.contains_key(*s))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::Coverage {
                context: format!("estimate set from expert {}", set.expert),
                missing,
            });
        }
        for (subject, &score) in &set.scores {
            check_score(&format!("expert {}", set.expert), subject, score, SCORE_MAX)?;
        }
    }

    let mut values = BTreeMap::new();
    for subject in subjects.keys() {
        let weighted_sum: f64 = sets
            .iter()
            .zip(weights)
            .map(|(set, &w)| w * set.scores[subject])
            .sum();
        values.insert(subject.clone(), weighted_sum / total_weight);
    }
    Ok(ConsensusVector {
        kind: kind.clone(),
        values,
        provenance: Provenance {
            panel_size: Some(sets.len() as u32),
            aggregation: "mean".to_string(),
            raw_scale_values: None,
            note: None,
        },
    })
}

/// Uniform-weight arithmetic-mean panel aggregation.
pub fn aggregate_panel_mean(sets: &[EstimateSet], kind: &SubjectKind) -> Result<ConsensusVector> {
    let weights = vec![1.0; sets.len().max(1)];
    aggregate_panel_weighted(sets, kind, &weights[..sets.len()])
}

/// Builds the pattern-derived attack-likelihood vector: per attack, the mean
/// of its mapped patterns' consensus scores, scaled to [0, 1].
pub fn build_mecble(
    capec_consensus: &ConsensusVector,
    attacks: &AttackCatalog,
) -> Result<ConsensusVector> {
    build_mecble_with(capec_consensus, attacks, Aggregation::Mean)
}

/// As [`build_mecble`], with a pluggable per-attack aggregation over the
/// mapped pattern scores.
pub fn build_mecble_with(
    capec_consensus: &ConsensusVector,
    attacks: &AttackCatalog,
    aggregation: Aggregation,
) -> Result<ConsensusVector> {
    if capec_consensus.kind != SubjectKind::CapecLikelihood {
        return Err(Error::Integrity(format!(
            "pattern-derived likelihood needs a {} consensus, got {}",
            SubjectKind::CapecLikelihood,
            capec_consensus.kind
        )));
    }
    let mut values = BTreeMap::new();
    for attack in attacks.iter() {
        let likelihood = risk::capec_based_likelihood_with(attack, capec_consensus, aggregation)?;
        values.insert(attack.id.clone(), likelihood);
    }
    Ok(ConsensusVector {
        kind: SubjectKind::DirectAttackLikelihood,
        values,
        provenance: Provenance {
            panel_size: capec_consensus.provenance.panel_size,
            aggregation: format!("{} over mapped pattern scores", aggregation.as_str()),
            raw_scale_values: None,
            note: Some("derived from pattern-likelihood consensus".to_string()),
        },
    })
}

/// Builds the directly elicited attack-likelihood vector: mean panel scores
/// normalized from the 0–5 scale to [0, 1], keeping the raw means in the
/// provenance.
pub fn build_medle(sets: &[EstimateSet]) -> Result<ConsensusVector> {
    let raw = aggregate_panel_mean(sets, &SubjectKind::DirectAttackLikelihood)?;
    let normalized: BTreeMap<String, f64> = raw
        .values
        .iter()
        .map(|(subject, &score)| (subject.clone(), score / SCORE_MAX))
        .collect();
    Ok(ConsensusVector {
        kind: SubjectKind::DirectAttackLikelihood,
        values: normalized,
        provenance: Provenance {
            panel_size: raw.provenance.panel_size,
            aggregation: raw.provenance.aggregation,
            raw_scale_values: Some(raw.values),
            note: Some("normalized from the 0-5 scale".to_string()),
        },
    })
}

#[derive(Deserialize)]
struct SurveyDocument {
    expert: String,
    role: String,
    #[serde(default)]
    note: Option<String>,
    kind: String,
    #[serde(default)]
    aspect: Option<String>,
    scores: BTreeMap<String, f64>,
}

fn subject_kind_from_doc(kind: &str, aspect: Option<String>) -> Result<SubjectKind> {
    match kind {
        "capec" => Ok(SubjectKind::CapecLikelihood),
        "direct" => Ok(SubjectKind::DirectAttackLikelihood),
        "severity" => Ok(SubjectKind::SeverityMagnitude(
            aspect.unwrap_or_else(|| "overall".to_string()),
        )),
        other => Err(Error::Integrity(format!(
            "unknown estimate kind {other:?} (expected capec, direct, or severity)"
        ))),
    }
}

fn survey_from_doc(doc: SurveyDocument) -> Result<(Expert, EstimateSet)> {
    let role = ExpertRole::from_str(&doc.role)?;
    let kind = subject_kind_from_doc(&doc.kind, doc.aspect)?;
    for (subject, &score) in &doc.scores {
        check_score(&format!("expert {}", doc.expert), subject, score, SCORE_MAX)?;
    }
    let expert = Expert {
        id: doc.expert.clone(),
        role,
        note: doc.note,
    };
    let set = EstimateSet {
        expert: doc.expert,
        kind,
        scores: doc.scores,
    };
    Ok((expert, set))
}

/// Parses a single expert survey document.
pub fn load_survey_str(json: &str) -> Result<(Expert, EstimateSet)> {
    let doc: SurveyDocument =
        serde_json::from_str(json).map_err(|e| Error::parse("survey document", e))?;
    survey_from_doc(doc)
}

/// Parses either one survey document or an array of them.
pub fn load_surveys_str(json: &str) -> Result<Vec<(Expert, EstimateSet)>> {
    let value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| Error::parse("survey document", e))?;
    let docs: Vec<SurveyDocument> = if value.is_array() {
        serde_json::from_value(value).map_err(|e| Error::parse("survey document", e))?
    } else {
        vec![serde_json::from_value(value).map_err(|e| Error::parse("survey document", e))?]
    };
    docs.into_iter().map(survey_from_doc).collect()
}

pub fn load_surveys_path(path: &Path) -> Result<Vec<(Expert, EstimateSet)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_surveys_str(&text)
}

#[derive(Deserialize)]
struct ConsensusDocument {
    kind: String,
    #[serde(default)]
    aspect: Option<String>,
    #[serde(default)]
    aggregation: Option<String>,
    #[serde(default)]
    panel_size: Option<u32>,
    #[serde(default)]
    raw: Option<String>,
    scores: BTreeMap<String, f64>,
}

/// Parses a precomputed consensus document (pattern-likelihood or severity
/// scores on the 0–5 scale, as published rather than per-expert).
pub fn load_consensus_str(json: &str) -> Result<ConsensusVector> {
    let doc: ConsensusDocument =
        serde_json::from_str(json).map_err(|e| Error::parse("consensus document", e))?;
    let kind = match doc.kind.as_str() {
        "capec" => SubjectKind::CapecLikelihood,
        "severity" => SubjectKind::SeverityMagnitude(
            doc.aspect.unwrap_or_else(|| "overall".to_string()),
        ),
        other => {
            return Err(Error::Integrity(format!(
                "consensus documents carry capec or severity scores, not {other:?}"
            )))
        }
    };
    for (subject, &score) in &doc.scores {
        check_score("consensus", subject, score, SCORE_MAX)?;
    }
    Ok(ConsensusVector {
        kind,
        values: doc.scores,
        provenance: Provenance {
            panel_size: doc.panel_size,
            aggregation: doc.aggregation.unwrap_or_else(|| "mean".to_string()),
            raw_scale_values: None,
            note: doc.raw,
        },
    })
}

pub fn load_consensus_path(path: &Path) -> Result<ConsensusVector> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str::<serde_json::Value>(&text)
        .map_err(|e| Error::parse(format!("consensus document {}", path.display()), e))?;
    load_consensus_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(expert: &str, kind: SubjectKind, scores: &[(&str, f64)]) -> EstimateSet {
        EstimateSet {
            expert: expert.to_string(),
            kind,
            scores: scores.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn panel_mean_is_the_arithmetic_mean() {
        let sets = [
            set("e1", SubjectKind::CapecLikelihood, &[("CAPEC-1", 1.0)]),
            set("e2", SubjectKind::CapecLikelihood, &[("CAPEC-1", 2.0)]),
            set("e3", SubjectKind::CapecLikelihood, &[("CAPEC-1", 4.0)]),
        ];
        let consensus = aggregate_panel_mean(&sets, &SubjectKind::CapecLikelihood).unwrap();
        assert!((consensus.values["CAPEC-1"] - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(consensus.provenance.panel_size, Some(3));
    }

    #[test]
    fn weighted_mean_respects_weights() {
        let sets = [
            set("e1", SubjectKind::CapecLikelihood, &[("CAPEC-1", 1.0)]),
            set("e2", SubjectKind::CapecLikelihood, &[("CAPEC-1", 3.0)]),
        ];
        let consensus =
            aggregate_panel_weighted(&sets, &SubjectKind::CapecLikelihood, &[1.0, 3.0]).unwrap();
        assert!((consensus.values["CAPEC-1"] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn empty_panel_is_rejected() {
        let err = aggregate_panel_mean(&[], &SubjectKind::CapecLikelihood).unwrap_err();
        assert!(matches!(err, Error::EmptyPanel));
    }

    #[test]
    fn incomplete_panel_reports_missing_subjects() {
        let sets = [
            set(
                "e1",
                SubjectKind::CapecLikelihood,
                &[("CAPEC-1", 1.0), ("CAPEC-2", 2.0)],
            ),
            set("e2", SubjectKind::CapecLikelihood, &[("CAPEC-1", 3.0)]),
        ];
        let err = aggregate_panel_mean(&sets, &SubjectKind::CapecLikelihood).unwrap_err();
        match err {
            Error::Coverage { context, missing } => {
                assert!(context.contains("e2"));
                assert_eq!(missing, vec!["CAPEC-2".to_string()]);
            }
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let sets = [set("e1", SubjectKind::DirectAttackLikelihood, &[("A1", 1.0)])];
        let err = aggregate_panel_mean(&sets, &SubjectKind::CapecLikelihood).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn duplicate_expert_in_panel_is_rejected() {
        let sets = [
            set("e1", SubjectKind::CapecLikelihood, &[("CAPEC-1", 1.0)]),
            set("e1", SubjectKind::CapecLikelihood, &[("CAPEC-1", 2.0)]),
        ];
        let err = aggregate_panel_mean(&sets, &SubjectKind::CapecLikelihood).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { kind: "expert", .. }));
    }

    #[test]
    fn out_of_scale_score_is_rejected() {
        let sets = [set("e1", SubjectKind::CapecLikelihood, &[("CAPEC-1", 5.5)])];
        let err = aggregate_panel_mean(&sets, &SubjectKind::CapecLikelihood).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { .. }));
    }

    #[test]
    fn direct_vector_is_normalized_and_keeps_raw_means() {
        let sets = [
            set("e1", SubjectKind::DirectAttackLikelihood, &[("A1", 2.0)]),
            set("e2", SubjectKind::DirectAttackLikelihood, &[("A1", 3.0)]),
        ];
        let consensus = build_medle(&sets).unwrap();
        assert!((consensus.values["A1"] - 0.5).abs() < 1e-12);
        let raw = consensus.provenance.raw_scale_values.unwrap();
        assert!((raw["A1"] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn survey_documents_parse_roles_and_kinds() {
        let json = r#"{
            "expert": "e7",
            "role": "me",
            "kind": "severity",
            "aspect": "overall",
            "scores": {"A1": 5.0}
        }"#;
        let (expert, set) = load_survey_str(json).unwrap();
        assert_eq!(expert.role, ExpertRole::Medical);
        assert_eq!(set.kind, SubjectKind::SeverityMagnitude("overall".to_string()));
        assert_eq!(set.scores["A1"], 5.0);
    }

    #[test]
    fn survey_arrays_parse_into_multiple_sets() {
        let json = r#"[
            {"expert": "e1", "role": "ise", "kind": "direct", "scores": {"A1": 2.5}},
            {"expert": "e2", "role": "ise", "kind": "direct", "scores": {"A1": 3.5}}
        ]"#;
        let surveys = load_surveys_str(json).unwrap();
        assert_eq!(surveys.len(), 2);
        assert_eq!(surveys[1].1.expert, "e2");
    }

    #[test]
    fn consensus_documents_reject_direct_kind() {
        let json = r#"{"kind": "direct", "scores": {"A1": 2.0}}"#;
        let err = load_consensus_str(json).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn consensus_documents_carry_provenance() {
        let json = r#"{
            "kind": "capec",
            "aggregation": "mean",
            "panel_size": 4,
            "raw": "unavailable",
            "scores": {"CAPEC-542": 4.5}
        }"#;
        let consensus = load_consensus_str(json).unwrap();
        assert_eq!(consensus.kind, SubjectKind::CapecLikelihood);
        assert_eq!(consensus.provenance.panel_size, Some(4));
        assert_eq!(consensus.provenance.note.as_deref(), Some("unavailable"));
    }
}
