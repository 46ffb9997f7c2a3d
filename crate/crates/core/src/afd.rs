//! Attack-flow diagrams: typed component nodes, directed information-flow
//! edges, and per-edge attack markings, with validation, surface queries,
//! and deterministic DOT export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attacks::Novelty;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Component,
    /// A component that a separate diagram expands further.
    Subcomponent,
    Terminator,
    Network,
    /// A grouping of sibling nodes, rendered as a cluster.
    LogicalEncapsulation,
    /// A component drawn outside the device boundary.
    OuterComponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfdNode {
    pub id: String,
    pub label: String,
    pub kind: NodeKind,
    /// Enclosing LogicalEncapsulation node, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    /// Diagram id this Subcomponent expands to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expands_to: Option<String>,
}

/// One attack marked on an edge, with its novelty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Marking {
    pub attack: String,
    pub novelty: Novelty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfdEdge {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub markings: BTreeSet<Marking>,
}

impl AfdEdge {
    /// An edge taking part in at least one attack renders bold.
    pub fn is_bold(&self) -> bool {
        !self.markings.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct AfdDocument {
    id: String,
    title: String,
    nodes: Vec<AfdNode>,
    #[serde(default)]
    edges: Vec<AfdEdge>,
}

/// One diagram: an id-keyed node collection plus an edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct Afd {
    pub id: String,
    pub title: String,
    nodes: BTreeMap<String, AfdNode>,
    pub edges: Vec<AfdEdge>,
}

impl Afd {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        nodes: Vec<AfdNode>,
        edges: Vec<AfdEdge>,
    ) -> Result<Self> {
        let mut keyed = BTreeMap::new();
        for node in nodes {
            if let Some(previous) = keyed.insert(node.id.clone(), node) {
                return Err(Error::DuplicateId {
                    kind: "node",
                    id: previous.id,
                });
            }
        }
        Ok(Afd {
            id: id.into(),
            title: title.into(),
            nodes: keyed,
            edges,
        })
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let doc: AfdDocument =
            serde_json::from_str(json).map_err(|e| Error::parse("diagram document", e))?;
        Afd::new(doc.id, doc.title, doc.nodes, doc.edges)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: AfdDocument = serde_json::from_str(&text)
            .map_err(|e| Error::parse(format!("diagram document {}", path.display()), e))?;
        Afd::new(doc.id, doc.title, doc.nodes, doc.edges)
    }

    pub fn node(&self, id: &str) -> Option<&AfdNode> {
        self.nodes.get(id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &AfdNode> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AfdViolation {
    MissingEndpoint {
        diagram: String,
        from: String,
        to: String,
        missing: String,
    },
    SelfLoop {
        diagram: String,
        node: String,
    },
    UnknownMarking {
        diagram: String,
        from: String,
        to: String,
        attack: String,
    },
    ExpansionTargetMissing {
        diagram: String,
        node: String,
        target: String,
    },
    ExpansionOnNonSubcomponent {
        diagram: String,
        node: String,
    },
    ParentMissing {
        diagram: String,
        node: String,
        parent: String,
    },
    ParentNotEncapsulation {
        diagram: String,
        node: String,
        parent: String,
    },
}

impl fmt::Display for AfdViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AfdViolation::MissingEndpoint {
                diagram,
                from,
                to,
                missing,
            } => write!(
                f,
                "diagram {diagram}: edge {from} -> {to} references missing node {missing}"
            ),
            AfdViolation::SelfLoop { diagram, node } => {
                write!(f, "diagram {diagram}: edge from {node} to itself")
            }
            AfdViolation::UnknownMarking {
                diagram,
                from,
                to,
                attack,
            } => write!(
                f,
                "diagram {diagram}: edge {from} -> {to} is marked with unknown attack {attack}"
            ),
            AfdViolation::ExpansionTargetMissing {
                diagram,
                node,
                target,
            } => write!(
                f,
                "diagram {diagram}: node {node} expands to missing diagram {target}"
            ),
            AfdViolation::ExpansionOnNonSubcomponent { diagram, node } => write!(
                f,
                "diagram {diagram}: node {node} expands but is not a subcomponent"
            ),
            AfdViolation::ParentMissing {
                diagram,
                node,
                parent,
            } => write!(
                f,
                "diagram {diagram}: node {node} references missing parent {parent}"
            ),
            AfdViolation::ParentNotEncapsulation {
                diagram,
                node,
                parent,
            } => write!(
                f,
                "diagram {diagram}: parent {parent} of node {node} is not a logical encapsulation"
            ),
        }
    }
}

/// Checks one diagram's internal structure (endpoints, self-loops, parent
/// links, expansion placement) without cross-diagram context.
fn structural_violations(afd: &Afd) -> Vec<AfdViolation> {
    let mut violations = Vec::new();
    for node in afd.nodes() {
        if node.expands_to.is_some() && node.kind != NodeKind::Subcomponent {
            violations.push(AfdViolation::ExpansionOnNonSubcomponent {
                diagram: afd.id.clone(),
                node: node.id.clone(),
            });
        }
        if let Some(parent) = &node.parent {
            match afd.node(parent) {
                None => violations.push(AfdViolation::ParentMissing {
                    diagram: afd.id.clone(),
                    node: node.id.clone(),
                    parent: parent.clone(),
                }),
                Some(p) if p.kind != NodeKind::LogicalEncapsulation => {
                    violations.push(AfdViolation::ParentNotEncapsulation {
                        diagram: afd.id.clone(),
                        node: node.id.clone(),
                        parent: parent.clone(),
                    })
                }
                Some(_) => {}
            }
        }
    }
    for edge in &afd.edges {
        if edge.from == edge.to {
            violations.push(AfdViolation::SelfLoop {
                diagram: afd.id.clone(),
                node: edge.from.clone(),
            });
        }
        for endpoint in [&edge.from, &edge.to] {
            if afd.node(endpoint).is_none() {
                violations.push(AfdViolation::MissingEndpoint {
                    diagram: afd.id.clone(),
                    from: edge.from.clone(),
                    to: edge.to.clone(),
                    missing: endpoint.clone(),
                });
            }
        }
    }
    violations
}

/// Validates a diagram set against each other (expansion targets) and a set
/// of known attack ids (markings). An empty report means the set is valid.
pub fn validate_afd(diagrams: &[Afd], known_attacks: &BTreeSet<String>) -> Vec<AfdViolation> {
    let diagram_ids: BTreeSet<&str> = diagrams.iter().map(|d| d.id.as_str()).collect();
    let mut violations = Vec::new();
    for diagram in diagrams {
        violations.extend(structural_violations(diagram));
        for node in diagram.nodes() {
            if let Some(target) = &node.expands_to {
                if node.kind == NodeKind::Subcomponent && !diagram_ids.contains(target.as_str()) {
                    violations.push(AfdViolation::ExpansionTargetMissing {
                        diagram: diagram.id.clone(),
                        node: node.id.clone(),
                        target: target.clone(),
                    });
                }
            }
        }
        for edge in &diagram.edges {
            for marking in &edge.markings {
                if !known_attacks.contains(&marking.attack) {
                    violations.push(AfdViolation::UnknownMarking {
                        diagram: diagram.id.clone(),
                        from: edge.from.clone(),
                        to: edge.to.clone(),
                        attack: marking.attack.clone(),
                    });
                }
            }
        }
    }
    violations
}

/// Returns a copy of the diagram with `(attack, novelty)` added to every
/// edge from `from` to `to`. Idempotent; a missing edge is an error.
pub fn mark_attack(
    afd: &Afd,
    from: &str,
    to: &str,
    attack: &str,
    novelty: Novelty,
) -> Result<Afd> {
    let mut updated = afd.clone();
    let mut matched = false;
    for edge in &mut updated.edges {
        if edge.from == from && edge.to == to {
            matched = true;
            edge.markings.insert(Marking {
                attack: attack.to_string(),
                novelty,
            });
        }
    }
    if !matched {
        return Err(Error::NotFound {
            kind: "edge",
            id: format!("{from} -> {to}"),
        });
    }
    Ok(updated)
}

fn collect_diagram_markings(
    by_id: &BTreeMap<&str, &Afd>,
    diagram_id: &str,
    surface: &mut BTreeSet<String>,
    visited: &mut BTreeSet<String>,
) {
    if !visited.insert(diagram_id.to_string()) {
        return;
    }
    let Some(diagram) = by_id.get(diagram_id) else {
        return;
    };
    for edge in &diagram.edges {
        surface.extend(edge.markings.iter().map(|m| m.attack.clone()));
    }
    for node in diagram.nodes() {
        if node.kind == NodeKind::Subcomponent {
            if let Some(target) = &node.expands_to {
                collect_diagram_markings(by_id, target, surface, visited);
            }
        }
    }
}

/// Union of attack ids marked on edges incident to `node_id` across all
/// diagrams where it appears, including everything inside diagrams the node
/// expands to (transitively).
pub fn attack_surface(diagrams: &[Afd], node_id: &str) -> Result<BTreeSet<String>> {
    let by_id: BTreeMap<&str, &Afd> = diagrams.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut surface = BTreeSet::new();
    let mut found = false;
    for diagram in diagrams {
        let Some(node) = diagram.node(node_id) else {
            continue;
        };
        found = true;
        for edge in &diagram.edges {
            if edge.from == node_id || edge.to == node_id {
                surface.extend(edge.markings.iter().map(|m| m.attack.clone()));
            }
        }
        if node.kind == NodeKind::Subcomponent {
            if let Some(target) = &node.expands_to {
                let mut visited = BTreeSet::new();
                collect_diagram_markings(&by_id, target, &mut surface, &mut visited);
            }
        }
    }
    if !found {
        return Err(Error::NotFound {
            kind: "node",
            id: node_id.to_string(),
        });
    }
    Ok(surface)
}

fn escape_dot(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

fn node_statement(node: &AfdNode) -> String {
    let id = escape_dot(&node.id);
    let label = escape_dot(&node.label);
    let attributes = match node.kind {
        NodeKind::Component => "shape=box",
        NodeKind::Subcomponent => "shape=box3d",
        NodeKind::Terminator => "shape=oval",
        NodeKind::Network => "shape=ellipse, style=dashed, peripheries=2",
        NodeKind::OuterComponent => "shape=box, style=dashed",
        // Fallback for an encapsulation that could not be drawn as a cluster.
        NodeKind::LogicalEncapsulation => "shape=box, style=dashed",
    };
    format!("\"{id}\" [label=\"{label}\", {attributes}];")
}

fn edge_color(edge: &AfdEdge) -> &'static str {
    let any_known = edge
        .markings
        .iter()
        .any(|m| m.novelty == Novelty::Known);
    let any_new = edge.markings.iter().any(|m| m.novelty == Novelty::New);
    match (any_known, any_new) {
        (true, true) => "purple",
        (false, true) => "red",
        _ => "blue",
    }
}

fn edge_statement(edge: &AfdEdge) -> String {
    let from = escape_dot(&edge.from);
    let to = escape_dot(&edge.to);
    let attack_ids: BTreeSet<&str> = edge.markings.iter().map(|m| m.attack.as_str()).collect();
    let joined = attack_ids.into_iter().collect::<Vec<_>>().join(", ");
    let label = match (&edge.label, edge.is_bold()) {
        (Some(text), false) => Some(escape_dot(text)),
        (Some(text), true) => Some(format!("{}\\n{joined}", escape_dot(text))),
        (None, true) => Some(joined),
        (None, false) => None,
    };
    let mut attributes = Vec::new();
    if let Some(label) = label {
        attributes.push(format!("label=\"{label}\""));
    }
    if edge.is_bold() {
        attributes.push("penwidth=2".to_string());
        attributes.push(format!("color={}", edge_color(edge)));
    }
    if attributes.is_empty() {
        format!("\"{from}\" -> \"{to}\";")
    } else {
        format!("\"{from}\" -> \"{to}\" [{}];", attributes.join(", "))
    }
}

fn emit_cluster(
    out: &mut String,
    children: &BTreeMap<&str, Vec<&AfdNode>>,
    node: &AfdNode,
    depth: usize,
    emitted: &mut BTreeSet<String>,
) {
    let indent = "  ".repeat(depth);
    emitted.insert(node.id.clone());
    let _ = writeln!(out, "{indent}subgraph \"cluster_{}\" {{", escape_dot(&node.id));
    let _ = writeln!(out, "{indent}  label=\"{}\";", escape_dot(&node.label));
    let _ = writeln!(out, "{indent}  style=dashed;");
    let members = children.get(node.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
    for member in members {
        if member.kind == NodeKind::LogicalEncapsulation {
            emit_cluster(out, children, member, depth + 1, emitted);
        }
    }
    for member in members {
        if member.kind != NodeKind::LogicalEncapsulation {
            emitted.insert(member.id.clone());
            let _ = writeln!(out, "{indent}  {}", node_statement(member));
        }
    }
    let _ = writeln!(out, "{indent}}}");
}

/// Renders the diagram as Graphviz DOT text: component kinds map to node
/// shapes, logical encapsulations become clusters, and bold edges render
/// penwidth 2 in blue (known), red (new), or purple (mixed). Emission order
/// is sorted, so equal diagrams produce byte-identical output.
pub fn export_dot(afd: &Afd) -> Result<String> {
    let violations = structural_violations(afd);
    if !violations.is_empty() {
        return Err(Error::InvalidDiagram {
            diagram: afd.id.clone(),
            violations: violations.iter().map(|v| v.to_string()).collect(),
        });
    }

    let mut children: BTreeMap<&str, Vec<&AfdNode>> = BTreeMap::new();
    for node in afd.nodes() {
        if let Some(parent) = &node.parent {
            children.entry(parent.as_str()).or_default().push(node);
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", escape_dot(&afd.id));
    let _ = writeln!(out, "  label=\"{}\";", escape_dot(&afd.title));
    let _ = writeln!(out, "  labelloc=t;");
    let _ = writeln!(out, "  rankdir=LR;");

    let mut emitted = BTreeSet::new();
    for node in afd.nodes() {
        if node.kind == NodeKind::LogicalEncapsulation && node.parent.is_none() {
            emit_cluster(&mut out, &children, node, 1, &mut emitted);
        }
    }
    for node in afd.nodes() {
        if node.parent.is_none() && !emitted.contains(&node.id) {
            emitted.insert(node.id.clone());
            let _ = writeln!(out, "  {}", node_statement(node));
        }
    }
    // Anything left over sits under an unreachable parent (e.g. a parent
    // cycle); emit it flat so the output stays total and deterministic.
    for node in afd.nodes() {
        if !emitted.contains(&node.id) {
            let _ = writeln!(out, "  {}", node_statement(node));
        }
    }

    let mut edges: Vec<&AfdEdge> = afd.edges.iter().collect();
    edges.sort_by(|a, b| {
        a.from
            .cmp(&b.from)
            .then_with(|| a.to.cmp(&b.to))
            .then_with(|| a.label.cmp(&b.label))
    });
    for edge in edges {
        let _ = writeln!(out, "  {}", edge_statement(edge));
    }
    let _ = writeln!(out, "}}");
    Ok(out)
}
