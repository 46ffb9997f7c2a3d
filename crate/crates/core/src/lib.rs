//! Risk-assessment engine for medical imaging devices: an attack-pattern
//! catalog, device attack records mapped onto it, attack-flow diagrams with
//! DOT export, expert-panel aggregation, likelihood/severity/risk scoring
//! with prioritization, and the rank/paired statistics used to validate the
//! scores.

pub mod afd;
pub mod attacks;
pub mod capec;
pub mod elicitation;
pub mod error;
pub mod report;
pub mod risk;
pub mod stats;

pub use error::{Error, Result};
