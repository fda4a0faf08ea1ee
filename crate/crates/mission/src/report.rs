//! Mission report: the JSON record a run leaves behind.

use serde::Serialize;

use crate::machine::{MissionPhase, Transition};

#[derive(Debug, Clone, Serialize)]
pub struct PhaseSpan {
    pub phase: String,
    pub enter_t: f64,
    pub duration: f64,
}

/// Everything a mission run reports. All times are simulator-clock seconds.
#[derive(Debug, Clone, Serialize)]
pub struct MissionReport {
    pub seed: u64,
    pub success: bool,
    pub final_phase: String,
    pub retries: u32,
    pub collision_events: u32,
    pub invariant_violations: u32,
    pub stale_events: u32,
    pub placed_within_m: Option<f64>,
    pub duration_s: f64,
    pub phases: Vec<PhaseSpan>,
    pub transitions: Vec<[String; 2]>,
}

impl MissionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Fold the transition log into per-phase spans. The first span starts at
/// zero in the initial phase; the final span ends at `end_t`.
pub fn phase_spans(transitions: &[Transition], initial: MissionPhase, end_t: f64) -> Vec<PhaseSpan> {
    let mut spans = Vec::new();
    let mut phase = initial;
    let mut entered = 0.0;
    for tr in transitions {
        spans.push(PhaseSpan {
            phase: phase.name().to_string(),
            enter_t: entered,
            duration: tr.t - entered,
        });
        phase = tr.to;
        entered = tr.t;
    }
    spans.push(PhaseSpan {
        phase: phase.name().to_string(),
        enter_t: entered,
        duration: end_t - entered,
    });
    spans
}
