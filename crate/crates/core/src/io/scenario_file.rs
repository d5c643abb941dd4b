use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Gains;
use crate::error::FormationError;
use crate::formation::{Configuration, FormationGraph};
use crate::sim::{LeaderCommand, Scenario, Segment, DEFAULT_DT, DEFAULT_PERTURBATION};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed scenario at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid field `{field}`: {message}")]
    Field { field: String, message: String },
}

impl ScenarioError {
    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Field {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Leader,
    Follower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: String,
    pub role: Role,
    /// Initial position; omitted means "start at the target", perturbed for followers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub t0: f64,
    pub t1: f64,
    /// Common leader velocity; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vc: Option<Vec<f64>>,
    /// Scaling rate `k0` in 1/s: the target scale changes at `k0 * s(t0)`.
    #[serde(default)]
    pub scale_rate: f64,
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub dimension: usize,
    pub agents: Vec<AgentEntry>,
    pub reference_positions: BTreeMap<String, Vec<f64>>,
    pub edges: Vec<[String; 2]>,
    #[serde(default)]
    pub gains: Gains,
    pub schedule: Vec<SegmentEntry>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_perturbation() -> f64 {
    DEFAULT_PERTURBATION
}

/// Parsed scenario plus the agent ids in internal (leaders-first) order.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub name: String,
    pub ids: Vec<String>,
    pub scenario: Scenario,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario file serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Validates the file and builds a [`Scenario`]. Leaders are renumbered to
    /// come first, each role keeping its order of appearance.
    pub fn to_scenario(&self) -> Result<LoadedScenario, ScenarioError> {
        let d = self.dimension;
        if d < 2 {
            return Err(ScenarioError::field(
                "dimension",
                format!("must be at least 2, got {d}"),
            ));
        }
        if self.agents.is_empty() {
            return Err(ScenarioError::field("agents", "no agents"));
        }

        let mut order: Vec<usize> = (0..self.agents.len())
            .filter(|&k| self.agents[k].role == Role::Leader)
            .collect();
        let n_l = order.len();
        if n_l == 0 {
            return Err(ScenarioError::field(
                "agents",
                "at least one leader is required",
            ));
        }
        order.extend((0..self.agents.len()).filter(|&k| self.agents[k].role == Role::Follower));

        let mut index: HashMap<&str, usize> = HashMap::new();
        for (internal, &k) in order.iter().enumerate() {
            let id = self.agents[k].id.as_str();
            if index.insert(id, internal).is_some() {
                return Err(ScenarioError::field(
                    format!("agents[{k}].id"),
                    format!("duplicate id `{id}`"),
                ));
            }
        }
        let ids: Vec<String> = order.iter().map(|&k| self.agents[k].id.clone()).collect();

        let mut initial_positions = vec![None; ids.len()];
        for (internal, &k) in order.iter().enumerate() {
            if let Some(pos) = &self.agents[k].initial {
                check_vector(&format!("agents[{k}].initial"), pos, d)?;
                initial_positions[internal] = Some(pos.clone());
            }
        }

        for id in self.reference_positions.keys() {
            if !index.contains_key(id.as_str()) {
                return Err(ScenarioError::field(
                    format!("reference_positions.{id}"),
                    "unknown agent id",
                ));
            }
        }
        let mut points = Vec::with_capacity(ids.len());
        for id in &ids {
            let field = format!("reference_positions.{id}");
            let pos = self
                .reference_positions
                .get(id)
                .ok_or_else(|| ScenarioError::field(&field, "missing reference position"))?;
            check_vector(&field, pos, d)?;
            points.push(pos.clone());
        }
        let reference_config = Configuration::from_points(d, &points)
            .map_err(|e| ScenarioError::field("reference_positions", e.to_string()))?;

        let mut edges = Vec::with_capacity(self.edges.len());
        for (k, [a, b]) in self.edges.iter().enumerate() {
            let lookup = |id: &String| {
                index.get(id.as_str()).copied().ok_or_else(|| {
                    ScenarioError::field(format!("edges[{k}]"), format!("unknown agent id `{id}`"))
                })
            };
            edges.push((lookup(a)?, lookup(b)?));
        }
        let graph = FormationGraph::new(ids.len(), d, n_l, edges)
            .map_err(|e| ScenarioError::field("edges", e.to_string()))?;

        let gains = Gains::new(self.gains.kp, self.gains.ki)
            .map_err(|e| ScenarioError::field("gains", e.to_string()))?;

        if self.schedule.is_empty() {
            return Err(ScenarioError::field("schedule", "no segments"));
        }
        let mut schedule = Vec::with_capacity(self.schedule.len());
        for (k, seg) in self.schedule.iter().enumerate() {
            let velocity = match &seg.vc {
                Some(v) => {
                    check_vector(&format!("schedule[{k}].vc"), v, d)?;
                    v.clone()
                }
                None => vec![0.0; d],
            };
            for (name, value) in [
                ("t0", seg.t0),
                ("t1", seg.t1),
                ("scale_rate", seg.scale_rate),
            ] {
                if !value.is_finite() {
                    return Err(ScenarioError::field(
                        format!("schedule[{k}].{name}"),
                        "not finite",
                    ));
                }
            }
            schedule.push(Segment::maneuver(seg.t0, seg.t1, &velocity, seg.scale_rate));
        }

        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ScenarioError::field(
                "dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(ScenarioError::field(
                "duration",
                format!("must be positive, got {}", self.duration),
            ));
        }
        if !(self.perturbation >= 0.0 && self.perturbation.is_finite()) {
            return Err(ScenarioError::field("perturbation", "must be non-negative"));
        }

        Ok(LoadedScenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            ids,
            scenario: Scenario {
                graph,
                reference_config,
                initial_positions,
                perturbation: self.perturbation,
                gains,
                schedule,
                dt: self.dt,
                duration: self.duration,
                seed: self.seed,
                force: false,
            },
        })
    }

    /// Inverse of [`ScenarioFile::to_scenario`] for schedules made of maneuver segments.
    pub fn from_scenario(
        name: &str,
        ids: &[String],
        scenario: &Scenario,
    ) -> Result<Self, FormationError> {
        let graph = &scenario.graph;
        if ids.len() != graph.agent_count() {
            return Err(FormationError::DimensionMismatch {
                what: "agent ids",
                expected: graph.agent_count(),
                found: ids.len(),
            });
        }
        let agents = ids
            .iter()
            .enumerate()
            .map(|(i, id)| AgentEntry {
                id: id.clone(),
                role: if graph.is_leader(i) {
                    Role::Leader
                } else {
                    Role::Follower
                },
                initial: scenario.initial_positions[i].clone(),
            })
            .collect();
        let reference_positions = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), scenario.reference_config.position(i).to_vec()))
            .collect();
        let edges = graph
            .edges()
            .iter()
            .map(|&(i, j)| [ids[i].clone(), ids[j].clone()])
            .collect();
        let schedule = scenario
            .schedule
            .iter()
            .map(|seg| match &seg.command {
                LeaderCommand::Maneuver {
                    velocity,
                    scale_rate,
                } => Ok(SegmentEntry {
                    t0: seg.t_start,
                    t1: seg.t_end,
                    vc: Some(velocity.clone()),
                    scale_rate: *scale_rate,
                }),
                LeaderCommand::Velocities(_) => Err(FormationError::InvalidSchedule(
                    "raw leader velocities have no file representation".into(),
                )),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            name: Some(name.to_string()),
            description: None,
            dimension: graph.dim(),
            agents,
            reference_positions,
            edges,
            gains: scenario.gains,
            schedule,
            dt: scenario.dt,
            duration: scenario.duration,
            seed: scenario.seed,
            perturbation: scenario.perturbation,
        })
    }
}

fn check_vector(field: &str, v: &[f64], d: usize) -> Result<(), ScenarioError> {
    if v.len() != d {
        return Err(ScenarioError::field(
            field,
            format!("expected {d} components, found {}", v.len()),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ScenarioError::field(field, "components must be finite"));
    }
    Ok(())
}
