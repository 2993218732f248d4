//! The four-layer Scenario DNA record, its strict vocabularies and validation.
//!
//! Enum-valued fields are carried as strings and checked against the shipped
//! vocabulary ([`crate::resources::VOCABULARY`]) rather than Rust enums, so
//! the engine and the curator UI read membership from the same data file.

mod repair;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::resources::VOCABULARY;

pub use repair::{parse_dna, repair_stages, DnaError, ParseError, RepairStage};

pub const RISK_MIN: i64 = 0;
pub const RISK_MAX: i64 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OddAttributes {
    pub weather: String,
    pub time_of_day: String,
    pub lighting_condition: String,
    pub road_surface_friction: String,
    pub sensor_integrity: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoadTopology {
    pub scene_type: String,
    pub lane_configuration: String,
    pub drivable_area_status: String,
    pub traffic_controls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyInteractingAgents {
    pub vru_status: String,
    pub lead_vehicle_behavior: String,
    pub adjacent_vehicle_behavior: String,
    pub special_agent_class: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioCriticality {
    pub primary_challenge: String,
    pub ego_required_action: String,
    pub blocking_factor: String,
    pub risk_score: i64,
}

/// Structured description of one frame. Field order is the canonical
/// serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioDna {
    pub odd_attributes: OddAttributes,
    pub road_topology: RoadTopology,
    pub key_interacting_agents: KeyInteractingAgents,
    pub scenario_criticality: ScenarioCriticality,
    pub wod_e2e_tags: Vec<String>,
    pub description: String,
}

impl ScenarioDna {
    pub fn risk(&self) -> i64 {
        self.scenario_criticality.risk_score
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.wod_e2e_tags.iter().any(|t| t == tag)
    }

    pub fn get(&self, field: EnumField) -> &str {
        use EnumField::*;
        let odd = &self.odd_attributes;
        let topo = &self.road_topology;
        let agents = &self.key_interacting_agents;
        let crit = &self.scenario_criticality;
        match field {
            Weather => &odd.weather,
            TimeOfDay => &odd.time_of_day,
            LightingCondition => &odd.lighting_condition,
            RoadSurfaceFriction => &odd.road_surface_friction,
            SensorIntegrity => &odd.sensor_integrity,
            SceneType => &topo.scene_type,
            LaneConfiguration => &topo.lane_configuration,
            DrivableAreaStatus => &topo.drivable_area_status,
            VruStatus => &agents.vru_status,
            LeadVehicleBehavior => &agents.lead_vehicle_behavior,
            AdjacentVehicleBehavior => &agents.adjacent_vehicle_behavior,
            SpecialAgentClass => &agents.special_agent_class,
            PrimaryChallenge => &crit.primary_challenge,
            EgoRequiredAction => &crit.ego_required_action,
            BlockingFactor => &crit.blocking_factor,
        }
    }

    pub fn get_mut(&mut self, field: EnumField) -> &mut String {
        use EnumField::*;
        match field {
            Weather => &mut self.odd_attributes.weather,
            TimeOfDay => &mut self.odd_attributes.time_of_day,
            LightingCondition => &mut self.odd_attributes.lighting_condition,
            RoadSurfaceFriction => &mut self.odd_attributes.road_surface_friction,
            SensorIntegrity => &mut self.odd_attributes.sensor_integrity,
            SceneType => &mut self.road_topology.scene_type,
            LaneConfiguration => &mut self.road_topology.lane_configuration,
            DrivableAreaStatus => &mut self.road_topology.drivable_area_status,
            VruStatus => &mut self.key_interacting_agents.vru_status,
            LeadVehicleBehavior => &mut self.key_interacting_agents.lead_vehicle_behavior,
            AdjacentVehicleBehavior => &mut self.key_interacting_agents.adjacent_vehicle_behavior,
            SpecialAgentClass => &mut self.key_interacting_agents.special_agent_class,
            PrimaryChallenge => &mut self.scenario_criticality.primary_challenge,
            EgoRequiredAction => &mut self.scenario_criticality.ego_required_action,
            BlockingFactor => &mut self.scenario_criticality.blocking_factor,
        }
    }

    /// Sets `field` to `value`. The value is not checked; run
    /// [`validate_dna`] afterwards.
    pub fn set(&mut self, field: EnumField, value: impl Into<String>) {
        *self.get_mut(field) = value.into();
    }
}

/// The single-valued enum fields, in canonical schema order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnumField {
    Weather,
    TimeOfDay,
    LightingCondition,
    RoadSurfaceFriction,
    SensorIntegrity,
    SceneType,
    LaneConfiguration,
    DrivableAreaStatus,
    VruStatus,
    LeadVehicleBehavior,
    AdjacentVehicleBehavior,
    SpecialAgentClass,
    PrimaryChallenge,
    EgoRequiredAction,
    BlockingFactor,
}

impl EnumField {
    pub const ALL: [EnumField; 15] = [
        EnumField::Weather,
        EnumField::TimeOfDay,
        EnumField::LightingCondition,
        EnumField::RoadSurfaceFriction,
        EnumField::SensorIntegrity,
        EnumField::SceneType,
        EnumField::LaneConfiguration,
        EnumField::DrivableAreaStatus,
        EnumField::VruStatus,
        EnumField::LeadVehicleBehavior,
        EnumField::AdjacentVehicleBehavior,
        EnumField::SpecialAgentClass,
        EnumField::PrimaryChallenge,
        EnumField::EgoRequiredAction,
        EnumField::BlockingFactor,
    ];

    /// Field name, which is also the vocabulary section name.
    pub fn name(self) -> &'static str {
        use EnumField::*;
        match self {
            Weather => "weather",
            TimeOfDay => "time_of_day",
            LightingCondition => "lighting_condition",
            RoadSurfaceFriction => "road_surface_friction",
            SensorIntegrity => "sensor_integrity",
            SceneType => "scene_type",
            LaneConfiguration => "lane_configuration",
            DrivableAreaStatus => "drivable_area_status",
            VruStatus => "vru_status",
            LeadVehicleBehavior => "lead_vehicle_behavior",
            AdjacentVehicleBehavior => "adjacent_vehicle_behavior",
            SpecialAgentClass => "special_agent_class",
            PrimaryChallenge => "primary_challenge",
            EgoRequiredAction => "ego_required_action",
            BlockingFactor => "blocking_factor",
        }
    }

    pub fn layer(self) -> &'static str {
        use EnumField::*;
        match self {
            Weather | TimeOfDay | LightingCondition | RoadSurfaceFriction | SensorIntegrity => {
                "odd_attributes"
            }
            SceneType | LaneConfiguration | DrivableAreaStatus => "road_topology",
            VruStatus | LeadVehicleBehavior | AdjacentVehicleBehavior | SpecialAgentClass => {
                "key_interacting_agents"
            }
            PrimaryChallenge | EgoRequiredAction | BlockingFactor => "scenario_criticality",
        }
    }

    /// Dotted JSON path, e.g. `odd_attributes.weather`.
    pub fn path(self) -> String {
        format!("{}.{}", self.layer(), self.name())
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn vocabulary(self) -> &'static [String] {
        VOCABULARY.tokens(self.name())
    }
}

impl fmt::Display for EnumField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub offending_value: String,
    pub expected: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?} (expected {})", self.path, self.offending_value, self.expected)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        Self { valid: violations.is_empty(), violations }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.valid {
            return f.write_str("valid");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{} violation(s): {}", parts.len(), parts.join("; "))
    }
}

/// Dotted paths of every DNA leaf in canonical skeleton order.
pub const CANONICAL_PATHS: [&str; 19] = [
    "odd_attributes.weather",
    "odd_attributes.time_of_day",
    "odd_attributes.lighting_condition",
    "odd_attributes.road_surface_friction",
    "odd_attributes.sensor_integrity",
    "road_topology.scene_type",
    "road_topology.lane_configuration",
    "road_topology.drivable_area_status",
    "road_topology.traffic_controls",
    "key_interacting_agents.vru_status",
    "key_interacting_agents.lead_vehicle_behavior",
    "key_interacting_agents.adjacent_vehicle_behavior",
    "key_interacting_agents.special_agent_class",
    "scenario_criticality.primary_challenge",
    "scenario_criticality.ego_required_action",
    "scenario_criticality.blocking_factor",
    "scenario_criticality.risk_score",
    "wod_e2e_tags",
    "description",
];

/// Sort key for a violation path: canonical leaf position, then list index.
pub(crate) fn path_rank(path: &str) -> (usize, usize) {
    let (base, index) = match path.split_once('[') {
        Some((base, rest)) => (base, rest.trim_end_matches(']').parse().unwrap_or(0)),
        None => (path, 0),
    };
    // A bare layer name sorts with its first leaf.
    let pos = CANONICAL_PATHS
        .iter()
        .position(|p| *p == base)
        .or_else(|| CANONICAL_PATHS.iter().position(|p| p.starts_with(&format!("{base}."))))
        .unwrap_or(CANONICAL_PATHS.len());
    (pos, index)
}

pub(crate) fn sort_violations(violations: &mut [Violation]) {
    violations.sort_by_key(|v| path_rank(&v.path));
}

/// Checks every field of `candidate` and returns all violations, in
/// canonical schema order.
pub fn validate_dna(candidate: &ScenarioDna) -> ValidationReport {
    let mut violations = Vec::new();

    for field in EnumField::ALL {
        let value = candidate.get(field);
        if !VOCABULARY.contains(field.name(), value) {
            violations.push(Violation {
                path: field.path(),
                offending_value: value.to_string(),
                expected: field.name().to_string(),
            });
        }
    }

    let controls = &candidate.road_topology.traffic_controls;
    if controls.is_empty() {
        violations.push(Violation {
            path: "road_topology.traffic_controls".into(),
            offending_value: "[]".into(),
            expected: "traffic_controls (non-empty list)".into(),
        });
    }
    for (i, control) in controls.iter().enumerate() {
        if !VOCABULARY.contains("traffic_controls", control) {
            violations.push(Violation {
                path: format!("road_topology.traffic_controls[{i}]"),
                offending_value: control.clone(),
                expected: "traffic_controls".into(),
            });
        }
    }

    let risk = candidate.scenario_criticality.risk_score;
    if !(RISK_MIN..=RISK_MAX).contains(&risk) {
        violations.push(Violation {
            path: "scenario_criticality.risk_score".into(),
            offending_value: risk.to_string(),
            expected: "risk_score (integer 0-10)".into(),
        });
    }

    for (i, tag) in candidate.wod_e2e_tags.iter().enumerate() {
        if !VOCABULARY.contains("wod_e2e_tags", tag) {
            violations.push(Violation {
                path: format!("wod_e2e_tags[{i}]"),
                offending_value: tag.clone(),
                expected: "wod_e2e_tags".into(),
            });
        } else if candidate.wod_e2e_tags[..i].contains(tag) {
            violations.push(Violation {
                path: format!("wod_e2e_tags[{i}]"),
                offending_value: tag.clone(),
                expected: "wod_e2e_tags (each tag at most once)".into(),
            });
        }
    }

    if candidate.description.trim().is_empty() {
        violations.push(Violation {
            path: "description".into(),
            offending_value: candidate.description.clone(),
            expected: "non-empty description".into(),
        });
    }

    sort_violations(&mut violations);
    ValidationReport::from_violations(violations)
}

#[derive(Debug, thiserror::Error)]
#[error("refusing to serialize invalid DNA: {0}")]
pub struct InvalidDna(pub ValidationReport);

/// Canonical pretty-printed JSON in skeleton key order.
pub fn serialize_dna(dna: &ScenarioDna) -> Result<String, InvalidDna> {
    let report = validate_dna(dna);
    if !report.valid {
        return Err(InvalidDna(report));
    }
    Ok(serde_json::to_string_pretty(dna).expect("DNA serialization is infallible"))
}

/// The few-shot construction example embedded in the scout system prompt.
pub fn construction_example() -> ScenarioDna {
    ScenarioDna {
        odd_attributes: OddAttributes {
            weather: "overcast".into(),
            time_of_day: "day".into(),
            lighting_condition: "nominal".into(),
            road_surface_friction: "dry".into(),
            sensor_integrity: "nominal".into(),
        },
        road_topology: RoadTopology {
            scene_type: "construction_zone".into(),
            lane_configuration: "merge_right".into(),
            drivable_area_status: "restricted_by_static_obstacle".into(),
            traffic_controls: vec!["none".into()],
        },
        key_interacting_agents: KeyInteractingAgents {
            vru_status: "roadside_static".into(),
            lead_vehicle_behavior: "nominal".into(),
            adjacent_vehicle_behavior: "none".into(),
            special_agent_class: "construction_machinery".into(),
        },
        scenario_criticality: ScenarioCriticality {
            primary_challenge: "violation_of_map_topology".into(),
            ego_required_action: "nudge_around_static_obstacle".into(),
            blocking_factor: "construction_barrier".into(),
            risk_score: 7,
        },
        wod_e2e_tags: vec!["construction".into(), "lane_diversion".into()],
        description:
            "Active construction zone with barrels closing the left lane, forcing a merge behavior."
                .into(),
    }
}

/// A nominal empty-road DNA; handy as a neutral starting point.
pub fn nominal_dna() -> ScenarioDna {
    ScenarioDna {
        odd_attributes: OddAttributes {
            weather: "clear".into(),
            time_of_day: "day".into(),
            lighting_condition: "nominal".into(),
            road_surface_friction: "dry".into(),
            sensor_integrity: "nominal".into(),
        },
        road_topology: RoadTopology {
            scene_type: "urban_street".into(),
            lane_configuration: "straight".into(),
            drivable_area_status: "nominal".into(),
            traffic_controls: vec!["none".into()],
        },
        key_interacting_agents: KeyInteractingAgents {
            vru_status: "none".into(),
            lead_vehicle_behavior: "nominal".into(),
            adjacent_vehicle_behavior: "none".into(),
            special_agent_class: "none".into(),
        },
        scenario_criticality: ScenarioCriticality {
            primary_challenge: "none".into(),
            ego_required_action: "lane_keep".into(),
            blocking_factor: "none".into(),
            risk_score: 0,
        },
        wod_e2e_tags: Vec::new(),
        description: "Empty road with nominal following.".into(),
    }
}
