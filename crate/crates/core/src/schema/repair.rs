//! Tolerant parsing of model-emitted DNA JSON.
//!
//! Models wrap JSON in markdown fences, leave `//` comments from the prompt
//! skeleton, add chatter around the object and leave trailing commas. A fixed
//! sequence of repairs runs before a strict parse:
//!
//! 1. strip code fences
//! 2. strip `//` line comments (outside string literals)
//! 3. keep the outermost balanced `{...}` span
//! 4. drop trailing commas before `}` / `]`
//!
//! Repairs are purely syntactic. Vocabulary tokens are never coerced.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{
    sort_violations, validate_dna, KeyInteractingAgents, OddAttributes, RoadTopology,
    ScenarioCriticality, ScenarioDna, ValidationReport, Violation,
};

const TAIL_CHARS: usize = 240;
const MAX_SPAN_ATTEMPTS: usize = 64;
const INTEGRAL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairStage {
    StripFences = 1,
    StripComments = 2,
    BalancedSpan = 3,
    TrailingCommas = 4,
    StrictParse = 5,
}

impl RepairStage {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for RepairStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RepairStage::StripFences => "strip code fences",
            RepairStage::StripComments => "strip line comments",
            RepairStage::BalancedSpan => "balanced brace span",
            RepairStage::TrailingCommas => "remove trailing commas",
            RepairStage::StrictParse => "strict parse",
        };
        write!(f, "stage {} ({name})", self.number())
    }
}

/// No JSON object could be recovered from the text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{stage}: {detail}")]
pub struct ParseError {
    pub stage: RepairStage,
    pub detail: String,
    /// Last characters of the raw input, kept for audit.
    pub tail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DnaError {
    #[error("unparseable DNA: {0}")]
    Parse(ParseError),
    #[error("DNA failed validation: {0}")]
    Invalid(ValidationReport),
}

impl DnaError {
    pub fn validation_report(&self) -> Option<&ValidationReport> {
        match self {
            DnaError::Invalid(report) => Some(report),
            DnaError::Parse(_) => None,
        }
    }
}

fn tail_of(raw: &str) -> String {
    let count = raw.chars().count();
    raw.chars().skip(count.saturating_sub(TAIL_CHARS)).collect()
}

fn strip_fences(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find("```") {
        out.push_str(&rest[..pos]);
        out.push(' ');
        rest = &rest[pos + 3..];
        // language tag directly after the opening fence, e.g. ```json
        let tag_len = rest
            .char_indices()
            .find(|(_, c)| !c.is_ascii_alphanumeric())
            .map_or(rest.len(), |(i, _)| i);
        rest = &rest[tag_len..];
    }
    out.push_str(rest);
    out
}

fn strip_line_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    let mut in_string = false;
    let mut escaped = false;
    while let Some(c) = chars.next() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            '/' if chars.peek() == Some(&'/') => {
                for skipped in chars.by_ref() {
                    if skipped == '\n' {
                        out.push('\n');
                        break;
                    }
                }
            }
            _ => out.push(c),
        }
    }
    out
}

/// End offset (exclusive) of the object opening at `start`, if it closes.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Balanced `{...}` spans in order of their opening brace. A span nested in
/// an earlier one is skipped, so the first entry is the outermost object.
fn balanced_spans(text: &str) -> Vec<&str> {
    let mut spans = Vec::new();
    let mut covered = 0;
    for (start, _) in text.match_indices('{').take(MAX_SPAN_ATTEMPTS) {
        if start < covered {
            continue;
        }
        if let Some(end) = balanced_end(text, start) {
            spans.push(&text[start..end]);
            covered = end;
        }
    }
    spans
}

fn remove_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        if c == '"' {
            in_string = true;
        } else if c == ',' {
            let next = chars[i + 1..].iter().find(|n| !n.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn repaired_spans(raw: &str) -> Result<Vec<String>, ParseError> {
    let unfenced = strip_fences(raw);
    let uncommented = strip_line_comments(&unfenced);
    let spans = balanced_spans(&uncommented);
    if spans.is_empty() {
        return Err(ParseError {
            stage: RepairStage::BalancedSpan,
            detail: "no balanced JSON object found".into(),
            tail: tail_of(raw),
        });
    }
    Ok(spans.into_iter().map(remove_trailing_commas).collect())
}

/// Runs the four repair stages and returns the outermost candidate object.
pub fn repair_stages(raw: &str) -> Result<String, ParseError> {
    repaired_spans(raw).map(|mut spans| spans.swap_remove(0))
}

/// Parses and validates a model completion (think-trace already removed).
///
/// When chatter before the payload contains its own braces, later spans are
/// tried in order; the first one that parses as JSON wins.
pub fn parse_dna(raw_text: &str) -> Result<ScenarioDna, DnaError> {
    let spans = repaired_spans(raw_text).map_err(DnaError::Parse)?;
    let mut first_error = None;
    let mut root = None;
    for span in &spans {
        match serde_json::from_str::<Map<String, Value>>(span) {
            Ok(map) => {
                root = Some(map);
                break;
            }
            Err(e) => {
                first_error.get_or_insert(e.to_string());
            }
        }
    }
    let Some(root) = root else {
        return Err(DnaError::Parse(ParseError {
            stage: RepairStage::StrictParse,
            detail: first_error.unwrap_or_default(),
            tail: tail_of(raw_text),
        }));
    };
    let mut extractor = Extractor::default();
    let dna = extractor.build(&root);

    let structural: Vec<String> = extractor.violations.iter().map(|v| v.path.clone()).collect();
    let mut violations = extractor.violations;
    violations.extend(
        validate_dna(&dna)
            .violations
            .into_iter()
            .filter(|v| !structural.iter().any(|p| v.path.starts_with(p.as_str()))),
    );
    if violations.is_empty() {
        return Ok(dna);
    }
    sort_violations(&mut violations);
    Err(DnaError::Invalid(ValidationReport::from_violations(violations)))
}

const MISSING: &str = "<missing>";

#[derive(Default)]
struct Extractor {
    violations: Vec<Violation>,
    /// Layers present but not objects; their leaves are not reported again.
    broken_layers: Vec<String>,
}

impl Extractor {
    fn flag(&mut self, path: &str, offending: impl Into<String>, expected: impl Into<String>) {
        if self.broken_layers.iter().any(|layer| path.starts_with(&format!("{layer}."))) {
            return;
        }
        self.violations.push(Violation {
            path: path.to_string(),
            offending_value: offending.into(),
            expected: expected.into(),
        });
    }

    fn layer<'a>(&mut self, root: &'a Map<String, Value>, name: &str, keys: &[&str]) -> Option<&'a Map<String, Value>> {
        match root.get(name) {
            Some(Value::Object(map)) => {
                for key in map.keys() {
                    if !keys.contains(&key.as_str()) {
                        tracing::warn!(layer = name, key = %key, "ignoring unknown DNA key");
                    }
                }
                Some(map)
            }
            Some(other) => {
                self.flag(name, other.to_string(), format!("{name} (object)"));
                self.broken_layers.push(name.to_string());
                None
            }
            None => None,
        }
    }

    fn string(&mut self, layer: Option<&Map<String, Value>>, layer_name: &str, key: &str) -> String {
        let path = format!("{layer_name}.{key}");
        match layer.and_then(|m| m.get(key)) {
            Some(Value::String(s)) => s.clone(),
            Some(other) => {
                self.flag(&path, other.to_string(), key);
                String::new()
            }
            None => {
                self.flag(&path, MISSING, key);
                String::new()
            }
        }
    }

    fn string_list(&mut self, value: Option<&Value>, path: &str, vocab: &str) -> Option<Vec<String>> {
        let items = match value? {
            Value::Array(items) => items,
            // A bare token where a list is expected is a shape slip, not a
            // vocabulary coercion.
            Value::String(s) => return Some(vec![s.clone()]),
            other => {
                self.flag(path, other.to_string(), format!("{vocab} (list)"));
                return Some(Vec::new());
            }
        };
        let mut out = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            match item {
                Value::String(s) => out.push(s.clone()),
                other => self.flag(&format!("{path}[{i}]"), other.to_string(), vocab),
            }
        }
        Some(out)
    }

    fn risk(&mut self, layer: Option<&Map<String, Value>>) -> i64 {
        let path = "scenario_criticality.risk_score";
        let expected = "risk_score (integer 0-10)";
        match layer.and_then(|m| m.get("risk_score")) {
            Some(Value::Number(n)) => {
                if let Some(i) = n.as_i64() {
                    return i;
                }
                let f = n.as_f64().unwrap_or(f64::NAN);
                if f.is_finite() && (f - f.round()).abs() <= INTEGRAL_EPS && f.abs() < 1e15 {
                    f.round() as i64
                } else {
                    self.flag(path, n.to_string(), expected);
                    0
                }
            }
            Some(other) => {
                self.flag(path, other.to_string(), expected);
                0
            }
            None => {
                self.flag(path, MISSING, expected);
                0
            }
        }
    }

    fn build(&mut self, root: &Map<String, Value>) -> ScenarioDna {
        const ROOT_KEYS: [&str; 6] = [
            "odd_attributes",
            "road_topology",
            "key_interacting_agents",
            "scenario_criticality",
            "wod_e2e_tags",
            "description",
        ];
        for key in root.keys() {
            if !ROOT_KEYS.contains(&key.as_str()) {
                tracing::warn!(key = %key, "ignoring unknown DNA key");
            }
        }

        let odd_keys = ["weather", "time_of_day", "lighting_condition", "road_surface_friction", "sensor_integrity"];
        let odd = self.layer(root, "odd_attributes", &odd_keys);
        let odd_attributes = OddAttributes {
            weather: self.string(odd, "odd_attributes", "weather"),
            time_of_day: self.string(odd, "odd_attributes", "time_of_day"),
            lighting_condition: self.string(odd, "odd_attributes", "lighting_condition"),
            road_surface_friction: self.string(odd, "odd_attributes", "road_surface_friction"),
            sensor_integrity: self.string(odd, "odd_attributes", "sensor_integrity"),
        };

        let topo_keys = ["scene_type", "lane_configuration", "drivable_area_status", "traffic_controls"];
        let topo = self.layer(root, "road_topology", &topo_keys);
        let mut traffic_controls = self
            .string_list(
                topo.and_then(|m| m.get("traffic_controls")),
                "road_topology.traffic_controls",
                "traffic_controls",
            )
            .unwrap_or_default();
        if traffic_controls.is_empty() {
            traffic_controls.push("none".into());
        }
        let road_topology = RoadTopology {
            scene_type: self.string(topo, "road_topology", "scene_type"),
            lane_configuration: self.string(topo, "road_topology", "lane_configuration"),
            drivable_area_status: self.string(topo, "road_topology", "drivable_area_status"),
            traffic_controls,
        };

        let agent_keys = ["vru_status", "lead_vehicle_behavior", "adjacent_vehicle_behavior", "special_agent_class"];
        let agents = self.layer(root, "key_interacting_agents", &agent_keys);
        let key_interacting_agents = KeyInteractingAgents {
            vru_status: self.string(agents, "key_interacting_agents", "vru_status"),
            lead_vehicle_behavior: self.string(agents, "key_interacting_agents", "lead_vehicle_behavior"),
            adjacent_vehicle_behavior: self.string(agents, "key_interacting_agents", "adjacent_vehicle_behavior"),
            special_agent_class: self.string(agents, "key_interacting_agents", "special_agent_class"),
        };

        let crit_keys = ["primary_challenge", "ego_required_action", "blocking_factor", "risk_score"];
        let crit = self.layer(root, "scenario_criticality", &crit_keys);
        let scenario_criticality = ScenarioCriticality {
            primary_challenge: self.string(crit, "scenario_criticality", "primary_challenge"),
            ego_required_action: self.string(crit, "scenario_criticality", "ego_required_action"),
            blocking_factor: self.string(crit, "scenario_criticality", "blocking_factor"),
            risk_score: self.risk(crit),
        };

        let wod_e2e_tags = match self.string_list(root.get("wod_e2e_tags"), "wod_e2e_tags", "wod_e2e_tags") {
            Some(tags) => {
                let mut unique = Vec::with_capacity(tags.len());
                for tag in tags {
                    if unique.contains(&tag) {
                        tracing::warn!(tag = %tag, "dropping duplicate tag");
                    } else {
                        unique.push(tag);
                    }
                }
                unique
            }
            None => {
                self.flag("wod_e2e_tags", MISSING, "wod_e2e_tags");
                Vec::new()
            }
        };

        let description = match root.get("description") {
            Some(Value::String(s)) => s.clone(),
            Some(other) => {
                self.flag("description", other.to_string(), "non-empty description");
                String::new()
            }
            None => {
                self.flag("description", MISSING, "non-empty description");
                String::new()
            }
        };

        ScenarioDna {
            odd_attributes,
            road_topology,
            key_interacting_agents,
            scenario_criticality,
            wod_e2e_tags,
            description,
        }
    }
}
