//! Synthetic scenes for offline runs: manifest, detections and truth labels.
//!
//! Each scene follows one archetype. Every object the truth asserts is
//! placed in the detections above any sane tau, and truths satisfy the
//! causality rules, so a noise-free scout reproduces the truth exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::PipelineError;
use crate::eval::{primary_category, GoldLabel};
use crate::gateway::derive_seed;
use crate::resources::VOCABULARY;
use crate::inventory::{BoxGeom, Camera, Detection, FrameEntry, ImagePaths};
use crate::schema::{nominal_dna, ScenarioDna};

pub const IMAGE_W: f64 = 1600.0;
pub const IMAGE_H: f64 = 900.0;
pub const SIM_ANNOTATOR: &str = "simulation";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Archetype {
    Cruise,
    Construction,
    Crossing,
    Emergency,
    Debris,
    RainNight,
    SchoolBus,
}

const ARCHETYPES: [Archetype; 7] = [
    Archetype::Cruise,
    Archetype::Construction,
    Archetype::Crossing,
    Archetype::Emergency,
    Archetype::Debris,
    Archetype::RainNight,
    Archetype::SchoolBus,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Size {
    Large,
    Med,
    Small,
}

/// Object to place: (class, camera, size).
type Placement = (&'static str, Camera, Size);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimDataset {
    pub manifest: Vec<FrameEntry>,
    pub detections: Vec<Detection>,
    pub truth: Vec<GoldLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimPaths {
    pub manifest: PathBuf,
    pub detections: PathBuf,
    pub truth: PathBuf,
}

/// Tags in vocabulary order, the order the consensus writes them.
fn set(dna: &mut ScenarioDna, tags: &[&str]) {
    let mut tags: Vec<String> = tags.iter().map(|t| t.to_string()).collect();
    tags.sort_by_key(|t| VOCABULARY.position("wod_e2e_tags", t));
    dna.wod_e2e_tags = tags;
}

/// Truth DNA plus the objects that corroborate it.
fn scene_truth(archetype: Archetype, rng: &mut ChaCha8Rng) -> (ScenarioDna, Vec<Placement>) {
    use Camera::{FrontCenter as C, FrontLeft as L, FrontRight as R};
    let mut d = nominal_dna();
    let mut objects: Vec<Placement> = Vec::new();
    match archetype {
        Archetype::Cruise => {
            d.road_topology.scene_type = ["urban_street", "highway", "rural_road"].choose(rng).unwrap().to_string();
            d.scenario_criticality.risk_score = rng.random_range(0..=2);
            d.description = "Free-flowing traffic with no notable hazard ahead.".into();
            objects.push(("car", C, Size::Small));
        }
        Archetype::Construction => {
            d.road_topology.scene_type = "construction_zone".into();
            d.road_topology.lane_configuration = ["merge_left", "merge_right"].choose(rng).unwrap().to_string();
            d.road_topology.drivable_area_status = "restricted_by_static_obstacle".into();
            d.key_interacting_agents.vru_status = "roadside_static".into();
            d.scenario_criticality.primary_challenge = "violation_of_map_topology".into();
            d.scenario_criticality.ego_required_action = "nudge_around_static_obstacle".into();
            d.scenario_criticality.blocking_factor = "construction_barrier".into();
            d.scenario_criticality.risk_score = rng.random_range(6..=8);
            set(&mut d, &["construction", "lane_diversion"]);
            d.description = "Drums and cones close a lane; a worker stands by the taper.".into();
            let drums = rng.random_range(2..=4);
            objects.extend((0..drums).map(|_| ("orange drum", L, Size::Large)));
            objects.push(("traffic cone", L, Size::Med));
            objects.push(("construction worker", C, Size::Med));
            if rng.random_bool(0.5) {
                d.key_interacting_agents.special_agent_class = "construction_machinery".into();
                objects.push(("excavator", R, Size::Med));
                set(&mut d, &["construction", "lane_diversion", "special_vehicle"]);
            }
        }
        Archetype::Crossing => {
            d.road_topology.scene_type = "intersection".into();
            d.road_topology.lane_configuration = "intersection_4way".into();
            d.road_topology.traffic_controls = vec!["green_light".into()];
            d.key_interacting_agents.vru_status = ["jaywalking_fast", "jaywalking_hesitant"].choose(rng).unwrap().to_string();
            d.scenario_criticality.primary_challenge = "prediction_uncertainty".into();
            d.scenario_criticality.ego_required_action = ["yield", "stop"].choose(rng).unwrap().to_string();
            d.scenario_criticality.blocking_factor = "pedestrian".into();
            d.scenario_criticality.risk_score = rng.random_range(7..=9);
            set(&mut d, &["vru_hazard", "intersection_complex"]);
            d.description = "A pedestrian steps into the crosswalk against the signal.".into();
            objects.push(("pedestrian", C, Size::Large));
            objects.push(("traffic light", C, Size::Small));
        }
        Archetype::Emergency => {
            let (class, value) = *[("ambulance", "ambulance"), ("fire truck", "fire_truck"), ("police car", "police_car")]
                .choose(rng)
                .unwrap();
            d.key_interacting_agents.special_agent_class = value.into();
            d.scenario_criticality.primary_challenge = "prediction_uncertainty".into();
            d.scenario_criticality.ego_required_action = ["yield", "slow_down"].choose(rng).unwrap().to_string();
            d.scenario_criticality.risk_score = rng.random_range(5..=6);
            set(&mut d, &["special_vehicle"]);
            d.description = "An emergency vehicle approaches with lights on.".into();
            objects.push((class, R, Size::Med));
        }
        Archetype::Debris => {
            let class = *["tire", "cardboard box", "debris"].choose(rng).unwrap();
            d.road_topology.drivable_area_status = "restricted_by_static_obstacle".into();
            d.scenario_criticality.ego_required_action = "nudge_around_static_obstacle".into();
            d.scenario_criticality.blocking_factor = "debris".into();
            d.scenario_criticality.risk_score = rng.random_range(5..=7);
            set(&mut d, &["fod_debris"]);
            d.description = "Loose debris lies in the ego lane.".into();
            objects.push((class, C, Size::Med));
        }
        Archetype::RainNight => {
            d.odd_attributes.weather = ["rain", "heavy_rain"].choose(rng).unwrap().to_string();
            d.odd_attributes.time_of_day = "night".into();
            d.odd_attributes.lighting_condition = "streetlights_only".into();
            d.odd_attributes.road_surface_friction = "wet".into();
            d.odd_attributes.sensor_integrity = "droplets_on_lens".into();
            d.scenario_criticality.primary_challenge = "perception_degradation".into();
            d.scenario_criticality.ego_required_action = "slow_down".into();
            d.scenario_criticality.risk_score = rng.random_range(4..=5);
            set(&mut d, &["weather_adverse"]);
            d.description = "Wet night driving with droplets on the lens.".into();
            objects.push(("car", C, Size::Med));
        }
        Archetype::SchoolBus => {
            d.key_interacting_agents.special_agent_class = "school_bus".into();
            d.key_interacting_agents.lead_vehicle_behavior = "stalled".into();
            d.scenario_criticality.ego_required_action = "stop".into();
            d.scenario_criticality.blocking_factor = "vehicle".into();
            d.scenario_criticality.risk_score = 6;
            set(&mut d, &["special_vehicle"]);
            d.description = "A school bus is stopped ahead in the ego lane.".into();
            objects.push(("school bus", C, Size::Large));
        }
    }
    (d, objects)
}

fn detection(frame_id: &str, (class, camera, size): Placement, confidence: f64, rng: &mut ChaCha8Rng) -> Detection {
    // Areas chosen well inside each bucket: ~0.16, ~0.03, ~0.004 of the image.
    let (w, h) = match size {
        Size::Large => (640.0, 360.0),
        Size::Med => (260.0, 160.0),
        Size::Small => (80.0, 70.0),
    };
    let x = rng.random_range(0.0..IMAGE_W - w);
    let y = rng.random_range(0.0..IMAGE_H - h);
    Detection {
        frame_id: frame_id.to_string(),
        camera,
        class_name: class.to_string(),
        confidence: (confidence * 100.0).round() / 100.0,
        bbox: BoxGeom { x: x.round(), y: y.round(), w, h },
        image_w: IMAGE_W,
        image_h: IMAGE_H,
    }
}

/// Generates `n_scenes` scenes of `frames_per_scene` frames, cycling through
/// the archetypes so small runs still see every one.
pub fn simulate(n_scenes: usize, frames_per_scene: usize, seed: u64) -> SimDataset {
    let mut out = SimDataset::default();
    let epoch = DateTime::<Utc>::UNIX_EPOCH;
    for s in 0..n_scenes {
        let scene_id = format!("scene-{s:04}");
        let archetype = ARCHETYPES[s % ARCHETYPES.len()];
        for f in 0..frames_per_scene {
            let frame_id = format!("{scene_id}-f{f:02}");
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["sim", &frame_id]));
            let (dna, objects) = scene_truth(archetype, &mut rng);
            for object in objects {
                let conf = rng.random_range(0.45..0.95);
                out.detections.push(detection(&frame_id, object, conf, &mut rng));
            }
            // Clutter: a low-confidence hit that the filter drops and an
            // unmapped label that never counts as evidence.
            let lowconf = rng.random_range(0.02..0.14);
            out.detections.push(detection(&frame_id, ("plastic bag", Camera::FrontRight, Size::Small), lowconf, &mut rng));
            if rng.random_bool(0.3) {
                let conf = rng.random_range(0.3..0.6);
                out.detections.push(detection(&frame_id, ("mailbox", Camera::FrontLeft, Size::Small), conf, &mut rng));
            }
            let image = |cam: &str| format!("images/{frame_id}/{cam}.jpg");
            out.manifest.push(FrameEntry {
                frame_id: frame_id.clone(),
                scene_id: scene_id.clone(),
                keyframe_slot: None,
                image_paths: ImagePaths {
                    front_left: image("CAM_FRONT_LEFT"),
                    front_center: image("CAM_FRONT"),
                    front_right: image("CAM_FRONT_RIGHT"),
                },
            });
            out.truth.push(GoldLabel {
                frame_id,
                category: primary_category(&dna),
                dna,
                annotator: SIM_ANNOTATOR.into(),
                verified_at: epoch,
            });
        }
    }
    out
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let io = |e: std::io::Error| PipelineError::Io { path: path.display().to_string(), detail: e.to_string() };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

impl SimDataset {
    pub fn write_to(&self, dir: &Path) -> Result<SimPaths, PipelineError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| PipelineError::Io { path: dir.display().to_string(), detail: e.to_string() })?;
        let paths = SimPaths {
            manifest: dir.join("manifest.jsonl"),
            detections: dir.join("detections.jsonl"),
            truth: dir.join("truth.jsonl"),
        };
        write_jsonl(&paths.manifest, &self.manifest)?;
        write_jsonl(&paths.detections, &self.detections)?;
        write_jsonl(&paths.truth, &self.truth)?;
        Ok(paths)
    }
}
