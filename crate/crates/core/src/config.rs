//! JSON scenario files for the tracking experiment.
//!
//! ```json
//! {
//!   "error_threshold": 0.02,
//!   "bodies": [
//!     {"name": "base", "parent": null, "pose": {"rotvec": [0, 0, 0], "trans": [0, 0, 0]},
//!      "joint": {"axes": ["rot_x", "rot_y", "rot_z", "trans_x", "trans_y", "trans_z"]},
//!      "mesh_path": "base.obj"}
//!   ],
//!   "constraints": [],
//!   "trajectory": {"base": [{"amplitude": 0.1, "period": 50}]}
//! }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::constraints::Constraint;
use crate::error::ConfigError;
use crate::kinematics::{Axis, AxisMask, FixedSide, Joint, KinematicStructure};
use crate::metrics::Mesh;
use crate::se3::{Pose, Variation, Vec3};
use crate::solver::Regularization;

#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    #[serde(default)]
    pub rotvec: [f64; 3],
    #[serde(default)]
    pub trans: [f64; 3],
}

impl PoseSpec {
    pub fn to_pose(&self) -> Pose {
        Pose::from_rotvec_translation(Vec3::from(self.rotvec), Vec3::from(self.trans))
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub fixed_side: FixedSide,
    pub joint_to_model: Option<PoseSpec>,
    pub parent_to_joint: Option<PoseSpec>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MeshPaths {
    One(String),
    Many(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    pub name: String,
    #[serde(default)]
    pub parent: Option<String>,
    pub joint: JointSpec,
    pub pose: PoseSpec,
    #[serde(default)]
    pub mesh_path: Option<MeshPaths>,
    #[serde(default)]
    pub mesh_vertices: Option<Vec<[f64; 3]>>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub body_a: String,
    pub body_b: String,
    #[serde(default)]
    pub frame_a: PoseSpec,
    #[serde(default)]
    pub frame_b: PoseSpec,
    pub axes: Vec<Axis>,
}

/// `offset + amplitude * sin(2 pi step / period + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waveform {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
}

fn default_period() -> f64 {
    100.0
}

impl Waveform {
    pub fn at(&self, step: usize) -> f64 {
        self.offset + self.amplitude * (2.0 * std::f64::consts::PI * step as f64 / self.period + self.phase).sin()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub rot: f64,
    #[serde(default)]
    pub trans: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyWeights {
    pub weight_rot: f64,
    pub weight_trans: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights { weight_rot: 1000.0, weight_trans: 100_000.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationSpec {
    pub lambda_r: f64,
    pub lambda_t: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingConfig {
    pub bodies: Vec<BodySpec>,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    pub error_threshold: f64,
    #[serde(default)]
    pub trajectory: BTreeMap<String, Vec<Waveform>>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_iterations")]
    pub iterations_per_step: usize,
    #[serde(default)]
    pub energy: EnergyWeights,
    #[serde(default)]
    pub regularization: Option<RegularizationSpec>,
}

fn default_iterations() -> usize {
    3
}

impl TrackingConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse { line: inner.line(), column: inner.column(), field, message: inner.to_string() }
        })
    }
}

/// A validated tracking scenario: the reference structure (poses at
/// zero joint motion), meshes, and the scripted joint trajectory.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub structure: KinematicStructure,
    pub meshes: Vec<Vec<Mesh>>,
    /// Per body, one waveform per joint coordinate (empty means at rest).
    pub trajectory: Vec<Vec<Waveform>>,
    pub error_threshold: f64,
    pub noise: NoiseSpec,
    pub iterations_per_step: usize,
    pub energy: EnergyWeights,
    pub regularization: Regularization,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Scenario::from_config(TrackingConfig::parse(&text)?, &base)
    }

    /// Mesh paths are resolved against `base`.
    pub fn from_config(cfg: TrackingConfig, base: &Path) -> Result<Self, ConfigError> {
        if cfg.bodies.is_empty() {
            return Err(ConfigError::invalid("bodies", "at least one body is required"));
        }
        if cfg.error_threshold.is_nan() || cfg.error_threshold <= 0.0 {
            return Err(ConfigError::invalid("error_threshold", "must be positive"));
        }
        if cfg.noise.rot < 0.0 || cfg.noise.trans < 0.0 {
            return Err(ConfigError::invalid("noise", "standard deviations must be non-negative"));
        }
        if cfg.iterations_per_step == 0 {
            return Err(ConfigError::invalid("iterations_per_step", "must be at least 1"));
        }
        if cfg.energy.weight_rot < 0.0 || cfg.energy.weight_trans < 0.0 {
            return Err(ConfigError::invalid("energy", "weights must be non-negative"));
        }
        let regularization = match cfg.regularization {
            Some(r) => Regularization::new(r.lambda_r, r.lambda_t).map_err(|e| ConfigError::invalid("regularization", e.to_string()))?,
            None => Regularization::default(),
        };

        let mut structure = KinematicStructure::new();
        let mut meshes = Vec::new();
        for (i, b) in cfg.bodies.iter().enumerate() {
            let field = format!("bodies[{i}]");
            let parent = match &b.parent {
                Some(p) => Some(
                    structure
                        .body_index(p)
                        .ok_or_else(|| ConfigError::invalid(format!("{field}.parent"), format!("unknown or later body {p:?}")))?,
                ),
                None => None,
            };
            let joint = build_joint(&b.joint, parent.is_none(), &field)?;
            structure
                .add_body(b.name.clone(), b.pose.to_pose(), parent, joint)
                .map_err(|e| ConfigError::invalid(format!("{field}.name"), e.to_string()))?;
            meshes.push(load_meshes(b, base, &field)?);
        }

        for (i, c) in cfg.constraints.iter().enumerate() {
            let field = format!("constraints[{i}]");
            let lookup = |name: &str, key: &str| {
                structure.body_index(name).ok_or_else(|| ConfigError::invalid(format!("{field}.{key}"), format!("unknown body {name:?}")))
            };
            let a = lookup(&c.body_a, "body_a")?;
            let b = lookup(&c.body_b, "body_b")?;
            let constraint = Constraint::new(a, b, c.frame_a.to_pose(), c.frame_b.to_pose(), AxisMask::from_axes(&c.axes))
                .map_err(|e| ConfigError::invalid(&field, e.to_string()))?;
            structure.add_constraint(constraint).map_err(|e| ConfigError::invalid(&field, e.to_string()))?;
        }

        let mut trajectory = vec![Vec::new(); structure.len()];
        for (name, waves) in &cfg.trajectory {
            let field = format!("trajectory.{name}");
            let i = structure.body_index(name).ok_or_else(|| ConfigError::invalid(&field, "unknown body"))?;
            let dof = structure.body(i).joint().dof();
            if waves.len() != dof {
                return Err(ConfigError::invalid(&field, format!("joint has {dof} coordinates, got {} waveforms", waves.len())));
            }
            if waves.iter().any(|w| w.period.is_nan() || w.period <= 0.0) {
                return Err(ConfigError::invalid(&field, "period must be positive"));
            }
            trajectory[i] = waves.clone();
        }

        Ok(Scenario {
            structure,
            meshes,
            trajectory,
            error_threshold: cfg.error_threshold,
            noise: cfg.noise,
            iterations_per_step: cfg.iterations_per_step,
            energy: cfg.energy,
            regularization,
        })
    }

    /// Forward kinematics of the reference structure at `step`.
    pub fn ground_truth(&self, step: usize) -> Vec<Pose> {
        let s = &self.structure;
        let mut poses: Vec<Pose> = Vec::with_capacity(s.len());
        for (i, body) in s.bodies().iter().enumerate() {
            let joint = body.joint();
            let coords: Vec<f64> = match self.trajectory[i].is_empty() {
                true => vec![0.0; joint.dof()],
                false => self.trajectory[i].iter().map(|w| w.at(step)).collect(),
            };
            let theta: Variation = crate::kinematics::expand_joint_variation(joint, &coords).expect("validated length");
            let motion = Pose::from_variation(&theta);
            let pose = match body.parent() {
                Some(p) => poses[p] * *joint.parent_to_joint() * motion * *joint.joint_to_model(),
                None => *body.pose() * joint.joint_to_model().inverse() * motion * *joint.joint_to_model(),
            };
            poses.push(pose);
        }
        poses
    }
}

fn build_joint(spec: &JointSpec, is_root: bool, field: &str) -> Result<Joint, ConfigError> {
    let mask = AxisMask::from_axes(&spec.axes);
    if mask.count() != spec.axes.len() {
        return Err(ConfigError::invalid(format!("{field}.joint.axes"), "axes must not repeat"));
    }
    let fixed = match spec.fixed_side {
        FixedSide::JointToModel => {
            if spec.parent_to_joint.is_some() {
                return Err(ConfigError::invalid(format!("{field}.joint.parent_to_joint"), "given, but fixed_side is joint_to_model"));
            }
            spec.joint_to_model.unwrap_or_default()
        }
        FixedSide::ParentToJoint => {
            if is_root {
                return Err(ConfigError::invalid(format!("{field}.joint.fixed_side"), "a root joint has no parent to fix"));
            }
            if spec.joint_to_model.is_some() {
                return Err(ConfigError::invalid(format!("{field}.joint.joint_to_model"), "given, but fixed_side is parent_to_joint"));
            }
            spec.parent_to_joint.unwrap_or_default()
        }
    };
    Ok(Joint::new(mask, spec.fixed_side, fixed.to_pose()))
}

fn load_meshes(b: &BodySpec, base: &Path, field: &str) -> Result<Vec<Mesh>, ConfigError> {
    let mesh_error = |source| ConfigError::Mesh { body: b.name.clone(), source };
    let mut out = Vec::new();
    let paths: Vec<&String> = match &b.mesh_path {
        Some(MeshPaths::One(p)) => vec![p],
        Some(MeshPaths::Many(ps)) => ps.iter().collect(),
        None => Vec::new(),
    };
    for p in paths {
        let full: PathBuf = base.join(p);
        out.push(Mesh::load_obj(&full).map_err(mesh_error)?);
    }
    if let Some(v) = &b.mesh_vertices {
        out.push(Mesh::new(v.iter().map(|p| Vec3::from(*p)).collect()).map_err(mesh_error)?);
    }
    if out.is_empty() {
        return Err(ConfigError::invalid(format!("{field}.mesh_path"), "each body needs a mesh_path or mesh_vertices"));
    }
    Ok(out)
}
