//! ADD, ADD-S and the area-under-curve score.

use std::path::Path;

use crate::error::MetricsError;
use crate::se3::{Pose, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vec3>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>) -> Result<Self, MetricsError> {
        if vertices.is_empty() {
            return Err(MetricsError::EmptyMesh);
        }
        Ok(Mesh { vertices })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    /// Reads `v x y z` lines; every other line is ignored.
    pub fn from_obj_str(text: &str) -> Result<Self, MetricsError> {
        let mut vertices = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            if parts.next() != Some("v") {
                continue;
            }
            let coords: Vec<f64> = parts
                .take(3)
                .map(|p| p.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| MetricsError::Obj { line: n + 1, message: e.to_string() })?;
            if coords.len() != 3 {
                return Err(MetricsError::Obj { line: n + 1, message: "vertex needs three coordinates".into() });
            }
            vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
        }
        Mesh::new(vertices)
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        Mesh::from_obj_str(&std::fs::read_to_string(path)?)
    }
}

/// Mean distance between each vertex and its image under `rel`
/// (`rel = M_T_M_gt`, the estimated-to-ground-truth model transform).
pub fn add_error(mesh: &Mesh, rel: &Pose) -> f64 {
    let v = mesh.vertices();
    v.iter().map(|x| (x - rel.transform_point(x)).norm()).sum::<f64>() / v.len() as f64
}

/// Mean distance between each vertex and the closest transformed vertex.
pub fn add_s_error(mesh: &Mesh, rel: &Pose) -> f64 {
    let v = mesh.vertices();
    let moved: Vec<Vec3> = v.iter().map(|x| rel.transform_point(x)).collect();
    v.iter().map(|x| moved.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min)).sum::<f64>() / v.len() as f64
}

/// ADD averaged over every mesh of a body.
pub fn add_error_multi(meshes: &[Mesh], rel: &Pose) -> Result<f64, MetricsError> {
    average(meshes, |m| add_error(m, rel))
}

/// ADD-S averaged over every mesh of a body.
pub fn add_s_error_multi(meshes: &[Mesh], rel: &Pose) -> Result<f64, MetricsError> {
    average(meshes, |m| add_s_error(m, rel))
}

fn average(meshes: &[Mesh], f: impl Fn(&Mesh) -> f64) -> Result<f64, MetricsError> {
    if meshes.is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    Ok(meshes.iter().map(f).sum::<f64>() / meshes.len() as f64)
}

/// `rel` for an estimate and its ground truth, both `A_T_M`.
pub fn relative_error_pose(estimate: &Pose, ground_truth: &Pose) -> Pose {
    estimate.inverse() * *ground_truth
}

/// Mean of `max(1 - e / e_t, 0)` over every body (row) and frame (column).
pub fn auc_score(errors: &[Vec<f64>], error_threshold: f64) -> Result<f64, MetricsError> {
    if error_threshold.is_nan() || error_threshold <= 0.0 {
        return Err(MetricsError::BadThreshold(error_threshold));
    }
    let count: usize = errors.iter().map(Vec::len).sum();
    if count == 0 {
        return Ok(0.0);
    }
    let total: f64 = errors.iter().flatten().map(|e| (1.0 - e / error_threshold).max(0.0)).sum();
    Ok(total / count as f64)
}
