//! Kinematic structures: bodies connected by joints into a forest, the
//! recursive body Jacobians that map the stacked joint variation onto each
//! body's 6-DoF variation, and the recursive pose update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::{Constraint, ConstraintEquation};
use crate::error::KinematicsError;
use crate::se3::{adjoint, Pose, Variation, Vec6};

/// One of the six variation coordinates, in `[rot | trans]` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    RotX,
    RotY,
    RotZ,
    TransX,
    TransY,
    TransZ,
}

impl Axis {
    pub const ALL: [Axis; 6] = [Axis::RotX, Axis::RotY, Axis::RotZ, Axis::TransX, Axis::TransY, Axis::TransZ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_rotational(self) -> bool {
        self.index() < 3
    }
}

/// Boolean selection over the six variation coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct AxisMask(pub [bool; 6]);

impl AxisMask {
    pub const ALL: AxisMask = AxisMask([true; 6]);
    pub const NONE: AxisMask = AxisMask([false; 6]);
    pub const ROTATION: AxisMask = AxisMask([true, true, true, false, false, false]);
    pub const TRANSLATION: AxisMask = AxisMask([false, false, false, true, true, true]);

    pub fn from_axes(axes: &[Axis]) -> Self {
        let mut m = [false; 6];
        for a in axes {
            m[a.index()] = true;
        }
        AxisMask(m)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn contains(&self, axis: Axis) -> bool {
        self.0[axis.index()]
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..6).filter(|&i| self.0[i])
    }

    pub fn complement(&self) -> Self {
        AxisMask(self.0.map(|b| !b))
    }

    pub fn axes(&self) -> Vec<Axis> {
        self.indices().map(|i| Axis::ALL[i]).collect()
    }
}

/// Which joint transform stays constant across pose updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedSide {
    /// `J_T_M` is fixed, `P_T_J` follows the poses.
    #[default]
    JointToModel,
    /// `P_T_J` is fixed, `J_T_M` follows the poses.
    ParentToJoint,
}

/// A joint allowing motion along a subset of the joint-frame axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    free_axes: AxisMask,
    coupling: Option<DMatrix<f64>>,
    joint_to_model: Pose,
    parent_to_joint: Pose,
    fixed_side: FixedSide,
}

impl Joint {
    /// `fixed_transform` is `J_T_M` or `P_T_J` depending on `fixed_side`;
    /// the other side is inferred when the body is added to a structure.
    pub fn new(free_axes: AxisMask, fixed_side: FixedSide, fixed_transform: Pose) -> Self {
        let (joint_to_model, parent_to_joint) = match fixed_side {
            FixedSide::JointToModel => (fixed_transform, Pose::identity()),
            FixedSide::ParentToJoint => (Pose::identity(), fixed_transform),
        };
        Joint { free_axes, coupling: None, joint_to_model, parent_to_joint, fixed_side }
    }

    /// Unrestricted 6-DoF joint with the joint frame at `J_T_M`.
    pub fn free(joint_to_model: Pose) -> Self {
        Joint::new(AxisMask::ALL, FixedSide::JointToModel, joint_to_model)
    }

    /// Single-axis joint (revolute or prismatic) with the joint frame at `J_T_M`.
    pub fn single(axis: Axis, joint_to_model: Pose) -> Self {
        Joint::new(AxisMask::from_axes(&[axis]), FixedSide::JointToModel, joint_to_model)
    }

    /// Replaces pure column selection with `d theta_bar / d theta_j` (6 x n).
    pub fn with_coupling(mut self, coupling: DMatrix<f64>) -> Result<Self, KinematicsError> {
        if coupling.nrows() != 6 {
            return Err(KinematicsError::BadCoupling(coupling.nrows()));
        }
        self.coupling = Some(coupling);
        Ok(self)
    }

    pub fn dof(&self) -> usize {
        match &self.coupling {
            Some(c) => c.ncols(),
            None => self.free_axes.count(),
        }
    }

    pub fn free_axes(&self) -> AxisMask {
        self.free_axes
    }

    pub fn fixed_side(&self) -> FixedSide {
        self.fixed_side
    }

    pub fn joint_to_model(&self) -> &Pose {
        &self.joint_to_model
    }

    pub fn parent_to_joint(&self) -> &Pose {
        &self.parent_to_joint
    }

    /// `d theta_bar / d theta_j`, 6 x dof.
    pub fn expansion(&self) -> DMatrix<f64> {
        if let Some(c) = &self.coupling {
            return c.clone();
        }
        let mut s = DMatrix::zeros(6, self.dof());
        for (col, row) in self.free_axes.indices().enumerate() {
            s[(row, col)] = 1.0;
        }
        s
    }

    /// Whether joint coordinate `k` should receive rotational regularization.
    pub fn coordinate_is_rotational(&self, k: usize) -> bool {
        match &self.coupling {
            Some(c) => {
                let col = c.column(k);
                col.rows(0, 3).norm() >= col.rows(3, 3).norm()
            }
            None => self.free_axes.indices().nth(k).is_some_and(|i| i < 3),
        }
    }

    fn infer_free_side(&mut self, parent_to_model: &Pose) {
        match self.fixed_side {
            FixedSide::JointToModel => self.parent_to_joint = *parent_to_model * self.joint_to_model.inverse(),
            FixedSide::ParentToJoint => self.joint_to_model = self.parent_to_joint.inverse() * *parent_to_model,
        }
    }
}

/// Scatters `theta_j` onto the joint's free axes.
pub fn expand_joint_variation(joint: &Joint, theta_j: &[f64]) -> Result<Variation, KinematicsError> {
    if theta_j.len() != joint.dof() {
        return Err(KinematicsError::LengthMismatch { expected: joint.dof(), got: theta_j.len() });
    }
    let v: Vec6 = match &joint.coupling {
        Some(c) => {
            let out = c * DVector::from_column_slice(theta_j);
            Vec6::from_column_slice(out.as_slice())
        }
        None => {
            let mut v = Vec6::zeros();
            for (value, i) in theta_j.iter().zip(joint.free_axes.indices()) {
                v[i] = *value;
            }
            v
        }
    };
    Ok(Variation::from_vector(&v))
}

#[derive(Clone, Debug)]
pub struct Body {
    pub name: String,
    pose: Pose,
    parent: Option<usize>,
    joint: Joint,
    jacobian: Option<DMatrix<f64>>,
}

impl Body {
    /// `A_T_M`.
    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn parent(&self) -> Option<usize> {
        self.parent
    }

    pub fn joint(&self) -> &Joint {
        &self.joint
    }

    /// Cached 6 x n_k Jacobian, `None` when stale.
    pub fn jacobian(&self) -> Option<&DMatrix<f64>> {
        self.jacobian.as_ref()
    }
}

/// Bodies (topologically ordered, parents first), the constraints between
/// them, and the layout of the stacked variation vector.
#[derive(Clone, Debug, Default)]
pub struct KinematicStructure {
    bodies: Vec<Body>,
    constraints: Vec<ConstraintEquation>,
    dof_offsets: Vec<usize>,
    n_k: usize,
}

impl KinematicStructure {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a body; `parent` must already be present. Returns its index.
    pub fn add_body(
        &mut self,
        name: impl Into<String>,
        pose: Pose,
        parent: Option<usize>,
        mut joint: Joint,
    ) -> Result<usize, KinematicsError> {
        let name = name.into();
        let index = self.bodies.len();
        if self.bodies.iter().any(|b| b.name == name) {
            return Err(KinematicsError::DuplicateName(name));
        }
        match parent {
            Some(p) if p >= index => return Err(KinematicsError::ParentOrder { body: index, parent: p }),
            Some(p) => joint.infer_free_side(&(self.bodies[p].pose.inverse() * pose)),
            None => {
                joint.fixed_side = FixedSide::JointToModel;
                joint.parent_to_joint = joint.joint_to_model.inverse();
            }
        }
        self.bodies.push(Body { name, pose, parent, joint, jacobian: None });
        self.assign_offsets();
        self.invalidate();
        Ok(index)
    }

    pub fn add_constraint(&mut self, c: impl Into<ConstraintEquation>) -> Result<usize, KinematicsError> {
        let c = c.into();
        let (a, b) = c.bodies();
        for i in [a, b] {
            if i >= self.bodies.len() {
                return Err(KinematicsError::UnknownBody(i));
            }
        }
        self.constraints.push(c);
        Ok(self.constraints.len() - 1)
    }

    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    pub fn body(&self, i: usize) -> &Body {
        &self.bodies[i]
    }

    pub fn body_index(&self, name: &str) -> Option<usize> {
        self.bodies.iter().position(|b| b.name == name)
    }

    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }

    pub fn constraints(&self) -> &[ConstraintEquation] {
        &self.constraints
    }

    pub fn clear_constraints(&mut self) {
        self.constraints.clear();
    }

    /// Total number of constraint rows.
    pub fn constraint_rows(&self) -> usize {
        self.constraints.iter().map(|c| c.rows()).sum()
    }

    /// Total degrees of freedom, the length of the stacked variation.
    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn dof_offset(&self, body: usize) -> usize {
        self.dof_offsets[body]
    }

    /// `true` for every coordinate of the stacked variation that is rotational.
    pub fn rotational_coordinates(&self) -> Vec<bool> {
        let mut kinds = vec![false; self.n_k];
        for (i, b) in self.bodies.iter().enumerate() {
            for k in 0..b.joint.dof() {
                kinds[self.dof_offsets[i] + k] = b.joint.coordinate_is_rotational(k);
            }
        }
        kinds
    }

    /// Overwrites a body pose and re-infers the joints attached to it.
    pub fn set_pose(&mut self, body: usize, pose: Pose) -> Result<(), KinematicsError> {
        if body >= self.bodies.len() {
            return Err(KinematicsError::UnknownBody(body));
        }
        self.bodies[body].pose = pose;
        self.refresh_joints();
        self.invalidate();
        Ok(())
    }

    pub fn jacobians_valid(&self) -> bool {
        self.bodies.iter().all(|b| b.jacobian.is_some())
    }

    pub fn jacobian(&self, body: usize) -> Result<&DMatrix<f64>, KinematicsError> {
        self.bodies.get(body).ok_or(KinematicsError::UnknownBody(body))?.jacobian.as_ref().ok_or(KinematicsError::StaleJacobians)
    }

    /// Fills every body's Jacobian recursively from its parent's:
    /// `J = Ad(M_T_P) J_parent + [0 .. Ad(M_T_J) S .. 0]`.
    pub fn compute_body_jacobians(&mut self) {
        for i in 0..self.bodies.len() {
            let body = &self.bodies[i];
            let mut jac = match body.parent {
                Some(p) => {
                    let model_to_parent = body.pose.inverse() * self.bodies[p].pose;
                    let parent_jac = self.bodies[p].jacobian.as_ref().expect("parents precede children");
                    to_dynamic(&adjoint(&model_to_parent)) * parent_jac
                }
                None => DMatrix::zeros(6, self.n_k),
            };
            let joint_block = to_dynamic(&adjoint(&body.joint.joint_to_model.inverse())) * body.joint.expansion();
            let offset = self.dof_offsets[i];
            let mut cols = jac.columns_mut(offset, joint_block.ncols());
            cols += &joint_block;
            self.bodies[i].jacobian = Some(jac);
        }
    }

    /// Applies `theta_k` along the tree, then re-infers the non-fixed joint
    /// transforms from the new poses.
    pub fn update_poses(&mut self, theta_k: &DVector<f64>) -> Result<(), KinematicsError> {
        if theta_k.len() != self.n_k {
            return Err(KinematicsError::LengthMismatch { expected: self.n_k, got: theta_k.len() });
        }
        for i in 0..self.bodies.len() {
            let offset = self.dof_offsets[i];
            let body = &self.bodies[i];
            let dof = body.joint.dof();
            let theta_bar = expand_joint_variation(&body.joint, &theta_k.as_slice()[offset..offset + dof])?;
            let motion = Pose::from_variation(&theta_bar);
            let joint = &body.joint;
            let new_pose = match body.parent {
                Some(p) => self.bodies[p].pose * joint.parent_to_joint * motion * joint.joint_to_model,
                None => body.pose * joint.joint_to_model.inverse() * motion * joint.joint_to_model,
            };
            self.bodies[i].pose = new_pose;
        }
        self.refresh_joints();
        self.invalidate();
        Ok(())
    }

    /// Same bodies and poses, each an unconnected 6-DoF root. Explicit
    /// constraints are kept so their residuals can still be read out.
    pub fn to_independent(&self) -> KinematicStructure {
        let mut out = KinematicStructure::new();
        for b in &self.bodies {
            out.add_body(b.name.clone(), b.pose, None, Joint::free(Pose::identity())).expect("names are already unique");
        }
        out.constraints = self.constraints.clone();
        out
    }

    /// Every non-root body becomes a 6-DoF root and each joint is replaced by
    /// a pose constraint on its locked axes. Root joints and explicit
    /// constraints are kept.
    pub fn to_constrained(&self) -> KinematicStructure {
        let mut out = KinematicStructure::new();
        for b in &self.bodies {
            let joint = match b.parent {
                Some(_) => Joint::free(Pose::identity()),
                None => b.joint.clone(),
            };
            out.add_body(b.name.clone(), b.pose, None, joint).expect("names are already unique");
        }
        for (i, b) in self.bodies.iter().enumerate() {
            let Some(p) = b.parent else { continue };
            let locked = b.joint.free_axes.complement();
            if locked.count() == 0 {
                continue;
            }
            let c =
                Constraint::new(p, i, b.joint.parent_to_joint.inverse(), b.joint.joint_to_model, locked).expect("parent and child differ");
            out.add_constraint(c).expect("indices are valid");
        }
        for c in &self.constraints {
            out.add_constraint(c.clone()).expect("indices are valid");
        }
        out
    }

    fn refresh_joints(&mut self) {
        for i in 0..self.bodies.len() {
            if let Some(p) = self.bodies[i].parent {
                let parent_to_model = self.bodies[p].pose.inverse() * self.bodies[i].pose;
                self.bodies[i].joint.infer_free_side(&parent_to_model);
            }
        }
    }

    fn invalidate(&mut self) {
        for b in &mut self.bodies {
            b.jacobian = None;
        }
    }

    /// Depth-first over the forest, roots and children in insertion order.
    fn assign_offsets(&mut self) {
        let n = self.bodies.len();
        let mut children = vec![Vec::new(); n];
        for (i, b) in self.bodies.iter().enumerate() {
            if let Some(p) = b.parent {
                children[p].push(i);
            }
        }
        let mut offsets = vec![0; n];
        let mut next = 0;
        let mut stack: Vec<usize> = (0..n).filter(|&i| self.bodies[i].parent.is_none()).rev().collect();
        while let Some(i) = stack.pop() {
            offsets[i] = next;
            next += self.bodies[i].joint.dof();
            stack.extend(children[i].iter().rev());
        }
        self.dof_offsets = offsets;
        self.n_k = next;
    }
}

pub(crate) fn to_dynamic(m: &crate::se3::Mat6) -> DMatrix<f64> {
    DMatrix::from_column_slice(6, 6, m.as_slice())
}
