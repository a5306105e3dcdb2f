//! Pose constraints between two bodies and the orthogonality baseline.
//!
//! A constraint relates frame A, rigidly attached to body `a`, and frame B,
//! attached to body `b`. With `frame_a = A_T_Ma` and `frame_b = B_T_Mb` the
//! relative pose is `A_T_B = A_T_Ma * Ma_T_Mb * Mb_T_B`, and the residual is
//! `[log(A_R_B) | A_t_B]` restricted to the constrained axes of frame A.

use nalgebra::{DMatrix, DVector, Matrix3x6, Vector3};

use crate::error::{ConstraintError, KinematicsError};
use crate::kinematics::{AxisMask, KinematicStructure};
use crate::se3::{skew, variation_matrix, Mat3, Mat6, Pose, Vec3, Vec6};

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    body_a: usize,
    body_b: usize,
    frame_a: Pose,
    frame_b: Pose,
    axes: AxisMask,
}

impl Constraint {
    pub fn new(body_a: usize, body_b: usize, frame_a: Pose, frame_b: Pose, axes: AxisMask) -> Result<Self, ConstraintError> {
        if body_a == body_b {
            return Err(ConstraintError::SameBody(body_a));
        }
        if axes.count() == 0 {
            return Err(ConstraintError::NoAxes);
        }
        Ok(Constraint { body_a, body_b, frame_a, frame_b, axes })
    }

    pub fn body_a(&self) -> usize {
        self.body_a
    }

    pub fn body_b(&self) -> usize {
        self.body_b
    }

    /// `A_T_Ma`.
    pub fn frame_a(&self) -> &Pose {
        &self.frame_a
    }

    /// `B_T_Mb`.
    pub fn frame_b(&self) -> &Pose {
        &self.frame_b
    }

    pub fn axes(&self) -> AxisMask {
        self.axes
    }

    pub fn rows(&self) -> usize {
        self.axes.count()
    }

    /// `A_T_B` for the given body poses.
    pub fn relative_pose_from(&self, pose_a: &Pose, pose_b: &Pose) -> Pose {
        self.frame_a * pose_a.inverse() * *pose_b * self.frame_b.inverse()
    }

    pub fn relative_pose(&self, s: &KinematicStructure) -> Pose {
        self.relative_pose_from(s.body(self.body_a).pose(), s.body(self.body_b).pose())
    }

    /// Unselected residual `[log(A_R_B) | A_t_B]`.
    pub fn full_residual(&self, s: &KinematicStructure) -> Vec6 {
        let rel = self.relative_pose(s);
        let mut v = Vec6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(rel.rotation.log().vector());
        v.fixed_rows_mut::<3>(3).copy_from(&rel.translation);
        v
    }

    pub fn evaluate(&self, s: &KinematicStructure) -> DVector<f64> {
        let full = self.full_residual(s);
        DVector::from_iterator(self.rows(), self.axes.indices().map(|i| full[i]))
    }

    /// Partial derivatives of the unselected residual with respect to the
    /// body variations `theta_a` and `theta_b`.
    pub fn partials(&self, s: &KinematicStructure) -> (Mat6, Mat6) {
        let pose_a = s.body(self.body_a).pose();
        let pose_b = s.body(self.body_b).pose();
        let ma_t_b = pose_a.inverse() * *pose_b * self.frame_b.inverse();
        let a_t_b = self.frame_a * ma_t_b;
        let a_r_mb = (self.frame_a * pose_a.inverse() * *pose_b).rotation;
        let mb_t_b = self.frame_b.inverse().translation;
        let c = *variation_matrix(&a_t_b.rotation.log()).matrix();
        let ra = *self.frame_a.rotation.matrix();
        let rb = *a_r_mb.matrix();

        let mut da = Mat6::zeros();
        da.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-c * ra));
        da.fixed_view_mut::<3, 3>(3, 0).copy_from(&(ra * skew(&ma_t_b.translation)));
        da.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-ra));

        let mut db = Mat6::zeros();
        db.fixed_view_mut::<3, 3>(0, 0).copy_from(&(c * rb));
        db.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-rb * skew(&mb_t_b)));
        db.fixed_view_mut::<3, 3>(3, 3).copy_from(&rb);
        (da, db)
    }

    /// Selected rows of `d_a * J_a + d_b * J_b`, n_c x n_k.
    pub fn jacobian(&self, s: &KinematicStructure) -> Result<DMatrix<f64>, KinematicsError> {
        let (da, db) = self.partials(s);
        let full = project(&da, s.jacobian(self.body_a)?) + project(&db, s.jacobian(self.body_b)?);
        Ok(full.select_rows(self.axes.indices().collect::<Vec<_>>().iter()))
    }
}

/// Pairwise axis orthogonality between frames A and B, the rotation-only
/// alternative to a rotation-vector constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalityConstraint {
    body_a: usize,
    body_b: usize,
    frame_a: Pose,
    frame_b: Pose,
}

/// Rows (i, j) of the orthogonality residual: x-y, y-z, z-x.
pub const AXIS_PAIRS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

impl OrthogonalityConstraint {
    pub fn new(body_a: usize, body_b: usize, frame_a: Pose, frame_b: Pose) -> Result<Self, ConstraintError> {
        if body_a == body_b {
            return Err(ConstraintError::SameBody(body_a));
        }
        Ok(OrthogonalityConstraint { body_a, body_b, frame_a, frame_b })
    }

    pub fn body_a(&self) -> usize {
        self.body_a
    }

    pub fn body_b(&self) -> usize {
        self.body_b
    }

    pub fn relative_pose(&self, s: &KinematicStructure) -> Pose {
        self.frame_a * s.body(self.body_a).pose().inverse() * *s.body(self.body_b).pose() * self.frame_b.inverse()
    }

    pub fn evaluate(&self, s: &KinematicStructure) -> Vector3<f64> {
        let r = *self.relative_pose(s).rotation.matrix();
        Vector3::from_iterator(AXIS_PAIRS.iter().map(|&(i, j)| r[(i, j)]))
    }

    /// 3 x 6 partials with respect to `theta_a` and `theta_b`; translational
    /// columns are zero.
    pub fn partials(&self, s: &KinematicStructure) -> (Matrix3x6<f64>, Matrix3x6<f64>) {
        let pose_a = s.body(self.body_a).pose();
        let pose_b = s.body(self.body_b).pose();
        let r = *self.relative_pose(s).rotation.matrix();
        let ra = *self.frame_a.rotation.matrix();
        let rb = *(self.frame_a * pose_a.inverse() * *pose_b).rotation.matrix();
        let mut da = Matrix3x6::zeros();
        let mut db = Matrix3x6::zeros();
        for (row, &(i, j)) in AXIS_PAIRS.iter().enumerate() {
            let e_i = Vec3::ith(i, 1.0);
            let k: Mat3 = skew(&r.column(j).into_owned());
            da.fixed_view_mut::<1, 3>(row, 0).copy_from(&(e_i.transpose() * k * ra));
            db.fixed_view_mut::<1, 3>(row, 0).copy_from(&(-e_i.transpose() * k * rb));
        }
        (da, db)
    }

    pub fn jacobian(&self, s: &KinematicStructure) -> Result<DMatrix<f64>, KinematicsError> {
        let (da, db) = self.partials(s);
        let ja = s.jacobian(self.body_a)?;
        let jb = s.jacobian(self.body_b)?;
        let da = DMatrix::from_column_slice(3, 6, da.as_slice());
        let db = DMatrix::from_column_slice(3, 6, db.as_slice());
        Ok(da * ja + db * jb)
    }
}

/// Any constraint the solver can stack into `B_k`.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintEquation {
    Pose(Constraint),
    Orthogonality(OrthogonalityConstraint),
}

impl From<Constraint> for ConstraintEquation {
    fn from(c: Constraint) -> Self {
        ConstraintEquation::Pose(c)
    }
}

impl From<OrthogonalityConstraint> for ConstraintEquation {
    fn from(c: OrthogonalityConstraint) -> Self {
        ConstraintEquation::Orthogonality(c)
    }
}

impl ConstraintEquation {
    pub fn bodies(&self) -> (usize, usize) {
        match self {
            ConstraintEquation::Pose(c) => (c.body_a, c.body_b),
            ConstraintEquation::Orthogonality(c) => (c.body_a, c.body_b),
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            ConstraintEquation::Pose(c) => c.rows(),
            ConstraintEquation::Orthogonality(_) => 3,
        }
    }

    pub fn evaluate(&self, s: &KinematicStructure) -> DVector<f64> {
        match self {
            ConstraintEquation::Pose(c) => c.evaluate(s),
            ConstraintEquation::Orthogonality(c) => DVector::from_column_slice(c.evaluate(s).as_slice()),
        }
    }

    pub fn jacobian(&self, s: &KinematicStructure) -> Result<DMatrix<f64>, KinematicsError> {
        match self {
            ConstraintEquation::Pose(c) => c.jacobian(s),
            ConstraintEquation::Orthogonality(c) => c.jacobian(s),
        }
    }

    /// `A_T_B` between the constrained frames.
    pub fn relative_pose(&self, s: &KinematicStructure) -> Pose {
        match self {
            ConstraintEquation::Pose(c) => c.relative_pose(s),
            ConstraintEquation::Orthogonality(c) => c.relative_pose(s),
        }
    }
}

fn project(partial: &Mat6, jac: &DMatrix<f64>) -> DMatrix<f64> {
    crate::kinematics::to_dynamic(partial) * jac
}
