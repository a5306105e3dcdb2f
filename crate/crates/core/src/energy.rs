//! Per-body energies. A provider returns the gradient and Hessian of a
//! body's energy with respect to its own 6-DoF variation, evaluated at zero
//! variation, with the variation applied on the body side (`pose * T(theta)`).

use nalgebra::Matrix3x6;

use crate::error::EnergyError;
use crate::se3::{skew, variation_matrix, Mat6, Pose, Vec3, Vec6};

#[derive(Clone, Debug, PartialEq)]
pub struct BodyEnergy {
    pub g: Vec6,
    pub h: Mat6,
}

impl BodyEnergy {
    pub fn zero() -> Self {
        BodyEnergy { g: Vec6::zeros(), h: Mat6::zeros() }
    }

    pub fn new(g: Vec6, h: Mat6) -> Self {
        BodyEnergy { g, h }
    }
}

/// Supplies one [`BodyEnergy`] per body of a structure.
pub trait EnergyProvider: Sync {
    fn body_energy(&self, body: usize, pose: &Pose) -> BodyEnergy;

    /// Scalar energy of a body, when the provider has one.
    fn value(&self, _body: usize, _pose: &Pose) -> Option<f64> {
        None
    }
}

/// Energy model of a single body.
pub trait BodyModel: Send + Sync {
    fn energy(&self, pose: &Pose) -> BodyEnergy;
    fn value(&self, pose: &Pose) -> f64;
}

impl<M: BodyModel + ?Sized> BodyModel for Box<M> {
    fn energy(&self, pose: &Pose) -> BodyEnergy {
        (**self).energy(pose)
    }

    fn value(&self, pose: &Pose) -> f64 {
        (**self).value(pose)
    }
}

/// One model per body, indexed like the structure.
impl<M: BodyModel> EnergyProvider for [M] {
    fn body_energy(&self, body: usize, pose: &Pose) -> BodyEnergy {
        self[body].energy(pose)
    }

    fn value(&self, body: usize, pose: &Pose) -> Option<f64> {
        Some(self[body].value(pose))
    }
}

impl<M: BodyModel> EnergyProvider for Vec<M> {
    fn body_energy(&self, body: usize, pose: &Pose) -> BodyEnergy {
        self[body].energy(pose)
    }

    fn value(&self, body: usize, pose: &Pose) -> Option<f64> {
        Some(self[body].value(pose))
    }
}

/// No measurements; only regularization acts.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroEnergy;

impl EnergyProvider for ZeroEnergy {
    fn body_energy(&self, _body: usize, _pose: &Pose) -> BodyEnergy {
        BodyEnergy::zero()
    }

    fn value(&self, _body: usize, _pose: &Pose) -> Option<f64> {
        Some(0.0)
    }
}

/// Pose-independent gradients and Hessians, one per body.
#[derive(Clone, Debug)]
pub struct FixedEnergies(pub Vec<BodyEnergy>);

impl EnergyProvider for FixedEnergies {
    fn body_energy(&self, body: usize, _pose: &Pose) -> BodyEnergy {
        self.0[body].clone()
    }
}

/// `E = w_r |log(R_target^T R)|^2 + w_t |t - t_target|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticPoseTarget {
    target: Pose,
    weight_r: f64,
    weight_t: f64,
}

impl QuadraticPoseTarget {
    pub fn new(target: Pose, weight_r: f64, weight_t: f64) -> Result<Self, EnergyError> {
        if weight_r < 0.0 || weight_t < 0.0 {
            return Err(EnergyError::NegativeWeight);
        }
        Ok(QuadraticPoseTarget { target, weight_r, weight_t })
    }

    pub fn target(&self) -> &Pose {
        &self.target
    }
}

impl BodyModel for QuadraticPoseTarget {
    /// Exact gradient; Gauss-Newton Hessian `2 w_r C C^T` on the rotational
    /// block, which is exact when the rotational offset is zero.
    fn energy(&self, pose: &Pose) -> BodyEnergy {
        let r0 = (self.target.rotation.inverse() * pose.rotation).log();
        let c = *variation_matrix(&r0).matrix();
        let dt = pose.rotation.inverse() * (pose.translation - self.target.translation);
        let mut g = Vec6::zeros();
        g.fixed_rows_mut::<3>(0).copy_from(&(2.0 * self.weight_r * r0.vector()));
        g.fixed_rows_mut::<3>(3).copy_from(&(2.0 * self.weight_t * dt));
        let mut h = Mat6::zeros();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&(2.0 * self.weight_r * c * c.transpose()));
        h.fixed_view_mut::<3, 3>(3, 3).fill_diagonal(2.0 * self.weight_t);
        BodyEnergy { g, h }
    }

    fn value(&self, pose: &Pose) -> f64 {
        let r = (self.target.rotation.inverse() * pose.rotation).log();
        self.weight_r * r.vector().norm_squared() + self.weight_t * (pose.translation - self.target.translation).norm_squared()
    }
}

/// Known point correspondences: model points in the body frame, observed
/// points in the world frame. `E = sum |pose * m_k - o_k|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointRegistration {
    model: Vec<Vec3>,
    observed: Vec<Vec3>,
}

impl PointRegistration {
    pub fn new(model: Vec<Vec3>, observed: Vec<Vec3>) -> Result<Self, EnergyError> {
        if model.len() != observed.len() {
            return Err(EnergyError::CountMismatch { model: model.len(), observed: observed.len() });
        }
        if model.len() < 3 {
            return Err(EnergyError::TooFewPoints(model.len()));
        }
        Ok(PointRegistration { model, observed })
    }
}

impl BodyModel for PointRegistration {
    /// Gauss-Newton gradient and Hessian.
    fn energy(&self, pose: &Pose) -> BodyEnergy {
        let r = *pose.rotation.matrix();
        let mut out = BodyEnergy::zero();
        for (m, o) in self.model.iter().zip(&self.observed) {
            let e = pose.transform_point(m) - o;
            let mut j = Matrix3x6::zeros();
            j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-r * skew(m)));
            j.fixed_view_mut::<3, 3>(0, 3).copy_from(&r);
            out.g += 2.0 * j.transpose() * e;
            out.h += 2.0 * j.transpose() * j;
        }
        out
    }

    fn value(&self, pose: &Pose) -> f64 {
        self.model.iter().zip(&self.observed).map(|(m, o)| (pose.transform_point(m) - o).norm_squared()).sum()
    }
}
