//! Rigid-transform algebra.
//!
//! Poses are stored as a rotation matrix plus a translation vector. Pose
//! variations are 6-vectors laid out as `[rot | trans]`: indices 0..3 hold a
//! rotation vector, indices 3..6 a translation. A variation acts on the right
//! of a pose, `pose * Pose::from_variation(theta)`, and its translational part
//! is additive (no twist coupling).

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat6 = Matrix6<f64>;

/// Below this angle the trigonometric ratios switch to their Taylor series.
const SMALL_ANGLE: f64 = 1e-4;
/// Above this angle the log map reads the axis from the symmetric part.
const NEAR_PI: f64 = PI - 1e-2;

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] for the antisymmetric part of `m`.
fn vee_antisymmetric(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// A proper rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps `m` without checking orthogonality.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Wraps `m` if it is orthogonal with unit determinant within `tol`.
    pub fn try_from_matrix(m: Mat3, tol: f64) -> Option<Self> {
        let r = Rotation(m);
        r.is_valid(tol).then_some(r)
    }

    pub fn exp(v: &Vec3) -> Self {
        exp_rotvec(&RotVec(*v))
    }

    pub fn log(&self) -> RotVec {
        log_rotation(self)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        (self.0.transpose() * self.0 - Mat3::identity()).norm() <= tol && (self.0.determinant() - 1.0).abs() <= tol
    }

    /// Nearest rotation in the Frobenius sense.
    pub fn renormalized(&self) -> Self {
        let svd = self.0.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut m = u * vt;
        if m.determinant() < 0.0 {
            let mut d = Mat3::identity();
            d[(2, 2)] = -1.0;
            m = u * d * vt;
        }
        Rotation(m)
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Rotation vector `alpha * e`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotVec(pub Vec3);

impl RotVec {
    pub fn zero() -> Self {
        RotVec(Vec3::zeros())
    }

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        RotVec(Vec3::new(x, y, z))
    }

    pub fn vector(&self) -> &Vec3 {
        &self.0
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    /// Unit axis, or `None` for the zero rotation.
    pub fn axis(&self) -> Option<Vec3> {
        let a = self.angle();
        (a > 0.0).then(|| self.0 / a)
    }

    /// The equivalent rotation vector with angle in `[0, pi]`.
    pub fn canonical(&self) -> RotVec {
        let a = self.angle();
        if a <= PI {
            return *self;
        }
        let e = self.0 / a;
        let wrapped = a.rem_euclid(2.0 * PI);
        if wrapped <= PI {
            RotVec(e * wrapped)
        } else {
            RotVec(-e * (2.0 * PI - wrapped))
        }
    }
}

/// Exponential map via the Rodrigues formula
/// `I + sin(a)[e]x + 2 sin^2(a/2) [e]x^2`.
pub fn exp_rotvec(v: &RotVec) -> Rotation {
    let w = v.0;
    let a2 = w.norm_squared();
    let a = a2.sqrt();
    let (s, c) = if a < SMALL_ANGLE { (1.0 - a2 / 6.0, 0.5 - a2 / 24.0) } else { (a.sin() / a, (1.0 - a.cos()) / a2) };
    let k = skew(&w);
    Rotation(Mat3::identity() + k * s + k * k * c)
}

/// Principal logarithm, angle in `[0, pi]`.
pub fn log_rotation(r: &Rotation) -> RotVec {
    let m = &r.0;
    let cos_a = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let skew_part = vee_antisymmetric(m);
    let sin_a = skew_part.norm();
    let a = sin_a.atan2(cos_a);

    if a < SMALL_ANGLE {
        return RotVec(skew_part * (1.0 + a * a / 6.0));
    }
    if a < NEAR_PI {
        return RotVec(skew_part * (a / sin_a));
    }

    // (R + R^T)/2 = cos(a) I + (1 - cos(a)) e e^T
    let sym = (m + m.transpose()) * 0.5;
    let outer = (sym - Mat3::identity() * cos_a) / (1.0 - cos_a);
    let k = (0..3).max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)])).unwrap();
    let mut e: Vec3 = outer.column(k).into_owned() / outer[(k, k)].max(0.0).sqrt();
    e.normalize_mut();
    let d = e.dot(&skew_part);
    if d < 0.0 || (d == 0.0 && !first_nonzero_positive(&e)) {
        e = -e;
    }
    RotVec(e * a)
}

fn first_nonzero_positive(v: &Vec3) -> bool {
    v.iter().find(|x| **x != 0.0).is_none_or(|x| *x > 0.0)
}

/// 6-DoF variation `[rot | trans]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Variation {
    pub rot: Vec3,
    pub trans: Vec3,
}

impl Variation {
    pub fn zero() -> Self {
        Variation { rot: Vec3::zeros(), trans: Vec3::zeros() }
    }

    pub fn new(rot: Vec3, trans: Vec3) -> Self {
        Variation { rot, trans }
    }

    pub fn from_vector(v: &Vec6) -> Self {
        Variation { rot: v.fixed_rows::<3>(0).into_owned(), trans: v.fixed_rows::<3>(3).into_owned() }
    }

    pub fn to_vector(&self) -> Vec6 {
        let mut v = Vec6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.rot);
        v.fixed_rows_mut::<3>(3).copy_from(&self.trans);
        v
    }
}

/// Rigid transform `A_T_B`: maps coordinates in frame B to frame A.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.rotation.log().0;
        let t = self.translation;
        write!(f, "Pose(rotvec: [{:.4}, {:.4}, {:.4}], trans: [{:.4}, {:.4}, {:.4}])", r.x, r.y, r.z, t.x, t.y, t.z)
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: Rotation::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose { rotation, translation }
    }

    pub fn from_rotvec_translation(rotvec: Vec3, translation: Vec3) -> Self {
        Pose { rotation: Rotation::exp(&rotvec), translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Pose { rotation: Rotation::identity(), translation }
    }

    pub fn from_rotation(rotation: Rotation) -> Self {
        Pose { rotation, translation: Vec3::zeros() }
    }

    /// `T(theta)`: rotation `exp([theta_r]x)`, translation `theta_t`.
    pub fn from_variation(theta: &Variation) -> Self {
        Pose { rotation: Rotation::exp(&theta.rot), translation: theta.trans }
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Pose { rotation: r_inv, translation: -(r_inv * self.translation) }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * *p + self.translation
    }

    /// The pose perturbed on the body side, `self * T(theta)`.
    pub fn varied(&self, theta: &Variation) -> Self {
        *self * Pose::from_variation(theta)
    }

    /// Inverse of [`Pose::varied`]: the variation taking `self` to `other`.
    pub fn variation_to(&self, other: &Pose) -> Variation {
        let rel = self.inverse() * *other;
        Variation { rot: rel.rotation.log().0, trans: rel.translation }
    }

    pub fn adjoint(&self) -> Mat6 {
        adjoint(self)
    }

    pub fn to_homogeneous(&self) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        Pose { rotation: self.rotation * rhs.rotation, translation: self.rotation * rhs.translation + self.translation }
    }
}

/// `Ad(A_T_B) = [[R, 0], [[t]x R, R]]` in `[rot | trans]` ordering; maps a
/// variation expressed in B to the same variation expressed in A.
pub fn adjoint(p: &Pose) -> Mat6 {
    let r = p.rotation.matrix();
    let mut ad = Mat6::zeros();
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    ad.fixed_view_mut::<3, 3>(3, 0).copy_from(&(skew(&p.translation) * r));
    ad
}

/// First-order change of a rotation vector under a subsequent infinitesimal
/// rotation: `d log(exp([theta]x) exp([r]x)) / d theta` at `theta = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariationMatrix {
    c: Mat3,
    source: RotVec,
}

impl VariationMatrix {
    pub fn matrix(&self) -> &Mat3 {
        &self.c
    }

    pub fn source(&self) -> &RotVec {
        &self.source
    }
}

/// `(a/2)cot(a/2) I - (a/2)[e]x + (1 - (a/2)cot(a/2)) e e^T`.
pub fn variation_matrix(v: &RotVec) -> VariationMatrix {
    let w = v.0;
    let a2 = w.norm_squared();
    let a = a2.sqrt();
    // k = (a/2)cot(a/2); outer = (1 - k)/a^2
    let (k, outer) = if a < SMALL_ANGLE {
        (1.0 - a2 / 12.0, 1.0 / 12.0 + a2 / 720.0)
    } else {
        let half = 0.5 * a;
        let k = half * half.cos() / half.sin();
        (k, (1.0 - k) / a2)
    };
    let c = Mat3::identity() * k - skew(&w) * 0.5 + w * w.transpose() * outer;
    VariationMatrix { c, source: *v }
}

/// `log(exp([theta]x) exp([r]x))` through the half-angle composition.
pub fn compose_rotvecs(theta: &RotVec, r: &RotVec) -> RotVec {
    let (t_half, a_half) = (0.5 * theta.angle(), 0.5 * r.angle());
    // Half-angle sines scaled by the axis, written to stay finite at zero.
    let sinc_half = |half: f64| if half < SMALL_ANGLE { 0.5 * (1.0 - half * half / 6.0) } else { half.sin() / (2.0 * half) };
    let v_s = theta.0 * sinc_half(t_half);
    let e_s = r.0 * sinc_half(a_half);
    let (ct, ca) = (t_half.cos(), a_half.cos());

    let mut x = ct * ca - v_s.dot(&e_s);
    let mut y = v_s * ca + e_s * ct + v_s.cross(&e_s);
    if x == 0.0 {
        return log_rotation(&(Rotation::exp(&theta.0) * Rotation::exp(&r.0)));
    }
    if x < 0.0 {
        x = -x;
        y = -y;
    }
    let s = y.norm();
    let gamma = 2.0 * s.atan2(x);
    if s == 0.0 {
        return RotVec::zero();
    }
    RotVec(y * (gamma / s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut impl Rng) -> Vec3 {
        loop {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    }

    fn quat_matrix(v: &Vec3) -> Mat3 {
        UnitQuaternion::from_scaled_axis(*v).to_rotation_matrix().into_inner()
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(*exp_rotvec(&RotVec::zero()).matrix(), Mat3::identity());
    }

    #[test]
    fn quarter_turn_about_x() {
        let r = exp_rotvec(&RotVec::new(PI / 2.0, 0.0, 0.0));
        let y = r * Vec3::new(0.0, 1.0, 0.0);
        assert_relative_eq!(y, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn exp_matches_quaternion_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let v = random_unit(&mut rng) * rng.random_range(0.0..2.0 * PI);
            assert_relative_eq!(*exp_rotvec(&RotVec(v)).matrix(), quat_matrix(&v), epsilon = 1e-12);
            let once = exp_rotvec(&RotVec(v));
            let twice = exp_rotvec(&log_rotation(&once));
            assert_relative_eq!(*twice.matrix(), *once.matrix(), epsilon = 1e-12);
        }
    }

    #[test]
    fn log_of_identity_and_round_trip() {
        assert_eq!(log_rotation(&Rotation::identity()).0, Vec3::zeros());
        let r = log_rotation(&exp_rotvec(&RotVec::new(0.0, 0.0, 1.2)));
        assert_relative_eq!(r.0, Vec3::new(0.0, 0.0, 1.2), epsilon = 1e-14);
    }

    #[test]
    fn log_near_pi_recovers_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let e = random_unit(&mut rng);
            let r = Rotation::from_matrix_unchecked(quat_matrix(&(e * (PI - 1e-7))));
            let v = log_rotation(&r);
            assert!(v.axis().unwrap().dot(&e) > 1.0 - 1e-6);
            assert_relative_eq!(v.angle(), PI - 1e-7, epsilon = 1e-8);
        }
    }

    #[test]
    fn log_at_exactly_pi_uses_canonical_branch() {
        for e in [Vec3::x(), -Vec3::y(), Vec3::new(0.0, -1.0, 1.0).normalize()] {
            let m = Mat3::identity() * -1.0 + e * e.transpose() * 2.0;
            let v = log_rotation(&Rotation::from_matrix_unchecked(m));
            assert_relative_eq!(v.angle(), PI, epsilon = 1e-12);
            assert!(first_nonzero_positive(&v.0));
            assert_relative_eq!(*exp_rotvec(&v).matrix(), m, epsilon = 1e-12);
        }
    }

    #[test]
    fn exp_log_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let v = random_unit(&mut rng) * rng.random_range(1e-4..PI - 1e-4);
            let back = log_rotation(&exp_rotvec(&RotVec(v)));
            assert_relative_eq!(back.0, v, epsilon = 1e-9);
        }
    }

    #[test]
    fn canonical_wraps_angle() {
        let v = RotVec::new(0.0, 0.0, 1.5 * PI).canonical();
        assert_relative_eq!(v.0, Vec3::new(0.0, 0.0, -0.5 * PI), epsilon = 1e-14);
        let w = RotVec::new(3.0 * PI + 0.2, 0.0, 0.0).canonical();
        assert_relative_eq!(w.0, Vec3::new(-(PI - 0.2), 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn adjoint_of_identity_and_pure_rotation() {
        assert_eq!(adjoint(&Pose::identity()), Mat6::identity());
        let r = Rotation::exp(&Vec3::new(0.3, -0.2, 0.9));
        let ad = adjoint(&Pose::from_rotation(r));
        assert_eq!(ad.fixed_view::<3, 3>(0, 0).into_owned(), *r.matrix());
        assert_eq!(ad.fixed_view::<3, 3>(3, 3).into_owned(), *r.matrix());
        assert_eq!(ad.fixed_view::<3, 3>(3, 0).into_owned(), Mat3::zeros());
    }

    #[test]
    fn adjoint_projects_variation_to_first_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let eps = 1e-6;
        for _ in 0..50 {
            let p = Pose::from_rotvec_translation(random_unit(&mut rng) * 2.0, random_unit(&mut rng) * 1.5);
            let ad = adjoint(&p);
            for k in 0..6 {
                let mut d = Vec6::zeros();
                d[k] = eps;
                let plus = p * Pose::from_variation(&Variation::from_vector(&d)) * p.inverse();
                let minus = p * Pose::from_variation(&Variation::from_vector(&-d)) * p.inverse();
                let fd =
                    (Pose::identity().variation_to(&plus).to_vector() - Pose::identity().variation_to(&minus).to_vector()) / (2.0 * eps);
                assert!((fd - ad.column(k)).amax() < 1e-5);
            }
        }
    }

    #[test]
    fn adjoint_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let p1 = Pose::from_rotvec_translation(random_unit(&mut rng) * 2.5, random_unit(&mut rng));
            let p2 = Pose::from_rotvec_translation(random_unit(&mut rng) * 1.0, random_unit(&mut rng) * 3.0);
            assert!((adjoint(&(p1 * p2)) - adjoint(&p1) * adjoint(&p2)).amax() < 1e-9);
        }
    }

    #[test]
    fn variation_matrix_at_zero_is_identity() {
        assert_eq!(*variation_matrix(&RotVec::zero()).matrix(), Mat3::identity());
    }

    #[test]
    fn variation_matrix_matches_finite_differences() {
        let v = RotVec::new(0.3, -0.7, 0.2);
        let c = variation_matrix(&v);
        let eps = 1e-6;
        for k in 0..3 {
            let mut d = Vec3::zeros();
            d[k] = eps;
            let plus = log_rotation(&(Rotation::exp(&d) * Rotation::exp(&v.0))).0;
            let minus = log_rotation(&(Rotation::exp(&-d) * Rotation::exp(&v.0))).0;
            let fd = (plus - minus) / (2.0 * eps);
            assert!((fd - c.matrix().column(k)).amax() < 1e-5);
        }
    }

    #[test]
    fn variation_matrix_fixes_rotation_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let v = RotVec(random_unit(&mut rng) * rng.random_range(0.0..PI));
            let c = variation_matrix(&v);
            assert_relative_eq!(c.matrix() * v.0, v.0, epsilon = 1e-12);
            assert_relative_eq!(c.matrix().transpose() * v.0, v.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn compose_trivial_cases() {
        let r = RotVec::new(0.1, -0.4, 2.0);
        assert_relative_eq!(compose_rotvecs(&RotVec::zero(), &r).0, r.0, epsilon = 1e-15);
        let s = compose_rotvecs(&RotVec::new(0.0, 0.0, 0.4), &RotVec::new(0.0, 0.0, 0.5));
        assert_relative_eq!(s.0, Vec3::new(0.0, 0.0, 0.9), epsilon = 1e-15);
    }

    #[test]
    fn compose_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let a = RotVec(random_unit(&mut rng) * rng.random_range(0.0..PI));
            let b = RotVec(random_unit(&mut rng) * rng.random_range(0.0..PI));
            let got = compose_rotvecs(&a, &b);
            let want = log_rotation(&(Rotation::exp(&a.0) * Rotation::exp(&b.0)));
            if want.angle() < PI - 1e-6 {
                assert_relative_eq!(got.0, want.0, epsilon = 1e-9);
            }
            assert_relative_eq!(*Rotation::exp(&got.0).matrix(), *Rotation::exp(&want.0).matrix(), epsilon = 1e-9);
        }
    }

    #[test]
    fn compose_at_composed_angle_pi_falls_back() {
        let a = RotVec::new(0.0, 0.0, PI / 2.0);
        let got = compose_rotvecs(&a, &a);
        assert_relative_eq!(got.angle(), PI, epsilon = 1e-12);
        assert_relative_eq!(*Rotation::exp(&got.0).matrix(), *Rotation::exp(&Vec3::new(0.0, 0.0, PI)).matrix(), epsilon = 1e-12);
    }

    #[test]
    fn pose_inverse_and_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p = Pose::from_rotvec_translation(random_unit(&mut rng) * 2.0, random_unit(&mut rng) * 4.0);
            let q = Pose::from_rotvec_translation(random_unit(&mut rng) * 1.0, random_unit(&mut rng));
            let s = Pose::from_rotvec_translation(random_unit(&mut rng) * 3.0, random_unit(&mut rng));
            let id = p * p.inverse();
            assert!((id.to_homogeneous() - nalgebra::Matrix4::identity()).amax() < 1e-9);
            assert!((((p * q) * s).to_homogeneous() - (p * (q * s)).to_homogeneous()).amax() < 1e-9);
            assert!(((p * q).to_homogeneous() - p.to_homogeneous() * q.to_homogeneous()).amax() < 1e-12);
        }
    }

    #[test]
    fn variation_to_inverts_varied() {
        let p = Pose::from_rotvec_translation(Vec3::new(0.2, 1.0, -0.5), Vec3::new(1.0, 2.0, 3.0));
        let theta = Variation::new(Vec3::new(0.1, -0.2, 0.3), Vec3::new(-0.4, 0.5, 0.6));
        let back = p.variation_to(&p.varied(&theta));
        assert_relative_eq!(back.to_vector(), theta.to_vector(), epsilon = 1e-12);
    }
}
