//! Newton steps on a kinematic structure: projected gradient and Hessian,
//! stacked constraint rows, and the regularized KKT solve.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::energy::{BodyEnergy, EnergyProvider};
use crate::error::SolverError;
use crate::kinematics::{to_dynamic, KinematicStructure};
use crate::linalg::Ldlt;

/// How the bodies of a structure are coupled during optimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Every body on its own; joints and constraints are ignored.
    Independent,
    /// Joints through the body Jacobians; explicit constraints ignored.
    Projected,
    /// Every body free, joints and explicit constraints as KKT rows.
    Constrained,
    /// Joints through the body Jacobians plus explicit constraints.
    Combined,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Independent, Mode::Projected, Mode::Constrained, Mode::Combined];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Independent => "independent",
            Mode::Projected => "projected",
            Mode::Constrained => "constrained",
            Mode::Combined => "combined",
        }
    }

    pub fn uses_constraints(self) -> bool {
        matches!(self, Mode::Constrained | Mode::Combined)
    }

    fn needs_free_bodies(self) -> bool {
        matches!(self, Mode::Independent | Mode::Constrained)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

/// Diagonal damping added to the structure Hessian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularization {
    pub lambda_r: f64,
    pub lambda_t: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization { lambda_r: 100.0, lambda_t: 1000.0 }
    }
}

impl Regularization {
    pub fn new(lambda_r: f64, lambda_t: f64) -> Result<Self, SolverError> {
        if lambda_r < 0.0 || lambda_t < 0.0 {
            return Err(SolverError::NegativeRegularization);
        }
        Ok(Regularization { lambda_r, lambda_t })
    }

    pub fn none() -> Self {
        Regularization { lambda_r: 0.0, lambda_t: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub mode: Mode,
    pub iterations: usize,
    pub regularization: Regularization,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { mode: Mode::Combined, iterations: 1, regularization: Regularization::default() }
    }
}

/// Rebuilds a structure into the form `mode` operates on. Body indices are
/// unchanged in every form.
pub fn prepare(s: &KinematicStructure, mode: Mode) -> KinematicStructure {
    match mode {
        Mode::Independent => s.to_independent(),
        Mode::Constrained => s.to_constrained(),
        Mode::Projected | Mode::Combined => s.clone(),
    }
}

/// `[[H, B^T], [B, 0]] [theta; lambda] = -[g; b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KktSystem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub b_mat: DMatrix<f64>,
    pub b_vec: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KktSolution {
    pub theta: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl KktSystem {
    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        KktSystem { h, g, b_mat: DMatrix::zeros(0, n), b_vec: DVector::zeros(0) }
    }

    pub fn n_k(&self) -> usize {
        self.g.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.b_vec.len()
    }

    pub fn dimension(&self) -> usize {
        self.n_k() + self.n_constraints()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.n_k(), self.n_constraints());
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&self.h);
        k.view_mut((n, 0), (m, n)).copy_from(&self.b_mat);
        k.view_mut((0, n), (n, m)).copy_from(&self.b_mat.transpose());
        k
    }

    pub fn rhs(&self) -> DVector<f64> {
        let mut r = DVector::zeros(self.dimension());
        r.rows_mut(0, self.n_k()).copy_from(&-&self.g);
        r.rows_mut(self.n_k(), self.n_constraints()).copy_from(&-&self.b_vec);
        r
    }

    /// Stationarity `H theta + B^T lambda + g` and feasibility `B theta + b`.
    pub fn residuals(&self, sol: &KktSolution) -> (DVector<f64>, DVector<f64>) {
        let stationarity = &self.h * &sol.theta + self.b_mat.tr_mul(&sol.lambda) + &self.g;
        let feasibility = &self.b_mat * &sol.theta + &self.b_vec;
        (stationarity, feasibility)
    }
}

/// Builds `H_k = sum J_i^T H_i J_i + Sigma`, `g_k = sum J_i^T g_i` and, when the
/// mode uses them, the stacked constraint rows. Body Jacobians must be current.
pub fn assemble(
    s: &KinematicStructure,
    energies: &[BodyEnergy],
    mode: Mode,
    regularization: &Regularization,
) -> Result<KktSystem, SolverError> {
    if energies.len() != s.len() {
        return Err(SolverError::EnergyCountMismatch { expected: s.len(), got: energies.len() });
    }
    if mode.needs_free_bodies() && s.bodies().iter().any(|b| b.parent().is_some()) {
        return Err(SolverError::ModeMismatch(mode));
    }
    let n = s.n_k();
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    for (i, e) in energies.iter().enumerate() {
        let j = s.jacobian(i)?;
        let hj = to_dynamic(&e.h) * j;
        h.gemm_tr(1.0, j, &hj, 1.0);
        g.gemv_tr(1.0, j, &DVector::from_column_slice(e.g.as_slice()), 1.0);
    }
    for (k, rotational) in s.rotational_coordinates().into_iter().enumerate() {
        h[(k, k)] += if rotational { regularization.lambda_r } else { regularization.lambda_t };
    }

    let rows = if mode.uses_constraints() { s.constraint_rows() } else { 0 };
    let mut b_mat = DMatrix::zeros(rows, n);
    let mut b_vec = DVector::zeros(rows);
    if mode.uses_constraints() {
        let mut r = 0;
        for c in s.constraints() {
            let m = c.rows();
            b_mat.view_mut((r, 0), (m, n)).copy_from(&c.jacobian(s)?);
            b_vec.rows_mut(r, m).copy_from(&c.evaluate(s));
            r += m;
        }
    }
    Ok(KktSystem { h, g, b_mat, b_vec })
}

/// Solves the saddle-point system with a pivoted symmetric-indefinite
/// factorization and one step of iterative refinement.
pub fn solve_kkt(k: &KktSystem) -> Result<KktSolution, SolverError> {
    let a = k.matrix();
    let f = Ldlt::factor(&a).map_err(|e| SolverError::FactorizationFailed { pivot: e.pivot, size: a.nrows() })?;
    let x = f.solve_refined(&a, &k.rhs());
    Ok(KktSolution { theta: x.rows(0, k.n_k()).into_owned(), lambda: x.rows(k.n_k(), k.n_constraints()).into_owned() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub theta_norm: f64,
    pub lambda: DVector<f64>,
    /// Norm of each constraint's residual rows, before and after the update.
    pub residuals_before: Vec<f64>,
    pub residuals_after: Vec<f64>,
    pub kkt_dimension: usize,
}

/// Queries one energy per body from the provider at the current poses.
pub fn gather_energies<P: EnergyProvider + ?Sized>(s: &KinematicStructure, provider: &P) -> Vec<BodyEnergy> {
    s.bodies().iter().enumerate().map(|(i, b)| provider.body_energy(i, b.pose())).collect()
}

/// One iteration: Jacobians, energies, assembly, KKT solve, pose update.
pub fn step<P: EnergyProvider + ?Sized>(s: &mut KinematicStructure, provider: &P, cfg: &SolverConfig) -> Result<StepReport, SolverError> {
    let residuals_before = constraint_norms(s);
    s.compute_body_jacobians();
    let energies = gather_energies(s, provider);
    let kkt = assemble(s, &energies, cfg.mode, &cfg.regularization)?;
    let sol = solve_kkt(&kkt)?;
    s.update_poses(&sol.theta)?;
    Ok(StepReport {
        theta_norm: sol.theta.norm(),
        lambda: sol.lambda,
        residuals_before,
        residuals_after: constraint_norms(s),
        kkt_dimension: kkt.dimension(),
    })
}

/// Runs `cfg.iterations` steps; no early exit.
pub fn optimize<P: EnergyProvider + ?Sized>(
    s: &mut KinematicStructure,
    provider: &P,
    cfg: &SolverConfig,
) -> Result<Vec<StepReport>, SolverError> {
    (0..cfg.iterations).map(|_| step(s, provider, cfg)).collect()
}

fn constraint_norms(s: &KinematicStructure) -> Vec<f64> {
    s.constraints().iter().map(|c| c.evaluate(s).norm()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Constraint;
    use crate::energy::{FixedEnergies, PointRegistration, QuadraticPoseTarget, ZeroEnergy};
    use crate::kinematics::{Axis, AxisMask, Joint};
    use crate::se3::{Mat6, Pose, Vec3, Vec6};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut impl Rng, angle: f64, trans: f64) -> Pose {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let t = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        Pose::from_rotvec_translation(v.normalize() * rng.random_range(0.0..angle), t * trans)
    }

    fn random_spd(rng: &mut impl Rng) -> Mat6 {
        let a = Mat6::from_fn(|_, _| rng.random_range(-1.0..1.0));
        a * a.transpose() + Mat6::identity() * 0.1
    }

    fn chain(rng: &mut impl Rng, n: usize) -> KinematicStructure {
        let mut s = KinematicStructure::new();
        s.add_body("b0", random_pose(rng, 3.0, 1.0), None, Joint::free(random_pose(rng, 1.0, 0.2))).unwrap();
        let axes = [Axis::RotZ, Axis::RotX, Axis::TransY, Axis::RotY];
        for i in 1..n {
            let joint = Joint::single(axes[i % axes.len()], random_pose(rng, 1.0, 0.2));
            s.add_body(format!("b{i}"), random_pose(rng, 3.0, 1.0), Some(i - 1), joint).unwrap();
        }
        s
    }

    #[test]
    fn single_body_assembly_is_identity_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = KinematicStructure::new();
        s.add_body("b", random_pose(&mut rng, 3.0, 1.0), None, Joint::free(Pose::identity())).unwrap();
        s.compute_body_jacobians();
        let e = BodyEnergy::new(Vec6::from_fn(|_, _| rng.random_range(-1.0..1.0)), random_spd(&mut rng));
        let k = assemble(&s, std::slice::from_ref(&e), Mode::Projected, &Regularization::none()).unwrap();
        assert!((k.h - to_dynamic(&e.h)).amax() < 1e-15);
        assert!((k.g - DVector::from_column_slice(e.g.as_slice())).amax() < 1e-15);
    }

    #[test]
    fn two_body_chain_contains_child_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = chain(&mut rng, 2);
        s.compute_body_jacobians();
        let h1 = random_spd(&mut rng);
        let energies = vec![BodyEnergy::zero(), BodyEnergy::new(Vec6::zeros(), h1)];
        let k = assemble(&s, &energies, Mode::Projected, &Regularization::none()).unwrap();
        let j1 = s.jacobian(1).unwrap();
        assert!((k.h - j1.transpose() * to_dynamic(&h1) * j1).amax() < 1e-12);
    }

    #[test]
    fn regularization_lands_on_matching_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = chain(&mut rng, 4);
        s.compute_body_jacobians();
        let k = assemble(&s, &vec![BodyEnergy::zero(); 4], Mode::Projected, &Regularization::default()).unwrap();
        let diag: Vec<f64> = k.h.diagonal().iter().copied().collect();
        assert_eq!(diag, vec![100.0, 100.0, 100.0, 1000.0, 1000.0, 1000.0, 100.0, 1000.0, 100.0]);
    }

    #[test]
    fn energy_count_is_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = chain(&mut rng, 3);
        s.compute_body_jacobians();
        assert_eq!(
            assemble(&s, &[BodyEnergy::zero()], Mode::Projected, &Regularization::default()),
            Err(SolverError::EnergyCountMismatch { expected: 3, got: 1 })
        );
        assert_eq!(
            assemble(&s, &vec![BodyEnergy::zero(); 3], Mode::Constrained, &Regularization::default()),
            Err(SolverError::ModeMismatch(Mode::Constrained))
        );
    }

    #[test]
    fn hessian_matches_composed_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let mut s = chain(&mut rng, 3);
            let models: Vec<QuadraticPoseTarget> = s
                .bodies()
                .iter()
                .map(|b| QuadraticPoseTarget::new(*b.pose(), rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)).unwrap())
                .collect();
            s.compute_body_jacobians();
            let energies = gather_energies(&s, &models);
            let k = assemble(&s, &energies, Mode::Projected, &Regularization::none()).unwrap();
            let total = |theta: &DVector<f64>| {
                let mut moved = s.clone();
                moved.update_poses(theta).unwrap();
                (0..moved.len()).map(|i| models.value(i, moved.body(i).pose()).unwrap()).sum::<f64>()
            };
            let n = s.n_k();
            let eps = 1e-4;
            for i in 0..n {
                for j in 0..n {
                    let at = |a: f64, b: f64| {
                        let mut d = DVector::zeros(n);
                        d[i] += a;
                        d[j] += b;
                        total(&d)
                    };
                    let numeric = (at(eps, eps) - at(eps, -eps) - at(-eps, eps) + at(-eps, -eps)) / (4.0 * eps * eps);
                    assert!((numeric - k.h[(i, j)]).abs() < 1e-6, "({i},{j}): {numeric} vs {}", k.h[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn unconstrained_identity_system_negates_gradient() {
        let v = DVector::from_column_slice(&[1.0, -2.0, 3.0]);
        let sol = solve_kkt(&KktSystem::unconstrained(DMatrix::identity(3, 3), v.clone())).unwrap();
        assert!((sol.theta + v).amax() < 1e-15);
    }

    #[test]
    fn one_dimensional_toy() {
        let k = KktSystem {
            h: DMatrix::from_element(1, 1, 2.0),
            g: DVector::from_element(1, 4.0),
            b_mat: DMatrix::from_element(1, 1, 1.0),
            b_vec: DVector::from_element(1, 3.0),
        };
        let sol = solve_kkt(&k).unwrap();
        assert!((sol.theta[0] + 3.0).abs() < 1e-14);
        assert!((sol.lambda[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn duplicated_constraint_row_fails() {
        let mut s = KinematicStructure::new();
        s.add_body("a", Pose::identity(), None, Joint::free(Pose::identity())).unwrap();
        s.add_body("b", Pose::from_translation(Vec3::new(0.1, 0.0, 0.0)), None, Joint::free(Pose::identity())).unwrap();
        let c = Constraint::new(0, 1, Pose::identity(), Pose::identity(), AxisMask::from_axes(&[Axis::TransX])).unwrap();
        s.add_constraint(c.clone()).unwrap();
        s.add_constraint(c).unwrap();
        let err = step(&mut s, &ZeroEnergy, &SolverConfig::default());
        assert!(matches!(err, Err(SolverError::FactorizationFailed { .. })), "{err:?}");
    }

    #[test]
    fn fixed_point_has_zero_step() {
        let mut s = KinematicStructure::new();
        s.add_body("a", Pose::identity(), None, Joint::free(Pose::identity())).unwrap();
        s.add_body("b", Pose::identity(), None, Joint::free(Pose::identity())).unwrap();
        s.add_constraint(Constraint::new(0, 1, Pose::identity(), Pose::identity(), AxisMask::ALL).unwrap()).unwrap();
        let report = step(&mut s, &ZeroEnergy, &SolverConfig::default()).unwrap();
        assert!(report.theta_norm <= 1e-10);
    }

    #[test]
    fn full_constraint_closes_in_one_step_along_screw_axis() {
        let axis = Vec3::new(0.3, -0.5, 0.8).normalize();
        let diff = Pose::from_rotvec_translation(axis * 2.1, axis * 0.6);
        let pose_a = Pose::from_rotvec_translation(Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.5, 0.0, 0.2));
        let mut s = KinematicStructure::new();
        s.add_body("a", pose_a, None, Joint::free(Pose::identity())).unwrap();
        s.add_body("b", pose_a * diff, None, Joint::free(Pose::identity())).unwrap();
        s.add_constraint(Constraint::new(0, 1, Pose::identity(), Pose::identity(), AxisMask::ALL).unwrap()).unwrap();
        let report = step(&mut s, &ZeroEnergy, &SolverConfig::default()).unwrap();
        assert!((report.residuals_before[0] - (2.1f64.powi(2) + 0.36).sqrt()).abs() < 1e-12);
        assert!(report.residuals_after[0] < 1e-8, "{}", report.residuals_after[0]);
    }

    #[test]
    fn full_constraint_converges_for_generic_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let pose_a = random_pose(&mut rng, 3.0, 1.0);
            let mut s = KinematicStructure::new();
            s.add_body("a", pose_a, None, Joint::free(Pose::identity())).unwrap();
            s.add_body("b", pose_a * random_pose(&mut rng, 2.1, 0.6), None, Joint::free(Pose::identity())).unwrap();
            s.add_constraint(Constraint::new(0, 1, Pose::identity(), Pose::identity(), AxisMask::ALL).unwrap()).unwrap();
            let cfg = SolverConfig { iterations: 8, ..SolverConfig::default() };
            let reports = optimize(&mut s, &ZeroEnergy, &cfg).unwrap();
            assert!(reports.last().unwrap().residuals_after[0] < 1e-8);
        }
    }

    #[test]
    fn chain_energy_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut s = chain(&mut rng, 3);
        let models: Vec<QuadraticPoseTarget> = s
            .bodies()
            .iter()
            .map(|b| QuadraticPoseTarget::new(*b.pose() * random_pose(&mut rng, 0.5, 0.2), 50.0, 500.0).unwrap())
            .collect();
        let total = |s: &KinematicStructure| (0..s.len()).map(|i| models.value(i, s.body(i).pose()).unwrap()).sum::<f64>();
        let cfg = SolverConfig { mode: Mode::Projected, ..SolverConfig::default() };
        let mut last = total(&s);
        for _ in 0..10 {
            step(&mut s, &models, &cfg).unwrap();
            let now = total(&s);
            assert!(now <= last + 1e-12, "{now} > {last}");
            last = now;
        }
    }

    #[test]
    fn free_body_energy_decreases_to_stationarity() {
        let cfg = SolverConfig { mode: Mode::Projected, regularization: Regularization::none(), ..SolverConfig::default() };
        let truth = Pose::from_rotvec_translation(Vec3::new(0.2, -0.4, 0.1), Vec3::new(0.1, 0.15, -0.05));
        let points: Vec<Vec3> =
            vec![Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.0, 0.2, 0.0), Vec3::new(0.0, 0.0, 0.15), Vec3::new(-0.1, 0.1, 0.05)];
        let registration = vec![PointRegistration::new(points.clone(), points.iter().map(|p| truth.transform_point(p)).collect()).unwrap()];
        let quadratic = vec![QuadraticPoseTarget::new(truth, 1.0, 1.0).unwrap()];
        let providers: [&dyn EnergyProvider; 2] = [&registration, &quadratic];
        for provider in providers {
            let mut s = KinematicStructure::new();
            s.add_body("b", Pose::identity(), None, Joint::free(Pose::identity())).unwrap();
            let mut last = provider.value(0, s.body(0).pose()).unwrap();
            for _ in 0..50 {
                if provider.body_energy(0, s.body(0).pose()).g.norm() < 1e-8 {
                    break;
                }
                step(&mut s, provider, &cfg).unwrap();
                let now = provider.value(0, s.body(0).pose()).unwrap();
                assert!(now < last);
                last = now;
            }
            assert!(provider.body_energy(0, s.body(0).pose()).g.norm() < 1e-8);
        }
    }

    #[test]
    fn projected_and_combined_agree_without_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = chain(&mut rng, 5);
        s.compute_body_jacobians();
        let energies: Vec<BodyEnergy> =
            (0..5).map(|_| BodyEnergy::new(Vec6::from_fn(|_, _| rng.random_range(-1.0..1.0)), random_spd(&mut rng))).collect();
        let p = solve_kkt(&assemble(&s, &energies, Mode::Projected, &Regularization::default()).unwrap()).unwrap();
        let c = solve_kkt(&assemble(&s, &energies, Mode::Combined, &Regularization::default()).unwrap()).unwrap();
        assert_eq!(p.theta, c.theta);
    }

    #[test]
    fn constrained_and_projected_reach_the_same_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = chain(&mut rng, 3);
        let models: Vec<QuadraticPoseTarget> = s
            .bodies()
            .iter()
            .map(|b| QuadraticPoseTarget::new(*b.pose() * random_pose(&mut rng, 0.3, 0.1), 100.0, 1000.0).unwrap())
            .collect();
        let mut c = prepare(&s, Mode::Constrained);
        let cfg = |mode| SolverConfig { mode, iterations: 30, regularization: Regularization::new(1.0, 1.0).unwrap() };
        optimize(&mut s, &models, &cfg(Mode::Projected)).unwrap();
        optimize(&mut c, &models, &cfg(Mode::Constrained)).unwrap();
        for i in 0..s.len() {
            let d = s.body(i).pose().variation_to(c.body(i).pose()).to_vector();
            assert!(d.amax() < 1e-6, "body {i}: {}", d.amax());
        }
    }

    #[test]
    fn fixed_energies_are_used_verbatim() {
        let e = BodyEnergy::new(Vec6::repeat(1.0), Mat6::identity());
        let mut s = KinematicStructure::new();
        s.add_body("a", Pose::identity(), None, Joint::free(Pose::identity())).unwrap();
        let cfg = SolverConfig { regularization: Regularization::none(), ..SolverConfig::default() };
        let r = step(&mut s, &FixedEnergies(vec![e]), &cfg).unwrap();
        assert!((r.theta_norm - 6f64.sqrt()).abs() < 1e-14);
    }

    fn random_kkt(seed: u64, n: usize, m: usize) -> KktSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        KktSystem {
            h: &a * a.transpose() + DMatrix::identity(n, n),
            g: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            b_mat: DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0)),
            b_vec: DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
        }
    }

    proptest! {
        #[test]
        fn solution_is_feasible_and_stationary(seed in 0u64..1000, n in 1usize..20, m in 0usize..8) {
            let k = random_kkt(seed, n, m.min(n));
            let sol = solve_kkt(&k).unwrap();
            let (st, fe) = k.residuals(&sol);
            let scale = 1.0 + k.g.amax() + k.b_vec.amax();
            prop_assert!(st.amax() < 1e-7 * scale);
            prop_assert!(fe.amax() < 1e-7 * scale);
        }

        #[test]
        fn isotropic_damping_shrinks_step(seed in 0u64..1000, n in 1usize..12, lo in 0.0f64..10.0, extra in 0.0f64..10.0) {
            let k = random_kkt(seed, n, 0);
            let damped = |l: f64| {
                let mut k = k.clone();
                for i in 0..n { k.h[(i, i)] += l; }
                solve_kkt(&k).unwrap().theta.norm()
            };
            prop_assert!(damped(lo + extra) <= damped(lo) * (1.0 + 1e-12));
        }

        #[test]
        fn diagonal_damping_shrinks_predicted_decrease(seed in 0u64..1000, n in 1usize..12) {
            // g^T (H + Sigma)^-1 g is monotone for any diagonal Sigma >= 0
            let k = random_kkt(seed, n, 0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let base = DVector::from_fn(n, |_, _| rng.random_range(0.0..10.0));
            let more = &base + DVector::from_fn(n, |_, _| rng.random_range(0.0..10.0));
            let decrease = |d: &DVector<f64>| {
                let mut k = k.clone();
                for i in 0..n { k.h[(i, i)] += d[i]; }
                -k.g.dot(&solve_kkt(&k).unwrap().theta)
            };
            prop_assert!(decrease(&more) <= decrease(&base) * (1.0 + 1e-12));
        }
    }
}
