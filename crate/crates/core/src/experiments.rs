//! Monte Carlo constraint-convergence study, projected-vs-constrained timing
//! on serial chains, and synthetic tracking of a scripted structure.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::config::Scenario;
use crate::constraints::{Constraint, ConstraintEquation, OrthogonalityConstraint};
use crate::energy::{BodyEnergy, FixedEnergies, QuadraticPoseTarget, ZeroEnergy};
use crate::error::{ExperimentError, SolverError};
use crate::kinematics::{Axis, AxisMask, FixedSide, Joint, KinematicStructure};
use crate::metrics::{add_error_multi, add_s_error_multi, auc_score, relative_error_pose};
use crate::par::{map_indices, Execution};
use crate::se3::{Mat6, Pose, Variation, Vec3, Vec6};
use crate::solver::{assemble, gather_energies, optimize, prepare, solve_kkt, step, Mode, Regularization, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    RotVec,
    Trans,
    Full,
    Orthogonality,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 4] =
        [ConstraintKind::RotVec, ConstraintKind::Trans, ConstraintKind::Full, ConstraintKind::Orthogonality];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::RotVec => "rotvec",
            ConstraintKind::Trans => "trans",
            ConstraintKind::Full => "full",
            ConstraintKind::Orthogonality => "ortho",
        }
    }

    fn constrains_rotation(self) -> bool {
        !matches!(self, ConstraintKind::Trans)
    }

    fn constrains_translation(self) -> bool {
        matches!(self, ConstraintKind::Trans | ConstraintKind::Full)
    }

    /// Free axes of the two bodies in a trial.
    fn body_axes(self) -> AxisMask {
        match self {
            ConstraintKind::RotVec | ConstraintKind::Orthogonality => AxisMask::ROTATION,
            ConstraintKind::Trans => AxisMask::TRANSLATION,
            ConstraintKind::Full => AxisMask::ALL,
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConstraintKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConstraintKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown constraint kind {s:?}"))
    }
}

/// Where the constrained frames sit relative to the body model frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FrameSampling {
    /// `A_T_Ma = B_T_Mb = I`.
    Model,
    #[default]
    Random,
}

/// Rotation vector with a uniform axis and a length drawn from `U[-pi, pi]`.
pub fn sample_rotvec(rng: &mut impl Rng) -> Vec3 {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    Vec3::from(axis) * rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI)
}

/// Translation with a uniform direction and a length drawn from `U[-1, 1]`.
pub fn sample_translation(rng: &mut impl Rng) -> Vec3 {
    let dir: [f64; 3] = UnitSphere.sample(rng);
    Vec3::from(dir) * rng.random_range(-1.0..=1.0)
}

pub fn sample_pose(rng: &mut impl Rng) -> Pose {
    let r = sample_rotvec(rng);
    Pose::from_rotvec_translation(r, sample_translation(rng))
}

/// Random SPD Hessian and gradient for one body.
pub fn sample_body_energy(rng: &mut impl Rng) -> BodyEnergy {
    let normal = Normal::new(0.0, 1.0).expect("valid");
    let a = Mat6::from_fn(|_, _| normal.sample(rng));
    let h = (a * a.transpose() + Mat6::identity()) * 100.0;
    let g = Vec6::from_fn(|_, _| normal.sample(rng)) * 100.0;
    BodyEnergy::new(g, h)
}

#[derive(Clone, Copy, Debug)]
pub struct ConvergenceOptions {
    pub trials: usize,
    pub iterations: usize,
    pub kind: ConstraintKind,
    pub seed: u64,
    pub random_energy: bool,
    pub frames: FrameSampling,
    pub regularization: Regularization,
    pub execution: Execution,
}

impl ConvergenceOptions {
    pub fn new(kind: ConstraintKind, trials: usize, iterations: usize, seed: u64) -> Self {
        ConvergenceOptions {
            trials,
            iterations,
            kind,
            seed,
            random_energy: false,
            frames: FrameSampling::Random,
            regularization: Regularization::default(),
            execution: Execution::default(),
        }
    }
}

/// One trial's errors for iterations `0..=n` (0 is the initial state).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTrial {
    pub frame_a: Pose,
    pub frame_b: Pose,
    pub initial_diff: Pose,
    pub errors: Vec<(f64, f64)>,
    pub failed: bool,
}

/// The trial's two-body structure; body 0 carries frame A, body 1 frame B.
pub fn convergence_structure(kind: ConstraintKind, pose_a: Pose, frame_a: Pose, frame_b: Pose, diff: Pose) -> KinematicStructure {
    let pose_b = pose_a * frame_a.inverse() * diff * frame_b;
    let joint = Joint::new(kind.body_axes(), FixedSide::JointToModel, Pose::identity());
    let mut s = KinematicStructure::new();
    s.add_body("a", pose_a, None, joint.clone()).expect("fresh structure");
    s.add_body("b", pose_b, None, joint).expect("fresh structure");
    let eq: ConstraintEquation = match kind {
        ConstraintKind::Orthogonality => OrthogonalityConstraint::new(0, 1, frame_a, frame_b).expect("distinct bodies").into(),
        _ => {
            let axes = match kind {
                ConstraintKind::RotVec => AxisMask::ROTATION,
                ConstraintKind::Trans => AxisMask::TRANSLATION,
                _ => AxisMask::ALL,
            };
            Constraint::new(0, 1, frame_a, frame_b, axes).expect("distinct bodies").into()
        }
    };
    s.add_constraint(eq).expect("valid bodies");
    s
}

/// Rotational and translational error of the constrained components of
/// `A_T_B`; a component the kind leaves free is reported as 0.
pub fn constraint_errors(kind: ConstraintKind, s: &KinematicStructure) -> (f64, f64) {
    let rel = s.constraints()[0].relative_pose(s);
    let rot = if kind.constrains_rotation() { rel.rotation.log().angle() } else { 0.0 };
    let trans = if kind.constrains_translation() { rel.translation.norm() } else { 0.0 };
    (rot, trans)
}

pub fn run_convergence_trial(opts: &ConvergenceOptions, index: usize) -> ConvergenceTrial {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(index as u64);
    let (frame_a, frame_b) = match opts.frames {
        FrameSampling::Model => (Pose::identity(), Pose::identity()),
        FrameSampling::Random => (sample_pose(&mut rng), sample_pose(&mut rng)),
    };
    let pose_a = sample_pose(&mut rng);
    let diff = sample_pose(&mut rng);
    let mut s = convergence_structure(opts.kind, pose_a, frame_a, frame_b, diff);
    let energies = match opts.random_energy {
        true => Some(FixedEnergies(vec![sample_body_energy(&mut rng), sample_body_energy(&mut rng)])),
        false => None,
    };
    let cfg = SolverConfig { mode: Mode::Combined, iterations: 1, regularization: opts.regularization };
    let mut errors = Vec::with_capacity(opts.iterations + 1);
    errors.push(constraint_errors(opts.kind, &s));
    let mut failed = false;
    for _ in 0..opts.iterations {
        let result = match &energies {
            Some(e) => step(&mut s, e, &cfg),
            None => step(&mut s, &ZeroEnergy, &cfg),
        };
        failed |= result.is_err();
        errors.push(constraint_errors(opts.kind, &s));
    }
    ConvergenceTrial { frame_a, frame_b, initial_diff: diff, errors, failed }
}

#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub kind: ConstraintKind,
    pub iterations: usize,
    pub trials: Vec<ConvergenceTrial>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PercentileRow {
    pub iteration: usize,
    pub percentile: u32,
    pub rot_err: f64,
    pub trans_err: f64,
}

pub fn run_convergence_study(opts: &ConvergenceOptions) -> ConvergenceStudy {
    let trials = map_indices(opts.execution, opts.trials, |i| run_convergence_trial(opts, i));
    ConvergenceStudy { kind: opts.kind, iterations: opts.iterations, trials }
}

/// Linear interpolation between closest ranks; `p` in `[0, 100]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

impl ConvergenceStudy {
    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.failed).count()
    }

    /// Sorted rotational and translational errors at one iteration.
    pub fn errors_at(&self, iteration: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rot: Vec<f64> = self.trials.iter().map(|t| t.errors[iteration].0).collect();
        let mut trans: Vec<f64> = self.trials.iter().map(|t| t.errors[iteration].1).collect();
        rot.sort_by(f64::total_cmp);
        trans.sort_by(f64::total_cmp);
        (rot, trans)
    }

    pub fn percentile(&self, iteration: usize, p: f64) -> (f64, f64) {
        let (rot, trans) = self.errors_at(iteration);
        (percentile(&rot, p), percentile(&trans, p))
    }

    /// Every integer percentile 0..=100 for every iteration.
    pub fn table(&self) -> Vec<PercentileRow> {
        let mut rows = Vec::new();
        for iteration in 0..=self.iterations {
            let (rot, trans) = self.errors_at(iteration);
            for p in 0..=100u32 {
                rows.push(PercentileRow {
                    iteration,
                    percentile: p,
                    rot_err: percentile(&rot, p as f64),
                    trans_err: percentile(&trans, p as f64),
                });
            }
        }
        rows
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "kind,iteration,percentile,rot_err,trans_err")?;
        for r in self.table() {
            writeln!(out, "{},{},{},{:e},{:e}", self.kind, r.iteration, r.percentile, r.rot_err, r.trans_err)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingSample {
    pub mode: Mode,
    pub n_bodies: usize,
    pub kkt_dimension: usize,
    /// Median wall-clock seconds of one Jacobian + assembly + solve + update.
    pub seconds_per_iter: f64,
}

/// Serial chain of `n` bodies: a free root and revolute (rot_z) links of
/// length 0.1 m at random joint angles.
pub fn serial_chain(n: usize, rng: &mut impl Rng) -> KinematicStructure {
    let mut s = KinematicStructure::new();
    let root = sample_pose(rng);
    s.add_body("link0", root, None, Joint::free(Pose::identity())).expect("fresh structure");
    let mut pose = root;
    for i in 1..n {
        let angle = rng.random_range(-0.5..0.5);
        pose = pose * Pose::from_rotvec_translation(Vec3::new(0.0, 0.0, angle), Vec3::new(0.1, 0.0, 0.0));
        s.add_body(format!("link{i}"), pose, Some(i - 1), Joint::single(Axis::RotZ, Pose::identity())).expect("unique names");
    }
    s
}

/// Times `cycle` once for warm-up, then `repetitions` times; returns the median.
fn median_seconds(repetitions: usize, mut cycle: impl FnMut() -> Result<(), SolverError>) -> Result<f64, SolverError> {
    cycle()?;
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions.max(1) {
        let start = Instant::now();
        cycle()?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(percentile(&times, 50.0).max(f64::MIN_POSITIVE))
}

pub fn scaling_sample(
    chain: &KinematicStructure,
    mode: Mode,
    repetitions: usize,
    rng: &mut impl Rng,
) -> Result<ScalingSample, SolverError> {
    let working = prepare(chain, mode);
    let targets: Vec<QuadraticPoseTarget> = working
        .bodies()
        .iter()
        .map(|b| {
            let noise = Variation::new(sample_rotvec(rng) * 0.01, sample_translation(rng) * 0.005);
            QuadraticPoseTarget::new(b.pose().varied(&noise), 1000.0, 100_000.0).expect("positive weights")
        })
        .collect();
    let energies = gather_energies(&working, &targets);
    let reg = Regularization::default();
    let mut dimension = 0;
    let seconds = median_seconds(repetitions, || {
        let mut s = working.clone();
        s.compute_body_jacobians();
        let kkt = assemble(&s, &energies, mode, &reg)?;
        let sol = solve_kkt(&kkt)?;
        s.update_poses(&sol.theta)?;
        dimension = kkt.dimension();
        Ok(())
    })?;
    Ok(ScalingSample { mode, n_bodies: chain.len(), kkt_dimension: dimension, seconds_per_iter: seconds })
}

/// Projected and constrained samples for chains of 1..=max_bodies. Runs on
/// the calling thread.
pub fn run_scaling_study(max_bodies: usize, repetitions: usize, seed: u64) -> Result<Vec<ScalingSample>, SolverError> {
    let mut out = Vec::new();
    for n in 1..=max_bodies {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(n as u64);
        let chain = serial_chain(n, &mut rng);
        for mode in [Mode::Projected, Mode::Constrained] {
            out.push(scaling_sample(&chain, mode, repetitions, &mut rng)?);
        }
    }
    Ok(out)
}

pub fn write_scaling_csv(samples: &[ScalingSample], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "mode,n_bodies,seconds_per_iter")?;
    for s in samples {
        writeln!(out, "{},{},{:e}", s.mode, s.n_bodies, s.seconds_per_iter)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingStep {
    pub step: usize,
    pub add: Vec<f64>,
    pub add_s: Vec<f64>,
    /// Largest residual norm over the scenario's explicit constraints.
    pub constraint_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingReport {
    pub mode: Mode,
    pub body_names: Vec<String>,
    pub steps: Vec<TrackingStep>,
    pub auc_add: f64,
    pub auc_add_s: f64,
}

impl TrackingReport {
    pub fn mean_add(&self) -> f64 {
        let all: Vec<f64> = self.steps.iter().flat_map(|s| s.add.iter().copied()).collect();
        all.iter().sum::<f64>() / all.len().max(1) as f64
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.steps.iter().map(|s| s.constraint_residual).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "step,body,add,add_s,constraint_residual")?;
        for s in &self.steps {
            for (i, name) in self.body_names.iter().enumerate() {
                writeln!(out, "{},{},{:e},{:e},{:e}", s.step, name, s.add[i], s.add_s[i], s.constraint_residual)?;
            }
        }
        Ok(())
    }
}

/// Tracks the scenario's scripted motion from noisy pose targets, starting
/// at the reference configuration.
pub fn run_synthetic_tracking(scenario: &Scenario, mode: Mode, steps: usize, seed: u64) -> Result<TrackingReport, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot_noise = Normal::new(0.0, scenario.noise.rot).expect("validated");
    let trans_noise = Normal::new(0.0, scenario.noise.trans).expect("validated");
    let reference = &scenario.structure;
    let mut s = prepare(reference, mode);
    let cfg = SolverConfig { mode, iterations: scenario.iterations_per_step, regularization: scenario.regularization };
    let w = scenario.energy;

    let mut records = Vec::with_capacity(steps);
    for k in 0..steps {
        let truth = scenario.ground_truth(k);
        let targets: Vec<QuadraticPoseTarget> = truth
            .iter()
            .map(|gt| {
                let noise =
                    Variation::new(Vec3::from_fn(|_, _| rot_noise.sample(&mut rng)), Vec3::from_fn(|_, _| trans_noise.sample(&mut rng)));
                QuadraticPoseTarget::new(gt.varied(&noise), w.weight_rot, w.weight_trans).expect("validated weights")
            })
            .collect();
        optimize(&mut s, &targets, &cfg)?;

        let mut add = Vec::with_capacity(s.len());
        let mut add_s = Vec::with_capacity(s.len());
        for (i, gt) in truth.iter().enumerate() {
            let rel = relative_error_pose(s.body(i).pose(), gt);
            add.push(add_error_multi(&scenario.meshes[i], &rel)?);
            add_s.push(add_s_error_multi(&scenario.meshes[i], &rel)?);
        }
        let constraint_residual = reference.constraints().iter().map(|c| c.evaluate(&s).norm()).fold(0.0, f64::max);
        records.push(TrackingStep { step: k, add, add_s, constraint_residual });
    }

    let per_body = |f: fn(&TrackingStep) -> &Vec<f64>| -> Vec<Vec<f64>> {
        (0..reference.len()).map(|i| records.iter().map(|r| f(r)[i]).collect()).collect()
    };
    let auc_add = auc_score(&per_body(|r| &r.add), scenario.error_threshold)?;
    let auc_add_s = auc_score(&per_body(|r| &r.add_s), scenario.error_threshold)?;
    Ok(TrackingReport { mode, body_names: reference.bodies().iter().map(|b| b.name.clone()).collect(), steps: records, auc_add, auc_add_s })
}

pub fn run_synthetic_tracking_file(path: impl AsRef<Path>, mode: Mode, steps: usize, seed: u64) -> Result<TrackingReport, ExperimentError> {
    let scenario = Scenario::load(path)?;
    run_synthetic_tracking(&scenario, mode, steps, seed)
}
