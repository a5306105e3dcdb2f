//! Newton-type pose optimization for kinematic structures: bodies joined by
//! joints into trees, closed through pose constraints, and solved jointly
//! through a regularized KKT system.
//!
//! ```
//! use kinstruct::{Constraint, AxisMask, Joint, KinematicStructure, Pose, SolverConfig, ZeroEnergy, step};
//! use nalgebra::Vector3;
//!
//! let mut s = KinematicStructure::new();
//! let a = s.add_body("a", Pose::identity(), None, Joint::free(Pose::identity())).unwrap();
//! let b = s.add_body("b", Pose::from_translation(Vector3::new(0.0, 0.0, 0.3)), None, Joint::free(Pose::identity())).unwrap();
//! s.add_constraint(Constraint::new(a, b, Pose::identity(), Pose::identity(), AxisMask::TRANSLATION).unwrap()).unwrap();
//! let report = step(&mut s, &ZeroEnergy, &SolverConfig::default()).unwrap();
//! assert!(report.residuals_after[0] < 1e-12);
//! ```

pub mod config;
pub mod constraints;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod kinematics;
pub mod linalg;
pub mod metrics;
pub mod par;
pub mod se3;
pub mod solver;

pub use constraints::{Constraint, ConstraintEquation, OrthogonalityConstraint};
pub use energy::{BodyEnergy, BodyModel, EnergyProvider, FixedEnergies, PointRegistration, QuadraticPoseTarget, ZeroEnergy};
pub use error::{ConfigError, ConstraintError, EnergyError, ExperimentError, KinematicsError, MetricsError, SolverError};
pub use kinematics::{expand_joint_variation, Axis, AxisMask, Body, FixedSide, Joint, KinematicStructure};
pub use par::Execution;
pub use se3::{Pose, RotVec, Rotation, Variation, VariationMatrix};
pub use solver::{assemble, optimize, prepare, solve_kkt, step, KktSolution, KktSystem, Mode, Regularization, SolverConfig, StepReport};
