//! Dispersing billiards on the unit torus with scatterers that move slowly
//! between collisions: collision maps, tangent dynamics, transport of
//! measured unstable curves and Monte-Carlo memory-loss experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod billiard;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod sampling;
pub mod stats;
pub mod scenario;
pub mod scene;
pub mod tangent;
pub mod transport;
pub mod vec2;

pub use billiard::{
    billiard_step, chart_to_plane, evolve_sequence, plane_to_chart, trace_free_flight, BilliardMap,
    CollisionRecord, PhasePoint,
};
pub use error::{Error, Result};
pub use geometry::{
    admissibility, config_distance, escape_time, horizon_check, tau_min, AdmissibilityReport,
    Configuration, Disk, HorizonResolution, HorizonSpec, HorizonVerdict,
};
pub use scenario::{ScenarioKind, ScenarioSequence};
pub use scene::Scene;
pub use vec2::Vec2;
pub use tangent::{
    cone_image_slopes, dxf, homogeneity_index, separation_time, tangent_audit, unstable_jacobian,
    AuditReport, AuditSettings, ConeSpec, HomogeneityScheme, Separation, Strip, TangentMatrix,
};
