//! Measured unstable curves and their transport under the collision maps.

mod curve;
mod growth;
mod push;
mod stats;

pub use curve::{z_value, CurveFamily, CurveNode, MeasuredCurve, UnstableCurve};
pub use growth::{
    curvature_update_check, distortion_check, fit_curvature_envelope, fraction_at_least, growth_cap,
    growth_statistics, stable_proxy_from, stable_size_proxy, track_samples, CurvatureEnvelope,
    CurvatureReport, DistortionReport, GrowthCap, TrackRecord, TrackSettings, TrackStep,
    CURVATURE_MIN_DR,
};
pub use push::{push_curve, DropReason, DroppedPiece, PushOutcome, PushSettings};
pub use stats::{regularity_constant, z_series, FamilyStep, RegularityReport};
