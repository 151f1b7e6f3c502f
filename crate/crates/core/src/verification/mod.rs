//! Manufactured solutions of the full elastic/viscoelastic system, error
//! norms, convergence studies and energy and inf-sup diagnostics.

mod case;
mod diagnostics;
mod jet;
mod norms;
mod study;

pub use case::{
    CachedLoads, CaseResiduals, CompatiblePair, ExactPair, InitialData, ManufacturedCase, ReferenceProfile, StartupPairs,
    StressField, ZeroVector, CASE_TOLERANCE,
};
pub use diagnostics::{inf_sup_constant, EnergyTrace, ENERGY_TOLERANCE};
pub use jet::{div_lame, gradient, jets_at, strain, value, Jet2, SmoothVectorField};
pub use norms::{broken_norm, conforming_norm, ErrorEvaluator, ErrorMaxima, ErrorMonitor, Norms, PairParts, Split};
pub use study::{
    convergence_study, mesh_hierarchy, rates, run_level, temporal_richardson, DtPolicy, ErrorReport, ReportRow,
    StudyConfig, TemporalReport,
};
