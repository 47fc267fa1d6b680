//! Exact Grassmann-algebra engine for graphs with at most a few vertices.
//!
//! Supernumbers are dense over generator bitmasks; forms are expression
//! trees evaluated at base points, with dual-number coefficients when real
//! derivatives are needed (the supersymmetry generator `Q`).

pub mod algebra;
pub mod analytic;
pub mod form;
pub mod horo;
pub mod integrate;
pub mod scalar;

pub use algebra::{Gen, Supernumber, MAX_PAIRS};
pub use analytic::{apply_analytic, Analytic};
pub use form::{apply_q, eval_at, h22_action, Form, FormContext};
pub use horo::{
    berezinian, horo_superintegral, horo_susy_map, verify_berezinian, verify_susy_horo_identities, BerezinianReport,
    HoroSusyPoint, SuperIdentityReport,
};
pub use integrate::{
    h22_expectation_exact, h22_integrand, localisation_check, superintegrate, supersymmetry_residual,
    LocalisationReport, SuperQuadResult, SuperQuadSpec,
};
pub use scalar::{Dual, HyperDual, Scalar};
