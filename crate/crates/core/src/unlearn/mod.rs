//! The unlearned model family `f + η·ΔM`, the η line search, and
//! diagnostics around the resulting KL to the retain distribution.

mod admissibility;
mod bounds;
mod search;
mod signal;

pub use admissibility::{check_admissibility, Admissibility};
pub use bounds::{bound_report, prop2_terms, BoundReport, Decomposition, Prop1Terms, Prop2Terms};
pub use search::{
    find_eta_max, find_eta_max_with, h_curve, h_curve_csv, second_differences, EtaSearchResult,
    ZeroBracket, DEFAULT_TOL, H_FLOOR, SLOPE_STEP,
};
pub use signal::{h_empirical, unlearned_probits, SignalTable, UnlearnedModel};
