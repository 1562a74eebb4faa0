//! Candidate natural parametrizations, good events and the Frostman
//! energy diagnostic.

pub mod events;
pub mod frostman;
pub mod minkowski;
pub mod series;

pub use events::{frostman_weight, good_event_indicator, phi0, GoodEventReport, Phi0};
pub use frostman::{frostman_energy, trace_frostman_measure, EmpiricalMeasure, FrostmanEnergy};
pub use minkowski::{tau_conformal_minkowski, tau_minkowski, upper_nodes, upsilon_comparability, BBox, Comparability, MinkowskiOptions};
pub use series::{tau_d_variation, tau_derivative_sum, tau_derivative_sum_multi, Candidate, ParamSeries};
