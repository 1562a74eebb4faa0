//! Loewner chains: slit compositions, marked-point flows and traces.

pub mod distortion;
pub mod flow;
pub mod slit;
pub mod trace;

pub use distortion::{koebe_check, rect_distortion_check, DistortionReport};
pub use flow::{
    forward_point, forward_point_until, reverse_point, reverse_point_until, FlowDirection, Integrator,
    ReverseFlowState,
};
pub use slit::{build_chain, upper_sqrt, MapValue, SlitChain, SlitMap};
pub use trace::{tip_error_bound, trace, trace_of_chain, Trace};
