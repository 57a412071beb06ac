pub mod graph;
pub mod sim;
pub mod rounding;
pub mod shortcuts;
pub mod overlay;
pub mod clique;
pub mod metrics;
pub mod exact;
pub mod harness;
