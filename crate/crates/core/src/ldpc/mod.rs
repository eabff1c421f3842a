//! Binary LDPC ensembles, Tanner graphs, sum-product decoding and curve design.

mod decoder;
mod degree;
mod gade;
mod graph;
mod optimize;
mod threshold;
mod transfer;

pub use decoder::{spa_decode, DecodeOutput, SpaDecoder, LLR_CLAMP};
pub use degree::DegreeDistribution;
pub use gade::{ga_check_mean, ga_curve, ga_phi, ga_phi_inv, ga_threshold_rho};
pub use graph::{build_graph, girth, node_counts, LdpcCode};
pub use optimize::{optimize_degrees, OptimizeConfig, OptimizeResult};
pub use threshold::{curves_clear, se_threshold, ThresholdConfig, WeightedCurves};
pub use transfer::{measure_code_curve, measure_transfer_curve, TransferCurveEstimate, MEASURE_ITERS, STALL_WINDOW};
