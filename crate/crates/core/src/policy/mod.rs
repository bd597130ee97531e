//! Autoregressive partition policies: the feasibility masks, the linear
//! edge-score policy and its decoders, and the sweep heuristic.

mod decode;
mod edge_score;
mod features;
mod state;
mod sweep;

pub use decode::{decode, score_sequence, sequence_score, CostCache, DecodeMode, Decoded, SampledDecode, SequenceScore};
pub(crate) use decode::{add_into, sample_with_grads};
pub use edge_score::{score_step, ActionDistribution, Candidate, EdgeScorePolicy};
pub use features::{DecodeContext, Features, FEATURE_NAMES, NUM_FEATURES};
pub use state::{feasible_actions, Action, DecodeState};
pub use sweep::{sweep_decode, sweep_decode_sub};
