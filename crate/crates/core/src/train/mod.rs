//! Policy training: REINFORCE and self-imitation.

pub mod rl;
pub mod sl;
