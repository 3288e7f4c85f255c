//! Dense-array network numerics: layers with explicit forward/backward passes,
//! Adam, target-network synchronization and checkpoints.

mod adam;
mod checkpoint;
mod conv;
mod dense;
mod embed;
mod lstm;
mod network;
mod param;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use conv::{Conv2d, ConvGeometry};
pub use dense::Dense;
pub use embed::{hadamard, CosineEmbedding, HadamardMerge};
pub use lstm::{Lstm, LstmState};
pub use network::{sync_target, InputShape, LayerSpec, Network, NetworkSpec};
pub use param::{Batch, InitPolicy, Param, Real};
