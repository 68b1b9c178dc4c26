//! Seasonal, trend and interaction blocks plus the patching and
//! centralization utilities they share.

pub mod centralize;
pub mod interaction;
pub mod patch;
pub mod seasonal;
pub mod trend;

pub use centralize::{centralize, decentralize, Affine, CentralStats, CENTRAL_EPS};
pub use interaction::{InteractionBlock, InteractionConfig};
pub use patch::{patch, unpatch, PatchLayout};
pub use seasonal::SeasonalBlock;
pub use trend::{Backbone, Scale, TrendBlock, TrendConfig};
