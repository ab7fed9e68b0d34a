pub mod correlator;
pub mod embeddings;
pub mod error;
pub mod liouville;
pub mod oracles;
pub mod propagator;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
