pub mod error;
pub mod diver;
pub mod expr;
pub mod exterior;
pub mod fields;
pub mod quad;
pub mod sampling;
pub mod surface;

pub use error::{Error, Result};
pub use expr::Expression;

/// Crate version, echoed in run reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
