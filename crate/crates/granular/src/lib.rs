//! Files, configuration, parallel execution and the command-line front end
//! for `granular-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod parallel;
pub mod presets;
pub mod verify;
pub mod workflow;

pub use config::RunConfig;
pub use error::{AppError, AppResult};
