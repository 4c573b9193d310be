//! Batch front-end for the degctrl library: TOML configs in, CSV fields,
//! text reports and a JSON run manifest out.

pub mod config;
pub mod run;

pub use config::Config;
pub use run::{run, Command, Manifest};
