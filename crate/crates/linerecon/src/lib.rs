//! File formats, plot data and the command-line front end for
//! [`linerecon_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod figures;
pub mod io;

pub use error::{Error, ErrorClass, Result};

/// Configurations shipped in `data/`.
pub mod bundled {
    use linerecon_core::pipeline::PipelineConfig;

    /// Seed of the reference noise realization.
    pub const SEED: u64 = 20240517;

    pub const SEVEN_LINES_JSON: &str = include_str!("../data/seven_lines.json");
    pub const WAVELENGTH_JSON: &str = include_str!("../data/wavelength_fixture.json");
    /// Noisy spectrum of the seven-line configuration at [`SEED`].
    pub const SEVEN_LINES_NOISY_CSV: &str = include_str!("../data/seven_lines_noisy.csv");

    pub fn seven_lines() -> PipelineConfig {
        serde_json::from_str(SEVEN_LINES_JSON).expect("bundled configuration parses")
    }

    pub fn wavelength_fixture() -> PipelineConfig {
        serde_json::from_str(WAVELENGTH_JSON).expect("bundled configuration parses")
    }
}
