//! Subcommand implementations.

mod evaluate;
mod identify;
mod simulate;

pub use evaluate::cmd_evaluate;
pub use identify::cmd_identify;
pub use simulate::cmd_simulate;

use std::path::Path;

use pnid_core::data::ObservedQuantity;

use crate::CliError;

pub(crate) fn parse_observed(s: &str) -> Result<ObservedQuantity, CliError> {
    match s {
        "acceleration" => Ok(ObservedQuantity::Acceleration),
        "displacement" => Ok(ObservedQuantity::Displacement),
        "voltage" => Ok(ObservedQuantity::Voltage),
        other => Err(CliError::Config(format!(
            "observed quantity must be acceleration | displacement | voltage, got `{other}`"
        ))),
    }
}

pub(crate) fn ensure_out_dir(out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))
}

/// Every run leaves the resolved config beside its outputs; re-running from
/// that snapshot reproduces the artifacts byte for byte.
pub(crate) fn write_snapshot(cfg: &crate::config::RunConfig, out_dir: &Path) -> Result<(), CliError> {
    std::fs::write(out_dir.join("config_snapshot.toml"), cfg.to_toml())
        .map_err(|e| CliError::Data(e.to_string()))
}
