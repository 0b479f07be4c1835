//! Run manifest: a `key = value` text file next to each CSV.

use std::path::{Path, PathBuf};

use crate::config::LogBase;
use crate::sweep::Table;
use crate::RunError;

pub const SNR_DEFINITION: &str =
    "snr_db = 10*log10(budget/(m*sigma_z_sq)) with budget = t*power; sigma_z_sq = sigma_z_sq config value when budget = 0";

/// `<out>.manifest`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

pub fn manifest_text(
    subcommand: &str,
    config: &[(&str, String)],
    table: &Table,
    log_base: LogBase,
    csv_name: &str,
    extra: &[(&str, String)],
) -> String {
    let mut lines = vec![
        format!("tool = ser"),
        format!("version = {}", env!("CARGO_PKG_VERSION")),
        format!("subcommand = {subcommand}"),
        format!("csv = {csv_name}"),
        format!("rows = {}", table.rows.len()),
        format!("log_base = {}", log_base.unit()),
        format!("float_format = %.12e"),
    ];
    if subcommand.ends_with("sweep") {
        lines.push(format!("snr_definition = {SNR_DEFINITION}"));
    }
    lines.extend(config.iter().map(|(k, v)| format!("config.{k} = {v}")));
    lines.extend(extra.iter().map(|(k, v)| format!("{k} = {v}")));
    lines.extend(
        table
            .columns
            .iter()
            .map(|c| format!("column.{} = {}", c.name, c.unit)),
    );
    let mut text = lines.join("\n");
    text.push('\n');
    text
}

/// Writes the CSV to `out` and the manifest beside it.
pub fn write_outputs(out: &Path, csv: &str, manifest: &str) -> Result<(), RunError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| RunError::Io { path, source }
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
    }
    std::fs::write(out, csv).map_err(io(out))?;
    let m = manifest_path(out);
    std::fs::write(&m, manifest).map_err(io(&m))?;
    Ok(())
}
