use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

pub const RUN_META: &str = "run.meta";

/// Writes the resolved settings as `key=value` lines.
pub fn write_run_meta(out: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    let path = out.join(RUN_META);
    fs::write(&path, text).with_context(|| format!("{}", path.display()))
}
