//! Small filesystem helpers shared by the checkpoint and metrics writers.

use std::fs;
use std::io;
use std::path::Path;

/// Write-temp-then-rename so interrupted runs never leave a torn file.
pub fn atomic_write(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}
