use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::Format;

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

/// Writes `rows` as `<stem>.csv` or `<stem>.json` and returns the path.
pub fn write_table<T: Serialize>(dir: &Path, stem: &str, format: Format, rows: &[T]) -> anyhow::Result<PathBuf> {
    match format {
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(path)
        }
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            write_json(&path, &rows)?;
            Ok(path)
        }
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}
