//! Per-epoch training history as CSV.

use std::path::Path;

use signa_core::model::EpochRecord;

use crate::{fsutil, Error, Result};

pub const HISTORY_FILE: &str = "history.csv";

/// Floats are written in shortest round-trip form.
pub fn write_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = fsutil::csv_writer(path)?;
    w.write_record(["epoch", "lr", "train_loss", "val_f1_example"]).map_err(|e| Error::csv(path, e))?;
    for r in history {
        let row = [r.epoch.to_string(), r.lr.to_string(), r.train_loss.to_string(), r.val_f1_example.to_string()];
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>> {
    let path = path.as_ref();
    let mut r = fsutil::csv_reader(path)?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}
