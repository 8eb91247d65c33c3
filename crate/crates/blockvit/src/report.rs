//! JSON and CSV serialization of experiment reports.

use std::io::Write;

use blockvit_core::eval::TransformReport;
use blockvit_core::KeySet;

use crate::keyfile::to_hex;

pub fn report_json(report: &TransformReport) -> String {
    serde_json::to_string_pretty(report).expect("report holds only strings and numbers")
}

/// One row per trial: `trial,value`.
pub fn write_trials_csv<W: Write>(report: &TransformReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "value"])?;
    for (i, v) in report.per_trial.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per wrong key: `trial,k1,k2,k3,accuracy`.
pub fn write_attack_csv<W: Write>(report: &TransformReport, keys: &[KeySet], out: W) -> csv::Result<()> {
    assert_eq!(keys.len(), report.per_trial.len(), "one key per trial");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "k1", "k2", "k3", "accuracy"])?;
    for (i, (k, acc)) in keys.iter().zip(&report.per_trial).enumerate() {
        w.write_record([i.to_string(), to_hex(k.k1), to_hex(k.k2), to_hex(k.k3), acc.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
