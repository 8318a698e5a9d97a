//! Accuracy records as comma-separated text.

use std::fmt::Write as _;
use std::path::Path;

use crate::experiment::AccuracyRecord;
use crate::Result;

pub const HEADER: &str = "decoder,L,p,trials,acc_z1,acc_z2,acc_mean,acc_joint,ci_lo,ci_hi,seconds";

/// One line per record after the header. With `timing` off the seconds
/// column is written as 0, making the output a pure function of the inputs.
pub fn to_csv(records: &[AccuracyRecord], timing: bool) -> String {
    let mut s = format!("{HEADER}\n");
    for r in records {
        let secs = if timing { r.seconds } else { 0.0 };
        writeln!(
            s,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            r.decoder, r.size, r.p, r.trials, r.acc_z1, r.acc_z2, r.acc_mean, r.acc_joint, r.ci_lo, r.ci_hi, secs
        )
        .unwrap();
    }
    s
}

pub fn write_csv(path: &Path, records: &[AccuracyRecord], timing: bool) -> Result<()> {
    std::fs::write(path, to_csv(records, timing))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let r = AccuracyRecord::from_counts("mwpm", 8, 0.08, 4, [4, 3, 3], 1.25);
        let text = to_csv(&[r.clone()], true);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], HEADER);
        assert!(lines[1].starts_with("mwpm,8,0.08,4,1.000000,0.750000,0.875000,0.750000,"));
        assert!(lines[1].ends_with(",1.250"));
        assert!(to_csv(&[r], false).ends_with(",0.000\n"));
    }
}
