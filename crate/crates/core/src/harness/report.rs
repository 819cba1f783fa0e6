//! Output files of a run.
//!
//! `estimates.csv` and `error.csv` are fully determined by the scenario and
//! its seeds. `timing.txt` and `run.json` carry wall-clock timings and differ
//! from run to run.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::harness::metrics::{Role, RunMetrics};
use crate::run::{ProtocolKind, RunResult};

/// Significant digits of every number written to a report.
pub const SIG_DIGITS: usize = 12;

/// Per-step milliseconds of the sensor (or group), aggregator and query
/// nodes as published for each protocol on the original testbed.
pub const PUBLISHED_MS: [(ProtocolKind, [f64; 3]); 2] =
    [(ProtocolKind::One, [7.75, 4.6, 1.77]), (ProtocolKind::Two, [23.67, 2.31, 1.77])];

/// `x` in scientific notation with 12 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        // Also folds -0 into 0.
        return format!("{:.*e}", SIG_DIGITS - 1, 0.0);
    }
    format!("{:.*e}", SIG_DIGITS - 1, x)
}

fn io_err(path: &Path, e: io::Error) -> io::Error {
    io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, data: impl AsRef<[u8]>) -> io::Result<()> {
    fs::write(path, data).map_err(|e| io_err(path, e))
}

/// `step,est_x1..est_xn,true_x1..true_xn`; truth cells stay empty without ground truth.
pub fn estimates_csv(run: &RunResult) -> String {
    let n = run.scenario.n();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string()];
    header.extend((1..=n).map(|i| format!("est_x{i}")));
    header.extend((1..=n).map(|i| format!("true_x{i}")));
    w.write_record(&header).expect("write to memory");
    for (k, est) in run.estimates.iter().enumerate() {
        let mut row = vec![(k + 1).to_string()];
        row.extend(est.x.iter().map(|&v| fmt_sig(v)));
        match run.truth_at(k + 1) {
            Some(t) => row.extend(t.iter().map(|&v| fmt_sig(v))),
            None => row.extend(std::iter::repeat_n(String::new(), n)),
        }
        w.write_record(&row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
}

/// `step,err_x1..err_xn`, one row per step, or just the header without ground truth.
pub fn error_csv(run: &RunResult, metrics: &RunMetrics) -> String {
    let n = run.scenario.n();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string()];
    header.extend((1..=n).map(|i| format!("err_x{i}")));
    w.write_record(&header).expect("write to memory");
    for (k, e) in metrics.errors.iter().flatten().enumerate() {
        let mut row = vec![(k + 1).to_string()];
        row.extend(e.iter().map(|&v| fmt_sig(v)));
        w.write_record(&row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
}

pub fn timing_text(run: &RunResult, metrics: &RunMetrics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} on `{}`: {} steps, {}-bit key", run.protocol, run.scenario.name, run.steps(), run.public_key.bits());
    let _ = writeln!(s);
    let _ = writeln!(s, "mean ms per step   sensor/group   aggregator   query");
    let _ = writeln!(
        s,
        "measured           {:>12.3}   {:>10.3}   {:>5.3}",
        metrics.role(Role::Sensor),
        metrics.role(Role::Aggregator),
        metrics.role(Role::Query)
    );
    for (kind, ms) in PUBLISHED_MS {
        let _ = writeln!(
            s,
            "paper reference ({})  {:>8}   {:>10}   {:>5}",
            match kind {
                ProtocolKind::One => "P1",
                ProtocolKind::Two => "P2",
            },
            ms[0],
            ms[1],
            ms[2]
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "setup ms");
    for (role, ms) in &metrics.setup_ms {
        let _ = writeln!(s, "  {role:?}: {ms:.3}");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "per party (mean ms per step)");
    for (party, ms) in &metrics.party_ms {
        let _ = writeln!(s, "  {party}: {ms:.3}");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "messages: {} ({} bytes)", metrics.messages, metrics.bytes);
    for (kind, (count, bytes)) in &metrics.by_kind {
        let _ = writeln!(s, "  {kind}: {count} ({bytes} bytes)");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "max deviation from plaintext filter: {}", fmt_sig(metrics.reference_deviation));
    if let Some(rms) = &metrics.rms {
        let _ = writeln!(s, "rms error per axis: {}", rms.iter().map(|&v| fmt_sig(v)).collect::<Vec<_>>().join(" "));
    }
    s
}

/// Writes `estimates.csv`, `error.csv` and `timing.txt` into `out_dir`.
pub fn emit_reports(run: &RunResult, metrics: &RunMetrics, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let files = [
        ("estimates.csv", estimates_csv(run)),
        ("error.csv", error_csv(run, metrics)),
        ("timing.txt", timing_text(run, metrics)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        write_file(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `run.json` and one `transcripts/<party>.jsonl` per party.
pub fn write_run_artifacts(run: &RunResult, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    let dir = out_dir.join("transcripts");
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut written = Vec::new();
    for t in &run.transcripts {
        let path = dir.join(format!("{}.jsonl", t.party));
        write_file(&path, t.to_jsonl())?;
        written.push(path);
    }
    let path = out_dir.join("run.json");
    let json = serde_json::to_vec(run).map_err(io::Error::other)?;
    write_file(&path, json)?;
    written.push(path);
    Ok(written)
}

pub fn read_run(path: &Path) -> io::Result<RunResult> {
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&data).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::{DataSource, Scenario};
    use crate::protocol2::run_protocol2;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig(1.0), "1.00000000000e0");
        assert_eq!(fmt_sig(-0.000123456789012345), "-1.23456789012e-4");
        assert_eq!(fmt_sig(-0.0), fmt_sig(0.0));
    }

    #[test]
    fn reports_have_one_row_per_step_and_reference_timings() {
        let mut s = Scenario::constant_velocity(4, Some(2), 3, 256);
        s.data = DataSource::Synthetic { noiseless: true };
        // Protocol 2 uses the initial estimate as the prior of the first reading.
        s.init.x = &s.model.f * &s.x0;
        let run = run_protocol2(&s).unwrap();
        let metrics = RunMetrics::compute(&run);
        let dir = tempfile::tempdir().unwrap();
        emit_reports(&run, &metrics, dir.path()).unwrap();
        let est = fs::read_to_string(dir.path().join("estimates.csv")).unwrap();
        assert_eq!(est.lines().count(), 4);
        assert!(est.starts_with("step,est_x1,"));
        let err = fs::read_to_string(dir.path().join("error.csv")).unwrap();
        for line in err.lines().skip(1) {
            for cell in line.split(',').skip(1) {
                assert!(cell.parse::<f64>().unwrap().abs() <= 1e-6, "{cell}");
            }
        }
        let timing = fs::read_to_string(dir.path().join("timing.txt")).unwrap();
        for v in ["7.75", "4.6", "1.77", "23.67", "2.31"] {
            assert!(timing.contains(v), "{v}");
        }
        assert!(timing.contains("paper reference"));
    }

    #[test]
    fn run_artifact_round_trips() {
        let run = run_protocol2(&Scenario::constant_velocity(2, Some(2), 2, 256)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run_artifacts(&run, dir.path()).unwrap();
        assert_eq!(read_run(&dir.path().join("run.json")).unwrap(), run);
        assert!(dir.path().join("transcripts/aggregator.jsonl").exists());
    }
}
