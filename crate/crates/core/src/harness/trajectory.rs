//! Measurement streams in CSV form.
//!
//! Two layouts are accepted. A single rigid body, `t,x,y,z`: every column
//! after `t` is one measurement entry, and the same row is given to every
//! sensor. Or per-sensor columns `s1_1,s1_2,…,s2_1,…`, one group of `p`
//! columns per sensor. Either layout may carry `truth_1,…,truth_n` columns
//! with the true state. Time must increase with a constant spacing, and no
//! cell may be empty: the protocols are synchronous and cannot skip a step.
//!
//! Numbers are written in shortest round-trip form, so an exported
//! trajectory reads back bit-for-bit.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::kalman::Trajectory;
use crate::matlib::Vector;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("the file has no data rows")]
    Empty,
    #[error("header: {0}")]
    Header(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("row {row}: time {t} does not follow the constant spacing {dt}")]
    Time { row: usize, t: f64, dt: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub times: Vec<f64>,
    /// `measurements[k][i]` is sensor `i`'s reading at row `k`.
    pub measurements: Vec<Vec<Vector>>,
    pub truth: Option<Vec<Vector>>,
}

impl CsvData {
    pub fn steps(&self) -> usize {
        self.measurements.len()
    }
}

enum Layout {
    Shared(Vec<usize>),
    PerSensor(Vec<Vec<usize>>),
}

fn sensor_column(name: &str) -> Option<(usize, &str)> {
    let rest = name.strip_prefix('s')?;
    let (index, entry) = rest.split_once('_')?;
    Some((index.parse().ok()?, entry))
}

fn layout(header: &csv::StringRecord, sensors: usize, p: usize, n: usize) -> Result<(Layout, Option<Vec<usize>>), CsvError> {
    if header.get(0).map(str::trim) != Some("t") {
        return Err(CsvError::Header("the first column must be `t`".into()));
    }
    let mut truth = Vec::new();
    let mut shared = Vec::new();
    let mut per_sensor = vec![Vec::new(); sensors];
    for (col, name) in header.iter().enumerate().skip(1) {
        let name = name.trim();
        if name.starts_with("truth_") {
            truth.push(col);
        } else if let Some((i, _)) = sensor_column(name) {
            if i == 0 || i > sensors {
                return Err(CsvError::Header(format!("column `{name}` names sensor {i}; the scenario has {sensors}")));
            }
            per_sensor[i - 1].push(col);
        } else {
            shared.push(col);
        }
    }
    let truth = match truth.len() {
        0 => None,
        len if len == n => Some(truth),
        len => return Err(CsvError::Header(format!("{len} truth columns, expected {n}"))),
    };
    let any_sensor = per_sensor.iter().any(|c| !c.is_empty());
    let layout = match (shared.is_empty(), any_sensor) {
        (false, false) => {
            if shared.len() != p {
                return Err(CsvError::Header(format!("{} measurement columns, expected {p}", shared.len())));
            }
            Layout::Shared(shared)
        }
        (true, true) => {
            for (i, cols) in per_sensor.iter().enumerate() {
                if cols.len() != p {
                    return Err(CsvError::Header(format!("sensor {} has {} columns, expected {p}", i + 1, cols.len())));
                }
            }
            Layout::PerSensor(per_sensor)
        }
        (false, true) => return Err(CsvError::Header("mixes shared and per-sensor columns".into())),
        (true, false) => return Err(CsvError::Header("no measurement columns".into())),
    };
    Ok((layout, truth))
}

fn cell(record: &csv::StringRecord, row: usize, col: usize) -> Result<f64, CsvError> {
    let text = record.get(col).map(str::trim).unwrap_or("");
    if text.is_empty() {
        return Err(CsvError::Row {
            row,
            message: format!("empty cell in column {}", col + 1),
        });
    }
    let v: f64 = text.parse().map_err(|_| CsvError::Row {
        row,
        message: format!("`{text}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(CsvError::Row {
            row,
            message: format!("`{text}` is not finite"),
        });
    }
    Ok(v)
}

/// Reads measurement streams for `sensors` sensors of size `p` and state size `n`.
pub fn read_measurements<R: Read>(input: R, sensors: usize, p: usize, n: usize) -> Result<CsvData, CsvError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = reader.headers().map_err(|e| CsvError::Header(e.to_string()))?.clone();
    if header.is_empty() {
        return Err(CsvError::Empty);
    }
    let (layout, truth_cols) = layout(&header, sensors, p, n)?;
    let mut data = CsvData {
        times: Vec::new(),
        measurements: Vec::new(),
        truth: truth_cols.as_ref().map(|_| Vec::new()),
    };
    for (k, record) in reader.records().enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| CsvError::Row {
            row,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(CsvError::Row {
                row,
                message: format!("{} fields, header has {}", record.len(), header.len()),
            });
        }
        let t = cell(&record, row, 0)?;
        check_time(&data.times, t, row)?;
        data.times.push(t);
        let read = |cols: &[usize]| -> Result<Vector, CsvError> {
            let values = cols.iter().map(|&c| cell(&record, row, c)).collect::<Result<Vec<_>, _>>()?;
            Ok(Vector::from_vec(values))
        };
        let ys = match &layout {
            Layout::Shared(cols) => vec![read(cols)?; sensors],
            Layout::PerSensor(groups) => groups.iter().map(|cols| read(cols)).collect::<Result<_, _>>()?,
        };
        data.measurements.push(ys);
        if let (Some(cols), Some(truth)) = (&truth_cols, data.truth.as_mut()) {
            truth.push(read(cols)?);
        }
    }
    if data.measurements.is_empty() {
        return Err(CsvError::Empty);
    }
    Ok(data)
}

fn check_time(times: &[f64], t: f64, row: usize) -> Result<(), CsvError> {
    let Some(&last) = times.last() else {
        return Ok(());
    };
    if t <= last {
        return Err(CsvError::Row {
            row,
            message: format!("time {t} does not increase"),
        });
    }
    if let [first, second, ..] = times {
        let dt = second - first;
        if ((t - last) - dt).abs() > 1e-6 * dt.abs().max(1e-12) {
            return Err(CsvError::Time { row, t, dt });
        }
    }
    Ok(())
}

pub fn load_measurements(path: &Path, sensors: usize, p: usize, n: usize) -> Result<CsvData, CsvError> {
    let file = std::fs::File::open(path).map_err(|e| CsvError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_measurements(file, sensors, p, n)
}

/// Writes steps `1..=steps` of `traj` in the per-sensor layout with truth columns.
pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory, dt: f64) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let sensors = traj.measurements.first().map_or(0, Vec::len);
    let p = traj.measurements.first().and_then(|ys| ys.first()).map_or(0, |y| y.len());
    let n = traj.states.first().map_or(0, |x| x.len());
    let mut header = vec!["t".to_string()];
    for i in 1..=sensors {
        header.extend((1..=p).map(|c| format!("s{i}_{c}")));
    }
    header.extend((1..=n).map(|c| format!("truth_{c}")));
    w.write_record(&header)?;
    for (k, ys) in traj.measurements.iter().enumerate() {
        let mut row = vec![((k + 1) as f64 * dt).to_string()];
        for y in ys {
            row.extend(y.iter().map(f64::to_string));
        }
        if let Some(x) = traj.states.get(k + 1) {
            row.extend(x.iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coins::{CoinStream, Purpose};
    use crate::harness::scenario::Scenario;
    use crate::kalman::simulate_plant;

    fn read(text: &str, sensors: usize) -> Result<CsvData, CsvError> {
        read_measurements(text.as_bytes(), sensors, 3, 6)
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(read("", 2), Err(CsvError::Empty)));
        assert!(matches!(read("t,x,y,z\n", 2), Err(CsvError::Empty)));
    }

    #[test]
    fn single_row_gives_one_step_for_every_sensor() {
        let data = read("t,x,y,z\n0.01,1,2,3\n", 2).unwrap();
        assert_eq!(data.steps(), 1);
        assert_eq!(data.measurements[0][1], Vector::from_vec(vec![1.0, 2.0, 3.0]));
        assert!(data.truth.is_none());
    }

    #[test]
    fn malformed_rows_are_errors() {
        assert!(matches!(read("t,x,y,z\n0,1,2\n", 1), Err(CsvError::Row { row: 2, .. })));
        assert!(matches!(read("t,x,y,z\n0,1,,3\n", 1), Err(CsvError::Row { row: 2, .. })));
        assert!(matches!(read("t,x,y,z\n0,1,2,3\n0,1,2,3\n", 1), Err(CsvError::Row { row: 3, .. })));
        assert!(matches!(
            read("t,x,y,z\n0,1,2,3\n1,1,2,3\n3,1,2,3\n", 1),
            Err(CsvError::Time { row: 4, .. })
        ));
        assert!(matches!(read("t,x,y\n0,1,2\n", 1), Err(CsvError::Header(_))));
        assert!(matches!(read("t,s3_1,s3_2,s3_3\n0,1,2,3\n", 2), Err(CsvError::Header(_))));
    }

    #[test]
    fn exported_trajectory_reads_back_bit_equal() {
        let s = Scenario::constant_velocity(4, None, 25, 512);
        let traj = simulate_plant(&s.model, &s.x0, 25, &mut CoinStream::new(9, Purpose::Noise)).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj, 0.01).unwrap();
        let data = read_measurements(buf.as_slice(), 4, 3, 6).unwrap();
        assert_eq!(data.measurements, traj.measurements);
        assert_eq!(data.truth.unwrap(), traj.states[1..].to_vec());
        for w in data.times.windows(2) {
            assert!(w[1] > w[0]);
        }
    }
}
