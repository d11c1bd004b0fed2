//! CSV inputs and outputs. Lines starting with `#` are comments, so every
//! output can carry the resolved configuration as a header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::CliError;

fn reader(path: &Path) -> Result<csv::Reader<File>, CliError> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

/// Two numeric columns, header row skipped.
fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let field = |j: usize| -> Result<f64, CliError> {
            rec.get(j)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Config(format!("{}: row {} column {} is not a finite number", path.display(), i + 1, j + 1)))
        };
        out.push((field(0)?, field(1)?));
    }
    Ok(out)
}

/// Ambient temperature at minutes `k·dt`, `k < horizon`, by linear
/// interpolation of a (minute, °C) series.
pub fn read_weather(path: &Path, dt_minutes: f64, horizon: usize) -> Result<Vec<f64>, CliError> {
    let pts = read_pairs(path)?;
    interpolate(&pts, dt_minutes, horizon).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn interpolate(pts: &[(f64, f64)], dt_minutes: f64, horizon: usize) -> Result<Vec<f64>, String> {
    if pts.is_empty() {
        return Err("no weather samples".into());
    }
    if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err("timestamps must be strictly increasing".into());
    }
    let end = (horizon - 1) as f64 * dt_minutes;
    let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
    if t0 > 0.0 || t1 < end {
        return Err(format!("weather covers minutes {t0}..{t1}, the horizon needs 0..{end}"));
    }
    let mut j = 0;
    Ok((0..horizon)
        .map(|k| {
            let t = k as f64 * dt_minutes;
            while j + 1 < pts.len() && pts[j + 1].0 < t {
                j += 1;
            }
            if j + 1 == pts.len() {
                return pts[j].1;
            }
            let (a, b) = (pts[j], pts[j + 1]);
            let w = ((t - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
            a.1 + w * (b.1 - a.1)
        })
        .collect())
}

/// Targets for steps `0..horizon` from a (step, kW) series. Values outside
/// `[0, P_agg]` are kept; the planner handles them.
pub fn read_reference(path: &Path, horizon: usize) -> Result<Vec<f64>, CliError> {
    let pts = read_pairs(path)?;
    let mut out = vec![None; horizon];
    for (step, kw) in pts {
        if step < 0.0 || step.fract() != 0.0 {
            return Err(CliError::Config(format!("{}: step {step} is not a whole number", path.display())));
        }
        let k = step as usize;
        if k < horizon {
            if out[k].is_some() {
                return Err(CliError::Config(format!("{}: step {k} appears twice", path.display())));
            }
            out[k] = Some(kw);
        }
    }
    out.iter()
        .enumerate()
        .map(|(k, v)| v.ok_or_else(|| CliError::Config(format!("{}: no target for step {k}", path.display()))))
        .collect()
}

/// Writes `header` verbatim, then a CSV table.
pub fn write_table(path: &Path, header: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_all(header.as_bytes()).map_err(io_err)?;
    let mut cw = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    cw.write_record(columns).map_err(csv_err)?;
    for row in rows {
        // `Display` for f64 is the shortest string that parses back exactly.
        cw.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    cw.flush().map_err(io_err)
}

/// Reads a table written by [`write_table`]: column names and rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut rdr = reader(path)?;
    let cols = rdr
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| CliError::Config(format!("{}: bad number {s:?}", path.display()))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((cols, rows))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_linear_between_samples() {
        let pts = [(0.0, 30.0), (10.0, 32.0), (20.0, 31.0)];
        let v = interpolate(&pts, 5.0, 5).unwrap();
        assert_eq!(v, vec![30.0, 31.0, 32.0, 31.5, 31.0]);
    }

    #[test]
    fn short_weather_is_rejected() {
        let pts = [(0.0, 30.0), (10.0, 32.0)];
        assert!(interpolate(&pts, 5.0, 4).is_err());
        assert!(interpolate(&[(1.0, 30.0), (30.0, 30.0)], 1.0, 3).is_err());
        assert!(interpolate(&[(0.0, 30.0), (0.0, 31.0)], 1.0, 1).is_err());
    }

    #[test]
    fn tables_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![vec![0.1 + 0.2, 1.0 / 3.0, 1e-300], vec![f64::MIN_POSITIVE, 7.0, -2.5]];
        write_table(&p, "# note\n# more\n", &["a", "b", "c"], &rows).unwrap();
        let (cols, back) = read_table(&p).unwrap();
        assert_eq!(cols, ["a", "b", "c"]);
        for (x, y) in rows.iter().flatten().zip(back.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn reference_needs_every_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "step,kw\n0,5\n2,-1\n1,1e9\n3,0\n").unwrap();
        assert_eq!(read_reference(&p, 3).unwrap(), vec![5.0, 1e9, -1.0]);
        assert!(read_reference(&p, 5).is_err());
    }
}
