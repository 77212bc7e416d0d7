//! CSV tables and JSON reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sojourn_core::sojourn::{assemble, SojournMode};

use crate::error::{HarnessError, HarnessResult};
use crate::runner::{verdict, RunRecord, Verdict};

pub const CSV_HEADER: &str = "point_id,r,value,T_f,abs_error,t_star,mode";

/// Fixed 17-significant-digit formatting, so equal numbers give equal bytes.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per `(point_id, r)`. Critical points carry `NaN` for `T_f`.
pub fn sojourn_csv(record: &RunRecord) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in &record.points {
        let s = &p.series;
        let critical = p.verdict == Verdict::Critical;
        for i in 0..s.radii.len() {
            let (reference, err) = if critical {
                (f64::NAN, f64::NAN)
            } else {
                (s.reference, s.errors[i])
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.point_id,
                num(s.radii[i]),
                num(s.values[i]),
                num(reference),
                num(err),
                num(s.truncation_times[i]),
                s.mode.as_str()
            );
        }
    }
    out
}

/// Recomputes every verdict from the CSV rows.
pub fn verdicts_from_csv(
    csv: &str,
    tol: f64,
    noise: f64,
) -> HarnessResult<BTreeMap<usize, Verdict>> {
    let bad = |line: &str| HarnessError::Config(format!("malformed CSV row: {line}"));
    let mut lines = csv.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(HarnessError::Config("CSV header does not match".into()));
    }
    struct Rows {
        mode: SojournMode,
        reference: f64,
        radii: Vec<f64>,
        values: Vec<f64>,
        t_stars: Vec<f64>,
    }
    let mut points: BTreeMap<usize, Rows> = BTreeMap::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(bad(line));
        }
        let f = |i: usize| cols[i].parse::<f64>().map_err(|_| bad(line));
        let mode = match cols[6] {
            "continuous" => SojournMode::Continuous,
            "discrete" => SojournMode::Discrete,
            _ => return Err(bad(line)),
        };
        let id: usize = cols[0].parse().map_err(|_| bad(line))?;
        let rows = points.entry(id).or_insert_with(|| Rows {
            mode,
            reference: 0.0,
            radii: Vec::new(),
            values: Vec::new(),
            t_stars: Vec::new(),
        });
        rows.reference = f(3)?;
        rows.radii.push(f(1)?);
        rows.values.push(f(2)?);
        rows.t_stars.push(f(5)?);
    }
    Ok(points
        .into_iter()
        .map(|(id, rows)| {
            let critical = rows.reference.is_nan();
            let reference = if critical { 0.0 } else { rows.reference };
            let series = assemble(
                rows.mode,
                &rows.radii,
                rows.values,
                rows.t_stars,
                reference,
                0.0,
            );
            (id, verdict(&series, critical, tol, noise))
        })
        .collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> HarnessResult<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| HarnessError::Flow(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes `sojourn.csv` and `report.json` under `dir`.
pub fn write_run(record: &RunRecord, dir: &Path) -> HarnessResult<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join("sojourn.csv");
    std::fs::write(&csv, sojourn_csv(record))?;
    let report = dir.join("report.json");
    write_json(&report, record)?;
    Ok((csv, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::runner::run;
    use sojourn_core::dynamics::PhasePoint;

    #[test]
    fn number_format_is_fixed_width() {
        assert_eq!(num(0.5), "5.0000000000000000e-1");
        assert_eq!(num(-1234.5), "-1.2345000000000000e3");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn verdicts_round_trip_through_csv() {
        let mut cfg = RunConfig::preset("kinetic").unwrap();
        cfg.points.push(PhasePoint::new(vec![0.3, 0.1, 0.0, 0.0]));
        let record = run(&cfg.clone().prepare().unwrap()).unwrap();
        let csv = sojourn_csv(&record);
        assert_eq!(
            csv.lines().count(),
            1 + record.points.len() * cfg.radii.count
        );
        let recomputed = verdicts_from_csv(&csv, cfg.tol, cfg.noise_floor).unwrap();
        for p in &record.points {
            assert_eq!(recomputed[&p.point_id], p.verdict);
        }
        assert_eq!(record.points[0].verdict, Verdict::Pass);
        assert_eq!(record.points[1].verdict, Verdict::Critical);
    }
}
