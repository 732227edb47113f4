//! CSV output with 17 significant digits.

use std::io::Write;
use std::path::Path;

use wavetrap::modulation::MonitorSeries;

use crate::CliError;

/// Shortest form with 17 significant digits; parses back to the same bits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn series_header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["s", "E", "q_norm", "d", "lambda"].iter().map(|s| s.to_string()).collect();
    h.extend((2..=m).map(|i| format!("theta_{i}")));
    h.push("alpha_1_1".into());
    h.extend((1..=m).map(|i| format!("alpha_minus_{i}")));
    h.extend(["a", "b", "R_minus"].iter().map(|s| s.to_string()));
    h
}

/// Writes the monitor series to any writer.
pub fn write_series<W: Write>(series: &MonitorSeries, out: W) -> Result<(), CliError> {
    if series.records.is_empty() {
        return Err(CliError::Usage("cannot write an empty series".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(series_header(series.m))?;
    for r in &series.records {
        let mut row = vec![r.s, r.energy, r.q_norm, r.d, r.lambda];
        row.extend(&r.theta);
        row.push(r.alpha_1_1);
        row.extend(&r.alpha_minus);
        row.extend([r.a, r.b, r.r_minus]);
        w.write_record(row.iter().map(|v| format_value(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_series(series: &MonitorSeries, path: &Path) -> Result<(), CliError> {
    if series.records.is_empty() {
        return Err(CliError::Usage("cannot write an empty series".into()));
    }
    write_series(series, std::fs::File::create(path)?)
}

/// Generic table with a header and numeric rows.
pub fn emit_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    if rows.is_empty() {
        return Err(CliError::Usage("cannot write an empty table".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format_value(*v)))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use wavetrap::modulation::MonitorRecord;

    fn record(s: f64) -> MonitorRecord {
        MonitorRecord {
            s,
            energy: 4.0 / 3.0,
            q_norm: 1e-3 / 7.0,
            d: -0.1,
            lambda: (-0.1f64).atanh(),
            theta: vec![0.1, std::f64::consts::PI / 7.0],
            alpha_1_1: -2.5e-9,
            alpha_minus: vec![1.0 / 3.0, 2e-300, 0.0],
            a: 6.25e-18,
            b: 0.1,
            r_minus: -1e-12,
            dissipation: 0.0,
            orthogonality: 0.0,
        }
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            series_header(3).join(","),
            "s,E,q_norm,d,lambda,theta_2,theta_3,alpha_1_1,alpha_minus_1,alpha_minus_2,alpha_minus_3,a,b,R_minus"
        );
    }

    #[test]
    fn empty_series_is_an_error() {
        let s = MonitorSeries { p: 3.0, m: 3, records: vec![] };
        assert!(write_series(&s, Vec::new()).is_err());
    }

    #[test]
    fn single_sample_round_trips_bit_for_bit() {
        let s = MonitorSeries { p: 3.0, m: 3, records: vec![record(0.1)] };
        let mut buf = Vec::new();
        write_series(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let values: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        let r = &s.records[0];
        let expected = [
            r.s, r.energy, r.q_norm, r.d, r.lambda, r.theta[0], r.theta[1], r.alpha_1_1, r.alpha_minus[0],
            r.alpha_minus[1], r.alpha_minus[2], r.a, r.b, r.r_minus,
        ];
        assert_eq!(values.len(), expected.len());
        for (a, b) in values.iter().zip(expected) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
