use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One row per variational iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub delta: Option<f64>,
    pub alpha_secs: f64,
    pub beta_secs: f64,
    pub conjugate_secs: f64,
    pub aux_secs: f64,
    pub monitored: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VbTrace {
    pub names: Vec<String>,
    pub rows: Vec<TraceRow>,
}

pub const TRACE_FIXED_COLUMNS: [&str; 6] = [
    "iteration",
    "delta",
    "t_alpha_ms",
    "t_beta_ms",
    "t_conjugate_ms",
    "t_aux_ms",
];

impl VbTrace {
    pub fn header(&self) -> Vec<String> {
        TRACE_FIXED_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain(self.names.iter().cloned())
            .collect()
    }

    /// Writes the trace as CSV; `delta` is empty until the stopping rule has
    /// a full window.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", self.header().join(","))?;
        for r in &self.rows {
            let ms = |s: f64| format!("{:.3}", s * 1e3);
            let mut fields = vec![
                r.iteration.to_string(),
                r.delta.map_or_else(String::new, |d| d.to_string()),
                ms(r.alpha_secs),
                ms(r.beta_secs),
                ms(r.conjugate_secs),
                ms(r.aux_secs),
            ];
            fields.extend(r.monitored.iter().map(|v| v.to_string()));
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let trace = VbTrace {
            names: vec!["mu_zeta_0".into(), "d_0".into()],
            rows: vec![
                TraceRow {
                    iteration: 1,
                    delta: None,
                    alpha_secs: 0.0,
                    beta_secs: 0.0015,
                    conjugate_secs: 0.0,
                    aux_secs: 0.0,
                    monitored: vec![0.5, 2.0],
                },
                TraceRow {
                    iteration: 2,
                    delta: Some(0.25),
                    alpha_secs: 0.0,
                    beta_secs: 0.0,
                    conjugate_secs: 0.0,
                    aux_secs: 0.0,
                    monitored: vec![0.75, 2.0],
                },
            ],
        };
        let mut buf = Vec::new();
        trace.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,delta,t_alpha_ms,t_beta_ms,t_conjugate_ms,t_aux_ms,mu_zeta_0,d_0");
        assert_eq!(lines[1], "1,,0.000,1.500,0.000,0.000,0.5,2");
        assert_eq!(lines[2], "2,0.25,0.000,0.000,0.000,0.000,0.75,2");
    }
}
