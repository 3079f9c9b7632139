//! Result records and the plain-text table.
//!
//! Records are written one JSON object per line. Wall time is kept out of
//! them so that repeated runs with a fixed seed produce identical bytes; it
//! only appears in the table.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    Solve,
    SizingStep,
    Sizing,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultRecord {
    pub problem: String,
    pub record: RecordKind,
    pub eps: f64,
    pub gamma: f64,
    pub status: String,
    pub fstar: f64,
    pub xstar: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_used: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flat_t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pvio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loop_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loops: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_fstar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lstar: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_used: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_fstar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_xstar: Option<Vec<f64>>,
    #[serde(skip)]
    pub wall_time: f64,
}

impl ResultRecord {
    pub fn new(problem: &str, record: RecordKind, eps: f64, gamma: f64) -> Self {
        ResultRecord {
            problem: problem.to_string(),
            record,
            eps,
            gamma,
            status: String::new(),
            fstar: f64::NAN,
            xstar: Vec::new(),
            gap: None,
            k0: None,
            k_used: None,
            flat_t: None,
            pvio: None,
            loop_index: None,
            loops: None,
            initial_gamma: None,
            initial_fstar: None,
            lstar: None,
            beta_used: None,
            reference_gamma: None,
            reference_fstar: None,
            reference_xstar: None,
            wall_time: 0.0,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    /// `|f* - f_ref| / (1 + |f_ref|)`.
    pub fn relative_error(&self) -> Option<f64> {
        self.reference_fstar
            .map(|r| (self.fstar - r).abs() / (1.0 + r.abs()))
    }
}

fn num(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.4}"),
        Some(v) => format!("{v}"),
        None => "-".into(),
    }
}

fn sci(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.1e}"))
}

fn vector(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.4}")).collect();
    format!("({})", parts.join(", "))
}

/// Four decimals, like the published tables.
pub fn format_table(records: &[ResultRecord]) -> String {
    let header = [
        "problem", "kind", "eps", "gamma", "f*", "x*", "gap", "k/flat", "p_vio", "loop", "status", "ref f*", "time s",
    ];
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let kind = match r.record {
                RecordKind::Solve => "solve",
                RecordKind::SizingStep => "step",
                RecordKind::Sizing => "sizing",
            };
            let kflat = match (r.k_used, r.flat_t) {
                (Some(k), Some(t)) => format!("{k}/{t}"),
                (Some(k), None) => format!("{k}/-"),
                _ => "-".into(),
            };
            let lp = r.loop_index.or(r.loops).map_or("-".into(), |l| l.to_string());
            vec![
                r.problem.clone(),
                kind.into(),
                format!("{}", r.eps),
                num(Some(r.gamma)),
                num(Some(r.fstar)),
                vector(&r.xstar),
                sci(r.gap),
                kflat,
                num(r.pvio),
                lp,
                r.status.clone(),
                num(r.reference_fstar),
                format!("{:.2}", r.wall_time),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, &header.map(String::from));
    for row in &rows {
        line(&mut out, row);
    }
    out
}

pub fn ndjson(records: &[ResultRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_json_line());
        s.push('\n');
    }
    s
}

/// Writes `<stem>.txt` and `<stem>.ndjson` under `dir`.
pub fn write_files(dir: &Path, stem: &str, records: &[ResultRecord]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::File::create(dir.join(format!("{stem}.txt")))?.write_all(format_table(records).as_bytes())?;
    std::fs::File::create(dir.join(format!("{stem}.ndjson")))?.write_all(ndjson(records).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wall_time_stays_out_of_the_record() {
        let mut r = ResultRecord::new("toy", RecordKind::Solve, 0.05, 1.0);
        r.fstar = 1.0;
        r.wall_time = 3.0;
        let line = r.to_json_line();
        assert!(!line.contains("wall"));
        assert!(format_table(&[r]).contains("3.00"));
    }

    #[test]
    fn table_uses_four_decimals() {
        let mut r = ResultRecord::new("toy", RecordKind::Solve, 0.05, 1.5387);
        r.fstar = -1.633_212_9;
        r.xstar = vec![0.123_456];
        let t = format_table(&[r]);
        assert!(t.contains("-1.6332") && t.contains("(0.1235)"), "{t}");
    }
}
