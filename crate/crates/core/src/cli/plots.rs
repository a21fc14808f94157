//! gnuplot script generation from a `report.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::runner::REPORT_HEADER_PREFIX;
use crate::report::{csv_split, CSV_HEADER};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("malformed report at line {line}: {msg}")]
    MalformedReport { line: usize, msg: String },
}

#[derive(Debug, Clone)]
struct Row {
    name: String,
    time: Option<f64>,
    lhs: f64,
    rhs: f64,
    slack: f64,
}

fn parse_time(location: &str) -> Option<f64> {
    location
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("t="))
        .and_then(|v| v.parse().ok())
}

fn parse_report(text: &str) -> Result<BTreeMap<String, Vec<Row>>, PlotError> {
    let mut lines = text.lines().enumerate();
    let header = format!("{REPORT_HEADER_PREFIX},{CSV_HEADER}");
    match lines.next() {
        Some((_, h)) if h.trim_end() == header => {}
        Some(_) => {
            return Err(PlotError::MalformedReport {
                line: 1,
                msg: format!("expected header `{header}`"),
            })
        }
        None => {
            return Err(PlotError::MalformedReport {
                line: 1,
                msg: "empty file".into(),
            })
        }
    }
    let mut suites: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| PlotError::MalformedReport {
            line: line_no,
            msg: msg.into(),
        };
        let f = csv_split(line).ok_or_else(|| bad("unterminated quote"))?;
        if f.len() != 8 {
            return Err(bad(&format!("expected 8 fields, found {}", f.len())));
        }
        let num = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|_| bad(&format!("`{}` is not a number", f[i])))
        };
        if f[7] != "true" && f[7] != "false" {
            return Err(bad("pass must be true or false"));
        }
        let row = Row {
            name: f[1].clone(),
            time: parse_time(&f[2]),
            lhs: num(3)?,
            rhs: num(4)?,
            slack: num(5)?,
        };
        num(6)?;
        suites.entry(f[0].clone()).or_default().push(row);
    }
    Ok(suites)
}

/// Reads `report.csv` and returns a gnuplot script with one block per suite,
/// in suite-name order. An empty report yields an empty script and a warning.
pub fn emit_plots(report_path: &Path) -> Result<String, PlotError> {
    let text = std::fs::read_to_string(report_path).map_err(|e| PlotError::Io {
        path: report_path.display().to_string(),
        msg: e.to_string(),
    })?;
    let suites = parse_report(&text)?;
    if suites.is_empty() {
        eprintln!(
            "warning: {} contains no checks; plot script is empty",
            report_path.display()
        );
        return Ok(String::new());
    }
    let mut out = String::from("set terminal pngcairo size 800,500\n");
    for (suite, rows) in &suites {
        let _ = writeln!(out, "\n# suite {suite}");
        let _ = writeln!(out, "set output '{suite}.png'");
        let _ = writeln!(out, "set title '{suite}'");
        if suite == "contraction" {
            contraction_block(&mut out, rows);
        } else {
            slack_block(&mut out, rows);
        }
    }
    Ok(out)
}

fn contraction_block(out: &mut String, rows: &[Row]) {
    let mut by_name: BTreeMap<&str, Vec<&Row>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.time.is_some() && r.lhs > 0.0) {
        by_name.entry(r.name.as_str()).or_default().push(r);
    }
    if by_name.is_empty() {
        slack_block(out, rows);
        return;
    }
    out.push_str("set logscale y\nset xlabel 't'\nset ylabel 'distance'\n");
    let mut plots = Vec::new();
    for name in by_name.keys() {
        plots.push(format!("'-' using 1:2 with points title '{name}'"));
        plots.push(format!("'-' using 1:2 with lines title '{name} bound'"));
    }
    let _ = writeln!(out, "plot {}", plots.join(", "));
    for series in by_name.values() {
        for r in series {
            let _ = writeln!(out, "{:e} {:e}", r.time.unwrap_or(0.0), r.lhs);
        }
        out.push_str("e\n");
        for r in series {
            let _ = writeln!(out, "{:e} {:e}", r.time.unwrap_or(0.0), r.rhs);
        }
        out.push_str("e\n");
    }
    out.push_str("unset logscale y\n");
}

fn slack_block(out: &mut String, rows: &[Row]) {
    let timed = rows.iter().all(|r| r.time.is_some());
    let _ = writeln!(out, "set xlabel '{}'", if timed { "t" } else { "check" });
    out.push_str("set ylabel 'slack'\n");
    out.push_str("plot '-' using 1:2 with points title 'slack'\n");
    for (i, r) in rows.iter().enumerate() {
        let x = if timed {
            r.time.unwrap_or(0.0)
        } else {
            i as f64
        };
        let _ = writeln!(out, "{:e} {:e}", x, r.slack);
    }
    out.push_str("e\n");
}

#[cfg(test)]
mod tests {
    use super::*;

    const REPORT: &str = "suite,name,state_or_time,lhs,rhs,slack,tolerance,pass
gradient,reverse_poincare,t=0.5 state=3,1e0,2e0,1e0,1e-6,true
contraction,w_contraction[p=2],t=0.5,1.2e0,1.21e0,1e-2,1e-2,true
contraction,\"cost_contraction[h=pl(0;0)(1;1)]\",t=0.5,0.5e0,1e0,0.5e0,1e-2,true
";

    #[test]
    fn blocks_follow_suite_name_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        std::fs::write(&path, REPORT).unwrap();
        let script = emit_plots(&path).unwrap();
        let c = script.find("# suite contraction").unwrap();
        let g = script.find("# suite gradient").unwrap();
        assert!(c < g);
        assert!(script.contains("set logscale y"));
    }

    #[test]
    fn empty_and_malformed_reports() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        std::fs::write(&path, format!("{REPORT_HEADER_PREFIX},{CSV_HEADER}\n")).unwrap();
        assert_eq!(emit_plots(&path).unwrap(), "");
        std::fs::write(
            &path,
            format!("{REPORT_HEADER_PREFIX},{CSV_HEADER}\nevi,x,t=1,nope\n"),
        )
        .unwrap();
        assert!(matches!(
            emit_plots(&path),
            Err(PlotError::MalformedReport { line: 2, .. })
        ));
        std::fs::write(&path, "a,b\n").unwrap();
        assert!(matches!(
            emit_plots(&path),
            Err(PlotError::MalformedReport { line: 1, .. })
        ));
    }
}
