//! Outcome of a single inequality or identity verification.

use std::fmt;

/// Where the worst slack of a check was observed.
#[derive(Debug, Clone, PartialEq)]
pub enum Location {
    State(usize),
    Time(f64),
    Point(f64),
    Label(String),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::State(i) => write!(f, "state={i}"),
            Location::Time(t) => write!(f, "t={t}"),
            Location::Point(x) => write!(f, "x={x}"),
            Location::Label(s) => f.write_str(s),
        }
    }
}

/// `lhs ≤ rhs` checked with `slack = rhs - lhs` and `pass ⇔ slack ≥ -tolerance`.
///
/// Identities are reported as `lhs = residual`, `rhs = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub location: Location,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(
        name: impl Into<String>,
        location: Location,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
    ) -> Self {
        let slack = rhs - lhs;
        Self {
            name: name.into(),
            location,
            lhs,
            rhs,
            slack,
            tolerance,
            pass: slack >= -tolerance,
        }
    }

    /// Identity check: `residual ≤ tolerance`.
    pub fn identity(
        name: impl Into<String>,
        location: Location,
        residual: f64,
        tolerance: f64,
    ) -> Self {
        Self::new(name, location, residual, 0.0, tolerance)
    }

    /// Picks the worst of a set of pointwise `(location, lhs, rhs, tolerance)`
    /// comparisons, measured by `slack + tolerance`.
    pub fn worst<I>(name: &str, samples: I) -> Option<Self>
    where
        I: IntoIterator<Item = (Location, f64, f64, f64)>,
    {
        samples
            .into_iter()
            .map(|(loc, lhs, rhs, tol)| Self::new(name, loc, lhs, rhs, tol))
            .min_by(|a, b| (a.slack + a.tolerance).total_cmp(&(b.slack + b.tolerance)))
    }

    /// `name,state_or_time,lhs,rhs,slack,tolerance,pass`
    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            csv_escape(&self.name),
            csv_escape(&self.location.to_string()),
            self.lhs,
            self.rhs,
            self.slack,
            self.tolerance,
            self.pass
        )
    }
}

/// Quotes a field containing a comma or quote, doubling inner quotes.
pub fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Splits one CSV record, honouring quoted fields.
pub fn csv_split(line: &str) -> Option<Vec<String>> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match (quoted, c) {
            (true, '"') if chars.peek() == Some(&'"') => {
                chars.next();
                cur.push('"');
            }
            (true, '"') => quoted = false,
            (false, '"') if cur.is_empty() => quoted = true,
            (false, ',') => fields.push(std::mem::take(&mut cur)),
            (_, c) => cur.push(c),
        }
    }
    if quoted {
        return None;
    }
    fields.push(cur);
    Some(fields)
}

pub const CSV_HEADER: &str = "name,state_or_time,lhs,rhs,slack,tolerance,pass";

pub fn to_csv(reports: &[CheckReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_fields());
        out.push('\n');
    }
    out
}

/// `max(1, |a|, |b|, …)`, the scale multiplying relative tolerances.
pub fn scale_of(values: &[f64]) -> f64 {
    values.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()))
}
