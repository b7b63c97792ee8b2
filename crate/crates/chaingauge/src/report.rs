//! Tabular output. One CSV schema covers solver results, simulation
//! estimates, and reference levels so downstream plotting can join them on
//! (protocol, alpha, metric).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::Error;
use crate::solver::Metric;
use crate::state::Protocol;

/// How a row's value was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Exact solver output (worst case).
    Theory,
    /// Monte Carlo estimate with a confidence interval.
    Simulation,
    /// Exact value of the always-silent reference policy.
    BaselineSilent,
    /// Exact value with no adversary at all.
    NoAttack,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Theory => "theory",
            Method::Simulation => "simulation",
            Method::BaselineSilent => "baseline-silent",
            Method::NoAttack => "no-attack",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        [
            Method::Theory,
            Method::Simulation,
            Method::BaselineSilent,
            Method::NoAttack,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::Parse(format!("unknown method {s:?}")))
    }
}

pub const CSV_HEADER: &str = "protocol,alpha,metric,method,value,ci_low,ci_high,seed,k";

/// One output row. Exact rows carry a degenerate interval and no seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub protocol: Protocol,
    pub alpha: f64,
    pub metric: Metric,
    pub method: Method,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: Option<u64>,
    pub k: f64,
}

impl ReportRow {
    pub fn exact(
        protocol: Protocol,
        alpha: f64,
        metric: Metric,
        method: Method,
        value: f64,
        k: f64,
    ) -> Self {
        ReportRow {
            protocol,
            alpha,
            metric,
            method,
            value,
            ci_low: value,
            ci_high: value,
            seed: None,
            k,
        }
    }
}

impl fmt::Display for ReportRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 16 digits after the point keeps every f64 distinguishable.
        write!(
            f,
            "{},{},{},{},{:.16e},{:.16e},{:.16e},{},{}",
            self.protocol,
            self.alpha,
            self.metric,
            self.method,
            self.value,
            self.ci_low,
            self.ci_high,
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.k
        )
    }
}

impl FromStr for ReportRow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let fields: Vec<&str> = s.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Parse(format!(
                "report row needs 9 fields, got {}: {s:?}",
                fields.len()
            )));
        }
        let float = |text: &str, name: &str| -> Result<f64, Error> {
            text.parse()
                .map_err(|e| Error::Parse(format!("report {name}: {e}")))
        };
        let seed = if fields[7].is_empty() {
            None
        } else {
            Some(
                fields[7]
                    .parse()
                    .map_err(|e| Error::Parse(format!("report seed: {e}")))?,
            )
        };
        Ok(ReportRow {
            protocol: fields[0].parse()?,
            alpha: float(fields[1], "alpha")?,
            metric: fields[2].parse()?,
            method: fields[3].parse()?,
            value: float(fields[4], "value")?,
            ci_low: float(fields[5], "ci_low")?,
            ci_high: float(fields[6], "ci_high")?,
            seed,
            k: float(fields[8], "k")?,
        })
    }
}

/// Writes the header and rows to `out`.
pub fn write_csv<W: Write>(out: &mut W, rows: &[ReportRow]) -> Result<(), Error> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Parses what `write_csv` produced.
pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>, Error> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim_end() == CSV_HEADER => {}
        other => {
            return Err(Error::Parse(format!(
                "bad report header {:?}",
                other.unwrap_or_default()
            )))
        }
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(ReportRow::from_str)
        .collect()
}
