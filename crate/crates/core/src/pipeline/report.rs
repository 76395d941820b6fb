use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Method;
use crate::error::{FcovError, Result};
use crate::scores::Changepoint;
use crate::Alternative;

pub const EXIT_NO_CHANGE: i32 = 0;
pub const EXIT_CHANGE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
    Jsonl,
}

impl std::str::FromStr for ReportFormat {
    type Err = FcovError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" | "json" => Ok(ReportFormat::Jsonl),
            other => Err(FcovError::InvalidInput(format!("unknown report format '{other}'"))),
        }
    }
}

/// Bootstrap p-value of one product component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentP {
    pub l1: usize,
    pub l2: usize,
    pub p_value: f64,
}

/// Settings the report was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ConfigEcho {
    pub input: String,
    pub format: String,
    pub n: usize,
    pub grid: usize,
    pub d: Option<usize>,
    pub d_axis: Option<usize>,
    pub block: usize,
    pub replicates: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: Method,
    pub alternative: Alternative,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    /// `p_value <= alpha`.
    pub change_detected: bool,
    pub changepoint: Option<Changepoint>,
    pub components: usize,
    /// Components with the smallest p-values, ascending.
    pub top_components: Vec<ComponentP>,
    pub runtime_ms: Option<f64>,
    /// Set when the data could not be tested.
    pub diagnostic: Option<String>,
    pub config: ConfigEcho,
}

const CSV_HEADER: [&str; 22] = [
    "method",
    "alternative",
    "statistic",
    "p_value",
    "alpha",
    "decision",
    "changepoint",
    "components",
    "top_components",
    "runtime_ms",
    "diagnostic",
    "input",
    "format",
    "n",
    "grid",
    "d",
    "d_axis",
    "K",
    "B",
    "eps1",
    "eps2",
    "seed",
];

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn parse_field<T: std::str::FromStr>(name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| FcovError::Format(format!("report field {name}: cannot parse '{s}'")))
}

fn parse_opt<T: std::str::FromStr>(name: &str, s: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_field(name, s).map(Some)
    }
}

fn parse_changepoint(s: &str) -> Result<Changepoint> {
    match s.split_once('-') {
        Some((a, b)) => Ok(Changepoint::Interval(parse_field("changepoint", a)?, parse_field("changepoint", b)?)),
        None => Ok(Changepoint::Single(parse_field("changepoint", s)?)),
    }
}

impl TestReport {
    pub fn decision(&self) -> &'static str {
        if self.change_detected {
            "change"
        } else {
            "no change"
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.diagnostic.is_some() {
            EXIT_ERROR
        } else if self.change_detected {
            EXIT_CHANGE
        } else {
            EXIT_NO_CHANGE
        }
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.to_text(),
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Jsonl => self.to_jsonl(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "method:       {}", self.method);
        let _ = writeln!(s, "alternative:  {}", self.alternative);
        let _ = writeln!(s, "statistic:    {}", self.statistic);
        let _ = writeln!(s, "p-value:      {}", self.p_value);
        let _ = writeln!(s, "decision:     {} (alpha = {})", self.decision(), self.alpha);
        let _ = writeln!(s, "change point: {}", opt(&self.changepoint));
        let _ = writeln!(s, "components:   {}", self.components);
        if let Some(d) = &self.diagnostic {
            let _ = writeln!(s, "diagnostic:   {d}");
        }
        if let Some(ms) = self.runtime_ms {
            let _ = writeln!(s, "runtime:      {ms:.1} ms");
        }
        let _ = writeln!(
            s,
            "config:       input={} format={} n={} grid={} d={} d_axis={} K={} B={} eps1={} eps2={} seed={}",
            c.input,
            c.format,
            c.n,
            c.grid,
            opt(&c.d),
            opt(&c.d_axis),
            c.block,
            c.replicates,
            c.eps1,
            c.eps2,
            c.seed
        );
        if !self.top_components.is_empty() {
            let _ = writeln!(s, "top components (l1, l2, p-value):");
            for p in &self.top_components {
                let _ = writeln!(s, "  {:>5} {:>5}  {}", p.l1 + 1, p.l2 + 1, p.p_value);
            }
        }
        s
    }

    fn csv_fields(&self) -> Vec<String> {
        let c = &self.config;
        let top = self
            .top_components
            .iter()
            .map(|p| format!("{}:{}:{}", p.l1, p.l2, p.p_value))
            .collect::<Vec<_>>()
            .join(";");
        vec![
            self.method.to_string(),
            self.alternative.to_string(),
            self.statistic.to_string(),
            self.p_value.to_string(),
            self.alpha.to_string(),
            self.decision().to_string(),
            opt(&self.changepoint),
            self.components.to_string(),
            top,
            opt(&self.runtime_ms),
            self.diagnostic.clone().unwrap_or_default(),
            c.input.clone(),
            c.format.clone(),
            c.n.to_string(),
            c.grid.to_string(),
            opt(&c.d),
            opt(&c.d_axis),
            c.block.to_string(),
            c.replicates.to_string(),
            c.eps1.to_string(),
            c.eps2.to_string(),
            c.seed.to_string(),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        w.write_record(self.csv_fields()).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = serde_json::to_string(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn parse_jsonl(s: &str) -> Result<Self> {
        let line = s.lines().find(|l| !l.trim().is_empty()).ok_or_else(|| FcovError::Format("empty report".into()))?;
        Ok(serde_json::from_str(line)?)
    }

    pub fn parse_csv(s: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(s.as_bytes());
        let headers = r.headers()?.clone();
        if headers.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(FcovError::Format("unexpected report header".into()));
        }
        let rec = r.records().next().ok_or_else(|| FcovError::Format("report has no data row".into()))??;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let top = if f(8).is_empty() {
            Vec::new()
        } else {
            f(8).split(';')
                .map(|item| {
                    let parts: Vec<&str> = item.split(':').collect();
                    if parts.len() != 3 {
                        return Err(FcovError::Format(format!("bad component entry '{item}'")));
                    }
                    Ok(ComponentP {
                        l1: parse_field("l1", parts[0])?,
                        l2: parse_field("l2", parts[1])?,
                        p_value: parse_field("p_value", parts[2])?,
                    })
                })
                .collect::<Result<_>>()?
        };
        let change_detected = match f(5) {
            "change" => true,
            "no change" => false,
            other => return Err(FcovError::Format(format!("bad decision '{other}'"))),
        };
        Ok(TestReport {
            method: f(0).parse()?,
            alternative: f(1).parse()?,
            statistic: parse_field("statistic", f(2))?,
            p_value: parse_field("p_value", f(3))?,
            alpha: parse_field("alpha", f(4))?,
            change_detected,
            changepoint: if f(6).is_empty() { None } else { Some(parse_changepoint(f(6))?) },
            components: parse_field("components", f(7))?,
            top_components: top,
            runtime_ms: parse_opt("runtime_ms", f(9))?,
            diagnostic: if f(10).is_empty() { None } else { Some(f(10).to_string()) },
            config: ConfigEcho {
                input: f(11).to_string(),
                format: f(12).to_string(),
                n: parse_field("n", f(13))?,
                grid: parse_field("grid", f(14))?,
                d: parse_opt("d", f(15))?,
                d_axis: parse_opt("d_axis", f(16))?,
                block: parse_field("K", f(17))?,
                replicates: parse_field("B", f(18))?,
                eps1: parse_field("eps1", f(19))?,
                eps2: parse_field("eps2", f(20))?,
                seed: parse_field("seed", f(21))?,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> TestReport {
        TestReport {
            method: Method::Wfunc,
            alternative: Alternative::Epidemic,
            statistic: 0.123456789012345,
            p_value: 1.0 / 1001.0,
            alpha: 0.05,
            change_detected: true,
            changepoint: Some(Changepoint::Interval(40, 121)),
            components: 17,
            top_components: vec![
                ComponentP { l1: 0, l2: 0, p_value: 1.0 / 1001.0 },
                ComponentP { l1: 0, l2: 3, p_value: 0.0209790209790 },
            ],
            runtime_ms: None,
            diagnostic: None,
            config: ConfigEcho {
                input: "scan, one.csv".into(),
                format: "csv".into(),
                n: 225,
                grid: 101,
                d: None,
                d_axis: Some(2),
                block: 6,
                replicates: 1000,
                eps1: 0.0005,
                eps2: 0.0025,
                seed: 18446744073709551615,
            },
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let r = report();
        assert_eq!(TestReport::parse_csv(&r.to_csv()).unwrap(), r);
        let mut single = r.clone();
        single.changepoint = Some(Changepoint::Single(100));
        single.top_components.clear();
        single.runtime_ms = Some(12.5);
        single.diagnostic = Some("degenerate data".into());
        assert_eq!(TestReport::parse_csv(&single.to_csv()).unwrap(), single);
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let r = report();
        let line = r.to_jsonl();
        assert_eq!(line.lines().count(), 1);
        assert_eq!(TestReport::parse_jsonl(&line).unwrap(), r);
    }

    #[test]
    fn exit_codes_follow_the_verdict() {
        let mut r = report();
        assert_eq!(r.exit_code(), EXIT_CHANGE);
        r.change_detected = false;
        assert_eq!(r.exit_code(), EXIT_NO_CHANGE);
        r.diagnostic = Some("constant".into());
        assert_eq!(r.exit_code(), EXIT_ERROR);
    }

    #[test]
    fn text_mentions_the_decision() {
        let t = report().to_text();
        assert!(t.contains("decision:     change"));
        assert!(t.contains("40-121"));
        assert!(t.contains("K=6"));
    }
}
