//! Versioned CSV outputs.
//!
//! Every file starts with `# format=aaroc-report/MAJOR.MINOR config_hash=H`,
//! then a header row. Readers accept any minor version of a known major.

use super::HarnessError;
use crate::greedy::IterationRecord;

pub const REPORT_FORMAT_MAJOR: u32 = 1;
pub const REPORT_FORMAT_MINOR: u32 = 0;

/// Floats in shortest round-trip exponent form; `inf` for infinities.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// A parsed CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvDocument {
    pub config_hash: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvDocument {
    pub fn new(config_hash: &str, header: &[&str]) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "# format=aaroc-report/{REPORT_FORMAT_MAJOR}.{REPORT_FORMAT_MINOR} config_hash={}\n",
            self.config_hash
        )
        .into_bytes();
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut out);
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
        drop(w);
        out
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        let bad = |m: String| HarnessError::ReportFormat(m);
        let mut version = None;
        let mut config_hash = None;
        for field in first.strip_prefix('#').ok_or_else(|| bad("missing format line".into()))?.split_whitespace() {
            if let Some(v) = field.strip_prefix("format=aaroc-report/") {
                version = Some(v.to_string());
            } else if let Some(h) = field.strip_prefix("config_hash=") {
                config_hash = Some(h.to_string());
            }
        }
        let version = version.ok_or_else(|| bad("missing format version".into()))?;
        let major: u32 = version
            .split('.')
            .next()
            .and_then(|m| m.parse().ok())
            .ok_or_else(|| bad(format!("malformed version {version:?}")))?;
        if major != REPORT_FORMAT_MAJOR {
            return Err(bad(format!("unsupported report version {version}")));
        }
        let mut reader = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            config_hash: config_hash.unwrap_or_default(),
            header,
            rows,
        })
    }

    /// Values of one named column.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }
}

/// One checkpoint of a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub n: usize,
    pub delta: f64,
    pub e_n: f64,
    /// Enrichment points present at size `n`, over all segments.
    pub n_adap_total: usize,
    /// Largest per-segment count of the same.
    pub n_adap_max: usize,
    pub n_tpar: usize,
    pub collocation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub mode: String,
    pub rows: Vec<ReportRow>,
}

const REPORT_HEADER: [&str; 8] = ["n", "delta_n", "e_n", "n_adap_total", "n_adap_max", "n_tpar", "collocation", "mode"];

impl ExperimentReport {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut doc = CsvDocument::new(&self.config_hash, &REPORT_HEADER);
        for r in &self.rows {
            doc.push(vec![
                r.n.to_string(),
                num(r.delta),
                num(r.e_n),
                r.n_adap_total.to_string(),
                r.n_adap_max.to_string(),
                r.n_tpar.to_string(),
                r.collocation.to_string(),
                self.mode.clone(),
            ]);
        }
        doc.to_bytes()
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let doc = CsvDocument::parse(text)?;
        if doc.header != REPORT_HEADER {
            return Err(HarnessError::ReportFormat(format!("unexpected report columns {:?}", doc.header)));
        }
        let bad = |v: &str| HarnessError::ReportFormat(format!("bad value {v:?}"));
        let int = |v: &str| v.parse::<usize>().map_err(|_| bad(v));
        let float = |v: &str| v.parse::<f64>().map_err(|_| bad(v));
        let mut mode = String::new();
        let rows = doc
            .rows
            .iter()
            .map(|r| {
                mode = r[7].clone();
                Ok(ReportRow {
                    n: int(&r[0])?,
                    delta: float(&r[1])?,
                    e_n: float(&r[2])?,
                    n_adap_total: int(&r[3])?,
                    n_adap_max: int(&r[4])?,
                    n_tpar: int(&r[5])?,
                    collocation: int(&r[6])?,
                })
            })
            .collect::<Result<_, HarnessError>>()?;
        Ok(Self {
            config_hash: doc.config_hash,
            mode,
            rows,
        })
    }
}

/// The per-iteration run log.
pub fn history_csv(config_hash: &str, records: &[IterationRecord]) -> Vec<u8> {
    let mut doc = CsvDocument::new(
        config_hash,
        &[
            "n_tpar",
            "n",
            "delta_initial",
            "rho_initial",
            "delta_n",
            "rho",
            "accepted",
            "enrichment_passes",
            "added_per_segment",
            "collocation",
            "next_mu_index",
            "next_mu",
            "next_t",
            "eim_skipped",
            "unconverged_steps",
            "diverged",
            "geim_constraint",
            "eim_constraint",
        ],
    );
    for r in records {
        let added: Vec<String> = r.enrichment_added.iter().map(|a| a.to_string()).collect();
        let (mi, mu, t) = match &r.next {
            Some((i, mu, t)) => (i.to_string(), mu.to_string(), t.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        doc.push(vec![
            r.epoch.to_string(),
            r.n.to_string(),
            num(r.delta_initial),
            num(r.rho_initial),
            num(r.delta),
            num(r.rho),
            (r.accepted as u8).to_string(),
            r.enrichment_passes.to_string(),
            added.join(";"),
            r.collocation_total.to_string(),
            mi,
            mu,
            t,
            r.eim_skipped.to_string(),
            r.unconverged_steps.to_string(),
            r.diverged.to_string(),
            num(r.geim_constraint),
            num(r.eim_constraint),
        ]);
    }
    doc.to_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        ExperimentReport {
            config_hash: "abc".into(),
            mode: "AAROC".into(),
            rows: vec![
                ReportRow {
                    n: 5,
                    delta: 12.5,
                    e_n: 0.031,
                    n_adap_total: 0,
                    n_adap_max: 0,
                    n_tpar: 2,
                    collocation: 18,
                },
                ReportRow {
                    n: 10,
                    delta: 1.0e-3,
                    e_n: f64::INFINITY,
                    n_adap_total: 22,
                    n_adap_max: 11,
                    n_tpar: 2,
                    collocation: 60,
                },
            ],
        }
    }

    #[test]
    fn report_round_trips() {
        let r = sample();
        let bytes = r.to_csv();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("# format=aaroc-report/1.0 config_hash=abc\nn,delta_n,"));
        assert!(!text.contains('\r'));
        assert_eq!(ExperimentReport::from_csv(&text).unwrap(), r);
    }

    #[test]
    fn unknown_major_version_is_rejected() {
        let text = String::from_utf8(sample().to_csv()).unwrap();
        let future = text.replacen("aaroc-report/1.0", "aaroc-report/2.0", 1);
        assert!(matches!(ExperimentReport::from_csv(&future), Err(HarnessError::ReportFormat(_))));
        let minor = text.replacen("aaroc-report/1.0", "aaroc-report/1.7", 1);
        assert!(ExperimentReport::from_csv(&minor).is_ok());
        assert!(ExperimentReport::from_csv("n,delta_n\n1,2\n").is_err());
    }
}
