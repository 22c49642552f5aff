//! Self-describing CSV rows.

use std::io::{self, Write};

use crate::spec::ExperimentKind;

pub const CSV_HEADER: &str = "kind,n,d,layer,seed,metric,value";

/// One measured value with the full parameter tuple it belongs to.
///
/// `layer` is 0 for values that summarise a whole run, and `d` is 0 for
/// values that summarise a whole sweep. Aggregates over replicates carry the
/// master seed in the `seed` column.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub kind: ExperimentKind,
    pub n: usize,
    pub d: usize,
    pub layer: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

impl RunRecord {
    pub fn new(
        kind: ExperimentKind,
        n: usize,
        d: usize,
        layer: usize,
        seed: u64,
        metric: impl Into<String>,
        value: f64,
    ) -> Self {
        let metric = metric.into();
        debug_assert!(!metric.contains([',', '"', '\n', '\r']), "metric names are written unquoted: {metric:?}");
        RunRecord { kind, n, d, layer, seed, metric, value }
    }
}

/// 17 significant digits, enough to read every `f64` back exactly.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(mut out: W, records: &[RunRecord]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.kind.name(),
            r.n,
            r.d,
            r.layer,
            r.seed,
            r.metric,
            format_value(r.value)
        )?;
    }
    out.flush()
}

pub fn to_csv_string(records: &[RunRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, records).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}
