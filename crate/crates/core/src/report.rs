//! Report envelopes and CSV helpers shared by the experiment writers.

use std::io::Write;

use serde::Serialize;

use crate::params::ConfigFile;

/// Identifies what produced a report. Deliberately free of wall-clock time so
/// identical invocations write identical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub generator: &'static str,
    pub code_version: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(cfg: &ConfigFile) -> Self {
        Provenance {
            generator: "bridgeamm",
            code_version: env!("CARGO_PKG_VERSION"),
            config_hash: cfg.hash(),
            seed: cfg.settings.seed,
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a Provenance,
    experiment: &'a str,
    results: &'a T,
}

/// Pretty JSON summary with the provenance header, newline-terminated.
pub fn summary_json<T: Serialize>(provenance: &Provenance, experiment: &str, results: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Envelope { provenance, experiment, results }).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_csv<W: Write, T: Serialize>(writer: W, rows: impl IntoIterator<Item = T>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
