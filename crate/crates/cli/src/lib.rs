//! Command-line driver for machine-learning-aided Monte Carlo slope
//! reliability studies.
//!
//! Every command reads one JSON run configuration, resolves it against the
//! command-line overrides and writes its outputs under the configured output
//! directory:
//!
//! ```text
//! <out>/datasets/<label>.mlds   generate
//! <out>/datasets/timings.json   generate
//! <out>/mlamc/report.{json,csv} mlamc
//! <out>/experiments/<which>.*   experiment
//! <out>/report/*                report
//! <out>/csv/*                   export-csv
//! <out>/<command>.resolved.json every command
//! ```

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

pub use config::{Entry, RunConfig};
pub use error::CliError;
pub use output::Outputs;

use serde::Serialize;

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub overwrite: bool,
}

/// A loaded, validated and overridden configuration with its output guard.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub entries: Vec<Entry>,
    pub out: Outputs,
}

impl Context {
    pub fn new(mut cfg: RunConfig, ov: &Overrides) -> Result<Self, CliError> {
        if let Some(o) = &ov.output {
            cfg.report.output_dir = o.clone();
        }
        if let Some(s) = ov.seed {
            cfg.campaign.base_seed = s;
        }
        cfg.validate()?;
        let entries = cfg.entries()?;
        let out = Outputs::new(cfg.report.output_dir.clone(), ov.overwrite);
        Ok(Self { cfg, entries, out })
    }

    pub fn load(path: &std::path::Path, ov: &Overrides) -> Result<Self, CliError> {
        Self::new(RunConfig::load(path)?, ov)
    }

    pub(crate) fn resolved_name(command: &str) -> String {
        format!("{command}.resolved.json")
    }

    pub(crate) fn write_resolved(&self, command: &str) -> Result<(), CliError> {
        self.out.write_json(Self::resolved_name(command), &self.cfg)?;
        Ok(())
    }

    /// Writes `rows` as `<stem>.csv` and `<stem>.json` (wrapped with `meta`).
    /// Intermediate tables are always written in both formats since later
    /// commands read the JSON; final report tables follow `report.formats`.
    pub(crate) fn write_table<M: Serialize, R: Serialize>(
        &self,
        stem: &str,
        meta: M,
        rows: &[R],
        final_table: bool,
    ) -> Result<(), CliError> {
        if !final_table || self.cfg.wants(config::Format::Csv) {
            self.out.write_csv(format!("{stem}.csv"), rows)?;
        }
        if !final_table || self.cfg.wants(config::Format::Json) {
            #[derive(Serialize)]
            struct Table<'a, M, R> {
                #[serde(flatten)]
                meta: M,
                rows: &'a [R],
            }
            self.out.write_json(format!("{stem}.json"), &Table { meta, rows })?;
        }
        Ok(())
    }

    pub(crate) fn table_targets(&self, stem: &str, final_table: bool) -> Vec<String> {
        let mut t = Vec::new();
        if !final_table || self.cfg.wants(config::Format::Csv) {
            t.push(format!("{stem}.csv"));
        }
        if !final_table || self.cfg.wants(config::Format::Json) {
            t.push(format!("{stem}.json"));
        }
        t
    }
}
