use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{ensure, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Config;
use crate::stream;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Version of the on-disk record formats this build reads and writes.
pub const RECORD_SCHEMA: &str = "vocot-instruct/1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub input: usize,
    pub output: usize,
    pub dropped: usize,
}

/// Fields that legitimately differ between identical runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub wall_clock_secs: f64,
    pub peak_rss_kb: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub record_schema: String,
    pub seed: u64,
    pub config: Config,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub counts: Counts,
    pub drop_reasons: BTreeMap<String, usize>,
    pub notes: BTreeMap<String, Value>,
    pub runtime: Runtime,
}

/// Accumulates counts while a command runs.
pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: &Config) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                toolkit_version: TOOLKIT_VERSION.to_string(),
                record_schema: RECORD_SCHEMA.to_string(),
                seed: config.seed,
                config: config.clone(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                counts: Counts::default(),
                drop_reasons: BTreeMap::new(),
                notes: BTreeMap::new(),
                runtime: Runtime::default(),
            },
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> &mut Self {
        self.manifest.inputs.insert(role.into(), path.display().to_string());
        self
    }

    pub fn output(&mut self, role: &str, path: &Path) -> &mut Self {
        self.manifest.outputs.insert(role.into(), path.display().to_string());
        self
    }

    pub fn kept(&mut self) {
        self.manifest.counts.input += 1;
        self.manifest.counts.output += 1;
    }

    pub fn dropped(&mut self, reason: &str) {
        self.manifest.counts.input += 1;
        self.manifest.counts.dropped += 1;
        *self.manifest.drop_reasons.entry(reason.to_string()).or_default() += 1;
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.manifest.notes.insert(key.to_string(), v);
    }

    pub fn bump(&mut self, key: &str) {
        let n = self.manifest.notes.get(key).and_then(Value::as_u64).unwrap_or(0);
        self.manifest.notes.insert(key.to_string(), Value::from(n + 1));
    }

    pub fn counts(&self) -> Counts {
        self.manifest.counts
    }

    /// Checks that counts reconcile and stamps the runtime fields.
    pub fn finish(mut self) -> Result<RunManifest> {
        let c = self.manifest.counts;
        ensure!(c.input == c.output + c.dropped, "manifest counts do not reconcile: {c:?}");
        ensure!(
            self.manifest.drop_reasons.values().sum::<usize>() == c.dropped,
            "drop histogram does not sum to the dropped count"
        );
        self.manifest.runtime = Runtime { wall_clock_secs: self.started.elapsed().as_secs_f64(), peak_rss_kb: peak_rss_kb() };
        Ok(self.manifest)
    }
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = stream::create(path)?;
        serde_json::to_writer_pretty(&mut w, self)?;
        std::io::Write::write_all(&mut w, b"\n")?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }
}

/// Peak resident set size of this process, where the OS reports it.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconciles() {
        let mut b = ManifestBuilder::new("test", &Config::default());
        b.kept();
        b.dropped("x");
        b.dropped("x");
        b.bump("clamped");
        b.bump("clamped");
        let m = b.finish().unwrap();
        assert_eq!(m.counts, Counts { input: 3, output: 1, dropped: 2 });
        assert_eq!(m.drop_reasons["x"], 2);
        assert_eq!(m.notes["clamped"], 2);
    }
}
