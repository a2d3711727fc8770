//! Configuration-driven experiment runner: parses TOML experiment specs,
//! schedules replicates on a worker pool, aggregates statistics in a
//! deterministic order, and writes results.csv / results.json plus
//! optional auxiliary CSVs and SVG plots.

mod experiments;
pub mod plot;

pub use experiments::registry;

use crate::error::{Error, Result};
use crate::stats::Summary;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Parsed experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub replicates: u64,
    pub output_dir: PathBuf,
    pub params: BTreeMap<String, toml::Value>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Value = text
            .parse()
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        let table = value
            .as_table()
            .ok_or_else(|| Error::Config("config must be a TOML table".into()))?;
        let experiment = table
            .get("experiment")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Config("missing key: experiment".into()))?
            .to_string();
        let seed = table
            .get("seed")
            .and_then(|v| v.as_integer())
            .ok_or_else(|| Error::Config("missing key: seed".into()))? as u64;
        let replicates = table
            .get("replicates")
            .and_then(|v| v.as_integer())
            .unwrap_or(1000) as u64;
        let output_dir = table
            .get("output_dir")
            .and_then(|v| v.as_str())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("results").join(&experiment));
        let params = table
            .get("params")
            .map(|p| {
                p.as_table()
                    .map(|t| t.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
                    .ok_or_else(|| Error::Config("params must be a table".into()))
            })
            .transpose()?
            .unwrap_or_default();
        Ok(ExperimentConfig {
            experiment,
            seed,
            replicates,
            output_dir,
            params,
        })
    }

    /// Hash of the semantic fields only (experiment, params, seed,
    /// replicates); the output directory does not affect results.
    pub fn semantic_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.experiment.as_bytes());
        hasher.update(self.seed.to_le_bytes());
        hasher.update(self.replicates.to_le_bytes());
        for (k, v) in &self.params {
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.to_string().as_bytes());
            hasher.update(b";");
        }
        hex_string(&hasher.finalize()[..16])
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Typed access to the `[params]` table with errors naming the key.
pub struct Params<'a>(pub &'a BTreeMap<String, toml::Value>);

impl<'a> Params<'a> {
    fn get(&self, key: &str) -> Result<&toml::Value> {
        self.0
            .get(key)
            .ok_or_else(|| Error::Config(format!("missing param: {key}")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v = self.get(key)?;
        v.as_float()
            .or_else(|| v.as_integer().map(|i| i as f64))
            .ok_or_else(|| Error::Config(format!("param {key} must be a number")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.0.contains_key(key) {
            self.f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.get(key)?
            .as_integer()
            .filter(|&i| i >= 0)
            .map(|i| i as u64)
            .ok_or_else(|| Error::Config(format!("param {key} must be a nonnegative integer")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        Ok(self.u64(key)? as usize)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        if self.0.contains_key(key) {
            self.usize(key)
        } else {
            Ok(default)
        }
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.get(key)?
            .as_str()
            .ok_or_else(|| Error::Config(format!("param {key} must be a string")))
    }

    pub fn str_or(&self, key: &str, default: &'a str) -> Result<&str> {
        if self.0.contains_key(key) {
            self.str(key)
        } else {
            Ok(default)
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let arr = self
            .get(key)?
            .as_array()
            .ok_or_else(|| Error::Config(format!("param {key} must be an array")))?;
        arr.iter()
            .map(|v| {
                v.as_float()
                    .or_else(|| v.as_integer().map(|i| i as f64))
                    .ok_or_else(|| Error::Config(format!("param {key} must hold numbers")))
            })
            .collect()
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        Ok(self.f64_list(key)?.iter().map(|&x| x as usize).collect())
    }
}

/// One output metric with its uncertainty.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricRow {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: u64,
}

impl MetricRow {
    pub fn from_summary(name: impl Into<String>, s: &Summary) -> Self {
        MetricRow {
            name: name.into(),
            value: s.mean,
            stderr: s.stderr,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
            n_samples: s.n,
        }
    }

    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        MetricRow {
            name: name.into(),
            value,
            stderr: 0.0,
            ci_low: value,
            ci_high: value,
            n_samples: 1,
        }
    }
}

/// What an experiment hands back: metric rows plus named auxiliary files
/// (trajectory CSVs, field snapshots, ...).
#[derive(Debug, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricRow>,
    pub aux: Vec<(String, String)>,
}

/// Completed run with metadata.
#[derive(Debug, serde::Serialize)]
pub struct RunResult {
    pub experiment: String,
    pub config_hash: String,
    pub version: String,
    pub rows: Vec<MetricRow>,
    #[serde(skip)]
    pub wall_ms: u128,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl RunResult {
    pub fn csv(&self) -> String {
        let mut out = String::from("metric_name,value,stderr,ci_low,ci_high,n_samples\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.name, r.value, r.stderr, r.ci_low, r.ci_high, r.n_samples
            ));
        }
        out
    }

    pub fn json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}

/// Execute a parsed config: resolve the experiment, run it, write
/// results.csv / results.json and any auxiliary files under the output
/// directory. Wall time goes to run.log only, keeping the result
/// artifacts byte-stable across repeat runs.
pub fn run_config(config: &ExperimentConfig) -> Result<RunResult> {
    let spec = registry()
        .iter()
        .find(|s| s.name == config.experiment)
        .ok_or_else(|| Error::Config(format!("unknown experiment: {}", config.experiment)))?;
    for p in spec.params {
        if p.required && !config.params.contains_key(p.key) {
            return Err(Error::Config(format!(
                "missing param: {} (experiment {})",
                p.key, config.experiment
            )));
        }
    }
    let started = std::time::Instant::now();
    let output = (spec.run)(&RunCtx {
        params: Params(&config.params),
        seed: config.seed,
        replicates: config.replicates,
    })?;
    let wall_ms = started.elapsed().as_millis();
    let result = RunResult {
        experiment: config.experiment.clone(),
        config_hash: config.semantic_hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        rows: output.rows,
        wall_ms,
        output_dir: config.output_dir.clone(),
    };
    std::fs::create_dir_all(&config.output_dir)?;
    std::fs::write(config.output_dir.join("results.csv"), result.csv())?;
    std::fs::write(config.output_dir.join("results.json"), result.json())?;
    std::fs::write(
        config.output_dir.join("run.log"),
        format!(
            "experiment={}\nconfig_hash={}\nwall_ms={}\n",
            result.experiment, result.config_hash, wall_ms
        ),
    )?;
    for (name, contents) in &output.aux {
        std::fs::write(config.output_dir.join(name), contents)?;
    }
    Ok(result)
}

/// Context handed to a registered experiment.
pub struct RunCtx<'a> {
    pub params: Params<'a>,
    pub seed: u64,
    pub replicates: u64,
}

/// Schema entry for one parameter of a registered experiment.
#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub key: &'static str,
    pub kind: &'static str,
    pub required: bool,
    /// TOML literal used by `example_config`.
    pub example: &'static str,
    pub help: &'static str,
}

/// A registered experiment: a name, the library operation it drives, a
/// parameter schema, and the runner.
pub struct ExperimentSpec {
    pub name: &'static str,
    pub operation: &'static str,
    pub params: &'static [ParamSpec],
    pub run: fn(&RunCtx) -> Result<ExperimentOutput>,
}

/// Generate a runnable example config from the schema.
pub fn example_config(spec: &ExperimentSpec) -> String {
    let mut out = format!(
        "experiment = \"{}\"\nseed = 1\nreplicates = 200\n\n[params]\n",
        spec.name
    );
    for p in spec.params {
        out.push_str(&format!("{} = {}\n", p.key, p.example));
    }
    out
}

pub fn describe_registry() -> String {
    let mut out = String::new();
    for spec in registry() {
        out.push_str(&format!("{}  ({})\n", spec.name, spec.operation));
        for p in spec.params {
            out.push_str(&format!(
                "    {:<12} {:<8} {} {}\n",
                p.key,
                p.kind,
                if p.required { "required" } else { "optional" },
                p.help
            ));
        }
    }
    out
}

/// Read results.csv back into rows (used by the plot command).
pub fn read_results_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if !line.starts_with("metric_name,") {
                return Err(Error::Config("not a results.csv file".into()));
            }
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::Config(format!("bad results row: {line}")));
        }
        let f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad number in results row: {line}")))
        };
        rows.push(MetricRow {
            name: parts[0].to_string(),
            value: f(parts[1])?,
            stderr: f(parts[2])?,
            ci_low: f(parts[3])?,
            ci_high: f(parts[4])?,
            n_samples: parts[5]
                .parse()
                .map_err(|_| Error::Config(format!("bad count in results row: {line}")))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_and_hashes() {
        let text = r#"
experiment = "check_voter_duality"
seed = 42
replicates = 500
[params]
l = 8
t = 1.0
sites = [0, 3]
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.experiment, "check_voter_duality");
        assert_eq!(cfg.seed, 42);
        let h1 = cfg.semantic_hash();
        let mut cfg2 = cfg.clone();
        cfg2.output_dir = PathBuf::from("elsewhere");
        assert_eq!(h1, cfg2.semantic_hash());
        let mut cfg3 = cfg.clone();
        cfg3.seed = 43;
        assert_ne!(h1, cfg3.semantic_hash());
        let mut cfg4 = cfg.clone();
        cfg4.params
            .insert("t".into(), toml::Value::Float(2.0));
        assert_ne!(h1, cfg4.semantic_hash());
    }

    #[test]
    fn missing_keys_are_named() {
        let err = ExperimentConfig::from_toml_str("seed = 1").unwrap_err();
        assert!(err.to_string().contains("experiment"));
        let cfg = ExperimentConfig::from_toml_str(
            "experiment = \"check_voter_duality\"\nseed = 1",
        )
        .unwrap();
        let err = run_config(&cfg).unwrap_err();
        assert!(err.to_string().contains("missing param"), "{err}");
    }

    #[test]
    fn unknown_experiment_rejected() {
        let cfg = ExperimentConfig::from_toml_str("experiment = \"nope\"\nseed = 1").unwrap();
        let err = run_config(&cfg).unwrap_err();
        assert!(err.to_string().contains("unknown experiment"));
    }

    #[test]
    fn registry_contains_core_checks_and_unique_ops() {
        let names: Vec<&str> = registry().iter().map(|s| s.name).collect();
        assert!(names.contains(&"check_voter_duality"));
        assert!(names.contains(&"check_self_duality"));
        assert!(names.contains(&"check_moment_duality"));
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len(), "duplicate experiment names");
        for spec in registry() {
            assert!(!spec.operation.is_empty());
        }
    }

    #[test]
    fn schemas_round_trip_through_parser() {
        for spec in registry() {
            let text = example_config(spec);
            let cfg = ExperimentConfig::from_toml_str(&text)
                .unwrap_or_else(|e| panic!("{}: {e}", spec.name));
            assert_eq!(cfg.experiment, spec.name);
            for p in spec.params {
                if p.required {
                    assert!(
                        cfg.params.contains_key(p.key),
                        "{}: example misses {}",
                        spec.name,
                        p.key
                    );
                }
            }
        }
    }
}
