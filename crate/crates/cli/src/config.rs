use std::path::{Path, PathBuf};
use std::sync::Arc;

use fedsim::data::{load_cifar10_binary, load_idx_dir, synth_dataset, Dataset};
use fedsim::federation::{ExperimentConfig, Strategy};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

pub const DATA_DIR_ENV: &str = "FEDSIM_DATA_DIR";

const PRESETS: &[(&str, &str)] = &[
    ("iid-fedavg", include_str!("../presets/iid-fedavg.json")),
    ("cases-fedavg", include_str!("../presets/cases-fedavg.json")),
    ("cases-labelwise", include_str!("../presets/cases-labelwise.json")),
    ("labelwise-vs-fedavg", include_str!("../presets/labelwise-vs-fedavg.json")),
    ("proportion-sweep", include_str!("../presets/proportion-sweep.json")),
    ("iid-fedavg-synthetic", include_str!("../presets/iid-fedavg-synthetic.json")),
    ("cases-fedavg-synthetic", include_str!("../presets/cases-fedavg-synthetic.json")),
    ("cases-labelwise-synthetic", include_str!("../presets/cases-labelwise-synthetic.json")),
    ("labelwise-vs-fedavg-synthetic", include_str!("../presets/labelwise-vs-fedavg-synthetic.json")),
    ("proportion-sweep-synthetic", include_str!("../presets/proportion-sweep-synthetic.json")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Mnist,
    Cifar10,
    Synthetic,
}

fn default_synth_classes() -> usize {
    10
}
fn default_synth_train() -> usize {
    500
}
fn default_synth_test() -> usize {
    100
}
fn default_synth_dim() -> usize {
    64
}
fn default_synth_spread() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_synth_classes")]
    pub num_classes: usize,
    #[serde(default = "default_synth_train")]
    pub train_per_class: usize,
    #[serde(default = "default_synth_test")]
    pub test_per_class: usize,
    #[serde(default = "default_synth_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_synth_spread")]
    pub spread: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Map::new())).expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub kind: DatasetKind,
    /// Directory relative to the data root; absolute paths are used as is.
    #[serde(default)]
    pub path: Option<String>,
    /// Stratified cap on the training set.
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    #[serde(default)]
    pub subset_seed: u64,
    #[serde(default)]
    pub synthetic: SynthConfig,
}

impl DatasetConfig {
    pub fn resolved_path(&self) -> PathBuf {
        let root = std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from);
        let default = match self.kind {
            DatasetKind::Mnist => "mnist-5k",
            DatasetKind::Cifar10 => "cifar-10-batches-bin",
            DatasetKind::Synthetic => "",
        };
        root.join(self.path.as_deref().unwrap_or(default))
    }

    /// Loads `(train, test)`.
    pub fn load(&self) -> Result<(Arc<Dataset>, Dataset), CliError> {
        let (train, test) = match self.kind {
            DatasetKind::Mnist => {
                let dir = self.resolved_path();
                let load = |prefix| load_idx_dir(&dir, prefix).map_err(|e| CliError::data(&dir, e));
                (load("train")?, load("t10k")?)
            }
            DatasetKind::Cifar10 => {
                let dir = self.resolved_path();
                let load = |names: &[&str]| -> Result<Dataset, CliError> {
                    let mut parts = Vec::new();
                    for name in names {
                        let path = dir.join(name);
                        let file = std::fs::File::open(&path).map_err(|e| CliError::data(&path, e.into()))?;
                        parts.push(load_cifar10_binary(std::io::BufReader::new(file)).map_err(|e| CliError::data(&path, e))?);
                    }
                    concat(parts).map_err(|e| CliError::data(&dir, e))
                };
                (
                    load(&["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"])?,
                    load(&["test_batch.bin"])?,
                )
            }
            DatasetKind::Synthetic => {
                let s = &self.synthetic;
                let all = synth_dataset(s.num_classes, s.train_per_class + s.test_per_class, s.feature_dim, s.spread, s.seed)?;
                all.split_per_class(s.train_per_class)?
            }
        };
        let train = match self.train_limit {
            Some(limit) => train.stratified_subset(limit, self.subset_seed)?,
            None => train,
        };
        let test = match self.test_limit {
            Some(limit) => test.stratified_subset(limit, self.subset_seed)?,
            None => test,
        };
        Ok((Arc::new(train), test))
    }
}

fn concat(parts: Vec<Dataset>) -> fedsim::Result<Dataset> {
    let examples: Vec<_> = parts.iter().flat_map(|d| d.examples()).collect();
    let classes = parts.iter().map(|d| d.num_classes()).max().unwrap_or(0);
    Dataset::from_examples(&examples, classes)
}

/// One named configuration inside a suite: dotted-path overrides relative to
/// `experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub id: String,
    #[serde(default)]
    pub set: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub p_biased: Vec<f64>,
    pub strategies: Vec<Strategy>,
}

/// A config file or preset: one base experiment plus optional variants and
/// proportion sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default)]
    pub dataset: DatasetConfig,
    pub experiment: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// A fully resolved single run, the shape echoed into every run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolved {
    pub id: String,
    pub dataset: DatasetConfig,
    pub experiment: ExperimentConfig,
}

impl Resolved {
    pub fn validate(&self) -> Result<(), CliError> {
        self.experiment
            .validate()
            .map_err(|e| CliError::Usage(format!("`{}`: {e}", self.id)))
    }
}

/// Sets `path` (dot separated) inside `doc`, creating objects on the way.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Usage(format!("bad key `{path}`")));
    }
    for key in &keys[..keys.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("`{path}`: `{key}` is inside a non-object")))?;
        cur = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    cur.as_object_mut()
        .ok_or_else(|| CliError::Usage(format!("`{path}` does not address an object field")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// `key=value`, where the value is JSON if it parses and a string otherwise.
pub fn parse_override(arg: &str) -> Result<(String, Value), CliError> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{arg}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

pub struct Source<'a> {
    pub preset: Option<&'a str>,
    pub config: Option<&'a Path>,
    pub overrides: &'a [String],
    pub seed: Option<u64>,
}

impl Source<'_> {
    /// Short name used for the default output directory.
    pub fn name(&self) -> String {
        match (self.preset, self.config) {
            (Some(p), _) => p.to_string(),
            (None, Some(c)) => c.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned()),
            _ => "run".into(),
        }
    }

    pub fn load(&self) -> Result<Suite, CliError> {
        let mut doc: Value = match (self.preset, self.config) {
            (Some(_), Some(_)) => return Err(CliError::Usage("give either --preset or --config, not both".into())),
            (Some(name), None) => {
                let text = PRESETS.iter().find(|p| p.0 == name).map(|p| p.1).ok_or_else(|| {
                    CliError::Usage(format!(
                        "unknown preset `{name}`; available: {}",
                        preset_names().collect::<Vec<_>>().join(", ")
                    ))
                })?;
                serde_json::from_str(text).expect("embedded presets are valid JSON")
            }
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            (None, None) => return Err(CliError::Usage("one of --preset or --config is required".into())),
        };
        // a resolved run echo loads as a one-variant suite
        if let Some(obj) = doc.as_object_mut() {
            obj.remove("id");
        }
        for arg in self.overrides {
            let (key, value) = parse_override(arg)?;
            set_path(&mut doc, &key, value)?;
        }
        if let Some(seed) = self.seed {
            set_path(&mut doc, "experiment.seed", seed.into())?;
        }
        serde_json::from_value(doc).map_err(|e| CliError::Usage(format!("config: {e}")))
    }
}

impl Suite {
    /// The base experiment with each variant's overrides applied; a suite
    /// without variants yields the base alone under `default_id`. Only the
    /// partition plan is checked; see [`Resolved::validate`].
    pub fn resolve(&self, default_id: &str) -> Result<Vec<Resolved>, CliError> {
        if self.variants.is_empty() {
            return Ok(vec![Resolved {
                id: default_id.to_string(),
                dataset: self.dataset.clone(),
                experiment: self.experiment.clone(),
            }]);
        }
        let base = serde_json::to_value(&self.experiment).expect("config serializes");
        self.variants
            .iter()
            .map(|v| {
                let mut doc = base.clone();
                for (key, value) in &v.set {
                    set_path(&mut doc, key, value.clone())?;
                }
                let experiment: ExperimentConfig = serde_json::from_value(doc)
                    .map_err(|e| CliError::Usage(format!("variant `{}`: {e}", v.id)))?;
                Ok(Resolved {
                    id: v.id.clone(),
                    dataset: self.dataset.clone(),
                    experiment,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_resolve() {
        for (name, _) in PRESETS {
            let src = Source {
                preset: Some(name),
                config: None,
                overrides: &[],
                seed: None,
            };
            let suite = src.load().unwrap_or_else(|e| panic!("{name}: {e}"));
            let runs = suite.resolve(name).unwrap();
            assert!(!runs.is_empty());
            for r in runs {
                r.validate().unwrap();
            }
        }
    }

    #[test]
    fn overrides() {
        let mut doc = serde_json::json!({"a": {"b": 1}});
        set_path(&mut doc, "a.c.d", Value::from(2)).unwrap();
        set_path(&mut doc, "a.b", Value::from("x")).unwrap();
        assert_eq!(doc, serde_json::json!({"a": {"b": "x", "c": {"d": 2}}}));
        assert!(set_path(&mut doc, "a.b.z", Value::Null).is_err());
        assert_eq!(parse_override("x.y=3").unwrap(), ("x.y".into(), Value::from(3)));
        assert_eq!(parse_override("k=1A").unwrap().1, Value::from("1A"));
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = ["experiment.bogus=1".to_string()];
        let src = Source {
            preset: Some("iid-fedavg"),
            config: None,
            overrides: &bad,
            seed: None,
        };
        assert!(matches!(src.load(), Err(CliError::Usage(_))));
    }
}
