//! Run configuration: a JSON file, then `key=value` overrides, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rapsnav::estimators::EstimatorConfig;
use rapsnav::eval::Thresholds;
use rapsnav::filter::FilterConfig;
use rapsnav::raps::{tcheby_spec, PerformanceSpec};
use rapsnav::registry::{Registry, DEFAULT_METHODS};
use rapsnav::sim::{preset, ScenarioConfig};
use rapsnav::NavError;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

const DEFAULT_PRESET: &str = "open-sky";

/// Files of a recorded run. Relative paths are resolved against the
/// directory of the JSON file that names them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFiles {
    pub imu: PathBuf,
    pub rover: PathBuf,
    pub base: PathBuf,
    #[serde(default)]
    pub truth: Option<PathBuf>,
    /// Base antenna position (m, ECEF).
    pub base_position: [f64; 3],
}

impl DatasetFiles {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let files: DatasetFiles = serde_json::from_str(&text)
            .map_err(NavError::from)
            .with_context(|| format!("parsing {}", path.display()))?;
        Ok(files.resolved(path.parent().unwrap_or(Path::new("."))))
    }

    pub fn resolved(&self, dir: &Path) -> Self {
        let join = |p: &Path| if p.is_relative() { dir.join(p) } else { p.to_path_buf() };
        DatasetFiles {
            imu: join(&self.imu),
            rover: join(&self.rover),
            base: join(&self.base),
            truth: self.truth.as_deref().map(join),
            base_position: self.base_position,
        }
    }

    pub fn check_exist(&self) -> Result<()> {
        let required = [&self.imu, &self.rover, &self.base];
        for p in required.into_iter().chain(self.truth.as_ref()) {
            if !p.is_file() {
                return Err(NavError::invalid(format!("dataset file {} does not exist", p.display())).into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario preset that `scenario` starts from.
    pub preset: String,
    pub scenario: ScenarioConfig,
    /// Recorded data; replaces the simulator when set.
    pub dataset: Option<DatasetFiles>,
    pub methods: Vec<String>,
    pub estimator: EstimatorConfig,
    pub filter: FilterConfig,
    pub thresholds: Thresholds,
    pub output: Option<PathBuf>,
    pub seed: u64,
    /// Monte Carlo runs for `compare`.
    pub runs: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: DEFAULT_PRESET.to_string(),
            scenario: preset(DEFAULT_PRESET).expect("built-in preset"),
            dataset: None,
            methods: DEFAULT_METHODS.iter().map(|s| s.to_string()).collect(),
            estimator: EstimatorConfig::default(),
            filter: FilterConfig::default(),
            thresholds: Thresholds::default(),
            output: None,
            seed: 1,
            runs: 1,
            jobs: 0,
        }
    }
}

impl RunConfig {
    /// Defaults, then the preset, then `file`, then `sets` in order. The
    /// preset is taken from `preset_flag`, a `preset=` override or the file,
    /// in that order of precedence.
    pub fn load(file: Option<&Path>, preset_flag: Option<&str>, sets: &[String]) -> Result<Self> {
        let mut file_value = match file {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(NavError::from)
                    .with_context(|| format!("parsing {}", path.display()))?;
                if !v.is_object() {
                    return Err(NavError::invalid(format!("{} must hold a JSON object", path.display())).into());
                }
                v
            }
            None => Value::Object(Map::new()),
        };
        let overrides = sets.iter().map(|s| parse_set(s)).collect::<Result<Vec<_>>>()?;
        let from_sets = overrides.iter().rev().find(|(k, _)| k == "preset").and_then(|(_, v)| v.as_str());
        let name = preset_flag
            .or(from_sets)
            .or(file_value.get("preset").and_then(Value::as_str))
            .unwrap_or(DEFAULT_PRESET)
            .to_string();

        let base = RunConfig { preset: name.clone(), scenario: preset(&name)?, ..Default::default() };
        let mut value = serde_json::to_value(&base)?;
        if let Some(obj) = file_value.as_object_mut() {
            obj.remove("preset");
        }
        merge(&mut value, file_value);
        for (key, v) in overrides {
            if key != "preset" {
                set_path(&mut value, &key, v)?;
            }
        }
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(NavError::from).context("invalid configuration")?;
        if let (Some(ds), Some(path)) = (&cfg.dataset, file) {
            cfg.dataset = Some(ds.resolved(path.parent().unwrap_or(Path::new("."))));
        }
        Ok(cfg)
    }

    /// Checks the configuration and replaces method names by their
    /// registered spelling.
    pub fn prepare(&mut self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(NavError::invalid("method list is empty").into());
        }
        let reg = Registry::default();
        for m in self.methods.iter_mut() {
            *m = reg.build(m, &self.estimator)?.name;
        }
        if self.runs == 0 {
            return Err(NavError::invalid("runs must be at least 1").into());
        }
        self.estimator.spec.validate()?;
        self.filter.validate()?;
        if let Some(ds) = &self.dataset {
            ds.check_exist()?;
        } else {
            self.scenario.validate()?;
        }
        Ok(())
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output.as_deref().ok_or_else(|| NavError::invalid("an output directory is required (--out)").into())
    }
}

/// `lane-level-paper` (or another preset name) or `custom:<path>` to a JSON
/// file holding `{"bounds": [...], "components": [...]}`.
pub fn parse_spec(arg: &str) -> Result<PerformanceSpec> {
    if let Some(path) = arg.strip_prefix("custom:") {
        let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        let spec: PerformanceSpec =
            serde_json::from_str(&text).map_err(NavError::from).with_context(|| format!("parsing {path}"))?;
        spec.validate()?;
        Ok(spec)
    } else {
        Ok(tcheby_spec(arg)?)
    }
}

/// Splits `key=value`; the value is parsed as JSON and falls back to a
/// plain string.
pub fn parse_set(arg: &str) -> Result<(String, Value)> {
    let (key, raw) =
        arg.split_once('=').ok_or_else(|| NavError::invalid(format!("override '{arg}' is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(NavError::invalid(format!("override '{arg}' has an empty key")).into());
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Deep merge of `src` into `dst`. Objects tagged with a different `kind`
/// replace the default instead of merging into it.
fn merge(dst: &mut Value, src: Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                match d.get_mut(&k) {
                    Some(slot)
                        if slot.is_object()
                            && v.is_object()
                            && slot.get("kind") == v.get("kind").or(slot.get("kind")) =>
                    {
                        merge(slot, v)
                    }
                    Some(slot) => *slot = v,
                    None => {
                        d.insert(k, v);
                    }
                }
            }
        }
        (d, s) => *d = s,
    }
}

/// Sets a dotted path. Keys must already exist unless the parent is null,
/// so typos fail instead of being ignored.
fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for part in &parts {
        if cur.is_null() {
            *cur = Value::Object(Map::new());
        }
        cur = match cur {
            Value::Object(map) => {
                if !map.is_empty() && !map.contains_key(*part) {
                    bail!(NavError::invalid(format!("unknown configuration key '{key}'")));
                }
                map.entry(part.to_string()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| anyhow!(NavError::invalid(format!("'{part}' in '{key}' is not an index"))))?;
                let len = items.len();
                items.get_mut(idx).ok_or_else(|| {
                    anyhow!(NavError::invalid(format!("index {idx} out of range in '{key}' (length {len})")))
                })?
            }
            _ => bail!(NavError::invalid(format!("'{key}' does not name a nested value"))),
        };
    }
    *cur = value;
    Ok(())
}
