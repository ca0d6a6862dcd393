//! Run configuration: one TOML file drives every subcommand, with
//! `--set key=value` overrides applied on top of it. The fully resolved
//! config is hashed into every artifact manifest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use tripcast_core::features::FeatureSchema;
use tripcast_core::forest::{ForestKind, ForestParams};
use tripcast_core::boost::{GbtParams, Growth};
use tripcast_core::grid::{GridStep, ModelKind, ParamGrid};
use tripcast_core::synth::{CityConfig, ShockConfig};
use tripcast_core::tree::{SplitMode, TreeParams};
use tripcast_core::trips::CleaningRules;
use tripcast_core::util::fnv1a;

fn default_out_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub out_dir: String,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { out_dir: default_out_dir() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_trips: usize,
    pub start_date: String,
    pub end_date: String,
    pub rows: usize,
    pub cols: usize,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub spacing_deg: f64,
    pub street_speed_mph: f64,
    pub avenue_speed_mph: f64,
    pub congestion_depth: f64,
    pub congestion_day_width: f64,
    pub congestion_hour_width: f64,
    pub snow_dates: Vec<String>,
    pub snow_multiplier: f64,
    pub noise_sigma: f64,
    pub min_route_miles: f64,
    pub shock: Option<ShockOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShockOverride {
    pub date: String,
    pub start_hour: u8,
    pub end_hour: u8,
    pub multiplier: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let city = CityConfig::default();
        Self {
            n_trips: 50_000,
            start_date: "2016-06-06".into(),
            end_date: "2016-07-03".into(),
            rows: city.rows,
            cols: city.cols,
            origin_lon: city.origin_lon,
            origin_lat: city.origin_lat,
            spacing_deg: city.spacing_deg,
            street_speed_mph: city.street_speed_mph,
            avenue_speed_mph: city.avenue_speed_mph,
            congestion_depth: city.congestion_depth,
            congestion_day_width: city.congestion_day_width,
            congestion_hour_width: city.congestion_hour_width,
            snow_dates: Vec::new(),
            snow_multiplier: city.snow_multiplier,
            noise_sigma: city.noise_sigma,
            min_route_miles: city.min_route_miles,
            shock: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ZonesConfig {
    pub cell_size: f64,
    pub min_lon: Option<f64>,
    pub min_lat: Option<f64>,
    pub max_lon: Option<f64>,
    pub max_lat: Option<f64>,
}

impl Default for ZonesConfig {
    fn default() -> Self {
        Self { cell_size: 0.005, min_lon: None, min_lat: None, max_lon: None, max_lat: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RoutingConfig {
    pub snap_radius_miles: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self { snap_radius_miles: 0.25 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    /// `longterm`, `shortterm` or `full`.
    pub kind: String,
    pub include: Vec<String>,
    pub exclude: Vec<String>,
    pub hash_main_street: bool,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self { kind: "longterm".into(), include: Vec::new(), exclude: Vec::new(), hash_main_street: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Inclusive dates.
    pub train_start: String,
    pub train_end: String,
    pub test_start: String,
    pub test_end: String,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_start: "2016-06-06".into(),
            train_end: "2016-06-26".into(),
            test_start: "2016-06-27".into(),
            test_end: "2016-07-03".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { model: "gbt_depthwise".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CartModelConfig {
    pub max_depth: usize,
    pub min_child_weight: usize,
    pub split_mode: String,
    pub histogram_bins: usize,
}

impl Default for CartModelConfig {
    fn default() -> Self {
        Self { max_depth: 12, min_child_weight: 20, split_mode: "exact".into(), histogram_bins: 256 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestModelConfig {
    pub n_trees: usize,
    pub subsample: f64,
    pub bootstrap: bool,
    pub exact_632: bool,
    pub colsample_bytree: f64,
    pub max_depth: usize,
    pub min_child_weight: usize,
    pub split_mode: String,
    pub histogram_bins: usize,
}

impl Default for ForestModelConfig {
    fn default() -> Self {
        Self {
            n_trees: 40,
            subsample: 0.9,
            bootstrap: true,
            exact_632: false,
            colsample_bytree: 0.8,
            max_depth: 12,
            min_child_weight: 5,
            split_mode: "exact".into(),
            histogram_bins: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtModelConfig {
    pub num_rounds: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub max_depth: usize,
    pub max_leaves: usize,
    pub min_child_weight: usize,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub split_mode: String,
    pub histogram_bins: usize,
    pub early_stopping_patience: usize,
}

impl Default for GbtModelConfig {
    fn default() -> Self {
        Self {
            num_rounds: 200,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            max_depth: 6,
            max_leaves: 64,
            min_child_weight: 20,
            subsample: 1.0,
            colsample_bytree: 1.0,
            split_mode: "histogram".into(),
            histogram_bins: 256,
            early_stopping_patience: 25,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelsConfig {
    pub cart: CartModelConfig,
    pub random_forest: ForestModelConfig,
    pub extra_trees: ForestModelConfig,
    pub gbt_depthwise: GbtModelConfig,
    pub gbt_leafwise: GbtModelConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalShortConfig {
    pub test_start: String,
    pub hours: usize,
    pub lookbacks: usize,
}

impl Default for EvalShortConfig {
    fn default() -> Self {
        Self { test_start: "2016-06-27".into(), hours: 48, lookbacks: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub model: String,
    /// Ordered search steps; each step maps parameter names to candidate
    /// lists and later steps condition on earlier winners.
    pub steps: Vec<std::collections::BTreeMap<String, Vec<f64>>>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        // the study's CART grid; boosting steps follow its step-wise recipe
        let mut step = std::collections::BTreeMap::new();
        step.insert("max_depth".to_string(), vec![3.0, 8.0, 13.0, 18.0, 23.0, 38.0, 33.0]);
        step.insert("min_child_weight".to_string(), (1..=13).map(|i| (10 * i) as f64).collect());
        Self { model: "cart".into(), steps: vec![step] }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 means all cores.
    pub threads: usize,
    pub paths: PathsConfig,
    pub synth: SynthConfig,
    pub cleaning: CleaningRules,
    pub zones: ZonesConfig,
    pub routing: RoutingConfig,
    pub schema: SchemaConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub models: ModelsConfig,
    pub eval_short: EvalShortConfig,
    pub tune: TuneConfig,
}

fn merge_toml(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(base_table), toml::Value::Table(overlay_table)) => {
            for (key, value) in overlay_table {
                match base_table.get_mut(&key) {
                    Some(slot) if slot.is_table() && value.is_table() => merge_toml(slot, value),
                    Some(slot) => *slot = value,
                    None => {
                        base_table.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

fn parse_set_value(raw: &str) -> toml::Value {
    // try the TOML scalar grammar first, fall back to a plain string
    let attempt = format!("v = {raw}");
    if let Ok(table) = attempt.parse::<toml::Table>() {
        if let Some(v) = table.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

fn apply_set(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .with_context(|| format!("`{key}`: `{}` is not a table", parts[..i].join(".")))?;
        if i == parts.len() - 1 {
            table.insert(part.to_string(), parse_set_value(raw));
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(toml::Table::new()));
    }
    bail!("empty --set key")
}

impl RunConfig {
    /// Defaults, overridden by the config file when present, overridden by
    /// `--set key=value` pairs.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut root = toml::Value::try_from(RunConfig::default()).context("serializing defaults")?;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            let overlay: toml::Value =
                text.parse().with_context(|| format!("parsing config file {}", path.display()))?;
            merge_toml(&mut root, overlay);
        }
        for set in sets {
            let (key, value) = set
                .split_once('=')
                .with_context(|| format!("--set `{set}` is not of the form key=value"))?;
            apply_set(&mut root, key.trim(), value.trim())?;
        }
        let config: RunConfig = root.try_into().context("interpreting configuration")?;
        Ok(config)
    }

    /// FNV-1a over the canonical JSON rendering of the resolved config.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a(json.as_bytes()))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.paths.out_dir)
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    pub fn model_path(&self, kind: &str) -> PathBuf {
        self.out_dir().join("models").join(format!("{kind}.json"))
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.out_dir().join("reports").join(name)
    }

    pub fn city_config(&self) -> Result<CityConfig> {
        let s = &self.synth;
        Ok(CityConfig {
            rows: s.rows,
            cols: s.cols,
            origin_lon: s.origin_lon,
            origin_lat: s.origin_lat,
            spacing_deg: s.spacing_deg,
            street_speed_mph: s.street_speed_mph,
            avenue_speed_mph: s.avenue_speed_mph,
            congestion_depth: s.congestion_depth,
            congestion_day_width: s.congestion_day_width,
            congestion_hour_width: s.congestion_hour_width,
            snow_dates: s
                .snow_dates
                .iter()
                .map(|d| parse_date(d))
                .collect::<Result<Vec<_>>>()?,
            snow_multiplier: s.snow_multiplier,
            shock: match &s.shock {
                None => None,
                Some(shock) => Some(ShockConfig {
                    date: parse_date(&shock.date)?,
                    start_hour: shock.start_hour,
                    end_hour: shock.end_hour,
                    multiplier: shock.multiplier,
                }),
            },
            noise_sigma: s.noise_sigma,
            min_route_miles: s.min_route_miles,
            seed: self.seed,
        })
    }

    pub fn feature_schema(&self) -> Result<FeatureSchema> {
        let mut schema = match self.schema.kind.as_str() {
            "longterm" => FeatureSchema::longterm(),
            "shortterm" => FeatureSchema::shortterm(),
            "full" => FeatureSchema::full(),
            other => bail!("unknown schema kind `{other}` (expected longterm, shortterm or full)"),
        };
        if !self.schema.include.is_empty() {
            let names: Vec<&str> = self.schema.include.iter().map(|s| s.as_str()).collect();
            schema = schema.with(&names)?;
        }
        if !self.schema.exclude.is_empty() {
            let names: Vec<&str> = self.schema.exclude.iter().map(|s| s.as_str()).collect();
            schema = schema.without(&names)?;
        }
        schema.hash_main_street = self.schema.hash_main_street;
        Ok(schema)
    }

    pub fn tree_params(&self) -> Result<TreeParams> {
        let c = &self.models.cart;
        Ok(TreeParams {
            max_depth: c.max_depth,
            min_child_weight: c.min_child_weight,
            split_mode: parse_split_mode(&c.split_mode)?,
            histogram_bins: c.histogram_bins,
        })
    }

    pub fn forest_params(&self, kind: ForestKind) -> Result<ForestParams> {
        let (c, stream) = match kind {
            ForestKind::RandomForest => (&self.models.random_forest, 1),
            ForestKind::ExtraTrees => (&self.models.extra_trees, 2),
        };
        Ok(ForestParams {
            kind,
            n_trees: c.n_trees,
            subsample: c.subsample,
            bootstrap: c.bootstrap,
            exact_632: c.exact_632,
            colsample_bytree: c.colsample_bytree,
            tree: TreeParams {
                max_depth: c.max_depth,
                min_child_weight: c.min_child_weight,
                split_mode: parse_split_mode(&c.split_mode)?,
                histogram_bins: c.histogram_bins,
            },
            seed: tripcast_core::util::derive_seed(self.seed, stream),
        })
    }

    pub fn gbt_params(&self, growth: Growth) -> Result<GbtParams> {
        let (c, stream) = match growth {
            Growth::Depthwise => (&self.models.gbt_depthwise, 3),
            Growth::Leafwise => (&self.models.gbt_leafwise, 4),
        };
        Ok(GbtParams {
            num_rounds: c.num_rounds,
            learning_rate: c.learning_rate,
            lambda: c.lambda,
            gamma: c.gamma,
            growth,
            max_depth: c.max_depth,
            max_leaves: c.max_leaves,
            min_child_weight: c.min_child_weight,
            subsample: c.subsample,
            colsample_bytree: c.colsample_bytree,
            split_mode: parse_split_mode(&c.split_mode)?,
            histogram_bins: c.histogram_bins,
            early_stopping_patience: c.early_stopping_patience,
            seed: tripcast_core::util::derive_seed(self.seed, stream),
        })
    }

    pub fn model_kind(&self, label: &str) -> Result<ModelKind> {
        Ok(ModelKind::parse(label)?)
    }

    pub fn param_grid(&self) -> Result<ParamGrid> {
        let steps = self
            .tune
            .steps
            .iter()
            .map(|step| GridStep {
                params: step.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            })
            .collect();
        let grid = ParamGrid { steps };
        grid.validate()?;
        Ok(grid)
    }

    /// Inclusive date ranges from `[split]` as half-open datetime windows.
    pub fn split_windows(&self) -> Result<tripcast_core::eval::SplitWindows> {
        let day = |s: &str| -> Result<NaiveDateTime> {
            Ok(parse_date(s)?.and_hms_opt(0, 0, 0).expect("midnight"))
        };
        let next_day = |s: &str| -> Result<NaiveDateTime> {
            Ok((parse_date(s)? + chrono::Duration::days(1)).and_hms_opt(0, 0, 0).expect("midnight"))
        };
        Ok(tripcast_core::eval::SplitWindows {
            train_start: day(&self.split.train_start)?,
            train_end: next_day(&self.split.train_end)?,
            test_start: day(&self.split.test_start)?,
            test_end: next_day(&self.split.test_end)?,
        })
    }
}

pub fn parse_split_mode(raw: &str) -> Result<SplitMode> {
    match raw {
        "exact" => Ok(SplitMode::Exact),
        "histogram" => Ok(SplitMode::Histogram),
        other => bail!("unknown split_mode `{other}` (expected exact or histogram)"),
    }
}

pub fn parse_date(raw: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").with_context(|| format!("parsing date `{raw}`"))
}

pub fn parse_datetime(raw: &str) -> Result<NaiveDateTime> {
    let raw = raw.trim();
    if let Ok(dt) = NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S") {
        return Ok(dt);
    }
    Ok(parse_date(raw)?.and_hms_opt(0, 0, 0).expect("midnight"))
}
