use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{FileFormat, SplitProtocol};
use crate::error::{Error, Result};
use crate::eval::{EvalOptions, RecallNorm, DEFAULT_KS};
use crate::models::{Binarization, ModelKind, TrainConfig};
use crate::rng::derive_seed;
use crate::synthetic::{ClusterSpec, SurrogateSpec};

/// One experiment: data preparation, the model grid, training overrides and
/// evaluation settings. Read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Split, subsample and training seeds derive from it
    /// unless set explicitly.
    #[serde(default)]
    pub seed: u64,
    /// Output directory; relative paths resolve against the config file.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub grid: GridConfig,
    /// `[train.all]` applies to every kind, `[train.<kind>]` on top of it.
    #[serde(default)]
    pub train: BTreeMap<String, toml::Table>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub groups: GroupsConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticSpec {
    MovielensLike(SurrogateSpec),
    Clusters(ClusterSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Rating file; relative paths resolve against the config file.
    pub path: Option<PathBuf>,
    pub format: FileFormat,
    /// Generated data, used when `path` is absent.
    pub synthetic: Option<SyntheticSpec>,
    pub min_user: usize,
    pub min_item: usize,
    /// Keep this many users, drawn with the subsample seed.
    pub subsample_users: Option<usize>,
    /// Ratings at or above this value count as similar.
    pub similarity_threshold: u8,
    pub split: SplitProtocol,
    pub train_ratio: f64,
    pub split_seed: Option<u64>,
    pub subsample_seed: Option<u64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            path: None,
            format: FileFormat::MovielensDat,
            synthetic: None,
            min_user: 0,
            min_item: 0,
            subsample_users: None,
            similarity_threshold: 3,
            split: SplitProtocol::PerUser,
            train_ratio: 0.8,
            split_seed: None,
            subsample_seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Learned kinds and baselines (`random`, `top`).
    pub models: Vec<ModelKind>,
    /// Variants for the autoencoder kinds. Factorisation kinds take the
    /// subset of S and C.
    pub variants: Vec<Binarization>,
    pub code_bits: Vec<usize>,
    /// Independent training seeds per cell.
    pub repeats: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            models: vec![ModelKind::Ccsr],
            variants: vec![Binarization::S],
            code_bits: vec![40],
            repeats: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub recall_norm: RecallNorm,
    pub graded: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: DEFAULT_KS.to_vec(),
            recall_norm: RecallNorm::MinK,
            graded: false,
        }
    }
}

/// Which two evaluated variants the χ² analysis compares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupsConfig {
    pub a: String,
    pub b: String,
    /// Defaults to the largest grid code length.
    pub code_bits: Option<usize>,
    pub k: usize,
    pub repeat: usize,
}

impl Default for GroupsConfig {
    fn default() -> Self {
        GroupsConfig {
            a: "AECF-C".into(),
            b: "CCSR-C".into(),
            code_bits: None,
            k: 10,
            repeat: 0,
        }
    }
}

/// Whether a cell trains plain codes (S, C) or tanh-scaled codes (ST, SST).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Plain,
    Tanh,
}

impl Family {
    pub fn of(variant: Binarization) -> Family {
        if variant.trains_with_tanh() {
            Family::Tanh
        } else {
            Family::Plain
        }
    }

    pub fn training_binarization(self) -> Binarization {
        match self {
            Family::Plain => Binarization::S,
            Family::Tanh => Binarization::ST,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Plain => "plain",
            Family::Tanh => "tanh",
        })
    }
}

/// One trained model of the grid and the variants read from it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainCell {
    pub kind: ModelKind,
    pub family: Family,
    pub code_bits: usize,
    pub repeat: usize,
    pub config: TrainConfig,
    pub variants: Vec<Binarization>,
}

impl TrainCell {
    /// `ccsr-plain-r40-s0`
    pub fn name(&self) -> String {
        format!(
            "{}-{}-r{}-s{}",
            self.kind.name().to_lowercase(),
            self.family,
            self.code_bits,
            self.repeat
        )
    }

    /// `ccsr-S-r40-s0`
    pub fn variant_name(&self, variant: Binarization) -> String {
        format!(
            "{}-{}-r{}-s{}",
            self.kind.name().to_lowercase(),
            variant,
            self.code_bits,
            self.repeat
        )
    }
}

/// A baseline evaluated once per repeat (random) or once (top).
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineCell {
    pub kind: ModelKind,
    pub repeat: usize,
    pub seed: u64,
}

impl BaselineCell {
    pub fn name(&self) -> String {
        format!("{}-s{}", self.kind.name().to_lowercase(), self.repeat)
    }
}

const GRID_KEYS: [&str; 3] = ["code_dim", "binarization", "seed"];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        if self.out.is_relative() {
            self.out = base.join(&self.out);
        }
        if let Some(p) = &self.dataset.path {
            if p.is_relative() {
                self.dataset.path = Some(base.join(p));
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn split_seed(&self) -> u64 {
        self.dataset
            .split_seed
            .unwrap_or_else(|| derive_seed(self.seed, "split"))
    }

    pub fn subsample_seed(&self) -> u64 {
        self.dataset
            .subsample_seed
            .unwrap_or_else(|| derive_seed(self.seed, "subsample"))
    }

    /// Training seed shared by every model of one repeat.
    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        derive_seed(self.seed, &format!("repeat-{repeat}"))
    }

    pub fn eval_options(&self, jobs: usize) -> EvalOptions {
        EvalOptions {
            ks: self.eval.ks.clone(),
            recall_norm: self.eval.recall_norm,
            graded: self.eval.graded,
            jobs: jobs.max(1),
        }
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let d = &self.dataset;
        if d.path.is_none() && d.synthetic.is_none() {
            return fail("[dataset] needs `path` or a `[dataset.synthetic]` table".into());
        }
        if d.path.is_some() && d.synthetic.is_some() {
            return fail("[dataset] takes either `path` or `synthetic`, not both".into());
        }
        if !(d.train_ratio > 0.0 && d.train_ratio < 1.0) {
            return fail(format!("train_ratio = {} is outside (0, 1)", d.train_ratio));
        }
        if !(1..=5).contains(&d.similarity_threshold) {
            return fail(format!(
                "similarity_threshold = {} is outside 1..=5",
                d.similarity_threshold
            ));
        }
        if self.grid.models.is_empty() {
            return fail("[grid] models is empty".into());
        }
        if self.grid.repeats == 0 {
            return fail("[grid] repeats must be at least 1".into());
        }
        if self.grid.code_bits.contains(&0) {
            return fail("[grid] code_bits must be positive".into());
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return fail("[eval] ks must be non-empty and positive".into());
        }
        if self.groups.k == 0 {
            return fail("[groups] k must be positive".into());
        }
        for key in self.train.keys() {
            if key != "all"
                && key
                    .parse::<ModelKind>()
                    .map_or(true, ModelKind::is_baseline)
            {
                return fail(format!("[train.{key}] is not a trainable model kind"));
            }
        }
        self.train_cells().map(|_| ())
    }

    /// The per-kind training config before grid values are applied.
    pub fn train_config(&self, kind: ModelKind, code_bits: usize) -> Result<TrainConfig> {
        let base = TrainConfig::for_model(kind, code_bits);
        let mut table = match toml::Value::try_from(&base) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("TrainConfig serializes to a table"),
        };
        let own = kind.name().to_lowercase();
        for section in ["all", own.as_str()] {
            if let Some(over) = self.train.get(section) {
                for (k, v) in over {
                    if GRID_KEYS.contains(&k.as_str()) {
                        return Err(Error::Config(format!(
                            "[train.{section}] {k} is set by the grid and the seed"
                        )));
                    }
                    table.insert(k.clone(), v.clone());
                }
            }
        }
        let cfg: TrainConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("[train] for {own}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every model to train, in grid order (kind, code length, family, repeat).
    pub fn train_cells(&self) -> Result<Vec<TrainCell>> {
        let mut cells = Vec::new();
        for &kind in self.grid.models.iter().filter(|k| !k.is_baseline()) {
            let variants: Vec<Binarization> = self
                .grid
                .variants
                .iter()
                .copied()
                .filter(|v| kind.is_autoencoder() || !v.trains_with_tanh())
                .collect();
            if variants.is_empty() {
                return Err(Error::Config(format!(
                    "{kind} supports only the S and C variants; [grid] variants has neither"
                )));
            }
            let mut families: Vec<Family> = variants.iter().map(|&v| Family::of(v)).collect();
            families.sort();
            families.dedup();
            for &bits in &self.grid.code_bits {
                for &family in &families {
                    for repeat in 0..self.grid.repeats {
                        let mut config = self.train_config(kind, bits)?;
                        config.code_dim = bits;
                        config.binarization = family.training_binarization();
                        config.seed = self.repeat_seed(repeat);
                        cells.push(TrainCell {
                            kind,
                            family,
                            code_bits: bits,
                            repeat,
                            config,
                            variants: variants
                                .iter()
                                .copied()
                                .filter(|&v| Family::of(v) == family)
                                .collect(),
                        });
                    }
                }
            }
        }
        Ok(cells)
    }

    pub fn baseline_cells(&self) -> Vec<BaselineCell> {
        let mut cells = Vec::new();
        for &kind in self.grid.models.iter().filter(|k| k.is_baseline()) {
            let repeats = if kind == ModelKind::Random {
                self.grid.repeats
            } else {
                1
            };
            for repeat in 0..repeats {
                cells.push(BaselineCell {
                    kind,
                    repeat,
                    seed: derive_seed(self.repeat_seed(repeat), "random-baseline"),
                });
            }
        }
        cells
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
seed = 7
out = "runs/exp"

[dataset]
path = "data/ratings.dat"
subsample_users = 1200

[grid]
models = ["random", "top", "cf", "ccsr"]
variants = ["S", "ST", "SST", "C"]
code_bits = [20, 40]
repeats = 3

[train.all]
epochs = 5

[train.ccsr]
learning_rate = 0.002
"#;

    #[test]
    fn parses_and_expands_grid() {
        let cfg = ExperimentConfig::from_toml(BASIC).unwrap();
        cfg.validate().unwrap();
        let cells = cfg.train_cells().unwrap();
        // cf: 2 bits x plain x 3; ccsr: 2 bits x {plain, tanh} x 3
        assert_eq!(cells.len(), 6 + 12);
        let cf = &cells[0];
        assert_eq!(cf.kind, ModelKind::Cf);
        assert_eq!(cf.variants, vec![Binarization::S, Binarization::C]);
        assert_eq!(cf.config.epochs, 5);
        assert_eq!(cf.config.learning_rate, 0.01);
        let tanh = cells
            .iter()
            .find(|c| c.kind == ModelKind::Ccsr && c.family == Family::Tanh)
            .unwrap();
        assert_eq!(tanh.variants, vec![Binarization::ST, Binarization::SST]);
        assert_eq!(tanh.config.binarization, Binarization::ST);
        assert_eq!(tanh.config.learning_rate, 0.002);
        assert_eq!(tanh.config.epochs, 5);
        assert_eq!(tanh.name(), "ccsr-tanh-r20-s0");
        assert_eq!(tanh.variant_name(Binarization::SST), "ccsr-SST-r20-s0");
        let baselines = cfg.baseline_cells();
        assert_eq!(baselines.len(), 3 + 1);
    }

    #[test]
    fn seeds_are_shared_within_a_repeat() {
        let cfg = ExperimentConfig::from_toml(BASIC).unwrap();
        let cells = cfg.train_cells().unwrap();
        for c in &cells {
            assert_eq!(c.config.seed, cfg.repeat_seed(c.repeat));
        }
        assert_ne!(cfg.repeat_seed(0), cfg.repeat_seed(1));
        let mut other = cfg.clone();
        other.seed = 8;
        assert_ne!(other.split_seed(), cfg.split_seed());
    }

    #[test]
    fn typos_and_grid_keys_are_rejected() {
        let bad = BASIC.replace("epochs = 5", "epoch = 5");
        let cfg = ExperimentConfig::from_toml(&bad).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let bad = BASIC.replace("epochs = 5", "code_dim = 5");
        let cfg = ExperimentConfig::from_toml(&bad).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let bad = BASIC.replace("[train.ccsr]", "[train.top]");
        let cfg = ExperimentConfig::from_toml(&bad).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml(&format!("unknown = 1\n{BASIC}")).is_err());
    }

    #[test]
    fn factorisation_needs_a_plain_variant() {
        let text = BASIC.replace(r#"["S", "ST", "SST", "C"]"#, r#"["ST"]"#);
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn synthetic_source_parses() {
        let text = r#"
[dataset.synthetic]
kind = "movielens_like"
users = 300
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        cfg.validate().unwrap();
        match cfg.dataset.synthetic {
            Some(SyntheticSpec::MovielensLike(s)) => {
                assert_eq!(s.users, 300);
                assert_eq!(s.items, SurrogateSpec::default().items);
            }
            other => panic!("{other:?}"),
        }
        let text = "[dataset.synthetic]\nkind = \"clusters\"\nbogus = 1\n";
        assert!(ExperimentConfig::from_toml(text).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut cfg = ExperimentConfig::from_toml(BASIC).unwrap();
        cfg.rebase(Path::new("/etc/exp"));
        assert_eq!(cfg.out, Path::new("/etc/exp/runs/exp"));
        assert_eq!(
            cfg.dataset.path.as_deref(),
            Some(Path::new("/etc/exp/data/ratings.dat"))
        );
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(BASIC).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
