//! Experiment runner behind the `hashrec` command line: prepare, train,
//! encode, evaluate, report, the ST/SST gap study and the χ² group analysis,
//! all driven by one [`ExperimentConfig`] and recorded in a [`RunManifest`].

mod config;
mod manifest;
mod report;

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use crate::binarize::BinaryCodeMatrix;
use crate::dataset::{
    derive_similarity, filter_min_interactions, load_ratings_labeled, split, subsample_users,
    DatasetStats, LoadedRatings, RatingMatrix, SplitPair,
};
use crate::error::{Error, Result};
use crate::eval::{
    chi_square_group_analysis, evaluate_baseline, evaluate_codes, model_codes, read_metrics_csv,
    read_per_user_csv, st_sst_gap, write_metrics, Codes, EvalData, GapReport, GroupReport,
    MetricsReport,
};
use crate::models::{
    load_checkpoint, save_checkpoint, train_model, Baseline, Binarization, ModelKind,
};
use crate::nn::{self, DenseMatrix};
use crate::synthetic::{cluster_toy, movielens_like};

pub use config::{
    BaselineCell, DatasetConfig, EvalConfig, ExperimentConfig, Family, GridConfig, GroupsConfig,
    SyntheticSpec, TrainCell,
};
pub use manifest::{run_id, DataFingerprint, RunManifest, StageRecord, StageStatus, MANIFEST_FILE};
pub use report::{Aggregate, MetricRow, ReportTable};

pub const SPLIT_FILE: &str = "data/split.tsv";
pub const TRAIN_SIMILARITY_FILE: &str = "data/similarity_train.tsv";
pub const TEST_SIMILARITY_FILE: &str = "data/similarity_test.tsv";
pub const STATS_FILE: &str = "data/stats.txt";
pub const MODELS_DIR: &str = "models";
pub const CODES_DIR: &str = "codes";
pub const METRICS_DIR: &str = "metrics";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const GAPSTUDY_CSV: &str = "gapstudy.csv";
pub const GROUPS_CSV: &str = "groups.csv";

/// Dataset sizes printed by `prepare`, in the columns of the usual
/// dataset table.
#[derive(Clone, Debug, PartialEq)]
pub struct PrepareSummary {
    pub loaded: DatasetStats,
    /// Density over `max user id x max item id` when ids are numeric.
    pub id_range: Option<(u64, u64, f64)>,
    pub prepared: DatasetStats,
    pub train_entries: usize,
    pub test_entries: usize,
    pub split_seed: u64,
}

impl fmt::Display for PrepareSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "loaded    {}", self.loaded)?;
        if let Some((u, i, d)) = self.id_range {
            writeln!(
                f,
                "          density over the raw id range {u} x {i}: {:.2}%",
                d * 100.0
            )?;
        }
        writeln!(f, "prepared  {}", self.prepared)?;
        write!(
            f,
            "split     train {}  test {}  seed {}",
            self.train_entries, self.test_entries, self.split_seed
        )
    }
}

/// `median_ndcg_drop` and friends over the repeats of a gap study.
#[derive(Clone, Debug)]
pub struct GapStudy {
    pub reports: Vec<(TrainCell, GapReport)>,
}

impl GapStudy {
    /// Median relative NDCG@k drop over repeats of one kind and code length.
    pub fn median_ndcg_drop(&self, kind: ModelKind, code_bits: usize, k: usize) -> Option<f64> {
        let mut drops: Vec<f64> = self
            .reports
            .iter()
            .filter(|(c, _)| c.kind == kind && c.code_bits == code_bits)
            .filter_map(|(_, r)| r.ndcg_drop(k))
            .collect();
        if drops.is_empty() {
            return None;
        }
        drops.sort_by(f64::total_cmp);
        let n = drops.len();
        Some(if n % 2 == 1 {
            drops[n / 2]
        } else {
            (drops[n / 2 - 1] + drops[n / 2]) / 2.0
        })
    }

    pub fn to_csv(&self, header_comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = header_comment {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str("model,code_bits,repeat,k,metric,st,sst,relative_drop\n");
        for (cell, r) in &self.reports {
            for row in &r.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.model,
                    r.code_bits,
                    cell.repeat,
                    row.k,
                    row.metric,
                    row.continuous,
                    row.binary,
                    row.relative_drop
                ));
            }
        }
        out
    }
}

/// A configured experiment bound to an output directory.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    /// Grid cells processed concurrently.
    pub jobs: usize,
    /// Restricts train, encode, evaluate and gapstudy to cells whose name
    /// contains this string.
    pub only: Option<String>,
    /// Per-cell progress lines on stderr.
    pub verbose: bool,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Experiment {
            out: config.out.clone(),
            config,
            jobs: 1,
            only: None,
            verbose: false,
        })
    }

    pub fn with_out(mut self, out: impl Into<PathBuf>) -> Self {
        self.out = out.into();
        self
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs.max(1);
        self
    }

    pub fn with_only(mut self, only: Option<String>) -> Self {
        self.only = only;
        self
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.out.join(relative)
    }

    fn selected(&self, name: &str) -> bool {
        self.only.as_deref().is_none_or(|s| name.contains(s))
    }

    pub fn train_cells(&self) -> Result<Vec<TrainCell>> {
        Ok(self
            .config
            .train_cells()?
            .into_iter()
            .filter(|c| self.selected(&c.name()))
            .collect())
    }

    pub fn model_path(&self, cell: &TrainCell) -> PathBuf {
        self.out
            .join(MODELS_DIR)
            .join(format!("{}.hrnn", cell.name()))
    }

    fn codes_paths(&self, cell: &TrainCell, variant: Binarization) -> (PathBuf, PathBuf) {
        let dir = self.out.join(CODES_DIR);
        let name = cell.variant_name(variant);
        if variant.is_binary() {
            (
                dir.join(format!("{name}.users.hrbc")),
                dir.join(format!("{name}.items.hrbc")),
            )
        } else {
            let p = dir.join(format!("{name}.hrnn"));
            (p.clone(), p)
        }
    }

    fn metrics_paths(&self, name: &str) -> (PathBuf, PathBuf) {
        let dir = self.out.join(METRICS_DIR);
        (
            dir.join(format!("{name}.csv")),
            dir.join(format!("{name}.per_user.csv")),
        )
    }

    fn progress(&self, stage: &str, name: &str, started: Instant) {
        if self.verbose {
            eprintln!("{stage}: {name} ({:.1}s)", started.elapsed().as_secs_f64());
        }
    }

    /// Records `started` before and `finished`/`failed` after `body`.
    fn stage<T>(
        &self,
        name: &str,
        body: impl FnOnce(&mut RunManifest) -> Result<(T, Vec<PathBuf>)>,
    ) -> Result<T> {
        let mut manifest = RunManifest::open(&self.out, &self.config)?;
        let started = manifest.start(name, self.jobs);
        manifest.save(&self.out)?;
        let result = body(&mut manifest);
        let outcome = match &result {
            Ok((_, outputs)) => Ok(outputs
                .iter()
                .map(|p| p.strip_prefix(&self.out).unwrap_or(p).display().to_string())
                .collect()),
            Err(e) => Err(e.to_string()),
        };
        manifest.finish(name, self.jobs, started, outcome);
        manifest.save(&self.out)?;
        result.map(|(v, _)| v)
    }

    fn mkdir(&self, relative: &str) -> Result<PathBuf> {
        let dir = self.out.join(relative);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn load_source(&self) -> Result<(RatingMatrix, Option<(u64, u64, f64)>)> {
        let d = &self.config.dataset;
        match (&d.path, &d.synthetic) {
            (Some(path), _) => {
                let loaded = load_ratings_labeled(path, d.format)?;
                let range = id_range_density(&loaded);
                Ok((loaded.matrix, range))
            }
            (None, Some(SyntheticSpec::MovielensLike(spec))) => Ok((movielens_like(spec)?, None)),
            (None, Some(SyntheticSpec::Clusters(spec))) => Ok((cluster_toy(spec)?, None)),
            (None, None) => Err(Error::Config("no dataset source".into())),
        }
    }

    /// Loads, filters, subsamples and splits the data, then writes the split,
    /// both similarity relations and a stats table.
    pub fn prepare(&self) -> Result<PrepareSummary> {
        self.stage("prepare", |manifest| {
            let d = &self.config.dataset;
            let (raw, id_range) = self.load_source()?;
            let filtered = filter_min_interactions(&raw, d.min_user, d.min_item)?;
            let prepared = match d.subsample_users {
                Some(n) => subsample_users(&filtered, n, self.config.subsample_seed())?,
                None => filtered,
            };
            let seed = self.config.split_seed();
            let pair = split(&prepared, d.split, d.train_ratio, seed)?;
            self.mkdir("data")?;
            let split_path = self.path(SPLIT_FILE);
            pair.write_manifest(&split_path)?;
            let sim_train = self.path(TRAIN_SIMILARITY_FILE);
            derive_similarity(&pair.train, d.similarity_threshold).write_tsv(&sim_train)?;
            let sim_test = self.path(TEST_SIMILARITY_FILE);
            derive_similarity(&pair.test, d.similarity_threshold).write_tsv(&sim_test)?;
            let summary = PrepareSummary {
                loaded: raw.stats(),
                id_range,
                prepared: prepared.stats(),
                train_entries: pair.train.len(),
                test_entries: pair.test.len(),
                split_seed: seed,
            };
            let stats_path = self.path(STATS_FILE);
            fs::write(&stats_path, format!("{summary}\n"))
                .map_err(|e| Error::io(&stats_path, e))?;
            manifest.data = Some(DataFingerprint {
                users: pair.train.num_users(),
                items: pair.train.num_items(),
                train_entries: pair.train.len(),
                test_entries: pair.test.len(),
                train_fingerprint: pair.train.fingerprint(),
                test_fingerprint: pair.test.fingerprint(),
                split_seed: seed,
                similarity_threshold: d.similarity_threshold,
            });
            Ok((summary, vec![split_path, sim_train, sim_test, stats_path]))
        })
    }

    /// The split written by `prepare`.
    pub fn load_split(&self) -> Result<SplitPair> {
        let path = self.path(SPLIT_FILE);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                path,
                producer: "prepare",
            });
        }
        SplitPair::read_manifest(&path)
    }

    /// Trains every selected grid cell and writes one checkpoint each.
    pub fn train(&self) -> Result<Vec<PathBuf>> {
        self.stage("train", |manifest| {
            let pair = self.load_split()?;
            let sim = derive_similarity(&pair.train, self.config.dataset.similarity_threshold);
            let cells = self.train_cells()?;
            self.mkdir(MODELS_DIR)?;
            let run = manifest.run_id.clone();
            let paths = par_map(&cells, self.jobs, |cell| {
                let t = Instant::now();
                let model = train_model(cell.kind, &pair.train, &sim, &cell.config)?;
                let path = self.model_path(cell);
                let provenance = serde_json::json!({
                    "run_id": run,
                    "cell": cell.name(),
                    "repeat": cell.repeat,
                    "split_seed": pair.seed,
                    "similarity_threshold": self.config.dataset.similarity_threshold,
                });
                save_checkpoint(&model, &path, provenance)?;
                self.progress("train", &cell.name(), t);
                Ok(path)
            })?;
            Ok((paths.clone(), paths))
        })
    }

    /// Loads a trained cell with its training inputs attached.
    pub fn load_model(
        &self,
        cell: &TrainCell,
        pair: &SplitPair,
    ) -> Result<crate::models::TrainedModel> {
        load_checkpoint(&self.model_path(cell), Some(&pair.train))
    }

    /// Writes the retrieval codes of every variant of every selected cell.
    pub fn encode(&self) -> Result<Vec<PathBuf>> {
        self.stage("encode", |_| {
            let pair = self.load_split()?;
            let cells = self.train_cells()?;
            self.mkdir(CODES_DIR)?;
            let written = par_map(&cells, self.jobs, |cell| {
                let model = self.load_model(cell, &pair)?;
                let mut paths = Vec::new();
                for &v in &cell.variants {
                    let (pu, pi) = self.codes_paths(cell, v);
                    match model_codes(&model, v)? {
                        Codes::Binary { users, items } => {
                            users.save(&pu)?;
                            items.save(&pi)?;
                            paths.extend([pu, pi]);
                        }
                        Codes::Continuous { users, items } => {
                            nn::checkpoint::save(&pu, &[&users, &items])?;
                            paths.push(pu);
                        }
                    }
                }
                Ok(paths)
            })?;
            let paths: Vec<PathBuf> = written.into_iter().flatten().collect();
            Ok((paths.clone(), paths))
        })
    }

    /// Codes written by `encode` for one variant.
    pub fn load_codes(&self, cell: &TrainCell, variant: Binarization) -> Result<Codes> {
        let (pu, pi) = self.codes_paths(cell, variant);
        for p in [&pu, &pi] {
            if !p.exists() {
                return Err(Error::MissingArtifact {
                    path: p.clone(),
                    producer: "encode",
                });
            }
        }
        if variant.is_binary() {
            Ok(Codes::Binary {
                users: BinaryCodeMatrix::load(&pu)?,
                items: BinaryCodeMatrix::load(&pi)?,
            })
        } else {
            let mut t = nn::checkpoint::load(&pu)?;
            if t.len() != 2 {
                return Err(Error::format(&pu, "expected user and item embeddings"));
            }
            let items: DenseMatrix = t.pop().expect("two tensors");
            let users: DenseMatrix = t.pop().expect("two tensors");
            Ok(Codes::Continuous { users, items })
        }
    }

    /// Scores every selected variant and baseline; one metrics CSV and one
    /// per-user CSV each.
    pub fn evaluate(&self) -> Result<Vec<MetricsReport>> {
        enum Job {
            Variant(TrainCell, Binarization),
            Baseline(BaselineCell),
        }
        self.stage("evaluate", |manifest| {
            let pair = self.load_split()?;
            let data = EvalData::new(&pair, self.config.dataset.similarity_threshold);
            let opts = self.config.eval_options(1);
            let mut jobs = Vec::new();
            for b in self.config.baseline_cells() {
                if self.selected(&b.name()) {
                    jobs.push((b.name(), b.repeat, Job::Baseline(b)));
                }
            }
            for cell in self.train_cells()? {
                for &v in &cell.variants {
                    jobs.push((
                        cell.variant_name(v),
                        cell.repeat,
                        Job::Variant(cell.clone(), v),
                    ));
                }
            }
            self.mkdir(METRICS_DIR)?;
            let reference = manifest.reference();
            let results = par_map(&jobs, self.jobs, |(name, repeat, job)| {
                let t = Instant::now();
                let report = match job {
                    Job::Baseline(b) => {
                        let baseline = match b.kind {
                            ModelKind::Random => Baseline::random(data.num_items(), b.seed),
                            _ => Baseline::top(&pair.train),
                        };
                        evaluate_baseline(&baseline, &data, &opts)?
                    }
                    Job::Variant(cell, v) => {
                        let codes = self.load_codes(cell, *v)?;
                        evaluate_codes(&codes, cell.kind.name(), v.name(), &data, &opts)?
                    }
                };
                let (pm, pu) = self.metrics_paths(name);
                let header = format!("{reference}\n{name} repeat {repeat}");
                write_metrics(std::slice::from_ref(&report), &pm, &pu, Some(&header))?;
                self.progress("evaluate", name, t);
                Ok((report, [pm, pu]))
            })?;
            let mut reports = Vec::new();
            let mut paths = Vec::new();
            for (r, p) in results {
                reports.push(r);
                paths.extend(p);
            }
            Ok((reports, paths))
        })
    }

    /// Every metrics CSV in the output directory, in file-name order.
    pub fn read_metrics(&self) -> Result<Vec<MetricRow>> {
        let dir = self.out.join(METRICS_DIR);
        let mut files: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    name.ends_with(".csv") && !name.ends_with(".per_user.csv")
                })
                .collect(),
            Err(_) => Vec::new(),
        };
        if files.is_empty() {
            return Err(Error::MissingArtifact {
                path: dir,
                producer: "evaluate",
            });
        }
        files.sort();
        let mut rows = Vec::new();
        for f in files {
            for (model, variant, code_bits, k, metric, value) in read_metrics_csv(&f)? {
                rows.push(MetricRow {
                    model,
                    variant,
                    code_bits,
                    k,
                    metric,
                    value,
                });
            }
        }
        Ok(rows)
    }

    /// Row order of the report: baselines, then grid models by variant.
    fn report_order(&self) -> Vec<String> {
        let mut order = Vec::new();
        for &kind in &self.config.grid.models {
            if kind.is_baseline() {
                order.push(kind.name().to_string());
            }
        }
        for &kind in self.config.grid.models.iter().filter(|k| !k.is_baseline()) {
            for v in Binarization::ALL {
                order.push(format!("{}-{}", kind.name(), v));
            }
        }
        order
    }

    /// Aggregates all metrics CSVs (median over repeats) into `report.txt`
    /// and `report.csv`.
    pub fn report(&self) -> Result<ReportTable> {
        self.stage("report", |manifest| {
            let rows = self.read_metrics()?;
            let table = ReportTable::build(
                &rows,
                &self.config.grid.code_bits,
                &self.config.eval.ks,
                &self.report_order(),
            );
            let reference = manifest.reference();
            let text_path = self.path(REPORT_TEXT);
            fs::write(&text_path, format!("# {reference}\n{}", table.to_text()))
                .map_err(|e| Error::io(&text_path, e))?;
            let csv_path = self.path(REPORT_CSV);
            fs::write(&csv_path, table.to_csv(Some(&reference)))
                .map_err(|e| Error::io(&csv_path, e))?;
            Ok((table, vec![text_path, csv_path]))
        })
    }

    /// Evaluates each tanh-trained cell with continuous and with sign codes.
    pub fn gapstudy(&self) -> Result<GapStudy> {
        self.stage("gapstudy", |manifest| {
            let cells: Vec<TrainCell> = self
                .train_cells()?
                .into_iter()
                .filter(|c| c.family == Family::Tanh)
                .collect();
            if cells.is_empty() {
                return Err(Error::Config(
                    "the gap study needs ST or SST in [grid] variants and an autoencoder kind"
                        .into(),
                ));
            }
            let pair = self.load_split()?;
            let data = EvalData::new(&pair, self.config.dataset.similarity_threshold);
            let opts = self.config.eval_options(1);
            let reports = par_map(&cells, self.jobs, |cell| {
                let model = self.load_model(cell, &pair)?;
                Ok((cell.clone(), st_sst_gap(&model, &data, &opts)?))
            })?;
            let study = GapStudy { reports };
            let path = self.path(GAPSTUDY_CSV);
            fs::write(&path, study.to_csv(Some(&manifest.reference())))
                .map_err(|e| Error::io(&path, e))?;
            Ok((study, vec![path]))
        })
    }

    /// χ² analysis of which users the first configured variant serves better
    /// than the second, from the per-user CSVs of `evaluate`.
    pub fn groups(&self) -> Result<GroupReport> {
        self.stage("groups", |manifest| {
            let g = &self.config.groups;
            let bits = match g
                .code_bits
                .or_else(|| self.config.grid.code_bits.iter().copied().max())
            {
                Some(b) => b,
                None => return Err(Error::Config("[groups] needs code_bits".into())),
            };
            let read = |label: &str| -> Result<Vec<(u32, f64)>> {
                let (kind, variant) = parse_label(label)?;
                let grid = &self.config.grid;
                if !grid.models.contains(&kind) || !grid.variants.contains(&variant) {
                    return Err(Error::Config(format!(
                        "[groups] compares {label}, which is not in the [grid]"
                    )));
                }
                let name = format!(
                    "{}-{}-r{bits}-s{}",
                    kind.name().to_lowercase(),
                    variant,
                    g.repeat
                );
                let (_, path) = self.metrics_paths(&name);
                if !path.exists() {
                    return Err(Error::MissingArtifact {
                        path,
                        producer: "evaluate",
                    });
                }
                Ok(read_per_user_csv(&path)?
                    .into_iter()
                    .filter(|r| r.k == g.k)
                    .map(|r| (r.user, r.ndcg))
                    .collect())
            };
            let a = read(&g.a)?;
            let b = read(&g.b)?;
            if a.is_empty() {
                return Err(Error::Config(format!(
                    "no per-user NDCG@{} for {}; is k in [eval] ks?",
                    g.k, g.a
                )));
            }
            let users: Vec<u32> = a.iter().map(|&(u, _)| u).collect();
            if users != b.iter().map(|&(u, _)| u).collect::<Vec<_>>() {
                return Err(Error::Contract(format!(
                    "{} and {} were scored on different users",
                    g.a, g.b
                )));
            }
            let sa: Vec<f64> = a.iter().map(|&(_, s)| s).collect();
            let sb: Vec<f64> = b.iter().map(|&(_, s)| s).collect();
            let pair = self.load_split()?;
            let report = chi_square_group_analysis(&sa, &sb, &users, &pair.train)?;
            let path = self.path(GROUPS_CSV);
            let mut text = format!(
                "# {}\n# {} vs {} at r={bits}, NDCG@{}, repeat {}\n",
                manifest.reference(),
                g.a,
                g.b,
                g.k,
                g.repeat
            );
            if let Some(n) = &report.notice {
                text.push_str(&format!("# {n}\n"));
            }
            text.push_str(&report.to_csv());
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok((report, vec![path]))
        })
    }

    /// prepare, train, encode, evaluate and report in sequence.
    pub fn run_pipeline(&self) -> Result<ReportTable> {
        self.prepare()?;
        self.train()?;
        self.encode()?;
        self.evaluate()?;
        self.report()
    }
}

/// `CCSR-C` -> (Ccsr, C)
fn parse_label(label: &str) -> Result<(ModelKind, Binarization)> {
    let (kind, variant) = label
        .rsplit_once('-')
        .ok_or_else(|| Error::Config(format!("`{label}` is not of the form MODEL-VARIANT")))?;
    Ok((kind.parse()?, variant.parse()?))
}

fn id_range_density(loaded: &LoadedRatings) -> Option<(u64, u64, f64)> {
    let max = |labels: &[String]| -> Option<u64> {
        labels
            .iter()
            .map(|l| l.parse::<u64>().ok())
            .try_fold(0u64, |m, v| v.map(|v| m.max(v)))
    };
    let u = max(&loaded.user_labels)?;
    let i = max(&loaded.item_labels)?;
    if u == 0 || i == 0 {
        return None;
    }
    Some((u, i, loaded.matrix.len() as f64 / (u as f64 * i as f64)))
}

/// Runs `f` over `items` on up to `jobs` threads; results keep input order
/// and the first error in input order wins.
fn par_map<T: Sync, R: Send>(
    items: &[T],
    jobs: usize,
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<R>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("slot lock")
                .expect("every slot filled")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn toy_config(out: &Path) -> ExperimentConfig {
        let text = format!(
            r#"
seed = 3
out = "{}"

[dataset.synthetic]
kind = "clusters"
users = 40
items = 30

[grid]
models = ["random", "top", "cf", "ccsr", "aecf"]
variants = ["S", "ST", "SST", "C"]
code_bits = [8]
repeats = 2

[train.all]
epochs = 3
hidden = [16]

[groups]
a = "AECF-C"
b = "CCSR-C"
k = 6
"#,
            out.display()
        );
        ExperimentConfig::from_toml(&text).unwrap()
    }

    fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        for sub in ["data", METRICS_DIR] {
            let mut names: Vec<PathBuf> = fs::read_dir(dir.join(sub))
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            names.sort();
            for p in names {
                out.push((
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
        for f in [REPORT_CSV, REPORT_TEXT] {
            out.push((f.to_string(), fs::read(dir.join(f)).unwrap()));
        }
        out
    }

    #[test]
    fn pipeline_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let exp = Experiment::new(toy_config(dir.path())).unwrap();
        let summary = exp.prepare().unwrap();
        assert_eq!(summary.prepared.users, 40);
        assert_eq!(
            summary.train_entries + summary.test_entries,
            summary.prepared.ratings
        );
        let models = exp.train().unwrap();
        // cf plain, ccsr plain+tanh, aecf plain+tanh, two repeats each
        assert_eq!(models.len(), 10);
        exp.encode().unwrap();
        let reports = exp.evaluate().unwrap();
        // baselines: random x2 + top; variants: cf 2 + ccsr 4 + aecf 4, x2
        assert_eq!(reports.len(), 3 + 20);
        let table = exp.report().unwrap();
        assert_eq!(table.labels[0], "Random");
        assert_eq!(table.labels[1], "Top");
        assert!(table.labels.contains(&"CCSR-SST".to_string()));
        assert_eq!(table.get("CCSR-S", 8, 10, "ndcg").unwrap().repeats, 2);
        let gap = exp.gapstudy().unwrap();
        assert_eq!(gap.reports.len(), 4);
        assert!(gap.median_ndcg_drop(ModelKind::Ccsr, 8, 10).is_some());
        let groups = exp.groups().unwrap();
        assert!(groups.notice.is_some() || !groups.analyses.is_empty());
        let manifest = RunManifest::open(dir.path(), &exp.config).unwrap();
        assert_eq!(manifest.last_status("groups"), Some(StageStatus::Finished));
        assert!(manifest.data.is_some());
        let csv = fs::read_to_string(dir.path().join(REPORT_CSV)).unwrap();
        assert!(csv.starts_with(&format!("# run {}", manifest.run_id)));
    }

    #[test]
    fn same_seed_same_bytes_across_output_dirs_and_jobs() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = toy_config(a.path());
        cfg.grid.models = vec![ModelKind::Top, ModelKind::Cf, ModelKind::Ccsr];
        cfg.grid.variants = vec![Binarization::S];
        Experiment::new(cfg.clone())
            .unwrap()
            .run_pipeline()
            .unwrap();
        Experiment::new(cfg)
            .unwrap()
            .with_out(b.path())
            .with_jobs(3)
            .run_pipeline()
            .unwrap();
        assert_eq!(files(a.path()), files(b.path()));
    }

    #[test]
    fn missing_artifacts_name_their_producer() {
        let dir = tempfile::tempdir().unwrap();
        let exp = Experiment::new(toy_config(dir.path())).unwrap();
        match exp.train() {
            Err(Error::MissingArtifact { producer, .. }) => assert_eq!(producer, "prepare"),
            other => panic!("{other:?}"),
        }
        exp.prepare().unwrap();
        match exp.encode() {
            Err(Error::MissingArtifact { producer, .. }) => assert_eq!(producer, "train"),
            other => panic!("{other:?}"),
        }
        match exp.report() {
            Err(Error::MissingArtifact { producer, .. }) => assert_eq!(producer, "evaluate"),
            other => panic!("{other:?}"),
        }
        let manifest = RunManifest::open(dir.path(), &exp.config).unwrap();
        assert_eq!(manifest.last_status("report"), Some(StageStatus::Failed));
    }

    #[test]
    fn baseline_only_report_needs_no_training() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_config(dir.path());
        cfg.grid.models = vec![ModelKind::Random, ModelKind::Top];
        cfg.grid.repeats = 1;
        let exp = Experiment::new(cfg).unwrap();
        exp.prepare().unwrap();
        assert!(exp.train().unwrap().is_empty());
        exp.evaluate().unwrap();
        let table = exp.report().unwrap();
        assert_eq!(table.labels, vec!["Random", "Top"]);
    }

    #[test]
    fn selector_restricts_cells() {
        let dir = tempfile::tempdir().unwrap();
        let exp = Experiment::new(toy_config(dir.path()))
            .unwrap()
            .with_only(Some("ccsr-tanh".into()));
        exp.prepare().unwrap();
        let trained = exp.train().unwrap();
        assert_eq!(trained.len(), 2);
        assert!(trained[0].ends_with("ccsr-tanh-r8-s0.hrnn"));
    }

    #[test]
    fn prepare_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let exp = Experiment::new(toy_config(dir.path())).unwrap();
        exp.prepare().unwrap();
        let first = fs::read(dir.path().join(SPLIT_FILE)).unwrap();
        exp.prepare().unwrap();
        assert_eq!(fs::read(dir.path().join(SPLIT_FILE)).unwrap(), first);
    }

    #[test]
    fn numeric_ids_report_range_density() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.dat");
        fs::write(&path, "1::10::5::0\n2::3::4::0\n").unwrap();
        let loaded = load_ratings_labeled(&path, crate::dataset::FileFormat::MovielensDat).unwrap();
        let (u, i, d) = id_range_density(&loaded).unwrap();
        assert_eq!((u, i), (2, 10));
        assert!((d - 2.0 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn labels_parse() {
        assert_eq!(
            parse_label("CFcodeReg-S").unwrap(),
            (ModelKind::CfCodeReg, Binarization::S)
        );
        assert!(parse_label("CCSR").is_err());
    }

    #[test]
    fn par_map_keeps_order_and_first_error() {
        let items: Vec<usize> = (0..20).collect();
        let out = par_map(&items, 4, |&i| Ok(i * 2)).unwrap();
        assert_eq!(out, (0..20).map(|i| i * 2).collect::<Vec<_>>());
        let err = par_map(&items, 4, |&i| {
            if i % 7 == 3 {
                Err(Error::Config(format!("{i}")))
            } else {
                Ok(i)
            }
        });
        assert!(matches!(err, Err(Error::Config(m)) if m == "3"));
    }
}
