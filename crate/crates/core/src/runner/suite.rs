use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{quartiles, spearman, Quartiles};
use super::strategy::{run_strategy, Category, RunRecord, StrategySpec};
use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::graph::{generate_synthetic, load_dataset, Dataset, DirectionMode, SynthConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    TwoRegime,
    DigraphCoupled,
    DigraphIndependent,
}

impl Preset {
    pub fn config(self, num_nodes: usize, seed: u64) -> SynthConfig {
        match self {
            Preset::TwoRegime => SynthConfig::two_regime(num_nodes, seed),
            Preset::DigraphCoupled => SynthConfig::digraph(num_nodes, DirectionMode::LabelCoupled, seed),
            Preset::DigraphIndependent => SynthConfig::digraph(num_nodes, DirectionMode::LabelIndependent, seed),
        }
    }
}

fn default_true() -> bool {
    true
}

/// A dataset directory, an explicit synthetic config, or a named preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SynthConfig>,
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub num_nodes: Option<usize>,
    /// Regenerate synthetic data per replicate (generator seed offset by the
    /// replicate seed).
    #[serde(default = "default_true")]
    pub reseed: bool,
}

impl DatasetSpec {
    fn synth_config(&self) -> Result<Option<SynthConfig>> {
        match (&self.path, &self.synthetic, self.preset) {
            (Some(_), None, None) => Ok(None),
            (None, Some(c), None) => Ok(Some(c.clone())),
            (None, None, Some(p)) => Ok(Some(p.config(self.num_nodes.unwrap_or(2000), 0))),
            _ => Err(Error::InvalidConfig(format!(
                "dataset {}: give exactly one of `path`, `synthetic`, `preset`",
                self.name
            ))),
        }
    }

    /// Loads or generates the dataset for one replicate seed.
    pub fn materialize(&self, base_dir: &Path, seed: u64) -> Result<Dataset> {
        match self.synth_config()? {
            None => {
                let p = self.path.as_ref().expect("checked");
                load_dataset(&base_dir.join(p))
            }
            Some(mut c) => {
                if self.reseed {
                    c.seed = c.seed.wrapping_add(seed);
                }
                generate_synthetic(&c)
            }
        }
    }

    fn varies_with_seed(&self) -> bool {
        self.path.is_none() && self.reseed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Concurrent runs; defaults to the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub datasets: Vec<DatasetSpec>,
    #[serde(default)]
    pub strategies: Vec<StrategySpec>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl SuiteConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: SuiteConfig = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for d in &self.datasets {
            d.synth_config()?;
            if !seen.insert(("d", d.name.as_str())) {
                return Err(Error::InvalidConfig(format!("duplicate dataset name {}", d.name)));
            }
        }
        for s in &self.strategies {
            s.validate()?;
            if let Some(unknown) = s
                .datasets
                .iter()
                .flatten()
                .find(|n| !self.datasets.iter().any(|d| &d.name == *n))
            {
                return Err(Error::InvalidConfig(format!("strategy {}: unknown dataset {unknown}", s.name)));
            }
            if !seen.insert(("s", s.name.as_str())) {
                return Err(Error::InvalidConfig(format!("duplicate strategy name {}", s.name)));
            }
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("duplicate replicate seeds".into()));
        }
        Ok(())
    }
}

/// Per-run seed: independent of which other datasets/strategies are listed.
pub fn run_seed(dataset: &str, strategy: &str, seed: u64) -> u64 {
    rng::derive_seed(seed, &[rng::hash_str(dataset), rng::hash_str(strategy)])
}

/// Caps a requested worker count by `EXPERTFORGE_THREADS`, if set.
pub fn capped_workers(requested: Option<usize>) -> usize {
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var("EXPERTFORGE_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let w = requested.unwrap_or(avail).max(1);
    cap.map_or(w, |c| w.min(c))
}

/// Runs the cross product datasets × strategies × seeds. Records are sorted
/// by (dataset, strategy, seed).
pub fn run_suite_config(cfg: &SuiteConfig, base_dir: &Path, workers: Option<usize>) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let workers = capped_workers(workers.or(cfg.workers));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut keys: Vec<(usize, u64)> = Vec::new();
        for (di, d) in cfg.datasets.iter().enumerate() {
            if d.varies_with_seed() {
                keys.extend(cfg.seeds.iter().map(|&s| (di, s)));
            } else {
                keys.push((di, 0));
            }
        }
        let data: Vec<Dataset> = keys
            .par_iter()
            .map(|&(di, s)| cfg.datasets[di].materialize(base_dir, s))
            .collect::<Result<_>>()?;
        let data: HashMap<(usize, u64), Dataset> = keys.into_iter().zip(data).collect();
        let lookup = |di: usize, s: u64| {
            let key = if cfg.datasets[di].varies_with_seed() { (di, s) } else { (di, 0) };
            &data[&key]
        };

        for (di, d) in cfg.datasets.iter().enumerate() {
            let directed = lookup(di, cfg.seeds.first().copied().unwrap_or(0)).graph.is_directed();
            if let Some(s) = cfg
                .strategies
                .iter()
                .find(|s| s.category == Category::Direct && s.applies_to(&d.name) && !directed)
            {
                return Err(Error::InvalidConfig(format!(
                    "strategy {} needs a directed graph but dataset {} is undirected",
                    s.name, d.name
                )));
            }
        }

        let mut jobs = Vec::new();
        for di in 0..cfg.datasets.len() {
            for si in 0..cfg.strategies.len() {
                if !cfg.strategies[si].applies_to(&cfg.datasets[di].name) {
                    continue;
                }
                for &s in &cfg.seeds {
                    jobs.push((di, si, s));
                }
            }
        }
        let mut records: Vec<RunRecord> = jobs
            .par_iter()
            .map(|&(di, si, s)| {
                let (d, st) = (&cfg.datasets[di], &cfg.strategies[si]);
                let mut spec = st.clone();
                spec.ensemble.get_or_insert_with(|| cfg.ensemble.clone());
                let rs = run_seed(&d.name, &st.name, s);
                let mut rec = run_strategy(lookup(di, s), &spec, rs)?;
                info!("{} / {} / seed {s}: set EI {:?}", d.name, st.name, rec.report.set_ei);
                rec.dataset = d.name.clone();
                rec.seed = s;
                Ok(rec)
            })
            .collect::<Result<_>>()?;
        records.sort_by(|a, b| (&a.dataset, &a.strategy, a.seed).cmp(&(&b.dataset, &b.strategy, b.seed)));
        Ok(records)
    })
}

/// Reads a suite file and runs it; relative dataset paths resolve against
/// the file's directory.
pub fn run_suite(config_file: &Path, workers: Option<usize>) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(config_file).map_err(|_| Error::MissingFile(config_file.to_path_buf()))?;
    let cfg = SuiteConfig::from_toml(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", config_file.display())))?;
    let base = config_file.parent().unwrap_or(Path::new("."));
    run_suite_config(&cfg, base, workers)
}

fn join<T: std::fmt::Display>(v: &[T], sep: &str) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

/// One flat line of `results.csv`. Lists are `;`-joined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub strategy: String,
    pub category: String,
    pub seed: u64,
    pub run_seed: u64,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_experts: usize,
    pub expert_ids: String,
    pub expert_accuracies: String,
    pub mean_expert_acc: f64,
    pub max_expert_acc: f64,
    pub set_ei: Option<f64>,
    pub mean_pairwise_ei: Option<f64>,
    pub oracle: f64,
    pub cg: f64,
    pub ensemble_acc: f64,
    pub ensemble_weights: String,
    pub gate_acc: f64,
    pub delta_acc: Option<f64>,
    pub eval_split: String,
    pub num_eval: usize,
}

impl ResultRow {
    pub fn from_record(r: &RunRecord) -> Self {
        let rep = &r.report;
        let k = rep.expert_accuracies.len();
        let mean_pair = (k >= 2).then(|| {
            let mut s = 0.0;
            for i in 0..k {
                for j in i + 1..k {
                    s += rep.pairwise_ei[i][j];
                }
            }
            s / (k * (k - 1) / 2) as f64
        });
        ResultRow {
            dataset: r.dataset.clone(),
            strategy: r.strategy.clone(),
            category: r.category.name().to_string(),
            seed: r.seed,
            run_seed: r.run_seed,
            num_nodes: r.num_nodes,
            num_edges: r.num_edges,
            num_experts: k,
            expert_ids: rep.expert_ids.join(";"),
            expert_accuracies: join(&rep.expert_accuracies, ";"),
            mean_expert_acc: rep.mean_expert_acc,
            max_expert_acc: rep.max_expert_acc,
            set_ei: rep.set_ei,
            mean_pairwise_ei: mean_pair,
            oracle: rep.oracle,
            cg: rep.cg,
            ensemble_acc: rep.ensemble_accuracy,
            ensemble_weights: join(&rep.ensemble_weights, ";"),
            gate_acc: rep.gate_accuracy,
            delta_acc: r.delta_acc,
            eval_split: match rep.eval_split {
                crate::ensemble::EvalSplit::Test => "test".into(),
                crate::ensemble::EvalSplit::Val => "val".into(),
            },
            num_eval: rep.num_eval,
        }
    }

    /// Rejects rows that violate the accuracy invariants.
    pub fn check(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let accs = [self.mean_expert_acc, self.max_expert_acc, self.oracle, self.ensemble_acc, self.gate_acc];
        if !accs.iter().all(|&a| unit(a)) {
            return Err(Error::Invariant(format!("{}/{}: accuracy outside [0, 1]", self.strategy, self.seed)));
        }
        if self.oracle + 1e-12 < self.max_expert_acc {
            return Err(Error::Invariant(format!(
                "{}/{}: oracle {} below best expert {}",
                self.strategy, self.seed, self.oracle, self.max_expert_acc
            )));
        }
        if self.set_ei.is_some_and(|s| !unit(s)) {
            return Err(Error::Invariant(format!("{}/{}: set EI outside [0, 1]", self.strategy, self.seed)));
        }
        Ok(())
    }

    pub fn category(&self) -> Option<Category> {
        Category::parse(&self.category)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    pub dataset: String,
    pub strategy: String,
    pub category: String,
    pub seed: u64,
    pub set_ei: f64,
    pub oracle_gain_mean: f64,
    pub oracle_gain_max: f64,
    pub ensemble_gain_mean: f64,
    pub ensemble_gain_max: f64,
    pub gate_gain_mean: f64,
    pub gate_gain_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub category: String,
    pub runs: usize,
    pub set_ei: Option<Quartiles>,
    pub delta_acc: Option<Quartiles>,
    pub oracle: Option<Quartiles>,
    pub ensemble_acc: Option<Quartiles>,
    pub gate_acc: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub num_runs: usize,
    /// Set-EI distribution per strategy category.
    pub category_set_ei: BTreeMap<String, Quartiles>,
    pub strategies: BTreeMap<String, StrategySummary>,
    pub gain_vs_ei: Vec<GainPoint>,
    /// Spearman correlation between set EI and oracle gain over mean accuracy.
    pub spearman_ei_oracle_gain: Option<f64>,
}

pub fn summarize(rows: &[ResultRow]) -> Summary {
    let mut by_cat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut by_strat: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    let mut points = Vec::new();
    for r in rows {
        by_strat.entry(r.strategy.clone()).or_default().push(r);
        if let Some(ei) = r.set_ei {
            by_cat.entry(r.category.clone()).or_default().push(ei);
            points.push(GainPoint {
                dataset: r.dataset.clone(),
                strategy: r.strategy.clone(),
                category: r.category.clone(),
                seed: r.seed,
                set_ei: ei,
                oracle_gain_mean: r.oracle - r.mean_expert_acc,
                oracle_gain_max: r.oracle - r.max_expert_acc,
                ensemble_gain_mean: r.ensemble_acc - r.mean_expert_acc,
                ensemble_gain_max: r.ensemble_acc - r.max_expert_acc,
                gate_gain_mean: r.gate_acc - r.mean_expert_acc,
                gate_gain_max: r.gate_acc - r.max_expert_acc,
            });
        }
    }
    let pick = |rs: &[&ResultRow], f: &dyn Fn(&ResultRow) -> Option<f64>| {
        quartiles(&rs.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
    };
    let strategies = by_strat
        .into_iter()
        .map(|(name, rs)| {
            let s = StrategySummary {
                category: rs[0].category.clone(),
                runs: rs.len(),
                set_ei: pick(&rs, &|r| r.set_ei),
                delta_acc: pick(&rs, &|r| r.delta_acc),
                oracle: pick(&rs, &|r| Some(r.oracle)),
                ensemble_acc: pick(&rs, &|r| Some(r.ensemble_acc)),
                gate_acc: pick(&rs, &|r| Some(r.gate_acc)),
            };
            (name, s)
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.set_ei).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.oracle_gain_mean).collect();
    Summary {
        num_runs: rows.len(),
        category_set_ei: by_cat
            .into_iter()
            .filter_map(|(c, v)| quartiles(&v).map(|q| (c, q)))
            .collect(),
        strategies,
        spearman_ei_oracle_gain: spearman(&xs, &ys),
        gain_vs_ei: points,
    }
}

/// Writes `results.csv`, `summary.json` and `timings.csv` (wall-clock is kept
/// out of `results.csv` so reruns are byte-identical).
pub fn write_suite_outputs(records: &[RunRecord], out_dir: &Path) -> Result<Vec<ResultRow>> {
    fs::create_dir_all(out_dir)?;
    for r in records {
        r.report.check()?;
    }
    let rows: Vec<ResultRow> = records.iter().map(ResultRow::from_record).collect();
    for r in &rows {
        r.check()?;
    }
    write_results_csv(&rows, &out_dir.join("results.csv"))?;
    let summary = summarize(&rows);
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    let mut t = csv::Writer::from_path(out_dir.join("timings.csv"))?;
    t.write_record(["dataset", "strategy", "seed", "wall_clock_secs"])?;
    for r in records {
        t.write_record([
            r.dataset.clone(),
            r.strategy.clone(),
            r.seed.to_string(),
            format!("{:.3}", r.wall_clock_secs),
        ])?;
    }
    t.flush()?;
    Ok(rows)
}

const HEADER: [&str; 22] = [
    "dataset",
    "strategy",
    "category",
    "seed",
    "run_seed",
    "num_nodes",
    "num_edges",
    "num_experts",
    "expert_ids",
    "expert_accuracies",
    "mean_expert_acc",
    "max_expert_acc",
    "set_ei",
    "mean_pairwise_ei",
    "oracle",
    "cg",
    "ensemble_acc",
    "ensemble_weights",
    "gate_acc",
    "delta_acc",
    "eval_split",
    "num_eval",
];

pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    // Explicit header so an empty suite still yields a valid file.
    w.write_record(HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
