use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use expertforge::domains::{assign_by_method, evaluate_assignment_with, PartitionMethod, TrainingMode};
use expertforge::ensemble::{evaluate_logits, EnsembleConfig};
use expertforge::experts::{read_logits_csv, save_checkpoint, train_expert, write_logits_csv, ExpertConfig, FineTuneConfig};
use expertforge::graph::{generate_synthetic, load_dataset_with_report, save_dataset, Dataset, SynthConfig};
use expertforge::metrics;
use expertforge::runner::{self, Preset, ResultRow, SuiteConfig};
use expertforge::{Error, Result};

#[derive(Parser)]
#[command(name = "expertforge", version, about = "Diversified message-passing experts for node classification")]
struct Cli {
    /// TOML configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (capped by EXPERTFORGE_THREADS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    TwoRegime,
    DigraphCoupled,
    DigraphIndependent,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Scratch,
    Finetune,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset from --config or a preset.
    Synth {
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[arg(long, default_value_t = 2000)]
        nodes: usize,
    },
    /// Node metrics (CSV) and graph-level direction metrics (JSON).
    Metrics {
        #[arg(long)]
        data: PathBuf,
    },
    /// Partition nodes into domains.
    Partition {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 2)]
        domains: usize,
    },
    /// Train one expert (--config holds the expert config).
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train domain experts and report their accuracy gain.
    EvalDomains {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 2)]
        domains: usize,
        #[arg(long, value_enum, default_value = "scratch")]
        mode: ModeArg,
    },
    /// Diversity, oracle and aggregator accuracies of saved expert logits.
    Ensemble {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        logits: Vec<PathBuf>,
    },
    /// Run an experiment suite (--config holds the suite file).
    Run,
    /// Render plots and tables from a results.csv.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|_| Error::MissingFile(p.to_path_buf()))?;
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn load(dir: &Path) -> Result<Dataset> {
    let (ds, rep) = load_dataset_with_report(dir)?;
    if rep.ingest.self_loops + rep.ingest.duplicates > 0 {
        log::warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            dir.display(),
            rep.ingest.self_loops,
            rep.ingest.duplicates
        );
    }
    if rep.isolated_nodes > 0 {
        log::warn!("{}: {} isolated nodes", dir.display(), rep.isolated_nodes);
    }
    Ok(ds)
}

fn expert_config(cli: &Cli) -> Result<ExpertConfig> {
    let mut cfg: ExpertConfig = read_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct SynthSummary {
    num_nodes: usize,
    num_edges: usize,
    directed: bool,
    edge_homophily: f64,
    block_homophily: Vec<f64>,
}

#[derive(Serialize)]
struct GraphMetrics {
    num_nodes: usize,
    num_edges: usize,
    directed: bool,
    edge_homophily: f64,
    direction: Option<metrics::DirectionReport>,
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    config: &'a ExpertConfig,
    best_epoch: usize,
    best_val_acc: f64,
    train_acc: f64,
    test_acc: f64,
    history: &'a [expertforge::experts::EpochRecord],
}

fn run(cli: &Cli) -> Result<()> {
    let out = &cli.out;
    fs::create_dir_all(out)?;
    match &cli.cmd {
        Cmd::Synth { preset, nodes } => {
            let mut cfg = match (preset, &cli.config) {
                (Some(p), None) => {
                    let p = match p {
                        PresetArg::TwoRegime => Preset::TwoRegime,
                        PresetArg::DigraphCoupled => Preset::DigraphCoupled,
                        PresetArg::DigraphIndependent => Preset::DigraphIndependent,
                    };
                    p.config(*nodes, 0)
                }
                (None, Some(path)) => {
                    let text = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.clone()))?;
                    SynthConfig::from_toml(&text)
                        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
                }
                _ => return Err(Error::InvalidConfig("synth needs exactly one of --config or --preset".into())),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let ds = generate_synthetic(&cfg)?;
            save_dataset(&ds, out)?;
            let summary = SynthSummary {
                num_nodes: ds.num_nodes(),
                num_edges: ds.graph.num_edges(),
                directed: ds.graph.is_directed(),
                edge_homophily: ds.graph.edge_homophily(),
                block_homophily: (0..cfg.blocks.len()).map(|b| cfg.implied_homophily(b)).collect(),
            };
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Cmd::Metrics { data } => {
            let ds = load(data)?;
            let g = &ds.graph;
            let y = ds.labels();
            let deg = metrics::degree_profile(g);
            let cols = vec![
                deg.d_in,
                deg.d_out,
                deg.d_und,
                deg.d_dir,
                metrics::pagerank(g, 0.85, 1e-10, 200),
                metrics::clustering_coefficient(g),
                metrics::node_homophily(g, y),
                metrics::neighborhood_entropy(g, y),
                metrics::max_neighbor_ratio(g, y),
                metrics::intra_degree(g, y),
                metrics::intra_feature_similarity(g, g.features(), y, true),
                metrics::intra_label_agreement(g, y),
                metrics::feature_similarity(g, g.features(), true),
            ];
            let mut w = csv::Writer::from_path(out.join("node_metrics.csv"))?;
            let mut header = vec!["node_id".to_string()];
            header.extend(cols.iter().map(|c| c.metric_name.clone()));
            w.write_record(&header)?;
            for v in 0..ds.num_nodes() {
                let mut rec = vec![v.to_string()];
                rec.extend(cols.iter().map(|c| c.get(v).map_or(String::new(), |x| x.to_string())));
                w.write_record(&rec)?;
            }
            w.flush()?;
            let direction = if g.is_directed() {
                Some(metrics::direction_informativeness(g, y)?)
            } else {
                None
            };
            let gm = GraphMetrics {
                num_nodes: ds.num_nodes(),
                num_edges: g.num_edges(),
                directed: g.is_directed(),
                edge_homophily: g.edge_homophily(),
                direction,
            };
            write_json(&out.join("graph_metrics.json"), &gm)?;
            println!("{}", serde_json::to_string_pretty(&gm)?);
        }
        Cmd::Partition { data, method, domains } => {
            let ds = load(data)?;
            let dom = assign_by_method(&ds, PartitionMethod::parse(method)?, *domains, cli.seed.unwrap_or(0))?;
            let mut w = csv::Writer::from_path(out.join("assignment.csv"))?;
            w.write_record(["node_id", "domain"])?;
            for (v, d) in dom.assignment.iter().enumerate() {
                w.write_record([v.to_string(), d.to_string()])?;
            }
            w.flush()?;
            #[derive(Serialize)]
            struct P<'a> {
                source: &'a str,
                num_domains: usize,
                sizes: Vec<usize>,
                weights: &'a [f64],
            }
            let p = P {
                source: &dom.source,
                num_domains: dom.num_domains,
                sizes: dom.sizes(),
                weights: &dom.weights,
            };
            write_json(&out.join("partition.json"), &p)?;
            println!("{}", serde_json::to_string_pretty(&p)?);
        }
        Cmd::Train { data } => {
            let ds = load(data)?;
            let cfg = expert_config(cli)?;
            let e = train_expert(&ds, &cfg, None)?;
            save_checkpoint(&e, out.join("expert.ckpt"))?;
            write_logits_csv(&e.logits, out.join("logits.csv"))?;
            let s = TrainSummary {
                config: &e.config,
                best_epoch: e.best_epoch,
                best_val_acc: e.best_val_acc,
                train_acc: e.accuracy_on(ds.labels(), &ds.train_mask),
                test_acc: e.accuracy_on(ds.labels(), &ds.test_mask),
                history: &e.history,
            };
            write_json(&out.join("train.json"), &s)?;
            println!(
                "best epoch {} val {:.4} test {:.4}",
                s.best_epoch, s.best_val_acc, s.test_acc
            );
        }
        Cmd::EvalDomains {
            data,
            method,
            domains,
            mode,
        } => {
            let ds = load(data)?;
            let cfg = expert_config(cli)?;
            let seed = cli.seed.unwrap_or(0);
            let dom = assign_by_method(&ds, PartitionMethod::parse(method)?, *domains, seed)?;
            let mode = match mode {
                ModeArg::Scratch => TrainingMode::Scratch,
                ModeArg::Finetune => TrainingMode::Finetune,
            };
            let rep = evaluate_assignment_with(&ds, &dom, &cfg, mode, &FineTuneConfig::default(), seed)?;
            write_json(&out.join("domain_report.json"), &rep)?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
        }
        Cmd::Ensemble { data, logits } => {
            let ds = load(data)?;
            let cfg: EnsembleConfig = read_config(cli.config.as_deref())?;
            let zs = logits
                .iter()
                .map(|p| read_logits_csv(p, ds.num_nodes()))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<_> = zs.iter().collect();
            let ids: Vec<String> = logits.iter().map(|p| p.display().to_string()).collect();
            let rep = evaluate_logits(&ds, &refs, &ids, &cfg, cli.seed.unwrap_or(0))?;
            write_json(&out.join("ensemble_report.json"), &rep)?;
            let rec = runner::RunRecord {
                dataset: data.display().to_string(),
                strategy: "cli".into(),
                category: runner::Category::Reinit,
                seed: cli.seed.unwrap_or(0),
                run_seed: cli.seed.unwrap_or(0),
                num_nodes: ds.num_nodes(),
                num_edges: ds.graph.num_edges(),
                report: rep.clone(),
                delta_acc: None,
                wall_clock_secs: 0.0,
            };
            runner::write_results_csv(&[ResultRow::from_record(&rec)], &out.join("ensemble_row.csv"))?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
        }
        Cmd::Run => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("run needs --config <suite.toml>".into()))?;
            let text = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.clone()))?;
            let mut cfg = SuiteConfig::from_toml(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let base = path.parent().unwrap_or(Path::new("."));
            let records = runner::run_suite_config(&cfg, base, cli.workers)?;
            let rows = runner::write_suite_outputs(&records, out)?;
            println!("{} runs written to {}", rows.len(), out.join("results.csv").display());
        }
        Cmd::Report { results } => {
            let s = runner::report(results, out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let threads = runner::capped_workers(cli.workers);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::warn!("could not size the thread pool: {e}");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
