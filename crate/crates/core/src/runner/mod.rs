//! Experiment orchestration: diversification strategies, suites of runs over
//! datasets and seeds, and the static report.

mod report;
mod stats;
mod strategy;
mod suite;

pub use report::{boxplot_svg, markdown_tables, read_results, report, scatter_svg, ReportSummary};
pub use stats::{mean, median, quartiles, spearman, std_dev, Quartiles};
pub use strategy::{run_strategy, Category, Perturbation, RunRecord, StrategySpec, MAX_EXPERTS};
pub use suite::{
    capped_workers, run_seed, run_suite, run_suite_config, summarize, write_results_csv, write_suite_outputs,
    DatasetSpec, GainPoint, Preset, ResultRow, StrategySummary, SuiteConfig, Summary,
};
