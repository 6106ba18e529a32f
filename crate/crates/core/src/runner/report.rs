use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use serde::Serialize;

use super::stats::{mean, quartiles, spearman, std_dev};
use super::suite::ResultRow;
use super::strategy::Category;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub rows_read: usize,
    pub rows_used: usize,
    pub rows_rejected: usize,
    pub spearman_ei_oracle_gain: Option<f64>,
    pub spearman_ei_ensemble_gain: Option<f64>,
    pub spearman_ei_gate_gain: Option<f64>,
}

/// Reads `results.csv`, skipping unparsable rows and rejecting rows that
/// violate the accuracy invariants (both with warnings).
pub fn read_results(path: &Path) -> Result<(Vec<ResultRow>, usize, usize)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    let (mut read, mut rejected) = (0, 0);
    for (i, rec) in rdr.deserialize::<ResultRow>().enumerate() {
        read += 1;
        match rec {
            Ok(r) => match r.check() {
                Ok(()) => rows.push(r),
                Err(e) => {
                    warn!("{}: row {} rejected: {e}", path.display(), i + 2);
                    rejected += 1;
                }
            },
            Err(e) => {
                warn!("{}: row {} skipped: {e}", path.display(), i + 2);
                rejected += 1;
            }
        }
    }
    Ok((rows, read, rejected))
}

const COLORS: [(&str, &str); 3] = [("oracle", "#1b9e77"), ("ensemble", "#d95f02"), ("gate", "#7570b3")];

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Axis { lo: 0.0, hi: 1.0 };
        }
        let pad = ((hi - lo) * 0.05).max(1e-3);
        Axis { lo: lo - pad, hi: hi + pad }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const M: f64 = 60.0;

fn frame(svg: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        svg,
        r#"<line x1="{M}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#,
        H - M,
        W - M,
        H - M,
        H - M
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 20.0);
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );
}

fn y_ticks(svg: &mut String, ax: &Axis) {
    for i in 0..=4 {
        let v = ax.lo + (ax.hi - ax.lo) * i as f64 / 4.0;
        let y = ax.map(v, H - M, M);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y:.1}" x2="{M}" y2="{y:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            M - 4.0,
            M - 6.0,
            y + 4.0
        );
    }
}

/// Accuracy gain over the mean expert vs set EI, one colour per aggregator.
pub fn scatter_svg(rows: &[ResultRow]) -> String {
    let pts: Vec<(f64, [f64; 3])> = rows
        .iter()
        .filter_map(|r| {
            let ei = r.set_ei?;
            let m = r.mean_expert_acc;
            Some((ei, [r.oracle - m, r.ensemble_acc - m, r.gate_acc - m]))
        })
        .collect();
    let xa = Axis::fit(pts.iter().map(|p| p.0));
    let ya = Axis::fit(pts.iter().flat_map(|p| p.1));
    let mut svg = String::new();
    frame(&mut svg, "Accuracy gain vs error inconsistency", "set EI", "gain over mean expert accuracy");
    y_ticks(&mut svg, &ya);
    for i in 0..=4 {
        let v = xa.lo + (xa.hi - xa.lo) * i as f64 / 4.0;
        let x = xa.map(v, M, W - M);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/><text x="{x:.1}" y="{}" text-anchor="middle">{v:.3}</text>"#,
            H - M,
            H - M + 4.0,
            H - M + 18.0
        );
    }
    for (s, (name, color)) in COLORS.iter().enumerate() {
        for (ei, g) in &pts {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{color}" fill-opacity="0.7"><title>{name}</title></circle>"#,
                xa.map(*ei, M, W - M),
                ya.map(g[s], H - M, M)
            );
        }
        let ly = M + 16.0 * s as f64;
        let _ = writeln!(
            svg,
            r#"<circle cx="{}" cy="{ly}" r="4" fill="{color}"/><text x="{}" y="{}">{name}</text>"#,
            W - M - 70.0,
            W - M - 60.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Set-EI boxplot per strategy category.
pub fn boxplot_svg(rows: &[ResultRow]) -> String {
    let mut groups: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let (Some(c), Some(ei)) = (r.category(), r.set_ei) {
            groups.entry(c).or_default().push(ei);
        }
    }
    let ya = Axis::fit(groups.values().flatten().copied());
    let mut svg = String::new();
    frame(&mut svg, "Set EI by strategy category", "category", "set EI");
    y_ticks(&mut svg, &ya);
    let n = groups.len().max(1) as f64;
    let slot = (W - 2.0 * M) / n;
    for (i, (cat, vals)) in groups.iter().enumerate() {
        let q = quartiles(vals).expect("nonempty group");
        let cx = M + slot * (i as f64 + 0.5);
        let half = (slot * 0.25).min(30.0);
        let y = |v: f64| ya.map(v, H - M, M);
        let _ = writeln!(
            svg,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y(q.min),
            y(q.max)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#a6cee3" stroke="black"/>"##,
            cx - half,
            y(q.q3),
            2.0 * half,
            (y(q.q1) - y(q.q3)).max(0.5)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(q.median),
            cx + half,
            y(q.median)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.1}" y="{}" text-anchor="middle">{} (n={})</text>"#,
            H - M + 18.0,
            cat.name(),
            q.count
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn pm(v: &[f64]) -> String {
    match mean(v) {
        Some(m) => format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * std_dev(v)),
        None => "–".into(),
    }
}

/// Markdown tables: ΔAcc and set EI per domain-assignment strategy and
/// dataset, then a per-strategy overview.
pub fn markdown_tables(rows: &[ResultRow]) -> String {
    let datasets: Vec<String> = {
        let mut d: Vec<String> = rows.iter().map(|r| r.dataset.clone()).collect();
        d.sort();
        d.dedup();
        d
    };
    let mut cells: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut all: BTreeMap<(String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        all.entry((r.category.clone(), r.strategy.clone())).or_default().push(r);
        if r.category == "DATASET" {
            let e = cells.entry((r.strategy.clone(), r.dataset.clone())).or_default();
            e.0.extend(r.delta_acc);
            e.1.extend(r.set_ei);
        }
    }
    let mut md = String::from("## Domain assignment strategies\n\nΔAcc and set EI in percentage points (mean ± std over seeds).\n\n");
    md.push_str("| Method |");
    for d in &datasets {
        let _ = write!(md, " {d} ΔAcc | {d} EI |");
    }
    md.push_str("\n|---|");
    md.push_str(&"---|---|".repeat(datasets.len()));
    md.push('\n');
    let methods: Vec<String> = {
        let mut m: Vec<String> = cells.keys().map(|k| k.0.clone()).collect();
        m.dedup();
        m
    };
    for m in &methods {
        let _ = write!(md, "| {m} |");
        for d in &datasets {
            match cells.get(&(m.clone(), d.clone())) {
                Some((da, ei)) => {
                    let _ = write!(md, " {} | {} |", pm(da), pm(ei));
                }
                None => md.push_str(" – | – |"),
            }
        }
        md.push('\n');
    }
    md.push_str("\n## All strategies\n\n| Category | Strategy | Runs | Set EI | Oracle | Ensemble | Gate | Best expert |\n|---|---|---|---|---|---|---|---|\n");
    for ((cat, strat), rs) in &all {
        let col = |f: &dyn Fn(&ResultRow) -> Option<f64>| pm(&rs.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        let _ = writeln!(
            md,
            "| {cat} | {strat} | {} | {} | {} | {} | {} | {} |",
            rs.len(),
            col(&|r| r.set_ei),
            col(&|r| Some(r.oracle)),
            col(&|r| Some(r.ensemble_acc)),
            col(&|r| Some(r.gate_acc)),
            col(&|r| Some(r.max_expert_acc)),
        );
    }
    md
}

/// Renders `scatter.svg`, `ei_boxplot.svg`, `tables.md` and `report.json`.
pub fn report(results_csv: &Path, out_dir: &Path) -> Result<ReportSummary> {
    let (rows, read, rejected) = read_results(results_csv)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("scatter.svg"), scatter_svg(&rows))?;
    fs::write(out_dir.join("ei_boxplot.svg"), boxplot_svg(&rows))?;
    fs::write(out_dir.join("tables.md"), markdown_tables(&rows))?;
    let with_ei: Vec<&ResultRow> = rows.iter().filter(|r| r.set_ei.is_some()).collect();
    let xs: Vec<f64> = with_ei.iter().filter_map(|r| r.set_ei).collect();
    let corr = |f: &dyn Fn(&ResultRow) -> f64| spearman(&xs, &with_ei.iter().map(|r| f(r)).collect::<Vec<_>>());
    let summary = ReportSummary {
        rows_read: read,
        rows_used: rows.len(),
        rows_rejected: rejected,
        spearman_ei_oracle_gain: corr(&|r| r.oracle - r.mean_expert_acc),
        spearman_ei_ensemble_gain: corr(&|r| r.ensemble_acc - r.mean_expert_acc),
        spearman_ei_gate_gain: corr(&|r| r.gate_acc - r.mean_expert_acc),
    };
    fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}
