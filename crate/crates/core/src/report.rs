//! Aggregates benchmark results by phase, hormone quintile, and condition,
//! runs the statistical comparisons, and emits CSV tables, SVG bar charts
//! with Wilson error bars, and a plain-text statistical summary.
//!
//! Wilson intervals are computed on thresholded (score >= 0.5) correctness
//! since they presume Bernoulli outcomes; the raw mean score is reported
//! alongside. All outputs are byte-identical across reruns on identical
//! inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::BenchResult;
use crate::prompt::Condition;
use crate::rhythm::{quintile_bins, Signal};
use crate::stats::{self, TestResult};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("output error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ReportError>;

pub const CORRECT_THRESHOLD: f64 = 0.5;
pub const WILSON_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grouping {
    ByPhase,
    ByHormoneQuintile(Signal),
    ByCondition,
}

impl Grouping {
    pub fn name(&self) -> String {
        match self {
            Grouping::ByPhase => "by_phase".into(),
            Grouping::ByHormoneQuintile(sig) => format!("by_{sig}_quintile"),
            Grouping::ByCondition => "by_condition".into(),
        }
    }
}

/// One aggregate cell: a (dataset, group label) key with counts, mean raw
/// score, and the Wilson interval on thresholded correctness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateCell {
    pub dataset: String,
    pub label: String,
    pub n: usize,
    pub mean_score: f64,
    pub correct: usize,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

/// Aggregates error-free results into cells per the grouping. Quintile
/// bins are computed over the hormone snapshot values present in the
/// results (pooled across datasets and conditions).
pub fn aggregate(results: &[BenchResult], grouping: Grouping) -> Result<Vec<AggregateCell>> {
    let ok: Vec<&BenchResult> = results.iter().filter(|r| r.error.is_none()).collect();
    if ok.is_empty() {
        return Err(ReportError::Domain("no error-free results to aggregate".into()));
    }

    // (dataset, label) -> scores
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    match grouping {
        Grouping::ByCondition => {
            for r in &ok {
                cells
                    .entry((r.dataset.to_string(), r.condition.to_string()))
                    .or_default()
                    .push(r.score.unwrap_or(0.0));
            }
        }
        Grouping::ByPhase => {
            for r in &ok {
                if let Some(phase) = r.phase {
                    cells
                        .entry((r.dataset.to_string(), phase.to_string()))
                        .or_default()
                        .push(r.score.unwrap_or(0.0));
                }
            }
        }
        Grouping::ByHormoneQuintile(signal) => {
            let with_hormones: Vec<&&BenchResult> =
                ok.iter().filter(|r| r.hormones.is_some()).collect();
            if with_hormones.is_empty() {
                return Err(ReportError::Domain(
                    "no results carry hormone snapshots for quintile grouping".into(),
                ));
            }
            let values: Vec<f64> = with_hormones
                .iter()
                .map(|r| r.hormones.unwrap().level(signal))
                .collect();
            let bins = quintile_bins(&values).map_err(|e| ReportError::Domain(e.to_string()))?;
            for (r, bin) in with_hormones.iter().zip(bins) {
                cells
                    .entry((r.dataset.to_string(), format!("q{bin}")))
                    .or_default()
                    .push(r.score.unwrap_or(0.0));
            }
        }
    }

    let mut out = Vec::with_capacity(cells.len());
    for ((dataset, label), scores) in cells {
        let n = scores.len();
        let mean = scores.iter().sum::<f64>() / n as f64;
        let correct = scores.iter().filter(|&&s| s >= CORRECT_THRESHOLD).count();
        let (lo, hi) = stats::wilson_interval(correct as u64, n as u64, WILSON_Z)
            .map_err(|e| ReportError::Domain(e.to_string()))?;
        out.push(AggregateCell {
            dataset,
            label,
            n,
            mean_score: mean,
            correct,
            wilson_lo: lo,
            wilson_hi: hi,
        });
    }
    Ok(out)
}

/// One statistical comparison: either a completed test or a skip note for
/// degenerate inputs.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub scope: String,
    pub outcome: std::result::Result<TestResult, String>,
}

/// The comparison battery for one dataset: Welch t of each
/// hormonal condition against baseline on raw scores, ANOVA across phases
/// within each hormonal condition, and Pearson r between each hormone
/// level and score.
pub fn compare_conditions(
    results: &[BenchResult],
    dataset: &str,
    model: Option<&str>,
) -> Result<Vec<Comparison>> {
    let subset: Vec<&BenchResult> = results
        .iter()
        .filter(|r| {
            r.error.is_none()
                && r.dataset.to_string() == dataset
                && model.map_or(true, |m| r.model == m)
        })
        .collect();
    let baseline: Vec<f64> = subset
        .iter()
        .filter(|r| r.condition == Condition::Baseline)
        .map(|r| r.score.unwrap_or(0.0))
        .collect();
    if baseline.is_empty() {
        return Err(ReportError::Domain(format!(
            "no baseline results for dataset {dataset}"
        )));
    }

    let mut comparisons = Vec::new();
    for condition in [Condition::Menstrual, Condition::Circadian] {
        let cond_results: Vec<&&BenchResult> = subset
            .iter()
            .filter(|r| r.condition == condition)
            .collect();
        if cond_results.is_empty() {
            continue;
        }
        let scores: Vec<f64> = cond_results.iter().map(|r| r.score.unwrap_or(0.0)).collect();

        comparisons.push(Comparison {
            scope: format!("{dataset}/welch/{condition}-vs-baseline"),
            outcome: stats::welch_t_test(&scores, &baseline).map_err(|e| e.to_string()),
        });

        let mut by_phase: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &cond_results {
            if let Some(p) = r.phase {
                by_phase
                    .entry(p.to_string())
                    .or_default()
                    .push(r.score.unwrap_or(0.0));
            }
        }
        let groups: Vec<Vec<f64>> = by_phase.values().cloned().collect();
        comparisons.push(Comparison {
            scope: format!("{dataset}/anova/phases-within-{condition}"),
            outcome: if groups.len() < 2 {
                Err("fewer than 2 phases present".into())
            } else {
                stats::one_way_anova(&groups).map_err(|e| e.to_string())
            },
        });

        for signal in Signal::ALL {
            let paired: Vec<(f64, f64)> = cond_results
                .iter()
                .filter_map(|r| r.hormones.map(|h| (h.level(signal), r.score.unwrap_or(0.0))))
                .collect();
            if paired.len() < 3 {
                continue;
            }
            let (levels, scores): (Vec<f64>, Vec<f64>) = paired.into_iter().unzip();
            comparisons.push(Comparison {
                scope: format!("{dataset}/pearson/{signal}-vs-score-within-{condition}"),
                outcome: stats::pearson(&levels, &scores).map_err(|e| e.to_string()),
            });
        }
    }
    Ok(comparisons)
}

fn fmt_float(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6}")
    }
}

fn write_cells_csv(path: &Path, cells: &[AggregateCell]) -> Result<()> {
    let mut out = String::from("group_key,n,mean_score,correct,wilson_lo,wilson_hi\n");
    for c in cells {
        out.push_str(&format!(
            "{}/{},{},{},{},{},{}\n",
            c.dataset,
            c.label,
            c.n,
            fmt_float(c.mean_score),
            c.correct,
            fmt_float(c.wilson_lo),
            fmt_float(c.wilson_hi)
        ));
    }
    std::fs::write(path, out).map_err(|e| ReportError::Io(format!("{}: {e}", path.display())))
}

fn write_summary(path: &Path, tests: &[Comparison]) -> Result<()> {
    let mut out = String::from("kind,scope,statistic,df1,df2,p_value\n");
    if tests.is_empty() {
        out.push_str("no comparisons\n");
    }
    for c in tests {
        match &c.outcome {
            Ok(t) => out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t.kind,
                c.scope,
                fmt_float(t.statistic),
                fmt_float(t.df1),
                fmt_float(t.df2),
                fmt_float(t.p_value)
            )),
            Err(reason) => out.push_str(&format!("skipped,{},,,,\"{reason}\"\n", c.scope)),
        }
    }
    std::fs::write(path, out).map_err(|e| ReportError::Io(format!("{}: {e}", path.display())))
}

/// Per-dataset SVG bar chart: one section per grouping, bars at the mean
/// score with Wilson error bars. No timestamps, so output is diffable.
fn render_dataset_svg(dataset: &str, sections: &[(String, Vec<&AggregateCell>)]) -> String {
    const BAR_W: f64 = 46.0;
    const BAR_GAP: f64 = 14.0;
    const PLOT_H: f64 = 160.0;
    const SECTION_PAD: f64 = 56.0;
    const LEFT: f64 = 50.0;
    const TOP: f64 = 40.0;

    let max_bars = sections.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    let width = LEFT + max_bars as f64 * (BAR_W + BAR_GAP) + 40.0;
    let height = TOP + sections.len() as f64 * (PLOT_H + SECTION_PAD) + 20.0;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"monospace\" font-size=\"11\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{LEFT}\" y=\"20\" font-size=\"14\">dataset: {dataset} (mean score, Wilson {:.0}% bars)</text>\n",
        95.0
    ));
    for (si, (grouping_name, cells)) in sections.iter().enumerate() {
        let base_y = TOP + si as f64 * (PLOT_H + SECTION_PAD) + PLOT_H;
        svg.push_str(&format!(
            "<text x=\"{LEFT}\" y=\"{:.1}\">{grouping_name}</text>\n",
            base_y - PLOT_H - 8.0
        ));
        // axis
        svg.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{base_y:.1}\" x2=\"{:.1}\" y2=\"{base_y:.1}\" stroke=\"black\"/>\n",
            LEFT + cells.len() as f64 * (BAR_W + BAR_GAP)
        ));
        svg.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{base_y:.1}\" x2=\"{LEFT}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            base_y - PLOT_H
        ));
        for (bi, cell) in cells.iter().enumerate() {
            let x = LEFT + bi as f64 * (BAR_W + BAR_GAP) + BAR_GAP / 2.0;
            let h = cell.mean_score.clamp(0.0, 1.0) * PLOT_H;
            let bar_mid = x + BAR_W / 2.0;
            svg.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{BAR_W:.1}\" height=\"{h:.1}\" \
                 fill=\"#7aa6c2\" stroke=\"black\"/>\n",
                base_y - h
            ));
            let lo_y = base_y - cell.wilson_lo * PLOT_H;
            let hi_y = base_y - cell.wilson_hi * PLOT_H;
            svg.push_str(&format!(
                "<line x1=\"{bar_mid:.1}\" y1=\"{lo_y:.1}\" x2=\"{bar_mid:.1}\" y2=\"{hi_y:.1}\" stroke=\"black\"/>\n"
            ));
            for y in [lo_y, hi_y] {
                svg.push_str(&format!(
                    "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"black\"/>\n",
                    bar_mid - 6.0,
                    bar_mid + 6.0
                ));
            }
            svg.push_str(&format!(
                "<text x=\"{bar_mid:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
                base_y + 14.0,
                cell.label
            ));
            svg.push_str(&format!(
                "<text x=\"{bar_mid:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.2}</text>\n",
                base_y + 28.0,
                cell.mean_score
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes CSV tables per grouping, one SVG per dataset, and the statistical
/// summary; returns the written paths.
pub fn emit_report(
    groupings: &[(Grouping, Vec<AggregateCell>)],
    tests: &[Comparison],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| ReportError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut written = Vec::new();

    for (grouping, cells) in groupings {
        let path = out_dir.join(format!("{}.csv", grouping.name()));
        write_cells_csv(&path, cells)?;
        written.push(path);
    }

    let mut datasets: Vec<String> = groupings
        .iter()
        .flat_map(|(_, cells)| cells.iter().map(|c| c.dataset.clone()))
        .collect();
    datasets.sort();
    datasets.dedup();
    for dataset in &datasets {
        let sections: Vec<(String, Vec<&AggregateCell>)> = groupings
            .iter()
            .map(|(g, cells)| {
                (
                    g.name(),
                    cells.iter().filter(|c| &c.dataset == dataset).collect(),
                )
            })
            .collect();
        let path = out_dir.join(format!("chart_{dataset}.svg"));
        std::fs::write(&path, render_dataset_svg(dataset, &sections))
            .map_err(|e| ReportError::Io(format!("{}: {e}", path.display())))?;
        written.push(path);
    }

    let summary_path = out_dir.join("stat_summary.txt");
    write_summary(&summary_path, tests)?;
    written.push(summary_path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::Scorer;
    use crate::dataset::DatasetKind;
    use crate::rhythm::{CyclePhase, HormoneState};

    fn result(
        condition: Condition,
        phase: Option<CyclePhase>,
        cortisol: f64,
        score: f64,
    ) -> BenchResult {
        BenchResult {
            dataset: DatasetKind::Arc,
            item_id: format!("i-{score}-{cortisol}"),
            model: "m".into(),
            condition,
            prompt_id: "p".into(),
            cycle_position: Some(1.0),
            phase,
            hormones: phase.map(|_| HormoneState {
                estrogen: 0.5,
                progesterone: 0.5,
                lh: 0.5,
                fsh: 0.5,
                testosterone: 0.5,
                cortisol,
                body_temp: 36.6,
            }),
            response_text: Some("A".into()),
            score: Some(score),
            scorer: Scorer::ExactMatch,
            error: None,
            timestamp: "t".into(),
        }
    }

    #[test]
    fn aggregate_wilson_cell() {
        let results = vec![
            result(Condition::Baseline, None, 0.5, 1.0),
            result(Condition::Baseline, None, 0.5, 0.0),
            result(Condition::Baseline, None, 0.5, 1.0),
        ];
        let cells = aggregate(&results, Grouping::ByCondition).unwrap();
        assert_eq!(cells.len(), 1);
        let c = &cells[0];
        assert_eq!(c.n, 3);
        assert_eq!(c.correct, 2);
        assert!((c.mean_score - 2.0 / 3.0).abs() < 1e-9);
        let (lo, hi) = stats::wilson_interval(2, 3, WILSON_Z).unwrap();
        assert_eq!((c.wilson_lo, c.wilson_hi), (lo, hi));
    }

    #[test]
    fn aggregate_by_phase_partitions() {
        let phases = [
            CyclePhase::Morning,
            CyclePhase::Afternoon,
            CyclePhase::Evening,
            CyclePhase::Night,
        ];
        let mut results = Vec::new();
        for p in phases {
            results.push(result(Condition::Circadian, Some(p), 0.5, 1.0));
            results.push(result(Condition::Circadian, Some(p), 0.5, 0.0));
        }
        let cells = aggregate(&results, Grouping::ByPhase).unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells.iter().map(|c| c.n).sum::<usize>(), results.len());
    }

    #[test]
    fn aggregate_single_result_boundary() {
        let results = vec![result(Condition::Baseline, None, 0.5, 1.0)];
        let cells = aggregate(&results, Grouping::ByCondition).unwrap();
        assert_eq!(cells[0].mean_score, 1.0);
        assert_eq!(cells[0].wilson_hi, 1.0);
    }

    #[test]
    fn aggregate_empty_is_error() {
        assert!(aggregate(&[], Grouping::ByCondition).is_err());
    }

    #[test]
    fn aggregate_permutation_invariant() {
        let mut results: Vec<BenchResult> = (0..40)
            .map(|i| {
                result(
                    Condition::Menstrual,
                    Some(CyclePhase::Luteal),
                    i as f64 / 40.0,
                    if i % 3 == 0 { 1.0 } else { 0.0 },
                )
            })
            .collect();
        let a = aggregate(&results, Grouping::ByHormoneQuintile(Signal::Cortisol)).unwrap();
        results.reverse();
        let b = aggregate(&results, Grouping::ByHormoneQuintile(Signal::Cortisol)).unwrap();
        let key = |cells: &[AggregateCell]| {
            cells
                .iter()
                .map(|c| (c.dataset.clone(), c.label.clone(), c.n, c.correct))
                .collect::<Vec<_>>()
        };
        assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn compare_identical_to_baseline_gives_p_one() {
        let mut results = Vec::new();
        for i in 0..10 {
            let s = (i % 4) as f64 / 3.0;
            results.push(result(Condition::Baseline, None, 0.5, s));
            results.push(result(Condition::Menstrual, Some(CyclePhase::Luteal), 0.5, s));
        }
        let comps = compare_conditions(&results, "arc", None).unwrap();
        let welch = comps
            .iter()
            .find(|c| c.scope.contains("welch/menstrual"))
            .unwrap();
        let t = welch.outcome.as_ref().unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn compare_score_equals_cortisol_gives_r_one() {
        let mut results = Vec::new();
        for i in 0..12 {
            let c = i as f64 / 12.0;
            results.push(result(Condition::Menstrual, Some(CyclePhase::Luteal), c, c));
            results.push(result(Condition::Baseline, None, 0.5, 0.5));
        }
        let comps = compare_conditions(&results, "arc", None).unwrap();
        let pearson = comps
            .iter()
            .find(|c| c.scope.contains("pearson/cortisol"))
            .unwrap();
        let t = pearson.outcome.as_ref().unwrap();
        assert!((t.statistic - 1.0).abs() < 1e-9);
    }

    #[test]
    fn emit_report_files() {
        let dir = tempfile::tempdir().unwrap();
        let results = vec![
            result(Condition::Baseline, None, 0.5, 1.0),
            result(Condition::Baseline, None, 0.5, 0.0),
            result(Condition::Menstrual, Some(CyclePhase::Luteal), 0.4, 1.0),
            result(Condition::Menstrual, Some(CyclePhase::Ovulatory), 0.6, 0.0),
        ];
        let by_cond = aggregate(&results, Grouping::ByCondition).unwrap();
        let by_phase = aggregate(&results, Grouping::ByPhase).unwrap();
        let groupings = vec![
            (Grouping::ByCondition, by_cond),
            (Grouping::ByPhase, by_phase),
        ];
        let files = emit_report(&groupings, &[], dir.path()).unwrap();
        // 2 CSVs + 1 SVG (one dataset) + 1 summary
        assert_eq!(files.len(), 4);
        let summary = std::fs::read_to_string(dir.path().join("stat_summary.txt")).unwrap();
        assert!(summary.contains("no comparisons"));
        // byte-identical rerun
        let dir2 = tempfile::tempdir().unwrap();
        emit_report(&groupings, &[], dir2.path()).unwrap();
        for name in ["by_condition.csv", "by_phase.csv", "chart_arc.svg", "stat_summary.txt"] {
            let a = std::fs::read(dir.path().join(name)).unwrap();
            let b = std::fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs across reruns");
        }
    }
}
