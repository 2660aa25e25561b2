//! Report persistence: JSON for machines, CSV for plotting, and small
//! self-contained SVG charts for the gradient-norm trace and the
//! regularization-sweep heatmap.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use unlearn_core::losses::{LossMethod, Regularizer};
use unlearn_core::metrics::UtilityReport;
use unlearn_core::neighborset::SetKind;
use unlearn_core::toylab::{RunTrace, SweepTable, TraceStep, SWEEP_SET_KINDS};

use crate::dataset::{read_jsonl, write_atomic, write_jsonl};
use crate::LabError;

/// Headline numbers of one toy unlearning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRunSummary {
    pub method: LossMethod,
    pub regularizer: Regularizer,
    pub seed: u64,
    pub lr: f64,
    pub fit_epochs: usize,
    pub steps: usize,
    pub band_step: Option<usize>,
    pub forget_efficacy: f64,
    pub utility_before: BTreeMap<SetKind, f64>,
    pub utility_after: BTreeMap<SetKind, f64>,
    pub rud: BTreeMap<SetKind, f64>,
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), LabError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| LabError::Parse {
        path: path.display().to_string(),
        line: 0,
        source,
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<(), LabError> {
    write_jsonl(path, &trace.steps)
}

pub fn read_trace(path: &Path) -> Result<RunTrace, LabError> {
    Ok(RunTrace {
        steps: read_jsonl::<TraceStep>(path)?,
    })
}

fn csv_into_string(build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    build(&mut writer).expect("csv rows serialize");
    String::from_utf8(writer.into_inner().expect("csv writer flushes"))
        .expect("csv output is utf-8")
}

/// Per-set metric table for a utility report.
pub fn report_csv(report: &UtilityReport) -> String {
    csv_into_string(|w| {
        w.write_record([
            "set_kind",
            "count",
            "rouge_l_recall",
            "probability",
            "cosine_sim",
            "entailment",
            "utility",
            "rud_percent",
        ])?;
        for (kind, summary) in &report.per_set {
            let rud = report
                .rud
                .get(kind)
                .map(|r| format!("{r:.4}"))
                .unwrap_or_default();
            w.write_record([
                kind.as_str().to_string(),
                summary.count.to_string(),
                format!("{:.6}", summary.mean_metrics.rouge_l_recall),
                format!("{:.6}", summary.mean_metrics.probability),
                format!("{:.6}", summary.mean_metrics.cosine_sim),
                format!("{:.6}", summary.mean_metrics.entailment),
                format!("{:.6}", summary.utility),
                rud,
            ])?;
        }
        Ok(())
    })
}

/// Per-step trace table: loss, efficacy, utilities, and probe norms.
pub fn trace_csv(trace: &RunTrace) -> String {
    let kinds: Vec<SetKind> = trace
        .steps
        .first()
        .map(|s| s.utility.keys().copied().collect())
        .unwrap_or_default();
    csv_into_string(|w| {
        let mut header = vec!["step".to_string(), "loss".to_string(), "forget_efficacy".to_string()];
        header.extend(kinds.iter().map(|k| format!("utility_{}", k.as_str())));
        header.extend(kinds.iter().map(|k| format!("grad_norm_{}", k.as_str())));
        w.write_record(&header)?;
        for step in &trace.steps {
            let mut row = vec![
                step.step.to_string(),
                format!("{:.6}", step.loss),
                format!("{:.6}", step.forget_efficacy),
            ];
            row.extend(
                kinds
                    .iter()
                    .map(|k| step.utility.get(k).map(|v| format!("{v:.6}")).unwrap_or_default()),
            );
            row.extend(kinds.iter().map(|k| {
                step.grad_norm
                    .get(k)
                    .map(|v| format!("{v:.8}"))
                    .unwrap_or_default()
            }));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

/// 3x3 grid (rows: test set, columns: train set) for one regularizer.
pub fn sweep_csv(table: &SweepTable, regularizer: Regularizer) -> String {
    let grid = table.grid(regularizer);
    csv_into_string(|w| {
        let mut header = vec!["test_set".to_string()];
        header.extend(
            SWEEP_SET_KINDS
                .iter()
                .map(|k| format!("train_{}", k.as_str())),
        );
        w.write_record(&header)?;
        for (row, test) in SWEEP_SET_KINDS.iter().enumerate() {
            let mut record = vec![test.as_str().to_string()];
            record.extend(grid[row].iter().map(|v| format!("{v:.4}")));
            w.write_record(&record)?;
        }
        Ok(())
    })
}

const SVG_WIDTH: f64 = 720.0;
const SVG_HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

fn polyline(points: &[(f64, f64)]) -> String {
    points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Line chart of the per-step probe gradient norms, one series for the
/// syntactically similar set (red) and one for the different set (blue).
pub fn gradient_norm_svg(trace: &RunTrace) -> String {
    let series = [
        (SetKind::SynSimilarNeighbor, "syntactically similar", "#d62728"),
        (SetKind::SynDifferentNeighbor, "syntactically different", "#1f77b4"),
    ];
    let mut max_norm = 0.0f64;
    let mut max_step = 1.0f64;
    for step in &trace.steps {
        max_step = max_step.max(step.step as f64);
        for (kind, _, _) in &series {
            if let Some(&v) = step.grad_norm.get(kind) {
                max_norm = max_norm.max(v);
            }
        }
    }
    if max_norm == 0.0 {
        max_norm = 1.0;
    }

    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |step: f64| MARGIN_LEFT + (step / max_step) * plot_w;
    let y_of = |v: f64| MARGIN_TOP + plot_h - (v / max_norm) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.0}\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">Gradient norm across unlearning steps</text>\n",
        SVG_WIDTH / 2.0
    ));
    // axes
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>\n",
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{:.1}\" stroke=\"#333\"/>\n",
        MARGIN_TOP + plot_h
    ));
    // ticks
    for i in 0..=4 {
        let v = max_norm * i as f64 / 4.0;
        let y = y_of(v);
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 4.0,
            v
        ));
        let s = max_step * i as f64 / 4.0;
        let x = x_of(s);
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.0}</text>\n",
            x,
            MARGIN_TOP + plot_h + 18.0,
            s
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{:.0}\" y=\"{:.0}\" text-anchor=\"middle\">unlearning step</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        SVG_HEIGHT - 12.0
    ));

    for (i, (kind, label, color)) in series.iter().enumerate() {
        let points: Vec<(f64, f64)> = trace
            .steps
            .iter()
            .filter_map(|s| s.grad_norm.get(kind).map(|&v| (x_of(s.step as f64), y_of(v))))
            .collect();
        if !points.is_empty() {
            svg.push_str(&format!(
                "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" points=\"{}\"/>\n",
                polyline(&points)
            ));
        }
        let ly = MARGIN_TOP + 14.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            MARGIN_LEFT + 12.0,
            MARGIN_LEFT + 42.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\">{label}</text>\n",
            MARGIN_LEFT + 48.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn heat_color(value: f64, min: f64, max: f64) -> String {
    // darker = higher (better utility retention)
    let t = if max > min { (value - min) / (max - min) } else { 0.5 };
    let from = (0xf7, 0xfb, 0xff);
    let to = (0x08, 0x45, 0x94);
    let mix = |a: u32, b: u32| (a as f64 + (b as f64 - a as f64) * t).round() as u32;
    format!("#{:02x}{:02x}{:02x}", mix(from.0, to.0), mix(from.1, to.1), mix(from.2, to.2))
}

/// 3x3 heatmap of a sweep grid: x is the train retain set, y the test
/// retain set; darker cells retained more utility.
pub fn heatmap_svg(table: &SweepTable, regularizer: Regularizer) -> String {
    let grid = table.grid(regularizer);
    let values: Vec<f64> = grid.iter().flatten().copied().collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let cell = 130.0;
    let left = 180.0;
    let top = 70.0;
    let width = left + cell * 3.0 + 30.0;
    let height = top + cell * 3.0 + 60.0;
    let labels = ["domain", "entity", "syn. similar"];

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.0}\" y=\"26\" font-size=\"15\" text-anchor=\"middle\">Relative utility drop (%), {} regularization</text>\n",
        width / 2.0,
        regularizer.as_str()
    ));
    for (r, row) in grid.iter().enumerate() {
        for (c, &value) in row.iter().enumerate() {
            let x = left + c as f64 * cell;
            let y = top + r as f64 * cell;
            let luminance_dark = (value - min) / (max - min).max(1e-12) > 0.55;
            svg.push_str(&format!(
                "  <rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" \
                 fill=\"{}\" stroke=\"#fff\"/>\n",
                heat_color(value, min, max)
            ));
            svg.push_str(&format!(
                "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"{}\">{value:.1}</text>\n",
                x + cell / 2.0,
                y + cell / 2.0 + 5.0,
                if luminance_dark { "#fff" } else { "#222" }
            ));
        }
    }
    for (i, label) in labels.iter().enumerate() {
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{label}</text>\n",
            left + i as f64 * cell + cell / 2.0,
            top + 3.0 * cell + 24.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>\n",
            left - 10.0,
            top + i as f64 * cell + cell / 2.0 + 5.0
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">train retain set</text>\n",
        left + 1.5 * cell,
        height - 14.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {:.1})\">test retain set</text>\n",
        20.0,
        top + 1.5 * cell,
        top + 1.5 * cell
    ));
    svg.push_str("</svg>\n");
    svg
}
