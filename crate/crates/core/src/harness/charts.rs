//! Minimal deterministic SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::harness::config::Experiment;
use crate::harness::report::{aggregate, PercentileRow, RunReport, TraceRecord};
use crate::knowledge::SplitStrategy;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed y range; derived from the data when `None`.
    pub y_range: Option<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

fn label(v: f64) -> String {
    if v.abs() >= 1e4 {
        format!("{v:.0}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

impl LineChart {
    pub fn render(&self) -> String {
        let (x0, x1) = range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let (y0, y1) = self
            .y_range
            .unwrap_or_else(|| range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1))));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for t in ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                TOP,
                TOP + ph,
                TOP + ph + 18.0,
                label(t)
            );
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0,
                label(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if !pts.is_empty() {
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            let ly = TOP + 10.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Seed-mean accuracy against percentile, one line per run.
pub fn percentile_chart(title: &str, rows: &[PercentileRow]) -> LineChart {
    let series = aggregate(rows)
        .into_iter()
        .fold(BTreeMap::<String, Vec<(f64, f64)>>::new(), |mut m, a| {
            if let Some(mean) = a.mean {
                m.entry(a.strategy.clone()).or_default().push((a.percentile as f64, mean));
            }
            m
        })
        .into_iter()
        .map(|(name, points)| Series { name, points })
        .collect();
    LineChart {
        title: title.into(),
        x_label: "top x% most popular subjects".into(),
        y_label: "accuracy".into(),
        series,
        y_range: Some((0.0, 1.0)),
    }
}

/// Trace charts: accuracy, subject attention and relation attention
/// against step, one line per `(run_id, seed)`.
pub fn trace_charts(prefix: &str, rows: &[TraceRecord]) -> Vec<(String, LineChart)> {
    let mut runs: BTreeMap<(String, u64), Vec<&TraceRecord>> = BTreeMap::new();
    for r in rows {
        runs.entry((r.run_id.clone(), r.seed)).or_default().push(r);
    }
    let panel = |file: &str, title: &str, y_label: &str, pick: fn(&TraceRecord) -> f64| {
        let series = runs
            .iter()
            .map(|((id, seed), rs)| Series {
                name: format!("{} s{seed}", id.rsplit('/').next().unwrap_or(id)),
                points: rs.iter().map(|r| (r.step as f64, pick(r))).collect(),
            })
            .collect();
        (
            format!("{prefix}_{file}.svg"),
            LineChart {
                title: title.into(),
                x_label: "step".into(),
                y_label: y_label.into(),
                series,
                y_range: Some((0.0, 1.0)),
            },
        )
    };
    vec![
        panel("accuracy", "Evaluation accuracy", "accuracy", |r| r.eval_acc),
        panel("subject_attention", "Attention on the subject token", "attention", |r| r.subj_att),
        panel("relation_attention", "Attention on the relation token", "attention", |r| r.rel_att),
    ]
}

/// Seed-mean `Top - Bottom` gap at x = 100 against a sweep coordinate.
fn gap_chart(report: &RunReport, title: &str, x_label: &str, xs: &[(f64, usize)], x_of: fn(f64, usize) -> f64) -> LineChart {
    let seeds = &report.config.seeds;
    let mut points = Vec::new();
    for &(alpha, steps) in xs {
        let gaps: Vec<f64> = seeds.iter().filter_map(|&s| report.gap(alpha, steps, s, 100)).collect();
        if !gaps.is_empty() {
            points.push((x_of(alpha, steps), gaps.iter().sum::<f64>() / gaps.len() as f64));
        }
    }
    LineChart {
        title: title.into(),
        x_label: x_label.into(),
        y_label: format!("{} - {} accuracy", SplitStrategy::Top.label(), SplitStrategy::Bottom.label()),
        series: vec![Series {
            name: "mean gap".into(),
            points,
        }],
        y_range: None,
    }
}

/// Every chart of a report, named by file.
pub fn report_charts(report: &RunReport) -> Vec<(String, String)> {
    let cfg = &report.config;
    let mut charts: Vec<(String, LineChart)> = Vec::new();
    match cfg.experiment {
        Experiment::E1 => {
            charts.push(("e1_percentiles.svg".into(), percentile_chart("Accuracy by popularity percentile", &report.percentiles)));
        }
        Experiment::E2 => {
            let xs: Vec<(f64, usize)> = cfg.alphas.iter().map(|&a| (a, cfg.train.pretrain_steps)).collect();
            charts.push(("e2_gap_vs_alpha.svg".into(), gap_chart(report, "Gap against Zipf exponent", "alpha", &xs, |a, _| a)));
        }
        Experiment::E3 => {
            let xs: Vec<(f64, usize)> = cfg.step_grid.iter().map(|&n| (cfg.zipf_alpha, n)).collect();
            charts.push((
                "e3_gap_vs_steps.svg".into(),
                gap_chart(report, "Gap against pretraining budget", "log10 pretraining steps", &xs, |_, n| (n as f64).log10()),
            ));
        }
        Experiment::E4 => {
            let ft: Vec<TraceRecord> = report.traces.iter().filter(|r| !r.run_id.ends_with("/pretrain")).cloned().collect();
            charts.extend(trace_charts("e4", &ft));
        }
        Experiment::Verify => {}
    }
    charts.into_iter().map(|(name, c)| (name, c.render())).collect()
}
