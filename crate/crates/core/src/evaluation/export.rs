//! CSV tables and standalone SVG figures for evaluation reports.

use std::fmt::Write as _;

use super::extremogram::ExtremogramPair;
use super::metrics::{Roc, ScoreReport};
use super::qq::QqTable;
use super::study::StudyReport;
use crate::boosting::CvResult;
use crate::error::{Error, Result};

/// A rectangular table of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self { headers: headers.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push_numbers(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|v| format!("{v}")).collect());
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.headers).map_err(|e| Error::Data(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Error::Data(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }
}

pub fn roc_table(roc: &Roc) -> Table {
    let mut t = Table::new(["threshold", "fpr", "tpr"]);
    for p in &roc.curve {
        t.push_numbers(&[p.threshold, p.false_positive_rate, p.true_positive_rate]);
    }
    t
}

pub fn score_table(report: &ScoreReport) -> Table {
    let mut t = Table::new(["index", "contribution"]);
    for (i, c) in report.contributions.iter().enumerate() {
        t.rows.push(vec![i.to_string(), format!("{c}")]);
    }
    t
}

/// One-line summary of several reports: metric, value, p-value, permutations.
pub fn score_summary_table(reports: &[(&str, &ScoreReport)]) -> Table {
    let mut t = Table::new(["model", "metric", "value", "p_value", "n_permutations"]);
    for (name, r) in reports {
        t.rows.push(vec![
            name.to_string(),
            r.metric.clone(),
            format!("{}", r.value),
            r.p_value.map(|p| format!("{p}")).unwrap_or_default(),
            r.n_permutations.map(|n| n.to_string()).unwrap_or_default(),
        ]);
    }
    t
}

pub fn qq_table(qq: &QqTable) -> Table {
    let mut t = Table::new(["prob", "model", "empirical", "lower", "upper", "boot_mean", "boot_se"]);
    for p in &qq.points {
        t.push_numbers(&[p.prob, p.model, p.empirical, p.lower, p.upper, p.boot_mean, p.boot_se]);
    }
    t
}

pub fn extremogram_table(pairs: &[ExtremogramPair]) -> Table {
    let mut t = Table::new(["s1", "s2", "distance", "estimate", "n_conditioning"]);
    for p in pairs {
        t.rows.push(vec![
            p.s1.to_string(),
            p.s2.to_string(),
            format!("{}", p.distance),
            format!("{}", p.estimate),
            p.n_conditioning.to_string(),
        ]);
    }
    t
}

pub fn cv_table(cv: &CvResult) -> Table {
    let mut headers = vec!["n_trees".to_string(), "mean".into(), "std_error".into()];
    headers.extend((0..cv.fold_curves.len()).map(|k| format!("fold_{k}")));
    let mut t = Table::new(headers);
    for m in 0..cv.mean.len() {
        let mut row = vec![m as f64, cv.mean[m], cv.std_error[m]];
        row.extend(cv.fold_curves.iter().map(|c| c[m]));
        t.push_numbers(&row);
    }
    t
}

pub fn study_table(report: &StudyReport) -> Table {
    let mut t = Table::new([
        "day",
        "s1",
        "s2",
        "truth",
        "early_q25",
        "early_median",
        "early_q75",
        "late_q25",
        "late_median",
        "late_q75",
    ]);
    for c in &report.cells {
        t.push_numbers(&[
            c.day as f64,
            c.pair.0 as f64,
            c.pair.1 as f64,
            c.truth,
            c.early.q25,
            c.early.median,
            c.early.q75,
            c.late.q25,
            c.late.median,
            c.late.q75,
        ]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
}

/// Minimal scatter/line chart. The data behind every series is embedded as
/// CSV inside a `<metadata>` element so the figure is self-describing.
#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), series: Vec::new() }
    }

    pub fn with(mut self, name: &str, points: Vec<(f64, f64)>, mark: Mark) -> Self {
        self.series.push(Series { name: name.into(), points, mark });
        self
    }

    pub fn to_svg(&self) -> String {
        let finite = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in finite {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
        let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

        let mut out = String::new();
        let _ =
            writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
        out.push_str("<metadata>\nseries,x,y\n");
        for s in &self.series {
            for (x, y) in &s.points {
                let _ = writeln!(out, "{},{x},{y}", escape(&s.name));
            }
        }
        out.push_str("</metadata>\n");
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<path d="M{m} {t} L{m} {b} L{r} {b}" stroke="black" fill="none"/>"#,
            m = MARGIN,
            t = MARGIN,
            b = H - MARGIN,
            r = W - MARGIN
        );
        for (v, px) in [(x0, sx(x0)), (x1, sx(x1))] {
            let _ = writeln!(
                out,
                r#"<text x="{px}" y="{}" text-anchor="middle" font-size="11">{v:.3}</text>"#,
                H - MARGIN + 16.0
            );
        }
        for (v, py) in [(y0, sy(y0)), (y1, sy(y1))] {
            let _ =
                writeln!(out, r#"<text x="{}" y="{py}" text-anchor="end" font-size="11">{v:.3}</text>"#, MARGIN - 6.0);
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
            W / 2.0,
            H - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<(f64, f64)> =
                s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|&(x, y)| (sx(x), sy(y))).collect();
            match s.mark {
                Mark::Line if !pts.is_empty() => {
                    let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(out, r#"<polyline points="{}" stroke="{color}" fill="none"/>"#, d.join(" "));
                }
                _ => {
                    for (x, y) in pts {
                        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{color}"/>"#);
                    }
                }
            }
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
                W - MARGIN - 120.0,
                MARGIN + 14.0 * i as f64,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

pub fn roc_plot(roc: &Roc) -> Plot {
    Plot::new(&format!("ROC (AUC = {:.3})", roc.auc), "false positive rate", "true positive rate")
        .with("roc", roc.curve.iter().map(|p| (p.false_positive_rate, p.true_positive_rate)).collect(), Mark::Line)
        .with("chance", vec![(0.0, 0.0), (1.0, 1.0)], Mark::Line)
}

pub fn qq_plot(qq: &QqTable) -> Plot {
    Plot::new("Tail QQ", "model quantile", "empirical quantile")
        .with("empirical", qq.points.iter().map(|p| (p.model, p.empirical)).collect(), Mark::Points)
        .with("lower", qq.points.iter().map(|p| (p.model, p.lower)).collect(), Mark::Line)
        .with("upper", qq.points.iter().map(|p| (p.model, p.upper)).collect(), Mark::Line)
}

pub fn extremogram_plot(pairs: &[ExtremogramPair]) -> Plot {
    Plot::new("Extremogram", "distance", "conditional exceedance frequency").with(
        "pairs",
        pairs.iter().map(|p| (p.distance, p.estimate)).collect(),
        Mark::Points,
    )
}

pub fn cv_plot(cv: &CvResult, title: &str) -> Plot {
    let mut plot = Plot::new(title, "number of trees", "validation loss").with(
        "mean",
        cv.mean.iter().enumerate().map(|(m, v)| (m as f64, *v)).collect(),
        Mark::Line,
    );
    let sel = cv.selected;
    plot = plot.with("selected", vec![(sel as f64, cv.mean[sel])], Mark::Points);
    plot
}

/// Per-day truth with the late-iteration replicate quartiles.
pub fn study_plot(report: &StudyReport) -> Plot {
    let first = report.cells.first().map(|c| c.pair);
    let cells: Vec<_> = report.cells.iter().filter(|c| Some(c.pair) == first).collect();
    Plot::new("Recovery of pairwise dependence", "day", "probability")
        .with("truth", cells.iter().map(|c| (c.day as f64, c.truth)).collect(), Mark::Points)
        .with("q25", cells.iter().map(|c| (c.day as f64, c.late.q25)).collect(), Mark::Line)
        .with("median", cells.iter().map(|c| (c.day as f64, c.late.median)).collect(), Mark::Line)
        .with("q75", cells.iter().map(|c| (c.day as f64, c.late.q75)).collect(), Mark::Line)
}
