//! CSV tables and hand-written SVG figures.
//!
//! Figures are views of the tables: every plotted point carries `data-*`
//! attributes holding the exact strings written to the matching CSV, and no
//! value is recomputed for plotting. Output is a pure function of the input,
//! so files are byte-for-byte reproducible.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::{AggregateRow, ConstantPoint, SweepOutput, SweepRow};
use crate::stats::HistogramExport;
use crate::strategies::Method;

/// Canonical text form of a number in every table and figure.
pub fn num(x: f64) -> String {
    format!("{x}")
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn rows_csv(rows: &[SweepRow]) -> Result<String> {
    csv_string(
        &["method", "seed", "fraction", "n_ablated", "top1", "ce_loss"],
        rows.iter().map(|r| {
            vec![
                r.method.to_string(),
                r.seed.to_string(),
                num(r.fraction),
                r.n_ablated.to_string(),
                num(r.top1),
                num(r.ce_loss),
            ]
        }),
    )
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<String> {
    csv_string(
        &["method", "fraction", "top1_mean", "top1_sd", "ce_mean", "ce_sd"],
        rows.iter().map(|r| {
            vec![
                r.method.to_string(),
                num(r.fraction),
                num(r.top1_mean),
                num(r.top1_sd),
                num(r.ce_mean),
                num(r.ce_sd),
            ]
        }),
    )
}

pub fn constant_curve_csv(points: &[ConstantPoint]) -> Result<String> {
    csv_string(
        &["constant", "ce_loss", "top1"],
        points
            .iter()
            .map(|p| vec![num(p.constant as f64), num(p.ce_loss), num(p.top1)]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMetric {
    Top1,
    CeLoss,
}

impl SweepMetric {
    pub fn file_stem(self) -> &'static str {
        match self {
            SweepMetric::Top1 => "top1",
            SweepMetric::CeLoss => "ce_loss",
        }
    }

    fn label(self) -> &'static str {
        match self {
            SweepMetric::Top1 => "top-1 accuracy (%)",
            SweepMetric::CeLoss => "cross-entropy (nats)",
        }
    }

    fn value(self, r: &AggregateRow) -> f64 {
        match self {
            SweepMetric::Top1 => r.top1_mean,
            SweepMetric::CeLoss => r.ce_mean,
        }
    }

    fn sd(self, r: &AggregateRow) -> f64 {
        match self {
            SweepMetric::Top1 => r.top1_sd,
            SweepMetric::CeLoss => r.ce_sd,
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn color(method: Method) -> &'static str {
    let i = Method::ALL.iter().position(|&m| m == method).unwrap_or(0);
    PALETTE[i % PALETTE.len()]
}

/// Linear map from data range to pixel range.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Axis { lo, hi, px_lo, px_hi }
    }

    fn padded(values: impl Iterator<Item = f64>, px_lo: f64, px_hi: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Axis::new(0.0, 1.0, px_lo, px_hi);
        }
        let pad = (hi - lo) * 0.05;
        Axis::new(lo - pad, hi + pad, px_lo, px_hi)
    }

    fn px(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    fn ticks(&self, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, x: &Axis, y: &Axis, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (x.px_lo, x.px_hi, y.px_lo, y.px_hi);
    let _ = writeln!(
        out,
        r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    for t in x.ticks(5) {
        let px = x.px(t);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 18.0,
            tick_label(t)
        );
    }
    for t in y.ticks(5) {
        let py = y.px(t);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Mean metric against pruning fraction, one polyline per method.
pub fn degradation_svg(rows: &[AggregateRow], metric: SweepMetric) -> String {
    let x = Axis::new(0.0, 1.0, LEFT, WIDTH - RIGHT);
    let y = Axis::padded(rows.iter().map(|r| metric.value(r)), HEIGHT - BOTTOM, TOP);
    let mut out = String::new();
    svg_open(&mut out, &format!("{} vs pruning fraction", metric.label()));
    axes(&mut out, &x, &y, "fraction of attention neurons ablated", metric.label());

    let mut methods: Vec<Method> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    for (i, &m) in methods.iter().enumerate() {
        let pts: Vec<&AggregateRow> = rows.iter().filter(|r| r.method == m).collect();
        let path: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", x.px(r.fraction), y.px(metric.value(r))))
            .collect();
        let _ = writeln!(
            out,
            r#"<g class="series" data-method="{m}"><polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            color(m),
            path.join(" ")
        );
        for r in &pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" data-method="{m}" data-fraction="{}" data-value="{}" data-sd="{}"/>"#,
                x.px(r.fraction),
                y.px(metric.value(r)),
                color(m),
                num(r.fraction),
                num(metric.value(r)),
                num(metric.sd(r)),
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{m}</text></g>"#,
            lx + 20.0,
            color(m),
            lx + 26.0,
            ly + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Bar chart of the occupied bin range of a histogram export. Bar heights
/// are `count / max_count` of the plot height.
pub fn histogram_svg(export: &HistogramExport, title: &str) -> String {
    let mut out = String::new();
    svg_open(&mut out, title);
    let Some((first, end)) = export.occupied() else {
        let x = Axis::new(export.spec.lo, export.spec.hi, LEFT, WIDTH - RIGHT);
        let y = Axis::new(0.0, 1.0, HEIGHT - BOTTOM, TOP);
        axes(&mut out, &x, &y, "activation", "count");
        out.push_str("</svg>\n");
        return out;
    };
    let lo = export.edges[first];
    let hi = export.edges[end];
    let x = Axis::new(lo, hi, LEFT, WIDTH - RIGHT);
    let max = export.counts[first..end].iter().copied().max().unwrap_or(1).max(1);
    let y = Axis::new(0.0, max as f64, HEIGHT - BOTTOM, TOP);
    axes(&mut out, &x, &y, "activation", "count");
    let plot_h = (HEIGHT - BOTTOM) - TOP;
    for k in first..end {
        let c = export.counts[k];
        let h = plot_h * c as f64 / max as f64;
        let (x0, x1) = (x.px(export.edges[k]), x.px(export.edges[k + 1]));
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.3}" y="{:.3}" width="{:.3}" height="{h:.3}" fill="#4878a8" data-lo="{}" data-hi="{}" data-count="{c}"/>"##,
            (HEIGHT - BOTTOM) - h,
            (x1 - x0).max(0.0),
            num(export.edges[k]),
            num(export.edges[k + 1]),
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" data-underflow="{}" data-overflow="{}">out of range: {} below, {} above</text>"#,
        WIDTH - RIGHT + 5.0,
        TOP + 10.0,
        export.underflow,
        export.overflow,
        export.underflow,
        export.overflow
    );
    out.push_str("</svg>\n");
    out
}

/// Cross-entropy against the pinned constant.
pub fn constant_curve_svg(points: &[ConstantPoint]) -> String {
    let x = Axis::padded(points.iter().map(|p| p.constant as f64), LEFT, WIDTH - RIGHT);
    let y = Axis::padded(points.iter().map(|p| p.ce_loss), HEIGHT - BOTTOM, TOP);
    let mut out = String::new();
    svg_open(&mut out, "cross-entropy vs replacement constant");
    axes(&mut out, &x, &y, "constant", "cross-entropy (nats)");
    let path: Vec<String> = points
        .iter()
        .map(|p| format!("{:.2},{:.2}", x.px(p.constant as f64), y.px(p.ce_loss)))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
        path.join(" ")
    );
    for p in points {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4" data-constant="{}" data-value="{}"/>"##,
            x.px(p.constant as f64),
            y.px(p.ce_loss),
            num(p.constant as f64),
            num(p.ce_loss)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `rows.csv`, `aggregate.csv`, `manifest.json`, `top1.svg` and
/// `ce_loss.svg` into `dir`.
pub fn write_sweep(dir: &Path, out: &SweepOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("rows.csv"), &rows_csv(&out.rows)?)?;
    write(&dir.join("aggregate.csv"), &aggregate_csv(&out.aggregate)?)?;
    write(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&out.manifest)? + "\n"))?;
    for m in [SweepMetric::Top1, SweepMetric::CeLoss] {
        write(&dir.join(format!("{}.svg", m.file_stem())), &degradation_svg(&out.aggregate, m))?;
    }
    Ok(())
}

/// Writes `curve.csv` and `curve.svg` into `dir`.
pub fn write_constant_curve(dir: &Path, points: &[ConstantPoint]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("curve.csv"), &constant_curve_csv(points)?)?;
    write(&dir.join("curve.svg"), &constant_curve_svg(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{HistogramSpec, NeuronAccumulator};
    use crate::strategies::ResampleKind;

    /// Pulls `name="..."` attribute values out of every line containing `tag`.
    fn attrs(svg: &str, tag: &str, name: &str) -> Vec<String> {
        let key = format!(" {name}=\"");
        svg.lines()
            .filter(|l| l.contains(tag))
            .filter_map(|l| {
                let start = l.find(&key)? + key.len();
                Some(l[start..start + l[start..].find('"')?].to_string())
            })
            .collect()
    }

    fn agg() -> Vec<AggregateRow> {
        let mut rows = Vec::new();
        for (i, m) in [Method::Zero, Method::Resample(ResampleKind::Rs1)].into_iter().enumerate() {
            for (j, f) in [0.0, 0.5, 1.0].into_iter().enumerate() {
                rows.push(AggregateRow {
                    method: m,
                    fraction: f,
                    top1_mean: 50.0 - 10.0 * j as f64 - i as f64,
                    top1_sd: 0.1 * j as f64,
                    ce_mean: 2.0 + 0.3 * j as f64 + 0.01 * i as f64,
                    ce_sd: 1.0 / 3.0,
                });
            }
        }
        rows
    }

    #[test]
    fn csv_layouts() {
        let rows = vec![SweepRow {
            method: Method::Peak,
            seed: 2,
            fraction: 0.3,
            n_ablated: 39,
            top1: 41.25,
            ce_loss: 2.0000000000000004,
        }];
        assert_eq!(
            rows_csv(&rows).unwrap(),
            "method,seed,fraction,n_ablated,top1,ce_loss\npeak,2,0.3,39,41.25,2.0000000000000004\n"
        );
        let a = aggregate_csv(&agg()[..1]).unwrap();
        assert_eq!(
            a,
            "method,fraction,top1_mean,top1_sd,ce_mean,ce_sd\nzero,0,50,0,2,0.3333333333333333\n"
        );
    }

    #[test]
    fn degradation_points_equal_csv_strings() {
        let rows = agg();
        let csv = aggregate_csv(&rows).unwrap();
        let csv_ce: Vec<String> = csv.lines().skip(1).map(|l| l.split(',').nth(4).unwrap().to_string()).collect();
        let svg = degradation_svg(&rows, SweepMetric::CeLoss);
        assert_eq!(attrs(&svg, "<circle", "data-value"), csv_ce);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg, degradation_svg(&rows, SweepMetric::CeLoss));
        let top1 = degradation_svg(&rows, SweepMetric::Top1);
        assert_eq!(attrs(&top1, "<circle", "data-value")[0], "50");
    }

    #[test]
    fn histogram_bars_are_proportional_to_counts() {
        let spec = HistogramSpec::new(0.5, -10.0, 10.0).unwrap();
        let mut acc = NeuronAccumulator::new(spec).unwrap();
        for v in [-1.0, -0.99, -0.98, -0.97, -0.96, -0.95, -0.94, -0.93, -0.92, -0.91, 1.0, 1.01, 1.02] {
            acc.observe(v).unwrap();
        }
        let export = acc.export_histogram();
        let svg = histogram_svg(&export, "L0:N0 <fixture>");
        assert!(svg.contains("&lt;fixture&gt;"));
        let counts: Vec<u64> = attrs(&svg, "<rect x", "data-count").iter().map(|c| c.parse().unwrap()).collect();
        let heights: Vec<f64> = attrs(&svg, "<rect x", "height").iter().map(|h| h.parse().unwrap()).collect();
        let (first, end) = export.occupied().unwrap();
        assert_eq!(counts, export.counts[first..end].to_vec());
        let unit = heights[0] / counts[0] as f64;
        for (c, h) in counts.iter().zip(&heights) {
            assert!((h - unit * *c as f64).abs() < 2e-3, "{c} {h}");
        }
        // two modes separated by empty bins
        assert_eq!(counts.first(), Some(&10));
        assert_eq!(counts.last(), Some(&3));
        assert!(counts[1..counts.len() - 1].iter().all(|&c| c == 0));
    }

    #[test]
    fn empty_histogram_still_renders() {
        let acc = NeuronAccumulator::new(HistogramSpec::default()).unwrap();
        let svg = histogram_svg(&acc.export_histogram(), "empty");
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(!svg.contains("data-count"));
    }

    #[test]
    fn constant_curve_outputs() {
        let pts = [
            ConstantPoint { constant: -0.5, ce_loss: 3.0, top1: 10.0 },
            ConstantPoint { constant: 0.0, ce_loss: 2.5, top1: 12.5 },
        ];
        assert_eq!(constant_curve_csv(&pts).unwrap(), "constant,ce_loss,top1\n-0.5,3,10\n0,2.5,12.5\n");
        let svg = constant_curve_svg(&pts);
        assert_eq!(attrs(&svg, "<circle", "data-constant"), vec!["-0.5", "0"]);
    }
}
