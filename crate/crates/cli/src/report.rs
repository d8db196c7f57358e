//! Sweep-report parsing and SVG chart rendering.

use std::fmt;

/// A parsed sweep row.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub family: String,
    pub level: i64,
    pub top1: f64,
    pub topk: f64,
    pub n: usize,
}

/// CSV problem, pinned to a 1-based line number for the exit message.
#[derive(Debug)]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for CsvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sweep CSV line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for CsvError {}

const HEADER: &str = "model,family,level,top1,topk,n";

/// Strict parser for the sweep CSV format.
pub fn parse_sweep_csv(text: &str) -> Result<Vec<ReportRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == HEADER => {}
        Some((_, other)) => {
            return Err(CsvError {
                line: 1,
                message: format!("expected header {HEADER:?}, got {other:?}"),
            })
        }
        None => {
            return Err(CsvError {
                line: 1,
                message: "file is empty".into(),
            })
        }
    }

    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            return Err(CsvError {
                line: line_no,
                message: "blank line".into(),
            });
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CsvError {
                line: line_no,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let bad = |what: &str| CsvError {
            line: line_no,
            message: format!("bad {what} {:?}", fields_display(&fields)),
        };
        let family = fields[1].to_string();
        if !matches!(family.as_str(), "clean" | "noise" | "blur") {
            return Err(CsvError {
                line: line_no,
                message: format!("unknown family {family:?}"),
            });
        }
        let level: i64 = fields[2].parse().map_err(|_| bad("level"))?;
        let top1: f64 = fields[3].parse().map_err(|_| bad("top1"))?;
        let topk: f64 = fields[4].parse().map_err(|_| bad("topk"))?;
        let n: usize = fields[5].parse().map_err(|_| bad("sample count"))?;
        if !(0.0..=1.0).contains(&top1) || !(0.0..=1.0).contains(&topk) {
            return Err(CsvError {
                line: line_no,
                message: "accuracies must lie in [0, 1]".into(),
            });
        }
        rows.push(ReportRow {
            model: fields[0].to_string(),
            family,
            level,
            top1,
            topk,
            n,
        });
    }
    if rows.is_empty() {
        return Err(CsvError {
            line: 2,
            message: "no data rows after the header".into(),
        });
    }
    Ok(rows)
}

fn fields_display(fields: &[&str]) -> String {
    fields.join(",")
}

// ---------------------------------------------------------------------------
// SVG rendering
// ---------------------------------------------------------------------------

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const CHART_W: f64 = 420.0;
const CHART_H: f64 = 300.0;
const MARGIN_L: f64 = 52.0;
const MARGIN_B: f64 = 40.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_R: f64 = 16.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Render one chart per distortion family present (clean rows are skipped):
/// Top-1 accuracy in percent against severity level, one polyline per model.
pub fn render_svg(rows: &[ReportRow]) -> String {
    let mut families: Vec<&str> = Vec::new();
    for fam in ["noise", "blur"] {
        if rows.iter().any(|r| r.family == fam) {
            families.push(fam);
        }
    }
    let mut models: Vec<&str> = Vec::new();
    for row in rows {
        if row.family != "clean" && !models.contains(&row.model.as_str()) {
            models.push(&row.model);
        }
    }

    let total_w = MARGIN_L + families.len().max(1) as f64 * (CHART_W + MARGIN_R) + 8.0;
    let total_h = MARGIN_T + CHART_H + MARGIN_B + 24.0;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{total_w:.0}\" height=\"{total_h:.0}\" viewBox=\"0 0 {total_w:.0} {total_h:.0}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    for (chart_idx, family) in families.iter().enumerate() {
        let ox = MARGIN_L + chart_idx as f64 * (CHART_W + MARGIN_R);
        let oy = MARGIN_T;
        svg.push_str(&render_chart(rows, family, &models, ox, oy));
    }

    // shared legend below the charts
    let legend_y = MARGIN_T + CHART_H + MARGIN_B;
    for (i, model) in models.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let x = MARGIN_L + i as f64 * 160.0;
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{legend_y:.1}\" x2=\"{:.1}\" y2=\"{legend_y:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            x + 24.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            x + 30.0,
            legend_y + 4.0,
            xml_escape(model)
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

fn render_chart(rows: &[ReportRow], family: &str, models: &[&str], ox: f64, oy: f64) -> String {
    let mut levels: Vec<i64> = rows
        .iter()
        .filter(|r| r.family == family)
        .map(|r| r.level)
        .collect();
    levels.sort_unstable();
    levels.dedup();
    let (lo, hi) = (
        *levels.first().unwrap() as f64,
        *levels.last().unwrap() as f64,
    );
    let span = if hi > lo { hi - lo } else { 1.0 };
    let plot_w = CHART_W - 8.0;
    let plot_h = CHART_H;
    let x_of = |level: f64| ox + (level - lo) / span * plot_w;
    let y_of = |acc_pct: f64| oy + plot_h - acc_pct / 100.0 * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<g font-family=\"sans-serif\" font-size=\"11\">\n<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">top-1 accuracy (%) vs {} level</text>\n",
        ox + plot_w / 2.0,
        oy - 14.0,
        xml_escape(family)
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{ox:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        oy + plot_h,
        ox + plot_w,
        oy + plot_h
    ));
    out.push_str(&format!(
        "<line x1=\"{ox:.1}\" y1=\"{oy:.1}\" x2=\"{ox:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        oy + plot_h
    ));
    // y ticks every 20%
    for pct in (0..=100).step_by(20) {
        let y = y_of(pct as f64);
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{ox:.1}\" y2=\"{y:.1}\" stroke=\"black\"/>\n",
            ox - 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{pct}</text>\n",
            ox - 7.0,
            y + 4.0
        ));
    }
    // x ticks at each level
    for &level in &levels {
        let x = x_of(level as f64);
        out.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            oy + plot_h,
            oy + plot_h + 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{level}</text>\n",
            oy + plot_h + 16.0
        ));
    }

    for (i, model) in models.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<(i64, f64)> = rows
            .iter()
            .filter(|r| r.family == family && r.model == *model)
            .map(|r| (r.level, r.top1 * 100.0))
            .collect();
        pts.sort_by_key(|&(level, _)| level);
        if pts.is_empty() {
            continue;
        }
        let path: Vec<String> = pts
            .iter()
            .map(|&(level, acc)| format!("{:.1},{:.1}", x_of(level as f64), y_of(acc)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
    }
    out.push_str("</g>\n");
    out
}
