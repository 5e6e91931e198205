//! Report rendering: a metrics table (Markdown or CSV) across settings,
//! and a per-setting accuracy bar chart PNG.

mod font;

use std::path::Path;

use crate::corpus::QuestionType;
use crate::error::{Error, Result};
use crate::eval::MetricsReport;

const ROW_LABELS: [(&str, Option<QuestionType>); 6] = [
    ("Presence", Some(QuestionType::Presence)),
    ("Count", Some(QuestionType::Count)),
    ("Comparison", Some(QuestionType::Comparison)),
    ("Rural/Urban", Some(QuestionType::RuralUrban)),
    ("AA", None),
    ("OA", None),
];

fn cell(report: &MetricsReport, row: &(&str, Option<QuestionType>)) -> String {
    let value = match row.1 {
        Some(qtype) => report.per_type.get(&qtype).map(|m| m.accuracy),
        None if row.0 == "AA" => Some(report.aa),
        None => Some(report.oa),
    };
    match value {
        Some(v) => format!("{v:.4}"),
        None => "-".to_string(),
    }
}

/// Markdown table with one column per setting and the standard row order.
pub fn render_markdown(reports: &[MetricsReport]) -> String {
    let mut out = String::from("| Type |");
    for r in reports {
        out.push_str(&format!(" {} |", r.setting));
    }
    out.push('\n');
    out.push_str("|---|");
    out.push_str(&"---|".repeat(reports.len()));
    out.push('\n');
    for row in &ROW_LABELS {
        out.push_str(&format!("| {} |", row.0));
        for r in reports {
            out.push_str(&format!(" {} |", cell(r, row)));
        }
        out.push('\n');
    }
    out
}

/// CSV with the same grid as [`render_markdown`].
pub fn render_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("type");
    for r in reports {
        out.push(',');
        out.push_str(&r.setting);
    }
    out.push('\n');
    for row in &ROW_LABELS {
        out.push_str(row.0);
        for r in reports {
            out.push(',');
            out.push_str(&cell(r, row));
        }
        out.push('\n');
    }
    out
}

const CHART_WIDTH: u32 = 480;
const CHART_HEIGHT: u32 = 300;
const MARGIN_LEFT: i64 = 46;
const MARGIN_RIGHT: i64 = 12;
const MARGIN_TOP: i64 = 28;
const MARGIN_BOTTOM: i64 = 34;

/// Renders a bar chart of the six report values (four types, AA, OA).
pub fn render_chart(report: &MetricsReport) -> image::RgbImage {
    let bg = image::Rgb([255u8, 255, 255]);
    let axis = image::Rgb([40u8, 40, 40]);
    let grid = image::Rgb([220u8, 220, 220]);
    let type_color = image::Rgb([70u8, 120, 190]);
    let summary_color = image::Rgb([220u8, 140, 50]);

    let mut img = image::RgbImage::from_pixel(CHART_WIDTH, CHART_HEIGHT, bg);
    let plot_w = CHART_WIDTH as i64 - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = CHART_HEIGHT as i64 - MARGIN_TOP - MARGIN_BOTTOM;
    let y_of = |v: f64| MARGIN_TOP + ((1.0 - v.clamp(0.0, 1.0)) * plot_h as f64).round() as i64;

    // Gridlines and tick labels at 0, 0.25, .., 1.
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let y = y_of(v);
        for x in MARGIN_LEFT..(MARGIN_LEFT + plot_w) {
            img.put_pixel(x as u32, y as u32, grid);
        }
        font::draw_text(&mut img, &format!("{v:.2}"), 8, y - 3, 1, axis);
    }
    // Axes.
    for y in MARGIN_TOP..=(MARGIN_TOP + plot_h) {
        img.put_pixel(MARGIN_LEFT as u32 - 1, y as u32, axis);
    }
    for x in (MARGIN_LEFT - 1)..(MARGIN_LEFT + plot_w) {
        img.put_pixel(x as u32, (MARGIN_TOP + plot_h) as u32, axis);
    }

    let bars: Vec<(&str, f64, image::Rgb<u8>)> = ROW_LABELS
        .iter()
        .map(|row| {
            let value = match row.1 {
                Some(qtype) => report.per_type.get(&qtype).map_or(0.0, |m| m.accuracy),
                None if row.0 == "AA" => report.aa,
                None => report.oa,
            };
            let color = if row.1.is_some() { type_color } else { summary_color };
            let label = if row.0 == "Rural/Urban" { "R/URB" } else { row.0 };
            (label, value, color)
        })
        .collect();

    let slot = plot_w / bars.len() as i64;
    let bar_w = (slot * 3) / 5;
    for (i, (label, value, color)) in bars.iter().enumerate() {
        let x0 = MARGIN_LEFT + slot * i as i64 + (slot - bar_w) / 2;
        let y_top = y_of(*value);
        for x in x0..(x0 + bar_w) {
            for y in y_top..(MARGIN_TOP + plot_h) {
                img.put_pixel(x as u32, y as u32, *color);
            }
        }
        let value_text = format!("{value:.2}");
        let vx = x0 + bar_w / 2 - font::text_width(&value_text, 1) as i64 / 2;
        font::draw_text(&mut img, &value_text, vx, y_top - 10, 1, axis);
        let lx = x0 + bar_w / 2 - font::text_width(label, 1) as i64 / 2;
        font::draw_text(&mut img, label, lx, MARGIN_TOP + plot_h + 6, 1, axis);
    }

    let title = report.setting.to_uppercase();
    let tx = (CHART_WIDTH as i64 - font::text_width(&title, 2) as i64) / 2;
    font::draw_text(&mut img, &title, tx.max(2), 6, 2, axis);
    img
}

/// Writes the bar chart PNG for one report.
pub fn save_chart(report: &MetricsReport, path: &Path) -> Result<()> {
    render_chart(report).save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
