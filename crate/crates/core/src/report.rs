//! Purity tables and the accuracy-per-iteration SVG chart.

use std::fmt::Write as _;

use crate::clustering::{centroid_topk, purity, ClusterModel};
use crate::data::EmbeddingDataset;
use crate::error::Result;
use crate::matching::IterationRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurityRow {
    /// Samples kept per cluster.
    pub subset_size: usize,
    pub total_correct: usize,
    pub accuracy: f64,
}

/// Purity of the centroid-nearest subsets at each requested size.
pub fn purity_table(
    cm: &ClusterModel,
    ds: &EmbeddingDataset,
    sizes: &[usize],
) -> Result<Vec<PurityRow>> {
    sizes
        .iter()
        .map(|&k| {
            let subsets = centroid_topk(cm, ds, k)?;
            let p = purity(&subsets, ds)?;
            Ok(PurityRow {
                subset_size: k,
                total_correct: p.total_correct,
                accuracy: p.accuracy,
            })
        })
        .collect()
}

pub fn render_purity_table(rows: &[PurityRow]) -> String {
    let mut out = String::from("subset size  total correct  K-means acc.\n");
    for r in rows {
        writeln!(
            out,
            "{:>11}  {:>13}  {:>12.4}",
            r.subset_size, r.total_correct, r.accuracy
        )
        .unwrap();
    }
    out
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;

/// Line chart of labeled-set accuracy and best accuracy against iteration.
pub fn accuracy_svg(history: &[IterationRecord]) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let first = history.first().map_or(1, |h| h.iteration) as f64;
    let last = history.last().map_or(1, |h| h.iteration) as f64;
    let span = (last - first).max(1.0);
    let x = |it: usize| MARGIN_LEFT + (it as f64 - first) / span * plot_w;
    let y = |acc: f64| MARGIN_TOP + (1.0 - acc.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="14">Accuracy per iteration</text>"#,
        WIDTH / 2.0
    )
    .unwrap();

    for tick in 0..=5 {
        let acc = tick as f64 / 5.0;
        let ty = y(acc);
        writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT:.2}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#dddddd"/>"##,
            MARGIN_LEFT + plot_w
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{acc:.1}</text>"#,
            MARGIN_LEFT - 6.0,
            ty + 4.0
        )
        .unwrap();
    }
    for h in history {
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x(h.iteration),
            MARGIN_TOP + plot_h + 16.0,
            h.iteration
        )
        .unwrap();
    }
    writeln!(
        svg,
        r##"<rect x="{MARGIN_LEFT:.2}" y="{MARGIN_TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#333333"/>"##
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    )
    .unwrap();

    type Series = (&'static str, &'static str, fn(&IterationRecord) -> f64);
    let series: [Series; 2] = [
        ("acc_L", "#1f77b4", |h| h.acc_l),
        ("acc_best", "#d62728", |h| h.acc_best),
    ];
    for (s, (name, colour, value)) in series.iter().enumerate() {
        let points: Vec<String> = history
            .iter()
            .map(|h| format!("{:.2},{:.2}", x(h.iteration), y(value(h))))
            .collect();
        writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            points.join(" ")
        )
        .unwrap();
        for h in history {
            writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#,
                x(h.iteration),
                y(value(h))
            )
            .unwrap();
        }
        let ly = MARGIN_TOP + 16.0 + s as f64 * 16.0;
        let lx = MARGIN_LEFT + plot_w - 90.0;
        writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}">{name}</text>"#,
            lx + 24.0
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}
