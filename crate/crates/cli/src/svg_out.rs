//! Self-contained SVG line plots with a logarithmic y axis.
//!
//! One chart holds any number of named series; the per-run helper plots the
//! four always-present metrics of a record list, and sweeps combine one
//! metric across runs. Points with non-positive or non-finite y are dropped
//! (they have no place on a log axis), so a series can legally render as an
//! empty polyline-less legend entry.

use docom_core::MetricsRecord;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Which record field drives the x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XAxis {
    Iteration,
    Floats,
}

impl XAxis {
    pub fn label(self) -> &'static str {
        match self {
            XAxis::Iteration => "iteration",
            XAxis::Floats => "floats transmitted (values only)",
        }
    }

    pub fn of(self, r: &MetricsRecord) -> f64 {
        match self {
            XAxis::Iteration => r.iter as f64,
            XAxis::Floats => r.floats_values_only as f64,
        }
    }
}

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 600.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 60.0;
const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a multi-series log-y chart to an SVG document string.
pub fn plot(series: &[Series], title: &str, x_label: &str) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() && y > 0.0 {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    let (x_min, x_max) = bounds(&xs, (0.0, 1.0));
    let (y_min, y_max) = bounds(&ys, (0.1, 1.0));
    let (ly_min, ly_max) = (y_min.log10().floor(), y_max.log10().ceil());
    let (ly_min, ly_max) = if ly_max - ly_min < 1.0 {
        (ly_min - 1.0, ly_min + 1.0)
    } else {
        (ly_min, ly_max)
    };
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min).max(f64::MIN_POSITIVE) * plot_w;
    let py = |y: f64| MARGIN_T + (ly_max - y.log10()) / (ly_max - ly_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"28\" text-anchor=\"middle\" font-size=\"17\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        esc(title)
    ));

    // Frame and y-axis decade grid.
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
         fill=\"none\" stroke=\"#333\"/>\n"
    ));
    let decades = (ly_max - ly_min) as i64;
    let tick_step = (decades as f64 / 10.0).ceil().max(1.0) as i64;
    let mut exp = ly_min as i64;
    while exp as f64 <= ly_max {
        let y = py(10f64.powi(exp as i32));
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#ddd\"/>\n",
            MARGIN_L + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{exp}</text>\n",
            MARGIN_L - 8.0,
            y + 4.0
        ));
        exp += tick_step;
    }
    // x ticks.
    for i in 0..=5 {
        let x = x_min + (x_max - x_min) * i as f64 / 5.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            px(x),
            MARGIN_T + plot_h + 20.0,
            format_tick(x)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 15.0,
        esc(x_label)
    ));

    // Series and legend.
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite() && *y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if !pts.is_empty() {
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" \
                 points=\"{}\"/>\n",
                pts.join(" ")
            ));
        }
        let ly = MARGIN_T + 14.0 + idx as f64 * 20.0;
        let lx = MARGIN_L + plot_w + 12.0;
        svg.push_str(&format!(
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"14\" height=\"4\" fill=\"{color}\"/>\n",
            ly - 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{ly:.1}\">{}</text>\n",
            lx + 20.0,
            esc(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: &[f64], fallback: (f64, f64)) -> (f64, f64) {
    if values.is_empty() {
        return fallback;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        (min - 0.5, max + 0.5)
    } else {
        (min, max)
    }
}

fn format_tick(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else if x.abs() >= 1e6 || x.abs() < 1e-2 {
        format!("{x:.1e}")
    } else if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.2}")
    }
}

/// The per-run chart: the four always-present metrics on one log-y canvas.
pub fn run_chart(records: &[MetricsRecord], title: &str, x_axis: XAxis) -> String {
    let pick = |f: fn(&MetricsRecord) -> f64, label: &str| Series {
        label: label.to_string(),
        points: records.iter().map(|r| (x_axis.of(r), f(r))).collect(),
    };
    let series = [
        pick(|r| r.worst_loss, "worst_loss"),
        pick(|r| r.mean_loss, "mean_loss"),
        pick(|r| r.consensus_gap, "consensus_gap"),
        pick(|r| r.grad_norm_sq, "grad_norm_sq"),
    ];
    plot(&series, title, x_axis.label())
}
