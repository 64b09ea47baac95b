//! Hand-written SVG line charts: per-method mean curve with a shaded
//! min/max band across runs.

use std::collections::BTreeMap;

use crate::error::{QboError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    CumulativeRegret,
    IncumbentMae,
}

impl PlotKind {
    pub fn y_label(&self) -> &'static str {
        match self {
            PlotKind::CumulativeRegret => "cumulative regret",
            PlotKind::IncumbentMae => "incumbent MAE (in)",
        }
    }
}

/// One per-query curve with its method label.
#[derive(Debug, Clone)]
pub struct CurveInput {
    pub method: String,
    pub values: Vec<f64>,
}

/// Pointwise mean/min/max across a method's runs, truncated to the
/// shortest run.
#[derive(Debug, Clone)]
pub struct CurveBundle {
    pub method: String,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub truncated: bool,
}

/// Aggregates curves per method. Mismatched lengths are truncated to the
/// common (minimum) length and flagged.
pub fn bundle_curves(curves: &[CurveInput]) -> Result<Vec<CurveBundle>> {
    if curves.is_empty() {
        return Err(QboError::Domain("no curves to plot".into()));
    }
    let mut by_method: BTreeMap<&str, Vec<&CurveInput>> = BTreeMap::new();
    for c in curves {
        by_method.entry(&c.method).or_default().push(c);
    }
    let mut bundles = Vec::new();
    for (method, group) in by_method {
        let min_len = group.iter().map(|c| c.values.len()).min().unwrap_or(0);
        if min_len == 0 {
            return Err(QboError::Domain(format!("method {method} has an empty curve")));
        }
        let truncated = group.iter().any(|c| c.values.len() != min_len);
        let mut mean = vec![0.0; min_len];
        let mut lo = vec![f64::INFINITY; min_len];
        let mut hi = vec![f64::NEG_INFINITY; min_len];
        for c in &group {
            for i in 0..min_len {
                let v = c.values[i];
                mean[i] += v;
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        for v in mean.iter_mut() {
            *v /= group.len() as f64;
        }
        bundles.push(CurveBundle {
            method: method.to_string(),
            mean,
            min: lo,
            max: hi,
            truncated,
        });
    }
    Ok(bundles)
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 55.0;
/// Points per rendered polyline; longer curves are stride-sampled.
const MAX_POINTS: usize = 1000;

const COLORS: [&str; 4] = ["#d95f02", "#1b9e77", "#7570b3", "#e7298a"];

/// Renders bundles to a standalone SVG string.
pub fn render_svg(bundles: &[CurveBundle], kind: PlotKind) -> Result<String> {
    if bundles.is_empty() {
        return Err(QboError::Domain("no curve bundles to render".into()));
    }
    let n = bundles.iter().map(|b| b.mean.len()).max().unwrap();
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for b in bundles {
        for v in b.min.iter().chain(b.max.iter()) {
            y_min = y_min.min(*v);
            y_max = y_max.max(*v);
        }
    }
    if !(y_min.is_finite() && y_max.is_finite()) {
        return Err(QboError::Numerical("non-finite plot range".into()));
    }
    if y_max - y_min < 1e-12 {
        y_max = y_min + 1.0;
    }
    let x_of = |i: usize| MARGIN_L + (i as f64 / (n.max(2) - 1) as f64) * (WIDTH - MARGIN_L - MARGIN_R);
    let y_of =
        |v: f64| HEIGHT - MARGIN_B - (v - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B
    ));
    // Ticks and labels.
    for k in 0..=5 {
        let frac = k as f64 / 5.0;
        let xi = ((n.max(1) - 1) as f64 * frac) as usize;
        let x = x_of(xi.min(n - 1));
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            HEIGHT - MARGIN_B + 20.0,
            xi + 1
        ));
        let yv = y_min + frac * (y_max - y_min);
        let y = y_of(yv);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{MARGIN_L}\" y2=\"{y}\" stroke=\"black\"/>\n",
            MARGIN_L - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{yv:.4}</text>\n",
            MARGIN_L - 8.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">queries</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {})\">{}</text>\n",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        escape_xml(kind.y_label())
    ));

    for (bi, b) in bundles.iter().enumerate() {
        let color = COLORS[bi % COLORS.len()];
        let len = b.mean.len();
        let stride = (len / MAX_POINTS).max(1);
        let indices: Vec<usize> = (0..len)
            .step_by(stride)
            .chain(std::iter::once(len - 1))
            .collect();
        let banded = b.min.iter().zip(&b.max).any(|(a, c)| a != c);
        if banded {
            let mut path = String::from("M");
            for &i in &indices {
                path.push_str(&format!(" {:.2},{:.2}", x_of(i), y_of(b.max[i])));
            }
            for &i in indices.iter().rev() {
                path.push_str(&format!(" L {:.2},{:.2}", x_of(i), y_of(b.min[i])));
            }
            path.push_str(" Z");
            svg.push_str(&format!(
                "<path d=\"{path}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n"
            ));
        }
        let mut points = String::new();
        for &i in &indices {
            points.push_str(&format!("{:.2},{:.2} ", x_of(i), y_of(b.mean[i])));
        }
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            points.trim_end()
        ));
        // Legend entry.
        let ly = MARGIN_T + 18.0 * bi as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            WIDTH - 160.0,
            WIDTH - 130.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
            WIDTH - 124.0,
            ly + 4.0,
            escape_xml(&b.method)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
