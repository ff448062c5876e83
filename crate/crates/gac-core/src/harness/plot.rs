//! Minimal SVG line charts from result CSVs.
//!
//! One polyline per measure, median over seeds at each sweep value, optional
//! first/third-quartile bands, linear or log axes.

use crate::error::{Error, Result};
use crate::harness::experiment::ResultRow;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotSpec {
    /// Restrict to these measures; all when empty.
    #[serde(default)]
    pub measures: Vec<String>,
    /// Restrict to one sweep_name (needed when an experiment has several).
    #[serde(default)]
    pub sweep_name: Option<String>,
    #[serde(default)]
    pub logx: bool,
    #[serde(default)]
    pub logy: bool,
    /// Draw first/third quartile bands when more than one seed is present.
    #[serde(default)]
    pub bands: bool,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
}

fn default_width() -> u32 {
    640
}

fn default_height() -> u32 {
    420
}

impl Default for PlotSpec {
    fn default() -> Self {
        PlotSpec {
            measures: Vec::new(),
            sweep_name: None,
            logx: false,
            logy: false,
            bands: false,
            title: None,
            width: default_width(),
            height: default_height(),
        }
    }
}

impl PlotSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

#[derive(Debug, Clone)]
struct Series {
    measure: String,
    /// (sweep_value, q1, median, q3)
    points: Vec<(f64, f64, f64, f64)>,
}

/// Renders the rows and returns (svg text, warnings).
pub fn render_plot(rows: &[ResultRow], spec: &PlotSpec) -> Result<(String, Vec<String>)> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no rows to plot".into()));
    }
    let mut warnings = Vec::new();

    let filtered: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| spec.measures.is_empty() || spec.measures.contains(&r.measure))
        .filter(|r| spec.sweep_name.as_ref().is_none_or(|s| &r.sweep_name == s))
        .collect();
    if filtered.is_empty() {
        return Err(Error::EmptyInput(
            "no rows left after measure/sweep filters".into(),
        ));
    }

    let mut measures: Vec<String> = filtered.iter().map(|r| r.measure.clone()).collect();
    measures.sort();
    measures.dedup();

    let n_seeds = {
        let mut seeds: Vec<u64> = filtered.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        seeds.len()
    };
    let mut bands = spec.bands;
    if bands && n_seeds < 2 {
        warnings.push("quantile bands requested with a single seed; suppressed".into());
        bands = false;
    }

    let mut series = Vec::new();
    for measure in &measures {
        let mut by_value: Vec<(f64, Vec<f64>)> = Vec::new();
        for r in filtered.iter().filter(|r| &r.measure == measure) {
            match by_value
                .iter_mut()
                .find(|(v, _)| (*v - r.sweep_value).abs() < 1e-12)
            {
                Some((_, vals)) => vals.push(r.value),
                None => by_value.push((r.sweep_value, vec![r.value])),
            }
        }
        by_value.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite sweep values"));
        let points = by_value
            .into_iter()
            .map(|(v, mut vals)| {
                vals.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
                let q = |p: f64| -> f64 {
                    let idx = p * (vals.len() - 1) as f64;
                    let lo = idx.floor() as usize;
                    let hi = idx.ceil() as usize;
                    let frac = idx - lo as f64;
                    vals[lo] * (1.0 - frac) + vals[hi] * frac
                };
                (v, q(0.25), q(0.5), q(0.75))
            })
            .collect();
        series.push(Series {
            measure: measure.clone(),
            points,
        });
    }

    Ok((draw_svg(&series, spec, bands)?, warnings))
}

/// Reads a result CSV and writes the SVG.
pub fn emit_plot(csv_path: &Path, spec: &PlotSpec, out_path: &Path) -> Result<Vec<String>> {
    let rows = crate::harness::experiment::parse_csv(csv_path)?;
    let (svg, warnings) = render_plot(&rows, spec)?;
    if let Some(dir) = out_path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out_path, svg)?;
    Ok(warnings)
}

struct Axis {
    min: f64,
    max: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Result<Axis> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            if log && v <= 0.0 {
                return Err(Error::Domain(
                    "log axis requested but data contains nonpositive values".into(),
                ));
            }
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::Domain("non-finite plot data".into()));
        }
        if min == max {
            // Degenerate span; widen symmetrically.
            let pad = if min == 0.0 { 1.0 } else { min.abs() * 0.1 };
            min -= pad;
            max += pad;
            if log {
                min = min.max(max / 10.0);
            }
        }
        Ok(Axis { min, max, log })
    }

    /// Fraction of the span in [0, 1].
    fn fraction(&self, v: f64) -> f64 {
        if self.log {
            (v.ln() - self.min.ln()) / (self.max.ln() - self.min.ln())
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }
}

fn draw_svg(series: &[Series], spec: &PlotSpec, bands: bool) -> Result<String> {
    let w = spec.width as f64;
    let h = spec.height as f64;
    let (ml, mr, mt, mb) = (60.0, 20.0, 40.0, 46.0);
    let plot_w = w - ml - mr;
    let plot_h = h - mt - mb;

    let x_axis = Axis::new(
        series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
        spec.logx,
    )?;
    let y_values = series.iter().flat_map(|s| {
        s.points.iter().flat_map(move |p| {
            if bands {
                vec![p.1, p.2, p.3]
            } else {
                vec![p.2]
            }
        })
    });
    let y_axis = Axis::new(y_values, spec.logy)?;

    let to_x = |v: f64| ml + x_axis.fraction(v) * plot_w;
    let to_y = |v: f64| mt + (1.0 - y_axis.fraction(v)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         viewBox=\"0 0 {} {}\">\n",
        spec.width, spec.height, spec.width, spec.height
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
        spec.width, spec.height
    ));
    if let Some(title) = &spec.title {
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" \
             font-family=\"sans-serif\">{}</text>\n",
            w / 2.0,
            xml_escape(title)
        ));
    }
    // Axes.
    svg.push_str(&format!(
        "  <line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + plot_h,
        ml + plot_w,
        mt + plot_h
    ));
    svg.push_str(&format!(
        "  <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + plot_h
    ));
    // Min/max tick labels cover the data range.
    for (v, anchor) in [(x_axis.min, "start"), (x_axis.max, "end")] {
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\" font-size=\"11\" \
             font-family=\"sans-serif\">{}</text>\n",
            to_x(v),
            mt + plot_h + 16.0,
            format_tick(v)
        ));
    }
    for v in [y_axis.min, y_axis.max] {
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\" \
             font-family=\"sans-serif\">{}</text>\n",
            ml - 6.0,
            to_y(v) + 4.0,
            format_tick(v)
        ));
    }

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if bands && s.points.len() > 1 {
            let mut d = String::from("M");
            for p in &s.points {
                d.push_str(&format!(" {} {}", to_x(p.0), to_y(p.3)));
            }
            for p in s.points.iter().rev() {
                d.push_str(&format!(" L {} {}", to_x(p.0), to_y(p.1)));
            }
            d.push('Z');
            svg.push_str(&format!(
                "  <path d=\"{d}\" fill=\"{color}\" opacity=\"0.15\" stroke=\"none\"/>\n"
            ));
        }
        let points: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{},{}", to_x(p.0), to_y(p.2)))
            .collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            points.join(" ")
        ));
        // Legend entry.
        let ly = mt + 14.0 * i as f64;
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" \
             stroke-width=\"3\"/>\n",
            ml + plot_w - 90.0,
            ml + plot_w - 70.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
            ml + plot_w - 64.0,
            ly + 4.0,
            xml_escape(&s.measure)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 && v.abs() < 10000.0 {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, sweep_value: f64, measure: &str, value: f64) -> ResultRow {
        ResultRow {
            experiment: "test".into(),
            seed,
            sweep_name: "x".into(),
            sweep_value,
            measure: measure.into(),
            value,
            n: 10,
            runtime_ms: 0,
        }
    }

    #[test]
    fn one_series_two_points_single_polyline() {
        let rows = vec![row(0, 1.0, "gac", 0.2), row(0, 2.0, "gac", 0.6)];
        let (svg, warnings) = render_plot(&rows, &PlotSpec::default()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(warnings.is_empty());
    }

    #[test]
    fn bands_suppressed_for_single_seed() {
        let rows = vec![row(0, 1.0, "gac", 0.2), row(0, 2.0, "gac", 0.6)];
        let spec = PlotSpec {
            bands: true,
            ..PlotSpec::default()
        };
        let (svg, warnings) = render_plot(&rows, &spec).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(!svg.contains("<path"));
    }

    #[test]
    fn bands_drawn_with_multiple_seeds() {
        let mut rows = Vec::new();
        for seed in 0..4 {
            rows.push(row(seed, 1.0, "gac", 0.2 + seed as f64 * 0.01));
            rows.push(row(seed, 2.0, "gac", 0.5 + seed as f64 * 0.01));
        }
        let spec = PlotSpec {
            bands: true,
            ..PlotSpec::default()
        };
        let (svg, warnings) = render_plot(&rows, &spec).unwrap();
        assert!(warnings.is_empty());
        assert!(svg.contains("<path"));
    }

    // Bounding-box oracle: tick labels carry the data min/max.
    #[test]
    fn axis_labels_cover_data_range() {
        let rows = vec![
            row(0, 1.0, "gac", 0.25),
            row(0, 8.0, "gac", 0.75),
            row(0, 4.0, "gac", 0.5),
        ];
        let (svg, _) = render_plot(&rows, &PlotSpec::default()).unwrap();
        assert!(svg.contains(">1<"));
        assert!(svg.contains(">8<"));
        assert!(svg.contains(">0.25<"));
        assert!(svg.contains(">0.75<"));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(render_plot(&[], &PlotSpec::default()).is_err());
    }

    #[test]
    fn log_axis_rejects_nonpositive() {
        let rows = vec![row(0, 0.0, "gac", 0.2), row(0, 2.0, "gac", 0.6)];
        let spec = PlotSpec {
            logx: true,
            ..PlotSpec::default()
        };
        assert!(render_plot(&rows, &spec).is_err());
    }
}
