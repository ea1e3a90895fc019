//! SVG plots of the CSV artifacts.
//!
//! Plots are rendered at a fixed size from the CSV text alone, so the same
//! input always produces the same file.

use crate::output::CsvTable;
use crate::{Error, Result};
use plotters::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const WIDTH: u32 = 800;
pub const HEIGHT: u32 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Entropy against time: every non-`t` column of a sieve curves file, or
    /// the `entropy` column of a trajectory file.
    EntropyCurves,
    /// `|ρ_nm|` on a log axis against `t²`, from a trajectory file.
    OffdiagDecay,
    /// `Ω̃²`, `γ`, `D` and `f` against time, from a coefficients file.
    CoefficientTraces,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy_curves" => Ok(PlotKind::EntropyCurves),
            "offdiag_decay" => Ok(PlotKind::OffdiagDecay),
            "coefficient_traces" => Ok(PlotKind::CoefficientTraces),
            _ => Err(Error::InvalidParameter(format!(
                "unknown plot kind `{s}` (entropy_curves, offdiag_decay, coefficient_traces)"
            ))),
        }
    }
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

struct Figure {
    title: String,
    x_label: String,
    y_label: String,
    log_y: bool,
    series: Vec<Series>,
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

fn require(table: &CsvTable, name: &str, kind: &str) -> Result<Vec<f64>> {
    if table.column_index(name).is_none() {
        return Err(Error::Schema(format!("{kind} needs a `{name}` column")));
    }
    table.column(name)
}

fn figure(table: &CsvTable, kind: PlotKind) -> Result<Figure> {
    match kind {
        PlotKind::EntropyCurves => {
            let t = require(table, "t", "entropy_curves")?;
            let names: Vec<String> = if table.column_index("entropy").is_some() {
                vec!["entropy".into()]
            } else {
                table.header.iter().filter(|h| *h != "t").cloned().collect()
            };
            if names.is_empty() {
                return Err(Error::Schema(
                    "entropy_curves needs at least one curve column".into(),
                ));
            }
            let series = names
                .into_iter()
                .map(|n| {
                    let y = table.column(&n)?;
                    Ok(Series {
                        points: t.iter().copied().zip(y).collect(),
                        name: n,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Figure {
                title: "Entropy production".into(),
                x_label: "t".into(),
                y_label: "entropy".into(),
                log_y: false,
                series,
            })
        }
        PlotKind::OffdiagDecay => {
            let t = require(table, "t", "offdiag_decay")?;
            let mut series = Vec::new();
            for h in &table.header {
                let Some(idx) = h.strip_prefix("re_rho_") else {
                    continue;
                };
                let re = table.column(h)?;
                let im = require(table, &format!("im_rho_{idx}"), "offdiag_decay")?;
                let points = t
                    .iter()
                    .zip(re.iter().zip(&im))
                    .map(|(t, (a, b))| (t * t, a.hypot(*b)))
                    .filter(|(_, v)| *v > 0.0)
                    .collect();
                series.push(Series {
                    name: format!("|rho_{idx}|"),
                    points,
                });
            }
            if series.is_empty() {
                return Err(Error::Schema(
                    "offdiag_decay needs re_rho_n_m / im_rho_n_m columns".into(),
                ));
            }
            Ok(Figure {
                title: "Off-diagonal decay".into(),
                x_label: "t^2".into(),
                y_label: "|rho_nm|".into(),
                log_y: true,
                series,
            })
        }
        PlotKind::CoefficientTraces => {
            let t = require(table, "t", "coefficient_traces")?;
            let mut series = Vec::new();
            for name in ["omega_ren_sq", "gamma", "D", "f"] {
                let y = require(table, name, "coefficient_traces")?;
                series.push(Series {
                    name: name.into(),
                    points: t.iter().copied().zip(y).collect(),
                });
            }
            Ok(Figure {
                title: "Coefficients".into(),
                x_label: "t".into(),
                y_label: "value".into(),
                log_y: false,
                series,
            })
        }
    }
}

fn bounds(points: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = points
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn render(fig: &Figure) -> Result<String> {
    let mut out = String::new();
    {
        let root = SVGBackend::with_string(&mut out, (WIDTH, HEIGHT)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let xs = bounds(fig.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let ys = bounds(fig.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let mut builder = ChartBuilder::on(&root);
        builder
            .caption(&fig.title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70);

        macro_rules! draw {
            ($chart:expr) => {{
                let mut chart = $chart;
                chart
                    .configure_mesh()
                    .x_desc(fig.x_label.as_str())
                    .y_desc(fig.y_label.as_str())
                    .draw()
                    .map_err(plot_err)?;
                for (i, s) in fig.series.iter().enumerate() {
                    let color = Palette99::pick(i).to_rgba();
                    chart
                        .draw_series(LineSeries::new(
                            s.points.iter().copied(),
                            color.stroke_width(2),
                        ))
                        .map_err(plot_err)?
                        .label(s.name.as_str())
                        .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
                }
                if fig.series.len() <= 24 {
                    chart
                        .configure_series_labels()
                        .background_style(WHITE.mix(0.8))
                        .border_style(BLACK)
                        .draw()
                        .map_err(plot_err)?;
                }
            }};
        }

        if fig.log_y {
            let lo = ys.0.max(ys.1 * 1e-300).max(f64::MIN_POSITIVE);
            draw!(builder
                .build_cartesian_2d(xs.0..xs.1, (lo..ys.1.max(lo * 10.0)).log_scale())
                .map_err(plot_err)?);
        } else {
            draw!(builder
                .build_cartesian_2d(xs.0..xs.1, ys.0..ys.1)
                .map_err(plot_err)?);
        }
        root.present().map_err(plot_err)?;
    }
    Ok(out)
}

/// Render `table` as an SVG document.
pub fn plot_table(table: &CsvTable, kind: PlotKind) -> Result<String> {
    render(&figure(table, kind)?)
}

/// Read a CSV file, plot it and write the SVG to `output`.
pub fn emit_plot(input: &Path, kind: PlotKind, output: &Path) -> Result<()> {
    let text = std::fs::read_to_string(input)?;
    let svg = plot_table(&CsvTable::parse(&text)?, kind)?;
    std::fs::write(output, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::fmt_f64;

    fn curves() -> CsvTable {
        let mut t = CsvTable::new(&["t", "number:n=0", "coherent:re=1:im=0"]);
        for i in 0..20 {
            let x = i as f64 * 0.1;
            t.push(vec![fmt_f64(x), fmt_f64(0.0), fmt_f64(x * x * 0.01)]);
        }
        t
    }

    #[test]
    fn entropy_curves_draw_every_column() {
        let svg = plot_table(&curves(), PlotKind::EntropyCurves).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("number:n=0") && svg.contains("coherent:re=1:im=0"));
        assert_eq!(svg, plot_table(&curves(), PlotKind::EntropyCurves).unwrap());
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let err = plot_table(&curves(), PlotKind::CoefficientTraces).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(plot_table(&curves(), PlotKind::OffdiagDecay).is_err());
    }

    #[test]
    fn offdiag_decay_uses_log_axis() {
        let mut t = CsvTable::new(&["t", "re_rho_0_1", "im_rho_0_1"]);
        for i in 0..30 {
            let x = i as f64 * 0.1;
            t.push(vec![
                fmt_f64(x),
                fmt_f64(0.5 * (-x * x).exp()),
                fmt_f64(0.0),
            ]);
        }
        let svg = plot_table(&t, PlotKind::OffdiagDecay).unwrap();
        assert!(svg.contains("t^2"));
    }

    #[test]
    fn kind_names_parse() {
        assert_eq!(
            "offdiag_decay".parse::<PlotKind>().unwrap(),
            PlotKind::OffdiagDecay
        );
        assert!("bars".parse::<PlotKind>().is_err());
    }
}
