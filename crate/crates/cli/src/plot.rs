//! Line and bar charts from CSV tables, rendered as standalone SVG.

use std::fmt::Write;
use std::path::Path;

use crate::{CmdResult, Failure};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// A CSV table: first column as x values or labels, the rest as series.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub x_name: String,
    pub labels: Vec<String>,
    pub series: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn read(path: &Path) -> CmdResult<Table> {
        let mut r = csv::Reader::from_path(path)?;
        let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let rows: Vec<csv::StringRecord> = r.records().collect::<Result<_, _>>()?;
        Self::from_rows(&headers, &rows)
    }

    fn from_rows(headers: &[String], rows: &[csv::StringRecord]) -> CmdResult<Table> {
        if headers.len() < 2 {
            return Err(Failure::usage("plot needs at least two columns"));
        }
        if rows.is_empty() {
            return Err(Failure::usage("plot input has no rows"));
        }
        let labels = rows.iter().map(|r| r.get(0).unwrap_or("").trim().to_string()).collect();
        let mut series = Vec::new();
        for (j, name) in headers.iter().enumerate().skip(1) {
            let vals: Vec<f64> = rows
                .iter()
                .map(|r| r.get(j).and_then(|v| v.trim().parse().ok()).unwrap_or(f64::NAN))
                .collect();
            if vals.iter().any(|v| v.is_finite()) {
                series.push((name.clone(), vals));
            }
        }
        if series.is_empty() {
            return Err(Failure::usage("plot input has no numeric column after the first"));
        }
        Ok(Table { x_name: headers[0].clone(), labels, series })
    }

    /// Numeric x values when every label parses.
    pub fn numeric_x(&self) -> Option<Vec<f64>> {
        self.labels.iter().map(|l| l.parse().ok()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Line,
    Bar,
}

struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, log: bool, zero: bool) -> Scale {
        let vals: Vec<f64> = values.filter(|v| v.is_finite() && (!log || *v > 0.0)).map(|v| if log { v.log10() } else { v }).collect();
        let mut lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if zero && !log {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        if hi - lo < 1e-300 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        Scale { lo, hi, log }
    }

    fn unit(&self, v: f64) -> Option<f64> {
        let v = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        v.is_finite().then(|| (v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        (0..=4)
            .map(|i| {
                let t = self.lo + (self.hi - self.lo) * i as f64 / 4.0;
                let v = if self.log { 10f64.powf(t) } else { t };
                (i as f64 / 4.0, format!("{v:.3e}"))
            })
            .collect()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn px(u: f64) -> f64 {
    LEFT + u * (WIDTH - LEFT - RIGHT)
}

fn py(u: f64) -> f64 {
    HEIGHT - BOTTOM - u * (HEIGHT - TOP - BOTTOM)
}

/// Renders the table; `kind` defaults to a line chart for numeric x, bars otherwise.
pub fn render(t: &Table, kind: Option<Kind>, log_y: bool, title: &str) -> CmdResult<String> {
    let xs = t.numeric_x();
    let kind = kind.unwrap_or(if xs.is_some() { Kind::Line } else { Kind::Bar });
    let xs = match (kind, xs) {
        (Kind::Line, Some(xs)) => xs,
        (Kind::Line, None) => return Err(Failure::usage("line plot needs a numeric first column")),
        (Kind::Bar, _) => Vec::new(),
    };
    let ys = Scale::new(t.series.iter().flat_map(|s| s.1.iter().copied()), log_y, kind == Kind::Bar);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, px(0.5), escape(title));
    let (x0, x1, y0, y1) = (px(0.0), px(1.0), py(0.0), py(1.0));
    let _ = writeln!(svg, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#);
    for (u, label) in ys.ticks() {
        let y = py(u);
        let _ = writeln!(svg, r##"<line x1="{}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/>"##, x0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{label}</text>"#, x0 - 4.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, px(0.5), HEIGHT - 12.0, escape(&t.x_name));
    match kind {
        Kind::Line => {
            let xscale = Scale::new(xs.iter().copied(), false, false);
            for (u, label) in xscale.ticks() {
                let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{label}</text>"#, px(u), y0 + 16.0);
            }
            for (i, (_, vals)) in t.series.iter().enumerate() {
                let pts: Vec<String> = xs
                    .iter()
                    .zip(vals)
                    .filter_map(|(&x, &y)| Some(format!("{:.2},{:.2}", px(xscale.unit(x)?), py(ys.unit(y)?))))
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                    pts.join(" "),
                    COLORS[i % COLORS.len()]
                );
            }
        }
        Kind::Bar => {
            let groups = t.labels.len() as f64;
            let ns = t.series.len() as f64;
            let base = py(ys.unit(0.0).unwrap_or(0.0).clamp(0.0, 1.0));
            for (g, label) in t.labels.iter().enumerate() {
                let gx = px(g as f64 / groups);
                let gw = (x1 - x0) / groups;
                let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, gx + gw / 2.0, y0 + 16.0, escape(label));
                for (i, (_, vals)) in t.series.iter().enumerate() {
                    let Some(u) = ys.unit(vals[g]) else { continue };
                    let top = py(u.clamp(0.0, 1.0));
                    let bw = 0.8 * gw / ns;
                    let bx = gx + 0.1 * gw + i as f64 * bw;
                    let _ = writeln!(
                        svg,
                        r#"<rect x="{bx:.2}" y="{:.2}" width="{bw:.2}" height="{:.2}" fill="{}"/>"#,
                        top.min(base),
                        (base - top).abs(),
                        COLORS[i % COLORS.len()]
                    );
                }
            }
        }
    }
    for (i, (name, _)) in t.series.iter().enumerate() {
        let y = TOP + 10.0 + 16.0 * i as f64;
        let lx = x1 + 10.0;
        let _ = writeln!(svg, r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/>"#, y - 9.0, COLORS[i % COLORS.len()]);
        let _ = writeln!(svg, r#"<text x="{}" y="{y}">{}</text>"#, lx + 14.0, escape(name));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(csv: &str) -> Table {
        let mut r = csv::Reader::from_reader(csv.as_bytes());
        let headers: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
        let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        Table::from_rows(&headers, &rows).unwrap()
    }

    #[test]
    fn numeric_first_column_draws_lines() {
        let t = table("step,loss\n1,0.5\n2,0.25\n3,0.1\n");
        let svg = render(&t, None, true, "loss").unwrap();
        assert!(svg.contains("<polyline"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn text_labels_draw_bars() {
        let t = table("model,params\nfno,10\ncfno,12\n");
        let svg = render(&t, None, false, "p").unwrap();
        assert_eq!(svg.matches("<rect x=").count(), 2 + 1);
    }

    #[test]
    fn non_numeric_columns_are_dropped() {
        let t = table("op,size,tag,median\ngp2d,16,a,1e-3\n");
        assert_eq!(t.series.len(), 2);
        assert_eq!(t.series[1].0, "median");
    }

    #[test]
    fn labels_are_escaped() {
        let t = table("k,v\n<a>,1\n");
        let svg = render(&t, Some(Kind::Bar), false, "a&b").unwrap();
        assert!(svg.contains("&lt;a&gt;") && svg.contains("a&amp;b"));
    }
}
