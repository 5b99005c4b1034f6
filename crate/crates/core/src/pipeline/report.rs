//! Static SVG charts of the analytics tables. Coordinates are printed with
//! two decimals so the files are byte-stable.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use serde::Deserialize;

use super::stages::{LORENZ, SECTOR_SHARES, TRADE_VOLUME};
use super::tables::read_csv;
use super::{PipelineError, RunContext, Stage};
use crate::data_model::Year;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Canvas {
    svg: String,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Canvas {
    fn new(title: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let mut svg = String::new();
        writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        )
        .unwrap();
        writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
        writeln!(svg, r#"<text x="{:.2}" y="22" font-size="14">{}</text>"#, LEFT, escape(title)).unwrap();
        let (mut y0, mut y1) = y;
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        if y0 > 0.0 {
            y0 = 0.0;
        }
        let (x0, mut x1) = x;
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        let mut c = Self { svg, x0, x1, y0, y1 };
        c.axes();
        c
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }

    fn axes(&mut self) {
        let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        writeln!(self.svg, r#"<path d="M{l:.2} {t:.2}V{b:.2}H{r:.2}" fill="none" stroke="black"/>"#).unwrap();
        for k in 0..=4 {
            let v = self.y0 + (self.y1 - self.y0) * k as f64 / 4.0;
            let y = self.py(v);
            writeln!(
                self.svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                l - 6.0,
                y + 4.0,
                short(v)
            )
            .unwrap();
        }
    }

    fn x_label(&mut self, x: f64, label: &str) {
        writeln!(
            self.svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            self.px(x),
            H - BOTTOM + 18.0,
            escape(label)
        )
        .unwrap();
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool) {
        let d: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y)))
            .collect();
        let dash = if dashed { r#" stroke-dasharray="5 4""# } else { "" };
        writeln!(
            self.svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
            d.join(" ")
        )
        .unwrap();
    }

    fn rect(&mut self, x: f64, width: f64, y_lo: f64, y_hi: f64, color: &str) {
        let (top, bottom) = (self.py(y_hi), self.py(y_lo));
        writeln!(
            self.svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            self.px(x) - width / 2.0,
            top,
            width,
            (bottom - top).max(0.0)
        )
        .unwrap();
    }

    fn legend(&mut self, entries: &[(String, &str)]) {
        for (i, (name, color)) in entries.iter().enumerate() {
            let y = TOP + 14.0 * i as f64;
            let x = W - RIGHT + 12.0;
            writeln!(
                self.svg,
                r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                y,
                x + 14.0,
                y + 9.0,
                escape(name)
            )
            .unwrap();
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

/// Compact tick label: 1.2e9 → "1.2B".
fn short(v: f64) -> String {
    let a = v.abs();
    let (d, s) = if a >= 1e12 {
        (1e12, "T")
    } else if a >= 1e9 {
        (1e9, "B")
    } else if a >= 1e6 {
        (1e6, "M")
    } else if a >= 1e3 {
        (1e3, "k")
    } else {
        (1.0, "")
    };
    format!("{:.2}{s}", v / d)
}

fn write(path: &Path, text: String) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

#[derive(Deserialize)]
struct VolumeRow {
    year: Year,
    trade_usd: f64,
    lower_usd: f64,
    upper_usd: f64,
}

#[derive(Deserialize)]
struct ShareRow {
    year: Year,
    sector: String,
    share: f64,
}

#[derive(Deserialize)]
struct LorenzRow {
    year: Year,
    kind: String,
    x: f64,
    y: f64,
}

fn trade_volume_chart(rows: &[VolumeRow]) -> String {
    let (lo, hi) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.year as f64, b.year as f64),
        _ => (0.0, 1.0),
    };
    let ymax = rows.iter().map(|r| r.upper_usd).fold(0.0, f64::max);
    let mut c = Canvas::new("Digital trade volume (USD)", (lo - 0.5, hi + 0.5), (0.0, ymax * 1.05));
    for r in rows {
        c.x_label(r.year as f64, &r.year.to_string());
    }
    let line = |f: fn(&VolumeRow) -> f64| rows.iter().map(|r| (r.year as f64, f(r))).collect::<Vec<_>>();
    c.polyline(&line(|r| r.lower_usd), PALETTE[7], true);
    c.polyline(&line(|r| r.upper_usd), PALETTE[7], true);
    c.polyline(&line(|r| r.trade_usd), PALETTE[0], false);
    c.legend(&[("estimate".into(), PALETTE[0]), ("bounds".into(), PALETTE[7])]);
    c.finish()
}

fn sector_chart(rows: &[ShareRow]) -> String {
    let mut by_year: BTreeMap<Year, Vec<&ShareRow>> = BTreeMap::new();
    for r in rows {
        by_year.entry(r.year).or_default().push(r);
    }
    let sectors: Vec<&str> = {
        let mut s: Vec<&str> = rows.iter().map(|r| r.sector.as_str()).collect();
        s.sort();
        s.dedup();
        s
    };
    let color = |s: &str| PALETTE[sectors.iter().position(|x| *x == s).unwrap_or(0) % PALETTE.len()];
    let (lo, hi) = match (by_year.keys().next(), by_year.keys().last()) {
        (Some(a), Some(b)) => (*a as f64, *b as f64),
        _ => (0.0, 1.0),
    };
    let mut c = Canvas::new("Sector shares of digital trade", (lo - 0.5, hi + 0.5), (0.0, 1.0));
    let width = ((W - LEFT - RIGHT) / (by_year.len().max(1) as f64 + 1.0)).min(60.0);
    for (y, rs) in &by_year {
        c.x_label(*y as f64, &y.to_string());
        let mut base = 0.0;
        for r in rs {
            c.rect(*y as f64, width, base, base + r.share, color(&r.sector));
            base += r.share;
        }
    }
    let legend: Vec<(String, &str)> = sectors.iter().map(|s| (s.to_string(), color(s))).collect();
    c.legend(&legend);
    c.finish()
}

fn lorenz_chart(rows: &[LorenzRow]) -> String {
    let year = rows.iter().map(|r| r.year).max();
    let title = match year {
        Some(y) => format!("Lorenz curves of exports, {y}"),
        None => "Lorenz curves of exports".to_string(),
    };
    let mut c = Canvas::new(&title, (0.0, 1.0), (0.0, 1.0));
    c.polyline(&[(0.0, 0.0), (1.0, 1.0)], PALETTE[7], true);
    let mut curves: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| Some(r.year) == year) {
        curves.entry(r.kind.as_str()).or_default().push((r.x, r.y));
    }
    let mut legend = Vec::new();
    for (i, (kind, pts)) in curves.iter().enumerate() {
        c.polyline(pts, PALETTE[i % PALETTE.len()], false);
        legend.push((kind.to_string(), PALETTE[i % PALETTE.len()]));
    }
    c.legend(&legend);
    for k in 0..=4 {
        let x = k as f64 / 4.0;
        c.x_label(x, &format!("{x:.2}"));
    }
    c.finish()
}

pub(crate) fn write_charts(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let volume: Vec<VolumeRow> = read_csv(&ctx.require(TRADE_VOLUME, Stage::Analyze)?)?;
    let shares: Vec<ShareRow> = read_csv(&ctx.require(SECTOR_SHARES, Stage::Analyze)?)?;
    write(&ctx.path("trade_volume.svg"), trade_volume_chart(&volume))?;
    write(&ctx.path("sector_shares.svg"), sector_chart(&shares))?;
    let lorenz_path = ctx.path(LORENZ);
    if lorenz_path.is_file() {
        let rows: Vec<LorenzRow> = read_csv(&lorenz_path)?;
        write(&ctx.path("lorenz.svg"), lorenz_chart(&rows))?;
    } else {
        ctx.note(Stage::Report, "no Lorenz table; concentration analytics disabled");
    }
    Ok(())
}
