// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

//! CSV, JSON and SVG writers for planner curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use amq_core::analysis::{CurvePoint, Shape};
use anyhow::{bail, Context, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Svg,
    Json,
}

/// Reproducibility lines written as `#` comments above CSV data.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub lines: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        let mut m = Manifest::default();
        m.push("tool", format!("amq {}", env!("CARGO_PKG_VERSION")));
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    fn header(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
    }
}

pub const CURVE_COLUMNS: [&str; 11] = [
    "family",
    "m",
    "k",
    "s",
    "index_bits",
    "tag_bits",
    "storage_bits",
    "log2_eps_prime",
    "log2_honest_fp",
    "worst_t",
    "feasible",
];

fn family_name(shape: &Shape) -> &'static str {
    match shape {
        Shape::Bloom { .. } => "bloom",
        Shape::Cuckoo { .. } => "cuckoo",
    }
}

/// CSV text for `points`; floats use the shortest round-trip form.
pub fn curve_csv(points: &[CurvePoint], manifest: &Manifest) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_COLUMNS)?;
    let mut sorted: Vec<&CurvePoint> = points.iter().collect();
    sorted.sort_by_key(|p| p.storage_bits);
    for p in sorted {
        let (m, k, s, ib, tb) = match p.shape {
            Shape::Bloom { m, k } => (m.to_string(), k.to_string(), String::new(), String::new(), String::new()),
            Shape::Cuckoo {
                s,
                index_bits,
                tag_bits,
            } => (String::new(), String::new(), s.to_string(), index_bits.to_string(), tag_bits.to_string()),
        };
        w.write_record([
            family_name(&p.shape).to_string(),
            m,
            k,
            s,
            ib,
            tb,
            p.storage_bits.to_string(),
            p.log2_eps_prime.to_string(),
            p.log2_honest_fp.to_string(),
            p.worst_t.to_string(),
            p.feasible.to_string(),
        ])?;
    }
    let body = String::from_utf8(w.into_inner()?)?;
    Ok(manifest.header() + &body)
}

/// Parses text written by [`curve_csv`].
pub fn parse_curve_csv(text: &str) -> Result<Vec<CurvePoint>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).context("short CSV row");
        let shape = match get(0)? {
            "bloom" => Shape::Bloom {
                m: get(1)?.parse()?,
                k: get(2)?.parse()?,
            },
            "cuckoo" => Shape::Cuckoo {
                s: get(3)?.parse()?,
                index_bits: get(4)?.parse()?,
                tag_bits: get(5)?.parse()?,
            },
            other => bail!("unknown family {other:?}"),
        };
        out.push(CurvePoint {
            shape,
            storage_bits: get(6)?.parse()?,
            log2_eps_prime: get(7)?.parse()?,
            log2_honest_fp: get(8)?.parse()?,
            worst_t: get(9)?.parse()?,
            feasible: get(10)?.parse()?,
        });
    }
    Ok(out)
}

/// Lower envelope per storage size: `(log2 storage, best adversarial, best
/// honest)` over feasible points.
pub fn frontier(points: &[CurvePoint]) -> Vec<(f64, f64, f64)> {
    let mut by_storage: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for p in points.iter().filter(|p| p.feasible) {
        let e = by_storage.entry(p.storage_bits).or_insert((f64::INFINITY, f64::INFINITY));
        e.0 = e.0.min(p.log2_eps_prime);
        e.1 = e.1.min(p.log2_honest_fp);
    }
    by_storage
        .into_iter()
        .map(|(s, (a, h))| ((s as f64).log2(), a, h))
        .collect()
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// SVG with one solid (adversarial) and one dashed (honest) polyline per
/// series. Both axes are log2.
pub fn curve_svg(series: &[(String, Vec<CurvePoint>)], title: &str) -> Result<String> {
    let fronts: Vec<(&str, Vec<(f64, f64, f64)>)> =
        series.iter().map(|(name, pts)| (name.as_str(), frontier(pts))).collect();
    let all: Vec<&(f64, f64, f64)> = fronts.iter().flat_map(|(_, f)| f.iter()).collect();
    if all.is_empty() {
        bail!("no feasible points to plot");
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &&(x, a, h) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        for y in [a, h].into_iter().filter(|y| y.is_finite()) {
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    // keep the plot readable when FP values reach far below any target
    y0 = y0.max(y1 - 128.0).floor();
    y1 = y1.ceil();
    if x1 - x0 < 1.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1.0 {
        y0 = y1 - 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| MARGIN + (y1 - y.max(y0)) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )?;
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    writeln!(s, r#"<g stroke="black" stroke-width="1"><line x1="{l}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{l}" y1="{t}" x2="{l}" y2="{b}"/></g>"#)?;
    let xstep = ((x1 - x0) / 8.0).ceil().max(1.0);
    let mut x = x0.ceil();
    while x <= x1 {
        writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">2^{x}</text>"#,
            px(x),
            b + 16.0
        )?;
        x += xstep;
    }
    let ystep = ((y1 - y0) / 8.0).ceil().max(1.0);
    let mut y = y1;
    while y >= y0 {
        writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="10">2^{y}</text>"#,
            l - 6.0,
            py(y) + 3.0
        )?;
        y -= ystep;
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">storage (bits)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    )?;
    writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">false-positive bound</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )?;
    for (i, (name, front)) in fronts.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let line = |pick: fn(&(f64, f64, f64)) -> f64| {
            front
                .iter()
                .filter(|p| pick(p).is_finite())
                .map(|p| format!("{:.2},{:.2}", px(p.0), py(pick(p))))
                .collect::<Vec<_>>()
                .join(" ")
        };
        writeln!(
            s,
            r#"<polyline class="adversarial" data-series="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(name),
            line(|p| p.1)
        )?;
        writeln!(
            s,
            r#"<polyline class="honest" data-series="{}" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="6 4" points="{}"/>"#,
            escape(name),
            line(|p| p.2)
        )?;
        writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{} (solid: adversarial, dashed: honest)</text>"#,
            l + 10.0,
            t + 14.0 + 14.0 * i as f64,
            escape(name)
        )?;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(x: &str) -> String {
    x.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes a curve in `format`. `points` must be non-empty.
pub fn emit_curve(
    series: &[(String, Vec<CurvePoint>)],
    format: Format,
    manifest: &Manifest,
    path: &Path,
) -> Result<()> {
    if series.iter().all(|(_, p)| p.is_empty()) {
        bail!("nothing to emit: the curve has no points");
    }
    let text = match format {
        Format::Csv => {
            let all: Vec<CurvePoint> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
            curve_csv(&all, manifest)?
        }
        Format::Json => {
            let obj: BTreeMap<&str, &Vec<CurvePoint>> = series.iter().map(|(n, p)| (n.as_str(), p)).collect();
            let meta: BTreeMap<&str, &str> = manifest.lines.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
            serde_json::to_string_pretty(&serde_json::json!({ "manifest": meta, "series": obj }))? + "\n"
        }
        Format::Svg => {
            let title = manifest
                .lines
                .iter()
                .filter(|(k, _)| k != "tool")
                .map(|(k, v)| format!("{k} {v}"))
                .collect::<Vec<_>>()
                .join(", ");
            curve_svg(series, &title)?
        }
    };
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
