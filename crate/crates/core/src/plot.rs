//! Standalone SVG rendering of ICE curves (`ice.csv`) and regional effect
//! curves (`reps.csv`).

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 200.0;
const MARGIN_T: f64 = 24.0;
const MARGIN_B: f64 = 48.0;
const TICKS: usize = 5;

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurveStyle {
    #[default]
    Raw,
    Centered,
}

impl std::str::FromStr for CurveStyle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(CurveStyle::Raw),
            "centered" => Ok(CurveStyle::Centered),
            other => Err(Error::Invalid(format!("unknown plot style '{other}' (raw, centered)"))),
        }
    }
}

struct Series {
    class: String,
    color: &'static str,
    width: f64,
    points: Vec<(f64, f64)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(series: &[Series]) -> Self {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = x;
        for (a, b) in series.iter().flat_map(|s| s.points.iter()) {
            x = (x.0.min(*a), x.1.max(*a));
            y = (y.0.min(*b), y.1.max(*b));
        }
        let pad = |r: (f64, f64)| if r.1 > r.0 { r } else { (r.0 - 0.5, r.1 + 0.5) };
        Self { x: pad(x), y: pad(y) }
    }

    fn px(&self, v: f64) -> f64 {
        MARGIN_L + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_B - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn render(series: &[Series], legend: &[(String, &'static str)], x_label: &str, y_label: &str) -> String {
    let f = Frame::fit(series);
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    svg.push('\n');
    let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
    let (y0, y1) = (HEIGHT - MARGIN_B, MARGIN_T);
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#
    );
    svg.push_str("<g class=\"ticks\">\n");
    for t in 0..TICKS {
        let frac = t as f64 / (TICKS - 1) as f64;
        let xv = f.x.0 + frac * (f.x.1 - f.x.0);
        let yv = f.y.0 + frac * (f.y.1 - f.y.0);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 4.0,
            y0 + 16.0,
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            x0 - 6.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    svg.push_str("</g>\n");
    let _ = writeln!(
        svg,
        r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text class="ylabel" x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    svg.push_str("<g class=\"curves\" fill=\"none\">\n");
    for s in series {
        let pts: Vec<String> = s.points.iter().map(|&(a, b)| format!("{:.2},{:.2}", f.px(a), f.py(b))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="{}" stroke="{}" stroke-width="{}" points="{}"/>"#,
            s.class,
            s.color,
            s.width,
            pts.join(" ")
        );
    }
    svg.push_str("</g>\n");
    if !legend.is_empty() {
        svg.push_str("<g class=\"legend\">\n");
        for (k, (label, color)) in legend.iter().enumerate() {
            let y = MARGIN_T + 8.0 + 18.0 * k as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="12" height="12" fill="{color}"/><text class="legend-label" x="{:.2}" y="{:.2}">{}</text>"#,
                x1 + 12.0,
                y - 10.0,
                x1 + 30.0,
                y,
                escape(label)
            );
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}

fn parse_f64(s: &str, row: usize, col: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Csv {
        row,
        column: col.to_string(),
        message: format!("not a number: '{s}'"),
    })
}

/// ICE curves as thin gray lines with their average as a bold overlay.
pub fn ice_svg(csv_text: &str) -> Result<String> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("grid") || header.len() < 2 || !header.iter().skip(1).all(|h| h.starts_with("obs_")) {
        return Err(Error::CsvFormat("expected an ICE file with columns grid,obs_0,obs_1,...".into()));
    }
    let n = header.len() - 1;
    let mut grid = Vec::new();
    let mut curves = vec![Vec::new(); n];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        grid.push(parse_f64(&rec[0], r + 1, "grid")?);
        for i in 0..n {
            curves[i].push(parse_f64(&rec[i + 1], r + 1, &header[i + 1])?);
        }
    }
    if grid.is_empty() {
        return Err(Error::CsvFormat("ICE file has no grid rows".into()));
    }
    let m = grid.len();
    let pd: Vec<f64> = (0..m).map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / n as f64).collect();
    let mut series: Vec<Series> = curves
        .into_iter()
        .map(|c| Series {
            class: "ice".into(),
            color: "#9e9e9e",
            width: 0.6,
            points: grid.iter().copied().zip(c).collect(),
        })
        .collect();
    series.push(Series {
        class: "pd".into(),
        color: "#d62728",
        width: 2.5,
        points: grid.iter().copied().zip(pd).collect(),
    });
    Ok(render(&series, &[("PD".into(), "#d62728")], "grid", "prediction"))
}

/// One curve per terminal region, colored by node id and labeled with its
/// split path.
pub fn reps_svg(csv_text: &str, style: CurveStyle) -> Result<String> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let header = rdr.headers()?.clone();
    let want = ["node", "path", "n", "grid", "centered", "raw"];
    if header.iter().collect::<Vec<_>>() != want {
        return Err(Error::CsvFormat(format!("expected a regional curve file with columns {}", want.join(","))));
    }
    let col = match style {
        CurveStyle::Raw => 5,
        CurveStyle::Centered => 4,
    };
    let mut regions: BTreeMap<u64, (String, Vec<(f64, f64)>)> = BTreeMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let node = rec[0].trim().parse::<u64>().map_err(|_| Error::Csv {
            row: r + 1,
            column: "node".into(),
            message: format!("not a node id: '{}'", &rec[0]),
        })?;
        let x = parse_f64(&rec[3], r + 1, "grid")?;
        let y = parse_f64(&rec[col], r + 1, &header[col])?;
        regions
            .entry(node)
            .or_insert_with(|| (rec[1].to_string(), Vec::new()))
            .1
            .push((x, y));
    }
    if regions.is_empty() {
        return Err(Error::CsvFormat("regional curve file has no rows".into()));
    }
    let mut series = Vec::new();
    let mut legend = Vec::new();
    for (k, (node, (path, points))) in regions.into_iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        series.push(Series {
            class: format!("region region-{node}"),
            color,
            width: 2.0,
            points,
        });
        legend.push((path, color));
    }
    let y_label = match style {
        CurveStyle::Raw => "regional PD",
        CurveStyle::Centered => "centered regional PD",
    };
    Ok(render(&series, &legend, "grid", y_label))
}

/// Picks the renderer from the header line.
pub fn curves_svg(csv_text: &str, style: CurveStyle) -> Result<String> {
    match csv_text.lines().next().map(str::trim) {
        Some(h) if h.starts_with("grid,") => ice_svg(csv_text),
        Some(h) if h.starts_with("node,") => reps_svg(csv_text, style),
        Some(_) => Err(Error::CsvFormat("input is neither an ICE file nor a regional curve file".into())),
        None => Err(Error::CsvFormat("empty curve file".into())),
    }
}
