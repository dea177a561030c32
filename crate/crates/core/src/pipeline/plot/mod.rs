//! Heatmaps, pyramids and time series rendered to SVG or PNG.

mod scene;

pub use scene::{Anchor, Color, Scene, Shape};

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::popsynth::PyramidRow;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("nothing to plot: {0}")]
    Empty(&'static str),
    #[error("invalid plot: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
}

/// Viridis sampled at nine evenly spaced stops.
const VIRIDIS: [&str; 9] = [
    "#440154", "#472d7b", "#3b528b", "#2c728e", "#21918c", "#28ae80", "#5ec962", "#addc30",
    "#fde725",
];
const GREYS: [&str; 2] = ["#f0f0f0", "#252525"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ramp {
    #[default]
    Viridis,
    Greys,
}

impl FromStr for Ramp {
    type Err = PlotError;
    fn from_str(s: &str) -> Result<Self, PlotError> {
        match s.to_ascii_lowercase().as_str() {
            "viridis" => Ok(Ramp::Viridis),
            "greys" | "grays" => Ok(Ramp::Greys),
            _ => Err(PlotError::Invalid(format!("unknown color ramp `{s}` (viridis, greys)"))),
        }
    }
}

impl Ramp {
    fn stops(self) -> Vec<Color> {
        let table: &[&str] = match self {
            Ramp::Viridis => &VIRIDIS,
            Ramp::Greys => &GREYS,
        };
        table.iter().map(|h| Color::parse_hex(h).expect("valid ramp table")).collect()
    }

    /// Color at `t` in `[0, 1]`, linear between stops.
    pub fn color(self, t: f64) -> Color {
        let stops = self.stops();
        let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
        let pos = t * (stops.len() - 1) as f64;
        let i = (pos.floor() as usize).min(stops.len() - 2);
        let f = pos - i as f64;
        let (a, b) = (stops[i], stops[i + 1]);
        let mix = |x: u8, y: u8| (f64::from(x) + f * (f64::from(y) - f64::from(x))).round() as u8;
        Color(mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
    }

    fn series(self, i: usize, n: usize) -> Color {
        if n <= 1 {
            self.color(0.35)
        } else {
            self.color(0.1 + 0.75 * i as f64 / (n - 1) as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Svg,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self, PlotError> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("svg") => Ok(ImageFormat::Svg),
            Some("png") => Ok(ImageFormat::Png),
            _ => Err(PlotError::Invalid(format!(
                "{}: image path must end in .svg or .png",
                path.display()
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Svg => "svg",
            ImageFormat::Png => "png",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub width: u32,
    pub height: u32,
    pub ramp: Ramp,
    pub path: PathBuf,
}

impl PlotSpec {
    pub fn new(title: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            title: title.into(),
            width: 800,
            height: 600,
            ramp: Ramp::Viridis,
            path: path.into(),
        }
    }

    pub fn validate(&self) -> Result<ImageFormat, PlotError> {
        if self.width == 0 || self.height == 0 {
            return Err(PlotError::Invalid(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        ImageFormat::from_path(&self.path)
    }
}

pub fn encode(scene: &Scene, format: ImageFormat) -> Result<Vec<u8>, PlotError> {
    match format {
        ImageFormat::Svg => Ok(scene.to_svg().into_bytes()),
        ImageFormat::Png => {
            let mut buf = Vec::new();
            scene.write_png(&mut buf)?;
            Ok(buf)
        }
    }
}

fn write_scene(scene: &Scene, spec: &PlotSpec) -> Result<(), PlotError> {
    let bytes = encode(scene, spec.validate()?)?;
    std::fs::write(&spec.path, bytes).map_err(|source| PlotError::Io {
        path: spec.path.display().to_string(),
        source,
    })
}

const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 45.0;
const BOTTOM: f64 = 55.0;

fn area(spec: &PlotSpec) -> (f64, f64) {
    (
        (f64::from(spec.width) - LEFT - RIGHT).max(1.0),
        (f64::from(spec.height) - TOP - BOTTOM).max(1.0),
    )
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target.max(1) as f64;
    if !(raw.is_finite() && raw > 0.0) {
        return 1.0;
    }
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let unit = [1.0, 2.0, 5.0, 10.0].into_iter().find(|u| *u >= norm - 1e-9).unwrap_or(10.0);
    unit * mag
}

/// Round tick values between `lo` and `hi`, with their step.
fn ticks(lo: f64, hi: f64, target: usize) -> (Vec<f64>, f64) {
    let step = nice_step(hi - lo, target);
    let mut out = Vec::new();
    let mut k = (lo / step - 1e-9).ceil();
    while k * step <= hi + step * 1e-9 {
        out.push(k * step);
        k += 1.0;
    }
    (out, step)
}

fn tick_label(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.digits$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn value_label(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        let mut s = format!("{v:.2}");
        while s.ends_with('0') {
            s.pop();
        }
        s.trim_end_matches('.').to_string()
    }
}

fn title(scene: &mut Scene, spec: &PlotSpec) {
    scene.text(f64::from(spec.width) / 2.0, 28.0, 16.0, Anchor::Middle, spec.title.clone());
}

/// One heatmap cell, located by its center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatCell {
    pub lat: f64,
    pub lon: f64,
    pub value: f64,
}

/// Build a heatmap scene. Cells sit on a `cellsize` lattice; missing cells
/// and non-finite values stay transparent. An empty table gives a framed
/// blank map.
pub fn heatmap_scene(cells: &[HeatCell], cellsize: f64, spec: &PlotSpec) -> Result<Scene, PlotError> {
    spec.validate()?;
    if !(cellsize.is_finite() && cellsize > 0.0) {
        return Err(PlotError::Invalid(format!("cell size must be positive, got {cellsize}")));
    }
    let mut scene = Scene::new(spec.width, spec.height);
    title(&mut scene, spec);
    let (aw, ah) = area(spec);
    if cells.is_empty() {
        scene.frame(LEFT, TOP, aw, ah, Color::BLACK);
        scene.text(LEFT + aw / 2.0, TOP + ah / 2.0, 14.0, Anchor::Middle, "no data");
        return Ok(scene);
    }

    let fold = |f: fn(f64, f64) -> f64, init: f64, get: fn(&HeatCell) -> f64| {
        cells.iter().map(get).fold(init, f)
    };
    let (lat_lo, lat_hi) = (fold(f64::min, f64::INFINITY, |c| c.lat), fold(f64::max, f64::NEG_INFINITY, |c| c.lat));
    let (lon_lo, lon_hi) = (fold(f64::min, f64::INFINITY, |c| c.lon), fold(f64::max, f64::NEG_INFINITY, |c| c.lon));
    let finite: Vec<f64> = cells.iter().map(|c| c.value).filter(|v| v.is_finite()).collect();
    let vmin = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let ncols = ((lon_hi - lon_lo) / cellsize).round() as usize + 1;
    let nrows = ((lat_hi - lat_lo) / cellsize).round() as usize + 1;
    let px = (aw / ncols as f64).min(ah / nrows as f64);
    let (mw, mh) = (px * ncols as f64, px * nrows as f64);
    let west = lon_lo - cellsize / 2.0;
    let north = lat_hi + cellsize / 2.0;

    for c in cells.iter().filter(|c| c.value.is_finite()) {
        let col = ((c.lon - lon_lo) / cellsize).round();
        let row = ((lat_hi - c.lat) / cellsize).round();
        let t = if vmax > vmin { (c.value - vmin) / (vmax - vmin) } else { 0.5 };
        scene.rect(LEFT + col * px, TOP + row * px, px, px, spec.ramp.color(t));
    }
    scene.frame(LEFT, TOP, mw, mh, Color::BLACK);

    let east = west + ncols as f64 * cellsize;
    let south = north - nrows as f64 * cellsize;
    let (xt, xstep) = ticks(west, east, 5);
    for lon in xt {
        let x = LEFT + (lon - west) / cellsize * px;
        scene.line(x, TOP + mh, x, TOP + mh + 4.0, Color::BLACK, 1.0);
        scene.text(x, TOP + mh + 16.0, 10.0, Anchor::Middle, tick_label(lon, xstep));
    }
    let (yt, ystep) = ticks(south, north, 5);
    for lat in yt {
        let y = TOP + (north - lat) / cellsize * px;
        scene.line(LEFT - 4.0, y, LEFT, y, Color::BLACK, 1.0);
        scene.text(LEFT - 6.0, y + 3.0, 10.0, Anchor::End, tick_label(lat, ystep));
    }
    scene.text(LEFT + mw / 2.0, TOP + mh + 36.0, 12.0, Anchor::Middle, "Longitude");
    scene.vertical_text(16.0, TOP + mh / 2.0, 12.0, "Latitude");

    if vmin.is_finite() {
        let bx = LEFT + mw + 20.0;
        let slices = 64;
        let sh = mh / slices as f64;
        for i in 0..slices {
            let t = 1.0 - (i as f64 + 0.5) / slices as f64;
            scene.rect(bx, TOP + i as f64 * sh, 16.0, sh, spec.ramp.color(t));
        }
        scene.frame(bx, TOP, 16.0, mh, Color::BLACK);
        let labels = [(TOP, vmax), (TOP + mh / 2.0, (vmin + vmax) / 2.0), (TOP + mh, vmin)];
        for (y, v) in labels {
            scene.line(bx + 16.0, y, bx + 20.0, y, Color::BLACK, 1.0);
            scene.text(bx + 23.0, y + 3.0, 10.0, Anchor::Start, value_label(v));
        }
    }
    Ok(scene)
}

pub fn emit_heatmap(cells: &[HeatCell], cellsize: f64, spec: &PlotSpec) -> Result<(), PlotError> {
    if cells.is_empty() {
        return Err(PlotError::Empty("heatmap table has no rows"));
    }
    write_scene(&heatmap_scene(cells, cellsize, spec)?, spec)
}

/// Grouped bars: one group per bracket, one bar per gender.
pub fn pyramid_scene(rows: &[PyramidRow], spec: &PlotSpec) -> Result<Scene, PlotError> {
    spec.validate()?;
    if rows.is_empty() {
        return Err(PlotError::Empty("pyramid table has no rows"));
    }
    let mut brackets: Vec<&str> = Vec::new();
    let mut genders = Vec::new();
    for r in rows {
        if !brackets.contains(&r.bracket.as_str()) {
            brackets.push(&r.bracket);
        }
        if !genders.contains(&r.gender) {
            genders.push(r.gender);
        }
    }
    let mut scene = Scene::new(spec.width, spec.height);
    title(&mut scene, spec);
    let (aw, ah) = area(spec);
    let max = rows.iter().map(|r| r.total).max().unwrap_or(0) as f64;
    let (yt, ystep) = ticks(0.0, max.max(1.0), 5);
    let ymax = yt.last().copied().unwrap_or(1.0).max(max).max(1.0);
    let ymax = if ymax < max.max(1.0) { ymax + ystep } else { ymax };
    for v in &yt {
        let y = TOP + ah - v / ymax * ah;
        scene.line(LEFT, y, LEFT + aw, y, Color::GRID, 1.0);
        scene.text(LEFT - 6.0, y + 3.0, 10.0, Anchor::End, tick_label(*v, ystep.max(1.0)));
    }

    let gw = aw / brackets.len() as f64;
    let bw = gw * 0.8 / genders.len() as f64;
    for r in rows {
        let bi = brackets.iter().position(|b| *b == r.bracket).unwrap_or(0);
        let gi = genders.iter().position(|g| *g == r.gender).unwrap_or(0);
        let h = r.total as f64 / ymax * ah;
        let x = LEFT + bi as f64 * gw + gw * 0.1 + gi as f64 * bw;
        scene.rect(x, TOP + ah - h, bw, h, spec.ramp.series(gi, genders.len()));
    }
    for (bi, b) in brackets.iter().enumerate() {
        let x = LEFT + (bi as f64 + 0.5) * gw;
        scene.text(x, TOP + ah + 16.0, 10.0, Anchor::Middle, *b);
    }
    scene.line(LEFT, TOP + ah, LEFT + aw, TOP + ah, Color::BLACK, 1.0);
    scene.line(LEFT, TOP, LEFT, TOP + ah, Color::BLACK, 1.0);
    scene.text(LEFT + aw / 2.0, TOP + ah + 36.0, 12.0, Anchor::Middle, "Age bracket");
    scene.vertical_text(16.0, TOP + ah / 2.0, 12.0, "Population");

    let lx = LEFT + aw + 20.0;
    for (gi, g) in genders.iter().enumerate() {
        let y = TOP + 10.0 + gi as f64 * 20.0;
        scene.rect(lx, y - 9.0, 12.0, 12.0, spec.ramp.series(gi, genders.len()));
        scene.text(lx + 18.0, y + 1.0, 11.0, Anchor::Start, g.as_str());
    }
    Ok(scene)
}

pub fn emit_pyramid(rows: &[PyramidRow], spec: &PlotSpec) -> Result<(), PlotError> {
    write_scene(&pyramid_scene(rows, spec)?, spec)
}

/// Values per labelled step for one or more named series. `None` breaks a
/// line.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub labels: Vec<String>,
    pub series: Vec<(String, Vec<Option<f64>>)>,
}

pub fn timeseries_scene(ts: &TimeSeries, y_label: &str, spec: &PlotSpec) -> Result<Scene, PlotError> {
    spec.validate()?;
    if ts.labels.is_empty() || ts.series.is_empty() {
        return Err(PlotError::Empty("time series has no points"));
    }
    if let Some((name, _)) = ts.series.iter().find(|(_, v)| v.len() != ts.labels.len()) {
        return Err(PlotError::Invalid(format!(
            "series `{name}` does not have {} values",
            ts.labels.len()
        )));
    }
    let mut scene = Scene::new(spec.width, spec.height);
    title(&mut scene, spec);
    let (aw, ah) = area(spec);
    let max = ts
        .series
        .iter()
        .flat_map(|(_, v)| v.iter().flatten())
        .copied()
        .filter(|v| v.is_finite())
        .fold(100.0f64, f64::max);
    let (yt, ystep) = ticks(0.0, max, 5);
    let top_tick = yt.last().copied().unwrap_or(max);
    let ymax = if top_tick < max { top_tick + ystep } else { top_tick };
    let ymap = |v: f64| TOP + ah - v / ymax * ah;
    for v in &yt {
        scene.line(LEFT, ymap(*v), LEFT + aw, ymap(*v), Color::GRID, 1.0);
        scene.text(LEFT - 6.0, ymap(*v) + 3.0, 10.0, Anchor::End, tick_label(*v, ystep));
    }
    let n = ts.labels.len();
    let xmap = |i: usize| LEFT + (i as f64 + 0.5) * aw / n as f64;
    let every = n.div_ceil(12);
    for (i, l) in ts.labels.iter().enumerate() {
        scene.line(xmap(i), TOP + ah, xmap(i), TOP + ah + 4.0, Color::BLACK, 1.0);
        if i % every == 0 {
            scene.text(xmap(i), TOP + ah + 16.0, 10.0, Anchor::Middle, l.clone());
        }
    }
    scene.line(LEFT, TOP + ah, LEFT + aw, TOP + ah, Color::BLACK, 1.0);
    scene.line(LEFT, TOP, LEFT, TOP + ah, Color::BLACK, 1.0);
    scene.vertical_text(16.0, TOP + ah / 2.0, 12.0, y_label);

    let k = ts.series.len();
    for (si, (name, values)) in ts.series.iter().enumerate() {
        let color = spec.ramp.series(si, k);
        let mut run: Vec<(f64, f64)> = Vec::new();
        let flush = |run: &mut Vec<(f64, f64)>, scene: &mut Scene| {
            if run.len() > 1 {
                scene.push(Shape::Polyline {
                    points: std::mem::take(run),
                    color,
                    width: 2.0,
                });
            }
            run.clear();
        };
        for (i, v) in values.iter().enumerate() {
            match v {
                Some(v) if v.is_finite() => run.push((xmap(i), ymap(*v))),
                _ => flush(&mut run, &mut scene),
            }
        }
        flush(&mut run, &mut scene);
        for (i, v) in values.iter().enumerate() {
            if let Some(v) = v.filter(|v| v.is_finite()) {
                scene.push(Shape::Circle {
                    cx: xmap(i),
                    cy: ymap(v),
                    r: 3.0,
                    fill: color,
                });
            }
        }
        let y = TOP + 10.0 + si as f64 * 20.0;
        let lx = LEFT + aw + 20.0;
        scene.line(lx, y - 3.0, lx + 16.0, y - 3.0, color, 2.0);
        scene.text(lx + 22.0, y + 1.0, 11.0, Anchor::Start, name.clone());
    }
    Ok(scene)
}

pub fn emit_timeseries(ts: &TimeSeries, y_label: &str, spec: &PlotSpec) -> Result<(), PlotError> {
    write_scene(&timeseries_scene(ts, y_label, spec)?, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::popsynth::Gender;

    fn spec() -> PlotSpec {
        PlotSpec::new("t", "x.svg")
    }

    fn rects(s: &Scene) -> Vec<(f64, Color)> {
        s.shapes
            .iter()
            .filter_map(|sh| match sh {
                Shape::Rect { h, fill, .. } => Some((*h, *fill)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(Ramp::Viridis.color(0.0).hex(), "#440154");
        assert_eq!(Ramp::Viridis.color(1.0).hex(), "#fde725");
        assert_eq!(Ramp::Viridis.color(0.5).hex(), "#21918c");
        assert_eq!(Ramp::Greys.color(1.0).hex(), "#252525");
    }

    #[test]
    fn heatmap_min_max_hit_endpoints() {
        let cells = [
            HeatCell { lat: 1.5, lon: 1.5, value: 2.0 },
            HeatCell { lat: 1.5, lon: 2.5, value: 9.0 },
        ];
        let s = heatmap_scene(&cells, 1.0, &spec()).unwrap();
        let fills: Vec<String> = rects(&s).iter().take(2).map(|(_, c)| c.hex()).collect();
        assert_eq!(fills, ["#440154", "#fde725"]);
    }

    #[test]
    fn single_cell_heatmap() {
        let cells = [HeatCell { lat: 0.5, lon: 0.5, value: 3.0 }];
        let s = heatmap_scene(&cells, 1.0, &spec()).unwrap();
        // one data cell plus the legend slices
        assert_eq!(rects(&s).len(), 1 + 64);
        assert!(s.to_svg().contains(">3</text>"));
        assert!(matches!(emit_heatmap(&[], 1.0, &spec()), Err(PlotError::Empty(_))));
    }

    #[test]
    fn pyramid_bars() {
        let one = [PyramidRow { gender: Gender::Female, bracket: "0-9".into(), total: 5 }];
        assert_eq!(rects(&pyramid_scene(&one, &spec()).unwrap()).len(), 2);
        let two = [
            PyramidRow { gender: Gender::Female, bracket: "0-9".into(), total: 40 },
            PyramidRow { gender: Gender::Male, bracket: "0-9".into(), total: 40 },
        ];
        let s = pyramid_scene(&two, &spec()).unwrap();
        let bars = rects(&s);
        assert_eq!(bars[0].0, bars[1].0);
    }

    #[test]
    fn constant_series_is_flat() {
        let ts = TimeSeries {
            labels: vec!["a".into(), "b".into(), "c".into()],
            series: vec![("millet".into(), vec![Some(100.0); 3])],
        };
        let s = timeseries_scene(&ts, "WRSI", &spec()).unwrap();
        let line = s
            .shapes
            .iter()
            .find_map(|sh| match sh {
                Shape::Polyline { points, .. } => Some(points.clone()),
                _ => None,
            })
            .unwrap();
        assert!(line.iter().all(|p| p.1 == line[0].1));
    }

    #[test]
    fn two_series_two_legend_entries() {
        let ts = TimeSeries {
            labels: vec!["a".into(), "b".into()],
            series: vec![
                ("millet".into(), vec![Some(50.0), Some(80.0)]),
                ("maize".into(), vec![None, Some(20.0)]),
            ],
        };
        let svg = timeseries_scene(&ts, "WRSI", &spec()).unwrap().to_svg();
        assert!(svg.contains(">millet</text>") && svg.contains(">maize</text>"));
    }

    #[test]
    fn bad_spec() {
        let mut s = spec();
        s.path = "x.jpg".into();
        assert!(heatmap_scene(&[], 1.0, &s).is_err());
        let mut s = spec();
        s.width = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn tick_steps() {
        assert_eq!(ticks(0.0, 100.0, 5), (vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0], 20.0));
        assert_eq!(tick_label(19.5, 0.1), "19.5");
    }
}
