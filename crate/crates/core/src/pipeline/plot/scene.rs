//! A flat list of drawing primitives with two back ends: SVG text and an
//! RGBA bitmap encoded as PNG.

use std::fmt::Write as _;
use std::io::Write;

use font8x8::{UnicodeFonts, BASIC_FONTS, LATIN_FONTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Color(pub u8, pub u8, pub u8);

impl Color {
    pub const WHITE: Color = Color(255, 255, 255);
    pub const BLACK: Color = Color(0, 0, 0);
    pub const GRID: Color = Color(221, 221, 221);
    pub const TEXT: Color = Color(34, 34, 34);

    pub fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }

    pub fn parse_hex(s: &str) -> Option<Color> {
        let s = s.strip_prefix('#')?;
        if s.len() != 6 {
            return None;
        }
        let v = u32::from_str_radix(s, 16).ok()?;
        Some(Color((v >> 16) as u8, (v >> 8) as u8, v as u8))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Start,
    Middle,
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Rect {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        fill: Color,
    },
    Line {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        color: Color,
        width: f64,
    },
    Polyline {
        points: Vec<(f64, f64)>,
        color: Color,
        width: f64,
    },
    Circle {
        cx: f64,
        cy: f64,
        r: f64,
        fill: Color,
    },
    Text {
        x: f64,
        y: f64,
        size: f64,
        anchor: Anchor,
        vertical: bool,
        color: Color,
        content: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub background: Color,
    pub shapes: Vec<Shape>,
}

/// Coordinates to at most two decimals, without trailing zeros.
fn num(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    let r = if r == 0.0 { 0.0 } else { r };
    let mut s = format!("{r:.2}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

impl Scene {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            background: Color::WHITE,
            shapes: Vec::new(),
        }
    }

    pub fn push(&mut self, shape: Shape) {
        self.shapes.push(shape);
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: Color) {
        self.push(Shape::Rect { x, y, w, h, fill });
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, color: Color, width: f64) {
        self.push(Shape::Line {
            x1,
            y1,
            x2,
            y2,
            color,
            width,
        });
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: Anchor, content: impl Into<String>) {
        self.push(Shape::Text {
            x,
            y,
            size,
            anchor,
            vertical: false,
            color: Color::TEXT,
            content: content.into(),
        });
    }

    pub fn vertical_text(&mut self, x: f64, y: f64, size: f64, content: impl Into<String>) {
        self.push(Shape::Text {
            x,
            y,
            size,
            anchor: Anchor::Middle,
            vertical: true,
            color: Color::TEXT,
            content: content.into(),
        });
    }

    /// Outline of a rectangle drawn as four lines.
    pub fn frame(&mut self, x: f64, y: f64, w: f64, h: f64, color: Color) {
        self.line(x, y, x + w, y, color, 1.0);
        self.line(x + w, y, x + w, y + h, color, 1.0);
        self.line(x + w, y + h, x, y + h, color, 1.0);
        self.line(x, y + h, x, y, color, 1.0);
    }

    pub fn to_svg(&self) -> String {
        let (w, h) = (self.width, self.height);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="{}"/>"#, self.background.hex());
        for shape in &self.shapes {
            match shape {
                Shape::Rect { x, y, w, h, fill } => {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                        num(*x),
                        num(*y),
                        num(*w),
                        num(*h),
                        fill.hex()
                    );
                }
                Shape::Line {
                    x1,
                    y1,
                    x2,
                    y2,
                    color,
                    width,
                } => {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="{}"/>"#,
                        num(*x1),
                        num(*y1),
                        num(*x2),
                        num(*y2),
                        color.hex(),
                        num(*width)
                    );
                }
                Shape::Polyline {
                    points,
                    color,
                    width,
                } => {
                    let pts: Vec<String> =
                        points.iter().map(|(x, y)| format!("{},{}", num(*x), num(*y))).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="{}"/>"#,
                        pts.join(" "),
                        color.hex(),
                        num(*width)
                    );
                }
                Shape::Circle { cx, cy, r, fill } => {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{}" cy="{}" r="{}" fill="{}"/>"#,
                        num(*cx),
                        num(*cy),
                        num(*r),
                        fill.hex()
                    );
                }
                Shape::Text {
                    x,
                    y,
                    size,
                    anchor,
                    vertical,
                    color,
                    content,
                } => {
                    let anchor = match anchor {
                        Anchor::Start => "start",
                        Anchor::Middle => "middle",
                        Anchor::End => "end",
                    };
                    let rotate = if *vertical {
                        format!(r#" transform="rotate(-90 {} {})""#, num(*x), num(*y))
                    } else {
                        String::new()
                    };
                    let _ = writeln!(
                        s,
                        r#"<text x="{}" y="{}" font-family="monospace" font-size="{}" text-anchor="{anchor}" fill="{}"{rotate}>{}</text>"#,
                        num(*x),
                        num(*y),
                        num(*size),
                        color.hex(),
                        escape(content)
                    );
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }

    /// Rasterize to RGBA, one byte per channel, row-major from the top.
    pub fn to_rgba(&self) -> Vec<u8> {
        let mut canvas = Canvas::new(self.width, self.height, self.background);
        for shape in &self.shapes {
            canvas.draw(shape);
        }
        canvas.pixels
    }

    pub fn write_png<W: Write>(&self, w: W) -> Result<(), png::EncodingError> {
        let mut encoder = png::Encoder::new(w, self.width, self.height);
        encoder.set_color(png::ColorType::Rgba);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&self.to_rgba())?;
        writer.finish()
    }
}

struct Canvas {
    width: i64,
    height: i64,
    pixels: Vec<u8>,
}

fn glyph(c: char) -> [u8; 8] {
    BASIC_FONTS
        .get(c)
        .or_else(|| LATIN_FONTS.get(c))
        .or_else(|| BASIC_FONTS.get('?'))
        .unwrap_or([0; 8])
}

impl Canvas {
    fn new(width: u32, height: u32, bg: Color) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 4);
        for _ in 0..(width as usize * height as usize) {
            pixels.extend_from_slice(&[bg.0, bg.1, bg.2, 255]);
        }
        Self {
            width: i64::from(width),
            height: i64::from(height),
            pixels,
        }
    }

    fn set(&mut self, x: i64, y: i64, c: Color) {
        if x < 0 || y < 0 || x >= self.width || y >= self.height {
            return;
        }
        let i = ((y * self.width + x) * 4) as usize;
        self.pixels[i..i + 4].copy_from_slice(&[c.0, c.1, c.2, 255]);
    }

    /// Pixels whose centers fall inside `[x0, x1) × [y0, y1)`.
    fn fill(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, c: Color) {
        let px0 = (x0 - 0.5).ceil() as i64;
        let px1 = (x1 - 0.5).ceil() as i64;
        let py0 = (y0 - 0.5).ceil() as i64;
        let py1 = (y1 - 0.5).ceil() as i64;
        for y in py0.max(0)..py1.min(self.height) {
            for x in px0.max(0)..px1.min(self.width) {
                self.set(x, y, c);
            }
        }
    }

    fn segment(&mut self, (x1, y1): (f64, f64), (x2, y2): (f64, f64), c: Color, width: f64) {
        let half = (width / 2.0).max(0.5);
        let len = (x2 - x1).hypot(y2 - y1);
        let steps = (len * 2.0).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let (x, y) = (x1 + t * (x2 - x1), y1 + t * (y2 - y1));
            self.fill(x - half, y - half, x + half, y + half, c);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn text(&mut self, x: f64, y: f64, size: f64, anchor: Anchor, vertical: bool, c: Color, s: &str) {
        let scale = (size / 8.0).round().max(1.0) as i64;
        let advance = 8 * scale;
        let total = advance * s.chars().count() as i64;
        let shift = match anchor {
            Anchor::Start => 0,
            Anchor::Middle => total / 2,
            Anchor::End => total,
        };
        // baseline sits at the bottom of the glyph cell
        let (ox, oy) = (x.round() as i64, y.round() as i64);
        for (k, ch) in s.chars().enumerate() {
            let rows = glyph(ch);
            for (gy, bits) in rows.iter().enumerate() {
                for gx in 0..8 {
                    if bits & (1 << gx) == 0 {
                        continue;
                    }
                    let u = k as i64 * advance - shift + gx * scale;
                    let v = (gy as i64 - 8) * scale;
                    for dy in 0..scale {
                        for dx in 0..scale {
                            let (a, b) = (u + dx, v + dy);
                            if vertical {
                                self.set(ox + b, oy - a, c);
                            } else {
                                self.set(ox + a, oy + b, c);
                            }
                        }
                    }
                }
            }
        }
    }

    fn draw(&mut self, shape: &Shape) {
        match shape {
            Shape::Rect { x, y, w, h, fill } => self.fill(*x, *y, x + w, y + h, *fill),
            Shape::Line {
                x1,
                y1,
                x2,
                y2,
                color,
                width,
            } => self.segment((*x1, *y1), (*x2, *y2), *color, *width),
            Shape::Polyline {
                points,
                color,
                width,
            } => {
                for w in points.windows(2) {
                    self.segment(w[0], w[1], *color, *width);
                }
            }
            Shape::Circle { cx, cy, r, fill } => {
                let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
                let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                        if (px - cx).hypot(py - cy) <= *r {
                            self.set(x, y, *fill);
                        }
                    }
                }
            }
            Shape::Text {
                x,
                y,
                size,
                anchor,
                vertical,
                color,
                content,
            } => self.text(*x, *y, *size, *anchor, *vertical, *color, content),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_are_compact() {
        assert_eq!(num(3.0), "3");
        assert_eq!(num(2.5), "2.5");
        assert_eq!(num(1.0 / 3.0), "0.33");
        assert_eq!(num(-0.001), "0");
    }

    #[test]
    fn hex_round_trip() {
        let c = Color::parse_hex("#21918c").unwrap();
        assert_eq!(c, Color(0x21, 0x91, 0x8c));
        assert_eq!(c.hex(), "#21918c");
    }

    #[test]
    fn svg_escapes_text() {
        let mut s = Scene::new(10, 10);
        s.text(1.0, 1.0, 12.0, Anchor::Start, "a<b & c");
        assert!(s.to_svg().contains(">a&lt;b &amp; c</text>"));
    }

    #[test]
    fn rect_covers_pixel_centers() {
        let mut s = Scene::new(4, 4);
        s.rect(1.0, 1.0, 2.0, 2.0, Color::BLACK);
        let px = s.to_rgba();
        let at = |x: usize, y: usize| px[(y * 4 + x) * 4];
        assert_eq!((at(0, 0), at(1, 1), at(2, 2), at(3, 3)), (255, 0, 0, 255));
    }

    #[test]
    fn png_decodes() {
        let mut s = Scene::new(20, 10);
        s.text(0.0, 9.0, 8.0, Anchor::Start, "Hi");
        let mut buf = Vec::new();
        s.write_png(&mut buf).unwrap();
        assert_eq!(&buf[1..4], b"PNG");
    }
}
