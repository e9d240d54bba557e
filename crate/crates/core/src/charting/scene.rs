//! Display list shared by the SVG writer and the PNG rasterizer.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Color {
    pub name: &'static str,
    pub rgb: [u8; 3],
}

impl Color {
    pub const fn new(name: &'static str, rgb: [u8; 3]) -> Self {
        Self { name, rgb }
    }

    fn hex(&self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.rgb[0], self.rgb[1], self.rgb[2])
    }
}

pub const WHITE: Color = Color::new("white", [255, 255, 255]);
pub const BLACK: Color = Color::new("black", [0, 0, 0]);
pub const GREEN: Color = Color::new("green", [0, 160, 60]);
pub const RED: Color = Color::new("red", [220, 30, 30]);
pub const BLUE: Color = Color::new("blue", [30, 90, 230]);
pub const YELLOW: Color = Color::new("yellow", [235, 190, 0]);
pub const GREY: Color = Color::new("grey", [128, 128, 128]);
pub const LIGHT_GREY: Color = Color::new("lightgrey", [225, 225, 225]);
pub const DARK: Color = Color::new("dark", [40, 40, 60]);

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
        stroke: Color,
        width: f64,
        dashed: bool,
    },
    Polyline {
        points: Vec<(f64, f64)>,
        stroke: Color,
        width: f64,
    },
    Polygon {
        points: Vec<(f64, f64)>,
        fill: Color,
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
        text: String,
        size: f64,
        fill: Color,
        anchor: Anchor,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub shapes: Vec<Shape>,
}

/// Fixed two-decimal formatting so output bytes never depend on float noise.
fn n(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl Scene {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            shapes: vec![Shape::Rect {
                x: 0.0,
                y: 0.0,
                w: width as f64,
                h: height as f64,
                fill: WHITE,
            }],
        }
    }

    pub fn push(&mut self, shape: Shape) {
        self.shapes.push(shape);
    }

    pub fn text(&mut self, x: f64, y: f64, text: impl Into<String>, size: f64, anchor: Anchor) {
        self.push(Shape::Text {
            x,
            y,
            text: text.into(),
            size,
            fill: DARK,
            anchor,
        });
    }

    pub fn to_svg(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = self.width,
            h = self.height
        );
        let pts = |p: &[(f64, f64)]| {
            p.iter()
                .map(|(x, y)| format!("{},{}", n(*x), n(*y)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for shape in &self.shapes {
            let _ = match shape {
                Shape::Rect { x, y, w, h, fill } => writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                    n(*x),
                    n(*y),
                    n(*w),
                    n(*h),
                    fill.hex()
                ),
                Shape::Line {
                    x1,
                    y1,
                    x2,
                    y2,
                    stroke,
                    width,
                    dashed,
                } => writeln!(
                    s,
                    r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="{}"{}/>"#,
                    n(*x1),
                    n(*y1),
                    n(*x2),
                    n(*y2),
                    stroke.hex(),
                    n(*width),
                    if *dashed {
                        r#" stroke-dasharray="6,4""#
                    } else {
                        ""
                    }
                ),
                Shape::Polyline {
                    points,
                    stroke,
                    width,
                } => writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="{}"/>"#,
                    pts(points),
                    stroke.hex(),
                    n(*width)
                ),
                Shape::Polygon { points, fill } => writeln!(
                    s,
                    r#"<polygon points="{}" fill="{}"/>"#,
                    pts(points),
                    fill.hex()
                ),
                Shape::Circle { cx, cy, r, fill } => writeln!(
                    s,
                    r#"<circle cx="{}" cy="{}" r="{}" fill="{}"/>"#,
                    n(*cx),
                    n(*cy),
                    n(*r),
                    fill.hex()
                ),
                Shape::Text {
                    x,
                    y,
                    text,
                    size,
                    fill,
                    anchor,
                } => writeln!(
                    s,
                    r#"<text x="{}" y="{}" font-family="monospace" font-size="{}" fill="{}" text-anchor="{}">{}</text>"#,
                    n(*x),
                    n(*y),
                    n(*size),
                    fill.hex(),
                    match anchor {
                        Anchor::Start => "start",
                        Anchor::Middle => "middle",
                        Anchor::End => "end",
                    },
                    escape(text)
                ),
            };
        }
        s.push_str("</svg>\n");
        s
    }
}
