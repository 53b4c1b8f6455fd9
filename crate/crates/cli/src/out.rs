//! Output files: CSV with 17 significant digits, pretty JSON, SVG polylines.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Full round-trip precision.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Csv {
    path: PathBuf,
    comments: Vec<String>,
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn new(path: PathBuf, header: &[String]) -> io::Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self {
            path,
            comments: Vec::new(),
            writer,
        })
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn row(&mut self, fields: Vec<String>) -> io::Result<()> {
        self.writer.write_record(&fields).map_err(io::Error::other)
    }

    pub fn finish(self) -> io::Result<PathBuf> {
        let body = self.writer.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
        let mut text = String::new();
        for c in &self.comments {
            text.push_str("# ");
            text.push_str(c);
            text.push('\n');
        }
        text.push_str(&String::from_utf8_lossy(&body));
        fs::write(&self.path, text)?;
        Ok(self.path)
    }
}

/// `x1..xd` style column names.
pub fn columns(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (1..=d).map(move |i| format!("{prefix}{i}"))
}

pub fn nums(xs: &[f64]) -> impl Iterator<Item = String> + '_ {
    xs.iter().map(|&x| num(x))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

/// A 2-d figure in data coordinates, flipped so that y points up.
pub struct Svg {
    lo: [f64; 2],
    hi: [f64; 2],
    items: Vec<String>,
}

const SIZE: f64 = 600.0;

impl Svg {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self {
            lo,
            hi,
            items: Vec::new(),
        }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        let span = (self.hi[0] - self.lo[0]).max(self.hi[1] - self.lo[1]).max(1e-12);
        let s = SIZE / span;
        ((p[0] - self.lo[0]) * s, SIZE - (p[1] - self.lo[1]) * s)
    }

    pub fn polyline(&mut self, pts: &[[f64; 2]], color: &str, width: f64) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (x, y) = self.map(p);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        self.items.push(format!(
            r#"<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{}"/>"#,
            coords.join(" ")
        ));
    }

    pub fn dot(&mut self, p: [f64; 2], color: &str) {
        let (x, y) = self.map(p);
        self.items
            .push(format!(r#"<circle cx="{x:.3}" cy="{y:.3}" r="3" fill="{color}"/>"#));
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut text = format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
        );
        text.push('\n');
        text.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
        text.push('\n');
        for item in &self.items {
            text.push_str(item);
            text.push('\n');
        }
        text.push_str("</svg>\n");
        fs::write(path, text)
    }
}
