//! Plain (P2) PGM images with maxval 255.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{MgdError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            writeln!(out, "{}", line.join(" ")).expect("writing to a String cannot fail");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_pgm())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let perr = |msg: &str| MgdError::Parse { what: "pgm".into(), msg: msg.into() };
        let mut tokens = text.lines().map(|l| l.split('#').next().unwrap_or("")).flat_map(str::split_whitespace);
        if tokens.next() != Some("P2") {
            return Err(perr("missing P2 magic"));
        }
        let mut num = || -> Result<usize> {
            tokens.next().ok_or_else(|| perr("truncated"))?.parse().map_err(|_| perr("bad number"))
        };
        let (width, height, maxval) = (num()?, num()?, num()?);
        if maxval != 255 {
            return Err(perr("only maxval 255 is supported"));
        }
        let pixels = (0..width * height)
            .map(|_| num().and_then(|v| u8::try_from(v).map_err(|_| perr("pixel out of range"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { width, height, pixels })
    }
}

/// Min-max normalizes `values` into [0, 1] and quantizes to 0..=255.
/// A constant input maps to mid gray. Returns the image plus the original
/// min and max.
pub fn normalized_gray(values: &[f64], width: usize, height: usize) -> Result<(GrayImage, f64, f64)> {
    if values.len() != width * height || values.is_empty() {
        return Err(MgdError::Dimension(format!("{} values for a {width}x{height} image", values.len())));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let pixels = values
        .iter()
        .map(|&v| {
            let unit = if range > 0.0 { (v - min) / range } else { 0.5 };
            (unit * 255.0).round() as u8
        })
        .collect();
    Ok((GrayImage { width, height, pixels }, min, max))
}
