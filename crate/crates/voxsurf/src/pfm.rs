//! Minimal PFM (portable float map) reader/writer.
//!
//! Grayscale `Pf` maps only, little-endian (negative scale), rows stored
//! bottom-to-top as the format specifies. Used for depth and weight maps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

/// Row-major grayscale image, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatMap {
    pub fn new(width: usize, height: usize) -> Self {
        FloatMap {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }
}

pub fn write_pfm(path: &Path, map: &FloatMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "Pf\n{} {}\n-1.0\n", map.width, map.height)?;
    for y in (0..map.height).rev() {
        for x in 0..map.width {
            w.write_f32::<LittleEndian>(map.get(x, y))?;
        }
    }
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<FloatMap> {
    let mut r = BufReader::new(File::open(path)?);

    let magic = read_token(&mut r, path)?;
    if magic != "Pf" {
        return Err(Error::format(path, format!("unsupported PFM magic {magic:?}")));
    }
    let width: usize = parse_token(&read_token(&mut r, path)?, path)?;
    let height: usize = parse_token(&read_token(&mut r, path)?, path)?;
    let scale: f64 = parse_token(&read_token(&mut r, path)?, path)?;
    if scale >= 0.0 {
        return Err(Error::format(path, "big-endian PFM not supported"));
    }

    let mut map = FloatMap::new(width, height);
    for y in (0..height).rev() {
        for x in 0..width {
            let v = r.read_f32::<LittleEndian>().map_err(|_| {
                Error::format(path, "truncated PFM pixel data")
            })?;
            map.set(x, y, v);
        }
    }
    Ok(map)
}

/// Reads a whitespace-delimited header token (PFM headers are ASCII).
fn read_token(r: &mut impl Read, path: &Path) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::format(path, "truncated PFM header"));
        }
        let c = byte[0] as char;
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(c);
        if tok.len() > 64 {
            return Err(Error::format(path, "malformed PFM header"));
        }
    }
}

fn parse_token<T: std::str::FromStr>(tok: &str, path: &Path) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::format(path, format!("bad PFM header token {tok:?}")))
}
