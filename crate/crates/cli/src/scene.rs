//! Two-layer scenes: per-pixel echo magnitudes and delays.

use std::path::{Path, PathBuf};

use echo_core::{Echo, SparseSRF};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const NS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SceneSpec {
    /// Text mask as the rear layer behind a smooth semi-reflective front
    /// layer.
    Placard {
        #[serde(default = "default_placard_size")]
        width_px: usize,
        #[serde(default = "default_placard_size")]
        height_px: usize,
        #[serde(default = "default_text")]
        text: String,
    },
    /// Constant maps.
    Flat {
        width_px: usize,
        height_px: usize,
        gamma0: f64,
        gamma1: f64,
        t0_ns: f64,
        t1_ns: f64,
    },
    /// Maps read from a directory written by [`Scene::save`].
    Files { dir: PathBuf },
}

fn default_placard_size() -> usize {
    128
}

fn default_text() -> String {
    "TOF".into()
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec::Placard { width_px: 128, height_px: 128, text: default_text() }
    }
}

impl SceneSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            SceneSpec::Placard { .. } => "placard",
            SceneSpec::Flat { .. } => "flat",
            SceneSpec::Files { .. } => "files",
        }
    }
}

/// Row-major per-pixel maps. Delays are in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub gamma0: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub t0: Vec<f64>,
    pub t1: Vec<f64>,
}

pub const MAP_NAMES: [&str; 4] = ["gamma0", "gamma1", "t0_s", "t1_s"];

pub const PLACARD_FRONT_BASE: f64 = 0.6;
pub const PLACARD_FRONT_BUMP: f64 = 0.25;
pub const PLACARD_REAR: f64 = 0.35;
pub const PLACARD_T0_NS: f64 = 10.0;
pub const PLACARD_T0_TILT_NS: f64 = 2.0;
pub const PLACARD_T1_NS: f64 = 32.0;

impl Scene {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    /// The pixel's echoes; a zero-magnitude layer is left out.
    pub fn srf(&self, index: usize) -> Result<SparseSRF> {
        let echoes: Vec<Echo> = [(self.gamma0[index], self.t0[index]), (self.gamma1[index], self.t1[index])]
            .into_iter()
            .filter(|&(g, _)| g > 0.0)
            .map(|(g, t)| Echo::real(g, t))
            .collect();
        Ok(SparseSRF::new(echoes)?)
    }

    pub fn maps(&self) -> [&[f64]; 4] {
        [&self.gamma0, &self.gamma1, &self.t0, &self.t1]
    }

    pub fn validate(&self, period: f64) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(CliError::Config("scene has no pixels".into()));
        }
        for (name, map) in MAP_NAMES.iter().zip(self.maps()) {
            if map.len() != n {
                return Err(CliError::Config(format!("map {name} has {} values, expected {n}", map.len())));
            }
        }
        for i in 0..n {
            let (x, y) = self.coords(i);
            let (g0, g1, t0, t1) = (self.gamma0[i], self.gamma1[i], self.t0[i], self.t1[i]);
            if !(g0.is_finite() && g0 >= 0.0 && g1.is_finite() && g1 >= 0.0) {
                return Err(CliError::Config(format!("pixel ({x}, {y}): magnitudes must be finite and >= 0")));
            }
            if !((0.0..period).contains(&t0) && (0.0..period).contains(&t1)) {
                return Err(CliError::Config(format!("pixel ({x}, {y}): delays must lie in [0, {period:e}) s")));
            }
            if t0 >= t1 {
                return Err(CliError::Config(format!("pixel ({x}, {y}): t0 must precede t1")));
            }
        }
        Ok(())
    }

    pub fn generate(spec: &SceneSpec) -> Result<Self> {
        match spec {
            SceneSpec::Placard { width_px, height_px, text } => placard(*width_px, *height_px, text),
            SceneSpec::Flat { width_px, height_px, gamma0, gamma1, t0_ns, t1_ns } => {
                let n = width_px * height_px;
                if n == 0 {
                    return Err(CliError::Config("flat scene needs positive dimensions".into()));
                }
                Ok(Self {
                    width: *width_px,
                    height: *height_px,
                    gamma0: vec![*gamma0; n],
                    gamma1: vec![*gamma1; n],
                    t0: vec![t0_ns * NS; n],
                    t1: vec![t1_ns * NS; n],
                })
            }
            SceneSpec::Files { dir } => Self::load(dir),
        }
    }

    /// Writes one `x,y,value` CSV per map.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        for (name, map) in MAP_NAMES.iter().zip(self.maps()) {
            write_map_csv(&dir.join(format!("{name}.csv")), self.width, self.height, map)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut maps = Vec::with_capacity(4);
        let mut dims = None;
        for name in MAP_NAMES {
            let (w, h, values) = read_map_csv(&dir.join(format!("{name}.csv")))?;
            match dims {
                None => dims = Some((w, h)),
                Some(d) if d != (w, h) => {
                    return Err(CliError::format(
                        dir.join(format!("{name}.csv")),
                        format!("map is {w}x{h}, expected {}x{}", d.0, d.1),
                    ))
                }
                Some(_) => {}
            }
            maps.push(values);
        }
        let (width, height) = dims.expect("four maps read");
        let mut it = maps.into_iter();
        let mut next = || it.next().expect("four maps");
        Ok(Self { width, height, gamma0: next(), gamma1: next(), t0: next(), t1: next() })
    }
}

/// Shortest decimal form that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_map_csv(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return Err(CliError::format(path, format!("{} values for a {width}x{height} map", values.len())));
    }
    let mut w = csv::Writer::from_path(path).map_err(CliError::csv(path))?;
    w.write_record(["x", "y", "value"]).map_err(CliError::csv(path))?;
    for (i, v) in values.iter().enumerate() {
        let (x, y) = (i % width, i / width);
        w.write_record([x.to_string(), y.to_string(), fmt_f64(*v)]).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Reads an `x,y,value` map; every pixel of the bounding grid must appear
/// exactly once.
pub fn read_map_csv(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(CliError::csv(path))?;
    let header = r.headers().map_err(CliError::csv(path))?;
    if header != vec!["x", "y", "value"] {
        return Err(CliError::format(path, "expected header x,y,value"));
    }
    let mut entries = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(CliError::csv(path))?;
        let bad = |what: &str| CliError::format(path, format!("row {}: bad {what}", line + 2));
        let x: usize = record[0].trim().parse().map_err(|_| bad("x"))?;
        let y: usize = record[1].trim().parse().map_err(|_| bad("y"))?;
        let v: f64 = record[2].trim().parse().map_err(|_| bad("value"))?;
        entries.push((x, y, v));
    }
    let width = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let height = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    if entries.len() != width * height || entries.is_empty() {
        return Err(CliError::format(path, "map does not cover a full rectangular grid"));
    }
    let mut values = vec![None; width * height];
    for (x, y, v) in entries {
        let slot = &mut values[y * width + x];
        if slot.is_some() {
            return Err(CliError::format(path, format!("pixel ({x}, {y}) listed twice")));
        }
        *slot = Some(v);
    }
    Ok((width, height, values.into_iter().map(|v| v.expect("grid covered")).collect()))
}

fn placard(width: usize, height: usize, text: &str) -> Result<Scene> {
    if width == 0 || height == 0 {
        return Err(CliError::Config("placard needs positive dimensions".into()));
    }
    let mask = text_mask(width, height, text)?;
    let n = width * height;
    let mut scene = Scene {
        width,
        height,
        gamma0: Vec::with_capacity(n),
        gamma1: Vec::with_capacity(n),
        t0: Vec::with_capacity(n),
        t1: vec![PLACARD_T1_NS * NS; n],
    };
    for i in 0..n {
        let (x, y) = (i % width, i / width);
        let u = (x as f64 + 0.5) / width as f64 - 0.5;
        let v = (y as f64 + 0.5) / height as f64 - 0.5;
        let bump = (-(u * u + v * v) / (2.0 * 0.35 * 0.35)).exp();
        scene.gamma0.push(PLACARD_FRONT_BASE + PLACARD_FRONT_BUMP * bump);
        scene.gamma1.push(if mask[i] { PLACARD_REAR } else { 0.0 });
        scene.t0.push((PLACARD_T0_NS + PLACARD_T0_TILT_NS * u) * NS);
    }
    Ok(scene)
}

/// Row-major mask of `text` rendered in a 5×7 block font, scaled to fit and
/// centred.
pub fn text_mask(width: usize, height: usize, text: &str) -> Result<Vec<bool>> {
    let glyphs: Vec<[u8; 7]> = text
        .chars()
        .map(|c| glyph(c).ok_or_else(|| CliError::Config(format!("placard text: no glyph for {c:?}"))))
        .collect::<Result<_>>()?;
    if glyphs.is_empty() {
        return Err(CliError::Config("placard text is empty".into()));
    }
    let cells_w = 6 * glyphs.len() - 1;
    let scale = ((width * 4 / 5) / cells_w).min((height * 3 / 5) / 7);
    if scale == 0 {
        return Err(CliError::Config(format!("{width}x{height} is too small for the text {text:?}")));
    }
    let (x0, y0) = ((width - cells_w * scale) / 2, (height - 7 * scale) / 2);
    let mut mask = vec![false; width * height];
    for (y, row) in mask.chunks_mut(width).enumerate() {
        if y < y0 || y >= y0 + 7 * scale {
            continue;
        }
        let cy = (y - y0) / scale;
        for (x, m) in row.iter_mut().enumerate() {
            if x < x0 || x >= x0 + cells_w * scale {
                continue;
            }
            let cx = (x - x0) / scale;
            let (g, col) = (cx / 6, cx % 6);
            *m = col < 5 && glyphs[g][cy] & (0b10000 >> col) != 0;
        }
    }
    Ok(mask)
}

fn glyph(c: char) -> Option<[u8; 7]> {
    let rows = match c.to_ascii_uppercase() {
        ' ' => [0, 0, 0, 0, 0, 0, 0],
        'A' => [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'B' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110],
        'C' => [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110],
        'D' => [0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110],
        'E' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111],
        'F' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000],
        'G' => [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111],
        'H' => [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'I' => [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        'J' => [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100],
        'K' => [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001],
        'L' => [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111],
        'M' => [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001],
        'N' => [0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001],
        'O' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'P' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000],
        'Q' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101],
        'R' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001],
        'S' => [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110],
        'T' => [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100],
        'U' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'V' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100],
        'W' => [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010],
        'X' => [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001],
        'Y' => [0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100],
        'Z' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111],
        _ => return None,
    };
    Some(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_scene_is_uniform() {
        let s = Scene::generate(&SceneSpec::Flat {
            width_px: 2,
            height_px: 2,
            gamma0: 1.0,
            gamma1: 0.5,
            t0_ns: 10.0,
            t1_ns: 30.0,
        })
        .unwrap();
        assert_eq!(s.len(), 4);
        for i in 0..4 {
            assert_eq!((s.gamma0[i], s.gamma1[i]), (1.0, 0.5));
            assert_eq!(s.srf(i).unwrap(), s.srf(0).unwrap());
        }
    }

    #[test]
    fn placard_rear_layer_follows_mask() {
        let s = Scene::generate(&SceneSpec::default()).unwrap();
        let mask = text_mask(128, 128, "TOF").unwrap();
        assert!(mask.iter().any(|&m| m) && mask.iter().any(|&m| !m));
        for i in 0..s.len() {
            assert_eq!(s.gamma1[i] != 0.0, mask[i]);
            assert!(s.gamma0[i] > s.gamma1[i]);
            assert!(s.t0[i] < s.t1[i]);
        }
        s.validate(2795.0 * 70e-12).unwrap();
    }

    #[test]
    fn text_too_large_is_config_error() {
        assert!(matches!(text_mask(8, 8, "TOF"), Err(CliError::Config(_))));
        assert!(matches!(text_mask(64, 64, "T?"), Err(CliError::Config(_))));
    }

    #[test]
    fn validate_rejects_swapped_delays() {
        let mut s = Scene::generate(&SceneSpec::Flat {
            width_px: 1,
            height_px: 1,
            gamma0: 1.0,
            gamma1: 0.5,
            t0_ns: 10.0,
            t1_ns: 30.0,
        })
        .unwrap();
        s.validate(1e-7).unwrap();
        s.t1[0] = 5e-9;
        assert!(s.validate(1e-7).is_err());
        s.t1[0] = 2e-7;
        assert!(s.validate(1e-7).is_err());
    }
}
