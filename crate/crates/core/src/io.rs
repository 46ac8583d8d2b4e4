//! On-disk formats.
//!
//! * Cubes: a JSON manifest (`height`, `width`, `bands`, `dtype = "f32le"`,
//!   `layout = "bsq"`, `data_path`) next to a raw little-endian `f32` file in
//!   band-sequential order.
//! * Label and partition rasters: text, first line `h w`, then `h` lines of
//!   `w` non-negative integers.
//! * Classification maps: binary PGM (P5, maxval 255) plus a palette file.
//! * Run configs: flat `key = value` text with `#` comments.
//!
//! Every writer goes through a temporary file in the destination directory
//! and renames it into place.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierKind, LabelField};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::pipeline::{HsiCube, PipelineConfig};

pub const CUBE_DTYPE: &str = "f32le";
pub const CUBE_LAYOUT: &str = "bsq";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeManifest {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: String,
    pub layout: String,
    /// Relative paths resolve against the manifest's directory.
    pub data_path: String,
}

/// Write `bytes` to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn relative_to(base: &Path, target: &str) -> PathBuf {
    let p = Path::new(target);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new("")).join(p)
    }
}

pub fn load_cube(manifest_path: &Path) -> Result<HsiCube> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: CubeManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(format!("cube manifest: {e}")))?;
    if manifest.dtype != CUBE_DTYPE {
        return Err(Error::format(format!(
            "unsupported dtype {:?}, expected {CUBE_DTYPE:?}",
            manifest.dtype
        )));
    }
    if manifest.layout != CUBE_LAYOUT {
        return Err(Error::format(format!(
            "unsupported layout {:?}, expected {CUBE_LAYOUT:?}",
            manifest.layout
        )));
    }
    let (h, w, b) = (manifest.height, manifest.width, manifest.bands);
    if h == 0 || w == 0 || b == 0 {
        return Err(Error::format("cube dimensions must be positive"));
    }
    let raw = fs::read(relative_to(manifest_path, &manifest.data_path))?;
    let expected = h * w * b * 4;
    if raw.len() != expected {
        return Err(Error::format(format!(
            "raw data is {} bytes, manifest implies {expected}",
            raw.len()
        )));
    }
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteData { index });
    }
    // BSQ: value (band, pixel) sits at band * n + pixel, i.e. the row-major
    // layout of the bands × pixels matrix.
    let pixels = Matrix::from_row_iterator(b, h * w, values.iter().map(|&v| f64::from(v)));
    HsiCube::new(h, w, pixels)
}

/// Write `cube` as `f32le` BSQ. The raw file is `data_file` if given, else
/// the manifest path with a `.f32` extension.
pub fn write_cube(cube: &HsiCube, manifest_path: &Path, data_file: Option<&str>) -> Result<()> {
    let data_name = match data_file {
        Some(name) => name.to_string(),
        None => manifest_path
            .with_extension("f32")
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::format("manifest path has no file name"))?
            .to_string(),
    };
    let mut raw = Vec::with_capacity(cube.pixels.len() * 4);
    for band in cube.pixels.row_iter() {
        for &v in band.iter() {
            raw.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    write_atomic(&relative_to(manifest_path, &data_name), &raw)?;
    let manifest = CubeManifest {
        height: cube.height,
        width: cube.width,
        bands: cube.bands(),
        dtype: CUBE_DTYPE.into(),
        layout: CUBE_LAYOUT.into(),
        data_path: data_name,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(manifest_path, json.as_bytes())
}

/// Integer raster as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub height: usize,
    pub width: usize,
    pub values: Vec<u64>,
}

pub fn parse_raster(text: &str) -> Result<Raster> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::format("empty raster"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::format(format!("bad raster header {header:?}")))
        })
        .collect::<Result<_>>()?;
    let [height, width] = dims[..] else {
        return Err(Error::format(format!(
            "raster header must be `h w`, got {header:?}"
        )));
    };
    let mut values = Vec::with_capacity(height * width);
    let mut rows = 0;
    for line in lines {
        let row: Vec<u64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<u64>().map_err(|_| {
                    Error::format(format!("raster entry {t:?} is not a non-negative integer"))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != width {
            return Err(Error::format(format!(
                "raster row {rows} has {} entries, expected {width}",
                row.len()
            )));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != height {
        return Err(Error::format(format!(
            "raster has {rows} rows, header says {height}"
        )));
    }
    Ok(Raster {
        height,
        width,
        values,
    })
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    parse_raster(&fs::read_to_string(path)?)
}

pub fn format_raster(height: usize, width: usize, values: &[u64]) -> String {
    let mut out = format!("{height} {width}\n");
    for row in values.chunks(width.max(1)) {
        let line: Vec<String> = row.iter().map(u64::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_raster(path: &Path, height: usize, width: usize, values: &[u64]) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::ShapeMismatch(format!(
            "{} values for a {height}x{width} raster",
            values.len()
        )));
    }
    write_atomic(path, format_raster(height, width, values).as_bytes())
}

/// Dense class `c` corresponds to `original_ids[c - 1]` in the source file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassMapping {
    pub original_ids: Vec<u64>,
}

impl ClassMapping {
    pub fn dense_of(&self, original: u64) -> Option<u32> {
        self.original_ids
            .iter()
            .position(|&o| o == original)
            .map(|i| i as u32 + 1)
    }

    pub fn original_of(&self, dense: u32) -> Option<u64> {
        match dense {
            0 => Some(0),
            d => self.original_ids.get(d as usize - 1).copied(),
        }
    }
}

/// Map raw ids to dense classes `1..=C` in order of first appearance; `0`
/// stays unlabeled.
pub fn densify_labels(raster: &Raster) -> Result<(LabelField, ClassMapping)> {
    let mut mapping = ClassMapping::default();
    let mut index: HashMap<u64, u32> = HashMap::new();
    let labels = raster
        .values
        .iter()
        .map(|&v| {
            if v == 0 {
                return 0;
            }
            *index.entry(v).or_insert_with(|| {
                mapping.original_ids.push(v);
                mapping.original_ids.len() as u32
            })
        })
        .collect();
    let field = LabelField::with_classes(
        raster.height,
        raster.width,
        labels,
        mapping.original_ids.len() as u32,
    )?;
    Ok((field, mapping))
}

pub fn load_labels(path: &Path) -> Result<(LabelField, ClassMapping)> {
    densify_labels(&read_raster(path)?)
}

/// Gray level of class `class` out of `classes`: `round(255 c / C)` with
/// halves rounded up, `0` for unlabeled.
pub fn gray_level(class: u32, classes: u32) -> u8 {
    if class == 0 || classes == 0 {
        return 0;
    }
    let (c, n) = (u64::from(class), u64::from(classes));
    ((510 * c + n) / (2 * n)).min(255) as u8
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Decode a binary PGM with maxval 255; returns `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = 0;
    let mut next_token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if next_token()? != "P5" {
        return Err(Error::format("not a binary PGM (P5)"));
    }
    let mut number = || -> Result<usize> {
        let t = next_token()?;
        t.parse()
            .map_err(|_| Error::format(format!("bad PGM header field {t:?}")))
    };
    let (width, height, maxval) = (number()?, number()?, number()?);
    if maxval != 255 {
        return Err(Error::format(format!("PGM maxval {maxval} unsupported")));
    }
    // Exactly one whitespace byte separates the header from the data.
    let data = &bytes[pos + 1..];
    if data.len() != width * height {
        return Err(Error::format(format!(
            "PGM data is {} bytes, expected {}",
            data.len(),
            width * height
        )));
    }
    Ok((width, height, data.to_vec()))
}

/// Palette written next to a map: `map.pgm` gets `map.palette.txt`.
pub fn palette_path(map_path: &Path) -> PathBuf {
    map_path.with_extension("palette.txt")
}

/// Render a class map as PGM and write its palette (`class gray` per line,
/// with original ids when a mapping is supplied).
pub fn render_map(
    predictions: &LabelField,
    path: &Path,
    mapping: Option<&ClassMapping>,
) -> Result<()> {
    let classes = predictions.num_classes;
    let pixels: Vec<u8> = predictions
        .labels
        .iter()
        .map(|&c| gray_level(c, classes))
        .collect();
    write_atomic(
        path,
        &encode_pgm(predictions.width, predictions.height, &pixels),
    )?;
    let mut palette = String::from("# class gray\n0 0\n");
    for c in 1..=classes {
        let id = mapping
            .and_then(|m| m.original_of(c))
            .unwrap_or(u64::from(c));
        palette.push_str(&format!("{id} {}\n", gray_level(c, classes)));
    }
    write_atomic(&palette_path(path), palette.as_bytes())
}

/// Keys accepted in run configs and as CLI flags.
pub const RUN_CONFIG_KEYS: &[&str] = &[
    "preset",
    "cube",
    "labels",
    "output",
    "t_max",
    "superpixels",
    "delta",
    "m_split",
    "lambda",
    "beta",
    "mu0",
    "rho",
    "mu_max",
    "eps",
    "max_iter",
    "classifier",
    "k",
    "train_percent",
    "seed",
];

const PATH_KEYS: &[&str] = &["cube", "labels", "output"];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    // Directory that relative paths in `value` resolve against.
    origin: Option<PathBuf>,
}

/// Flat `key = value` run configuration.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    entries: BTreeMap<String, Entry>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_origin(text, None)
    }

    /// Load a config file. Relative paths inside resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let origin = path.parent().map(Path::to_path_buf);
        Self::parse_with_origin(&text, origin)
    }

    fn parse_with_origin(text: &str, origin: Option<PathBuf>) -> Result<Self> {
        let mut config = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if config.entries.contains_key(key) {
                return Err(Error::format(format!(
                    "line {}: duplicate key {key:?}",
                    n + 1
                )));
            }
            config.insert(key, value, origin.clone())?;
        }
        Ok(config)
    }

    fn insert(&mut self, key: &str, value: &str, origin: Option<PathBuf>) -> Result<()> {
        if !RUN_CONFIG_KEYS.contains(&key) {
            return Err(Error::format(format!("unknown config key {key:?}")));
        }
        if value.is_empty() {
            return Err(Error::format(format!(
                "config key {key:?} has an empty value"
            )));
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                origin,
            },
        );
        Ok(())
    }

    /// Override a key; relative paths resolve against the working directory.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.insert(key, value, None)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        debug_assert!(PATH_KEYS.contains(&key));
        self.entries.get(key).map(|e| match &e.origin {
            Some(dir) if Path::new(&e.value).is_relative() => dir.join(&e.value),
            _ => PathBuf::from(&e.value),
        })
    }

    /// Keys from `required` that are missing.
    pub fn missing<'k>(&self, required: &[&'k str]) -> Vec<&'k str> {
        required
            .iter()
            .copied()
            .filter(|k| !self.entries.contains_key(*k))
            .collect()
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::format(format!("config key {key:?}: cannot parse {v:?}")))
            })
            .transpose()
    }

    /// Build a pipeline configuration: the named preset (default
    /// `indian_pines`) with every present key applied on top.
    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let preset = self.get("preset").unwrap_or("indian_pines");
        let mut c = PipelineConfig::preset(preset)
            .ok_or_else(|| Error::format(format!("unknown preset {preset:?}")))?;
        if let Some(v) = self.parsed("t_max")? {
            c.t_max = v;
        }
        if let Some(v) = self.parsed("superpixels")? {
            c.initial_superpixels = v;
        }
        if let Some(v) = self.parsed("delta")? {
            c.delta = v;
        }
        if let Some(v) = self.parsed("m_split")? {
            c.m_split = v;
        }
        if let Some(v) = self.parsed("lambda")? {
            c.dlrr.lambda = v;
        }
        if let Some(v) = self.parsed("beta")? {
            c.dlrr.beta = v;
        }
        if let Some(v) = self.parsed("mu0")? {
            c.dlrr.mu0 = v;
        }
        if let Some(v) = self.parsed("rho")? {
            c.dlrr.rho = v;
        }
        if let Some(v) = self.parsed("mu_max")? {
            c.dlrr.mu_max = v;
        }
        if let Some(v) = self.parsed("eps")? {
            c.dlrr.eps = v;
        }
        if let Some(v) = self.parsed("max_iter")? {
            c.dlrr.max_iter = v;
        }
        if let Some(v) = self.parsed("train_percent")? {
            c.train_percent = v;
        }
        if let Some(v) = self.parsed("seed")? {
            c.seed = v;
        }
        let k: usize = self.parsed("k")?.unwrap_or(5);
        c.classifier = match self.get("classifier") {
            None => match c.classifier {
                ClassifierKind::Knn { .. } => ClassifierKind::Knn { k },
                other => other,
            },
            Some("knn") => ClassifierKind::Knn { k },
            Some("nearest-centroid") => ClassifierKind::NearestCentroid,
            Some(other) => {
                return Err(Error::format(format!(
                    "unknown classifier {other:?} (expected knn or nearest-centroid)"
                )))
            }
        };
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_raw(dir: &Path, name: &str, values: &[f32]) {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join(name), bytes).unwrap();
    }

    fn manifest(dir: &Path, h: usize, w: usize, b: usize) -> PathBuf {
        let path = dir.join("cube.json");
        let m = CubeManifest {
            height: h,
            width: w,
            bands: b,
            dtype: CUBE_DTYPE.into(),
            layout: CUBE_LAYOUT.into(),
            data_path: "cube.f32".into(),
        };
        fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
        path
    }

    #[test]
    fn bsq_layout_maps_to_pixel_columns() {
        let dir = tempfile::tempdir().unwrap();
        write_raw(dir.path(), "cube.f32", &[1.0, 2.0, 3.0, 4.0]);
        let cube = load_cube(&manifest(dir.path(), 2, 2, 1)).unwrap();
        assert_eq!(cube.pixels.as_slice(), &[1.0, 2.0, 3.0, 4.0]);

        // Two bands: band-major on disk, one column per pixel in memory.
        write_raw(
            dir.path(),
            "cube.f32",
            &[1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0],
        );
        let cube = load_cube(&manifest(dir.path(), 2, 2, 2)).unwrap();
        assert_eq!(cube.pixels.column(2).as_slice(), &[3.0, 30.0]);
    }

    #[test]
    fn truncated_and_non_finite_cubes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_raw(dir.path(), "cube.f32", &[1.0, 2.0, 3.0]);
        assert!(matches!(
            load_cube(&manifest(dir.path(), 2, 2, 1)),
            Err(Error::Format(_))
        ));

        write_raw(dir.path(), "cube.f32", &[1.0, f32::NAN, 3.0, 4.0]);
        assert!(matches!(
            load_cube(&manifest(dir.path(), 2, 2, 1)),
            Err(Error::NonFiniteData { index: 1 })
        ));
    }

    #[test]
    fn unsupported_dtype_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        write_raw(dir.path(), "cube.f32", &[1.0; 4]);
        let path = dir.path().join("m.json");
        fs::write(
            &path,
            r#"{"height":2,"width":2,"bands":1,"dtype":"f64le","layout":"bsq","data_path":"cube.f32"}"#,
        )
        .unwrap();
        assert!(matches!(load_cube(&path), Err(Error::Format(_))));
    }

    #[test]
    fn label_densification() {
        let (field, mapping) = densify_labels(&parse_raster("1 3\n0 2 5\n").unwrap()).unwrap();
        assert_eq!(field.labels, vec![0, 1, 2]);
        assert_eq!(field.num_classes, 2);
        assert_eq!(mapping.original_ids, vec![2, 5]);
        assert_eq!(mapping.dense_of(5), Some(2));

        assert!(matches!(parse_raster("1 2\n0 -1\n"), Err(Error::Format(_))));
        assert!(matches!(parse_raster("2 2\n0 1\n"), Err(Error::Format(_))));
        assert!(matches!(
            parse_raster("1 2\n0 1 2\n"),
            Err(Error::Format(_))
        ));

        let (zeros, _) = densify_labels(&parse_raster("2 2\n0 0\n0 0\n").unwrap()).unwrap();
        assert!(matches!(
            crate::classify::split(&zeros, 0.1, 0),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn gray_levels() {
        assert_eq!(gray_level(1, 2), 128);
        assert_eq!(gray_level(2, 2), 255);
        assert_eq!(gray_level(0, 2), 0);
        for classes in 1..=255u32 {
            let levels: std::collections::BTreeSet<u8> =
                (0..=classes).map(|c| gray_level(c, classes)).collect();
            assert_eq!(levels.len(), classes as usize + 1, "C = {classes}");
        }
    }

    #[test]
    fn render_map_writes_pgm_and_palette() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.pgm");
        let field = LabelField::new(1, 2, vec![1, 2]).unwrap();
        render_map(&field, &path, None).unwrap();
        let (w, h, px) = decode_pgm(&fs::read(&path).unwrap()).unwrap();
        assert_eq!((w, h, px), (2, 1, vec![128, 255]));
        assert!(fs::read_to_string(palette_path(&path))
            .unwrap()
            .contains("2 255"));

        let blank = LabelField::with_classes(2, 2, vec![0; 4], 3).unwrap();
        render_map(&blank, &path, None).unwrap();
        let (_, _, px) = decode_pgm(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(px, vec![0; 4]);
    }

    #[test]
    fn pgm_round_trip_recovers_classes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.pgm");
        for classes in [2u32, 7, 16, 255] {
            let labels: Vec<u32> = (0..=classes).collect();
            let n = labels.len();
            let field = LabelField::with_classes(1, n, labels.clone(), classes).unwrap();
            render_map(&field, &path, None).unwrap();
            let (_, _, px) = decode_pgm(&fs::read(&path).unwrap()).unwrap();
            let inverse: HashMap<u8, u32> =
                (0..=classes).map(|c| (gray_level(c, classes), c)).collect();
            let recovered: Vec<u32> = px.iter().map(|g| inverse[g]).collect();
            assert_eq!(recovered, labels);
        }
    }

    #[test]
    fn run_config_parsing() {
        let text = "# preset values\npreset = salinas\nlambda = 0.02 # override\nseed=7\nclassifier = nearest-centroid\n";
        let cfg = RunConfig::parse(text).unwrap();
        let p = cfg.pipeline_config().unwrap();
        assert_eq!(p.dlrr.lambda, 0.02);
        assert_eq!(p.delta, 0.6);
        assert_eq!(p.seed, 7);
        assert_eq!(p.classifier, ClassifierKind::NearestCentroid);
        assert_eq!(cfg.missing(&["cube", "seed"]), vec!["cube"]);

        assert!(matches!(
            RunConfig::parse("colour = red"),
            Err(Error::Format(_))
        ));
        assert!(matches!(RunConfig::parse("seed 7"), Err(Error::Format(_))));
        assert!(matches!(
            RunConfig::parse("seed = 1\nseed = 2"),
            Err(Error::Format(_))
        ));
        let bad = RunConfig::parse("delta = lots").unwrap();
        assert!(bad.pipeline_config().is_err());
    }

    #[test]
    fn config_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "cube = data/c.json\noutput = /abs/out\n").unwrap();
        let mut cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.path("cube").unwrap(), dir.path().join("data/c.json"));
        assert_eq!(cfg.path("output").unwrap(), PathBuf::from("/abs/out"));
        cfg.set("cube", "here.json").unwrap();
        assert_eq!(cfg.path("cube").unwrap(), PathBuf::from("here.json"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn cube_round_trip_is_bitwise(
            h in 1usize..5, w in 1usize..5, b in 1usize..4,
            seed in prop::collection::vec(-1e6f32..1e6, 64)
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.json");
            let values: Vec<f64> = (0..h * w * b).map(|i| f64::from(seed[i % seed.len()])).collect();
            let cube = HsiCube::new(h, w, Matrix::from_vec(b, h * w, values)).unwrap();
            write_cube(&cube, &path, None).unwrap();
            let back = load_cube(&path).unwrap();
            prop_assert_eq!(back, cube);
        }

        #[test]
        fn raster_round_trip(h in 1usize..6, w in 1usize..6, v in prop::collection::vec(0u64..1000, 36)) {
            let values = v[..h * w].to_vec();
            let r = parse_raster(&format_raster(h, w, &values)).unwrap();
            prop_assert_eq!(r, Raster { height: h, width: w, values });
        }
    }
}
