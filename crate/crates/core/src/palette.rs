//! Class/color palettes, label-image codec and background preparation.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

use crate::grid::{CellGrid, GridError, GridGeometry, SemClass};

pub type Rgb = [u8; 3];

#[derive(Debug, Error)]
pub enum PaletteError {
    #[error("palette line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("palette is missing a color for class `{0}`")]
    MissingClass(SemClass),
    #[error("classes `{0}` and `{1}` share color {2:?}")]
    DuplicateColor(SemClass, SemClass, Rgb),
    #[error("unknown color {color:?} at pixel (row {x}, col {y})")]
    UnknownColor { x: usize, y: usize, color: Rgb },
    #[error(transparent)]
    Geometry(#[from] GridError),
    #[error("cannot strip background class `{0}`")]
    StripBackground(SemClass),
    #[error("image I/O: {0}")]
    Image(#[from] image::ImageError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported image extension for {0}")]
    Extension(String),
}

/// Injective mapping from every [`SemClass`] to an RGB color.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassPalette {
    colors: [Rgb; 7],
}

impl Default for ClassPalette {
    fn default() -> Self {
        ClassPalette {
            colors: [
                [128, 128, 128], // void: gray
                [128, 255, 128], // vocal folds: light green
                [0, 128, 0],     // other tissue: green
                [0, 0, 255],     // glottal space: blue
                [128, 0, 255],   // pathology: purple
                [255, 0, 0],     // surgical tool: red
                [255, 255, 0],   // intubation: yellow
            ],
        }
    }
}

impl ClassPalette {
    pub fn new(colors: [Rgb; 7]) -> Result<Self, PaletteError> {
        for i in 0..7 {
            for j in (i + 1)..7 {
                if colors[i] == colors[j] {
                    return Err(PaletteError::DuplicateColor(SemClass::ALL[i], SemClass::ALL[j], colors[i]));
                }
            }
        }
        Ok(ClassPalette { colors })
    }

    pub fn color(&self, cls: SemClass) -> Rgb {
        self.colors[cls.index()]
    }

    pub fn class_of(&self, color: Rgb) -> Option<SemClass> {
        self.colors.iter().position(|&c| c == color).map(|i| SemClass::ALL[i])
    }

    /// Closest class under the L∞ color distance, if within `max_distance`.
    /// Ties resolve to the lower class index.
    pub fn snap(&self, color: Rgb, max_distance: u8) -> Option<SemClass> {
        let dist = |c: &Rgb| (0..3).map(|k| c[k].abs_diff(color[k])).max().unwrap_or(0);
        let (i, best) = self
            .colors
            .iter()
            .enumerate()
            .min_by_key(|(i, c)| (dist(c), *i))?;
        (dist(best) <= max_distance).then(|| SemClass::ALL[i])
    }

    /// Parses `class = R,G,B` lines. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, PaletteError> {
        let mut colors: [Option<Rgb>; 7] = [None; 7];
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| PaletteError::Parse { line: line_no, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `class = R,G,B`".into()))?;
            let key = key.trim();
            let cls = SemClass::from_name(key).ok_or_else(|| err(format!("unknown class `{key}`")))?;
            let parts: Vec<&str> = value.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(err(format!("expected three components, got {}", parts.len())));
            }
            let mut rgb = [0u8; 3];
            for (slot, p) in rgb.iter_mut().zip(&parts) {
                *slot = p.parse().map_err(|_| err(format!("bad color component `{p}`")))?;
            }
            if colors[cls.index()].replace(rgb).is_some() {
                return Err(err(format!("class `{key}` defined twice")));
            }
        }
        let mut out = [[0u8; 3]; 7];
        for (i, c) in colors.iter().enumerate() {
            out[i] = c.ok_or(PaletteError::MissingClass(SemClass::ALL[i]))?;
        }
        ClassPalette::new(out)
    }

    pub fn load(path: &Path) -> Result<Self, PaletteError> {
        ClassPalette::parse(&fs::read_to_string(path)?)
    }
}

impl fmt::Display for ClassPalette {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for cls in SemClass::ALL {
            let [r, g, b] = self.color(cls);
            writeln!(f, "{cls} = {r},{g},{b}")?;
        }
        Ok(())
    }
}

/// Packed 24-bit RGB raster, row-major from the top row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl LabelImage {
    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (x * self.width + y) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn from_rgb(img: RgbImage) -> Self {
        LabelImage { width: img.width() as usize, height: img.height() as usize, pixels: img.into_raw() }
    }

    fn to_rgb(&self) -> RgbImage {
        RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("pixel buffer matches dimensions")
    }

    /// Reads a PNG or binary PPM file.
    pub fn read(path: &Path) -> Result<Self, PaletteError> {
        let format = format_for(path)?;
        let bytes = fs::read(path)?;
        let img = image::load_from_memory_with_format(&bytes, format)?;
        Ok(LabelImage::from_rgb(img.to_rgb8()))
    }

    /// Encodes into PNG or binary PPM bytes depending on `path`'s extension.
    pub fn encode_for(&self, path: &Path) -> Result<Vec<u8>, PaletteError> {
        let format = format_for(path)?;
        let mut buf = Cursor::new(Vec::new());
        self.to_rgb().write_to(&mut buf, format)?;
        Ok(buf.into_inner())
    }

    pub fn write(&self, path: &Path) -> Result<(), PaletteError> {
        fs::write(path, self.encode_for(path)?)?;
        Ok(())
    }
}

fn format_for(path: &Path) -> Result<ImageFormat, PaletteError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("ppm") | Some("pnm") => Ok(ImageFormat::Pnm),
        _ => Err(PaletteError::Extension(path.display().to_string())),
    }
}

pub fn is_label_image_path(path: &Path) -> bool {
    format_for(path).is_ok()
}

/// Decodes an image into a grid, requiring an exact palette match for every pixel.
pub fn decode_label_image(
    img: &LabelImage,
    palette: &ClassPalette,
    block_dim: usize,
    sub_dim: usize,
) -> Result<CellGrid, PaletteError> {
    decode_with(img, block_dim, sub_dim, |c| palette.class_of(c))
}

/// Like [`decode_label_image`] but snaps each pixel to the nearest palette color
/// within `max_distance` (L∞).
pub fn decode_label_image_snapped(
    img: &LabelImage,
    palette: &ClassPalette,
    block_dim: usize,
    sub_dim: usize,
    max_distance: u8,
) -> Result<CellGrid, PaletteError> {
    decode_with(img, block_dim, sub_dim, |c| palette.snap(c, max_distance))
}

fn decode_with(
    img: &LabelImage,
    block_dim: usize,
    sub_dim: usize,
    lookup: impl Fn(Rgb) -> Option<SemClass>,
) -> Result<CellGrid, PaletteError> {
    let geometry = GridGeometry::new(img.width, img.height, block_dim, sub_dim)?;
    let mut cells = Vec::with_capacity(img.width * img.height);
    for (i, px) in img.pixels.chunks_exact(3).enumerate() {
        let color = [px[0], px[1], px[2]];
        match lookup(color) {
            Some(c) => cells.push(c),
            None => {
                return Err(PaletteError::UnknownColor { x: i / img.width, y: i % img.width, color });
            }
        }
    }
    Ok(CellGrid::from_cells(geometry, cells)?)
}

pub fn encode_label_image(grid: &CellGrid, palette: &ClassPalette) -> LabelImage {
    let mut pixels = Vec::with_capacity(grid.cells().len() * 3);
    for &c in grid.cells() {
        pixels.extend_from_slice(&palette.color(c));
    }
    LabelImage { width: grid.width(), height: grid.height(), pixels }
}

/// How stripped cells are refilled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplacementRule {
    /// Pathology becomes vocal folds, intubation becomes glottal space, and a
    /// surgical tool becomes whichever of those two dominates its block.
    #[default]
    Anatomical,
    /// Every victim cell becomes the given class.
    Uniform(SemClass),
}

/// Replaces every cell of a victim class according to `rule`.
pub fn strip_classes(
    grid: &CellGrid,
    victims: &BTreeSet<SemClass>,
    rule: ReplacementRule,
) -> Result<CellGrid, PaletteError> {
    if let Some(&bad) = victims.iter().find(|c| !c.is_dynamic()) {
        return Err(PaletteError::StripBackground(bad));
    }
    if let ReplacementRule::Uniform(c) = rule {
        if c.is_dynamic() {
            return Err(PaletteError::StripBackground(c));
        }
    }
    if victims.is_empty() {
        return Ok(grid.clone());
    }
    let g = *grid.geometry();
    // Majority class per block, from the cells that are not being stripped.
    let tool_fill: Vec<SemClass> = (0..g.block_count())
        .map(|idb| {
            let rect = g.block_rect(crate::grid::BlockRef { idb });
            let vf = grid.count_in(&rect, SemClass::VocalFolds);
            let gs = grid.count_in(&rect, SemClass::GlottalSpace);
            if gs > vf { SemClass::GlottalSpace } else { SemClass::VocalFolds }
        })
        .collect();
    let mut out = grid.clone();
    for ((x, y), c) in grid.iter() {
        if !victims.contains(&c) {
            continue;
        }
        let replacement = match rule {
            ReplacementRule::Uniform(r) => r,
            ReplacementRule::Anatomical => match c {
                SemClass::Pathology => SemClass::VocalFolds,
                SemClass::Intubation => SemClass::GlottalSpace,
                _ => tool_fill[g.block_of(x, y).idb],
            },
        };
        out.set(x, y, replacement);
    }
    Ok(out)
}

/// Removes all dynamic classes with the default rule.
pub fn strip_dynamic(grid: &CellGrid) -> CellGrid {
    let victims = SemClass::DYNAMIC.into_iter().collect();
    strip_classes(grid, &victims, ReplacementRule::Anatomical).expect("dynamic classes are strippable")
}

/// Per-class cell counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct ClassHistogram([usize; 7]);

impl ClassHistogram {
    pub fn get(&self, cls: SemClass) -> usize {
        self.0[cls.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn present(&self) -> BTreeSet<SemClass> {
        SemClass::ALL.into_iter().filter(|&c| self.get(c) > 0).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SemClass, usize)> + '_ {
        SemClass::ALL.into_iter().map(|c| (c, self.get(c)))
    }
}

pub fn class_histogram(grid: &CellGrid) -> ClassHistogram {
    let mut h = [0usize; 7];
    for &c in grid.cells() {
        h[c.index()] += 1;
    }
    ClassHistogram(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(w: usize, h: usize) -> GridGeometry {
        GridGeometry::new(w, h, 8, 2).unwrap()
    }

    #[test]
    fn decode_uniform_small_image() {
        let p = ClassPalette::default();
        let img = LabelImage { width: 2, height: 2, pixels: p.color(SemClass::VocalFolds).repeat(4) };
        let grid = decode_label_image(&img, &p, 2, 1).unwrap();
        assert!(grid.cells().iter().all(|&c| c == SemClass::VocalFolds));
        assert_eq!(grid.cells().len(), 4);
    }

    #[test]
    fn decode_rejects_unknown_color_with_location() {
        let p = ClassPalette::default();
        let mut pixels = p.color(SemClass::Void).repeat(16);
        pixels[(4 + 2) * 3] = 7;
        let img = LabelImage { width: 4, height: 4, pixels };
        match decode_label_image(&img, &p, 4, 2) {
            Err(PaletteError::UnknownColor { x: 1, y: 2, color }) => assert_eq!(color, [7, 128, 128]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decode_rejects_bad_dimensions() {
        let p = ClassPalette::default();
        let img = LabelImage { width: 6, height: 4, pixels: p.color(SemClass::Void).repeat(24) };
        assert!(matches!(decode_label_image(&img, &p, 4, 2), Err(PaletteError::Geometry(_))));
    }

    #[test]
    fn snapping_tolerates_noise() {
        let p = ClassPalette::default();
        assert_eq!(p.snap([130, 250, 126], 8), Some(SemClass::VocalFolds));
        assert_eq!(p.snap([64, 64, 64], 8), None);
    }

    #[test]
    fn encode_void_is_uniform_gray() {
        let p = ClassPalette::default();
        let grid = CellGrid::filled(geom(16, 16), SemClass::Void);
        let img = encode_label_image(&grid, &p);
        assert!(img.pixels.chunks(3).all(|px| px == [128, 128, 128]));
        assert_eq!(encode_label_image(&grid.clone(), &p), img);
        assert_eq!(decode_label_image(&img, &p, 8, 2).unwrap(), grid);
    }

    #[test]
    fn palette_text_round_trip() {
        let p = ClassPalette::default();
        let text = p.to_string();
        assert_eq!(ClassPalette::parse(&text).unwrap(), p);
    }

    #[test]
    fn palette_parse_errors() {
        let base = ClassPalette::default().to_string();
        let missing: String = base.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(matches!(ClassPalette::parse(&missing), Err(PaletteError::MissingClass(SemClass::Void))));
        let dup = base.replace("255,255,0", "255,0,0");
        assert!(matches!(ClassPalette::parse(&dup), Err(PaletteError::DuplicateColor(..))));
        assert!(matches!(
            ClassPalette::parse("tumor = 1,2,3"),
            Err(PaletteError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ClassPalette::parse("# header\nvoid = 1,2"),
            Err(PaletteError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn strip_disc_of_pathology() {
        let g = geom(16, 16);
        let grid = CellGrid::from_fn(g, |x, y| {
            let (dx, dy) = (x as i64 - 8, y as i64 - 8);
            if dx * dx + dy * dy <= 9 { SemClass::Pathology } else { SemClass::VocalFolds }
        });
        let victims = [SemClass::Pathology].into_iter().collect();
        let out = strip_classes(&grid, &victims, ReplacementRule::Anatomical).unwrap();
        assert_eq!(out, CellGrid::filled(g, SemClass::VocalFolds));
    }

    #[test]
    fn strip_nothing_is_identity() {
        let g = geom(16, 16);
        let grid = CellGrid::from_fn(g, |x, _| if x < 4 { SemClass::Intubation } else { SemClass::Void });
        let out = strip_classes(&grid, &BTreeSet::new(), ReplacementRule::Anatomical).unwrap();
        assert_eq!(out, grid);
    }

    #[test]
    fn strip_intubation_inside_glottis() {
        let g = geom(16, 16);
        let grid = CellGrid::from_fn(g, |x, y| match (x, y) {
            (10..=15, 6..=9) => SemClass::Intubation,
            (_, 4..=11) => SemClass::GlottalSpace,
            _ => SemClass::OtherTissue,
        });
        let before = class_histogram(&grid);
        let victims = [SemClass::Intubation].into_iter().collect();
        let out = strip_classes(&grid, &victims, ReplacementRule::Anatomical).unwrap();
        let after = class_histogram(&out);
        assert_eq!(after.get(SemClass::Intubation), 0);
        assert_eq!(
            after.get(SemClass::GlottalSpace),
            before.get(SemClass::GlottalSpace) + before.get(SemClass::Intubation)
        );
        assert_eq!(after.get(SemClass::OtherTissue), before.get(SemClass::OtherTissue));
    }

    #[test]
    fn strip_tool_uses_block_majority() {
        let g = geom(16, 8);
        // left block mostly glottal, right block mostly vocal folds
        let grid = CellGrid::from_fn(g, |x, y| match (x, y) {
            (3, _) => SemClass::SurgicalTool,
            (_, 0..=7) => SemClass::GlottalSpace,
            _ => SemClass::VocalFolds,
        });
        let out = strip_dynamic(&grid);
        assert_eq!(out.get(3, 2), SemClass::GlottalSpace);
        assert_eq!(out.get(3, 12), SemClass::VocalFolds);
    }

    #[test]
    fn strip_rejects_background_victims() {
        let grid = CellGrid::filled(geom(8, 8), SemClass::Void);
        let victims = [SemClass::VocalFolds].into_iter().collect();
        assert!(matches!(
            strip_classes(&grid, &victims, ReplacementRule::Anatomical),
            Err(PaletteError::StripBackground(SemClass::VocalFolds))
        ));
    }

    #[test]
    fn histogram_examples() {
        let g = GridGeometry::default();
        let h = class_histogram(&CellGrid::filled(g, SemClass::Void));
        assert_eq!(h.get(SemClass::Void), 262_144);
        assert_eq!(h.total(), 262_144);
        let half = CellGrid::from_fn(g, |x, _| if x < 256 { SemClass::VocalFolds } else { SemClass::GlottalSpace });
        let h = class_histogram(&half);
        assert_eq!(h.get(SemClass::VocalFolds), h.get(SemClass::GlottalSpace));
    }

    #[test]
    fn file_round_trip_png_and_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let p = ClassPalette::default();
        let grid = CellGrid::from_fn(geom(16, 8), |x, y| SemClass::ALL[(x + y) % 7]);
        let img = encode_label_image(&grid, &p);
        for name in ["a.png", "a.ppm"] {
            let path = dir.path().join(name);
            img.write(&path).unwrap();
            let back = LabelImage::read(&path).unwrap();
            assert_eq!(back, img);
        }
        assert!(img.write(&dir.path().join("a.jpg")).is_err());
    }
}
