//! Tactile class palette, nearest-color pixel classification, and textured
//! previews.
//!
//! A tactile map is represented as an RGB image in which every feature class
//! owns one exact color. Segmentation assigns each pixel to the palette entry
//! with the smallest summed per-channel absolute difference (L1); pixels whose
//! best match is still further away than the background threshold fall back to
//! [`ClassId::Background`]. That threshold rule is what keeps near-black
//! strokes and other off-palette colors from being swallowed by the grey
//! hospital class.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The six tactile feature classes plus background. No other labels exist
/// anywhere in the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassId {
    Streets,
    Highways,
    Parks,
    Water,
    Buildings,
    Hospitals,
    Background,
}

impl ClassId {
    /// All seven classes in canonical palette order. The order matters: it is
    /// the tie-break order for nearest-color classification.
    pub const ALL: [ClassId; 7] = [
        ClassId::Streets,
        ClassId::Highways,
        ClassId::Parks,
        ClassId::Water,
        ClassId::Buildings,
        ClassId::Hospitals,
        ClassId::Background,
    ];

    /// The six scored feature classes (everything except background).
    pub const FEATURES: [ClassId; 6] = [
        ClassId::Streets,
        ClassId::Highways,
        ClassId::Parks,
        ClassId::Water,
        ClassId::Buildings,
        ClassId::Hospitals,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassId::Streets => "streets",
            ClassId::Highways => "highways",
            ClassId::Parks => "parks",
            ClassId::Water => "water",
            ClassId::Buildings => "buildings",
            ClassId::Hospitals => "hospitals",
            ClassId::Background => "background",
        }
    }

    /// Display name as used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ClassId::Streets => "Streets",
            ClassId::Highways => "Highways",
            ClassId::Parks => "Parks",
            ClassId::Water => "Water",
            ClassId::Buildings => "Buildings",
            ClassId::Hospitals => "Hospitals",
            ClassId::Background => "Background",
        }
    }

    pub fn from_name(name: &str) -> Option<ClassId> {
        ClassId::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Error)]
pub enum PaletteError {
    #[error("palette must contain each of the 7 classes exactly once; {0} is {1}")]
    ClassCount(ClassId, &'static str),
    #[error("palette colors must be pairwise distinct: {0} and {1} share #{2:02x}{3:02x}{4:02x}")]
    DuplicateColor(ClassId, ClassId, u8, u8, u8),
    #[error("line {line}: expected `key = value`")]
    ConfigSyntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: `{value}` is not a 6-digit hex color")]
    BadColor { line: usize, value: String },
    #[error("line {line}: `{value}` is not a valid threshold")]
    BadThreshold { line: usize, value: String },
    #[error("texture map assigns a pattern to {0}, which takes no texture")]
    TextureForBackground(ClassId),
    #[error("no texture pattern configured for class {0}")]
    MissingTexture(ClassId),
    #[error("reading palette file: {0}")]
    Io(#[from] std::io::Error),
}

/// One palette row: a class, its display name, and its exact RGB color.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub class: ClassId,
    pub name: String,
    pub rgb: [u8; 3],
}

/// The tactile class palette: an ordered list of (class, color) bindings plus
/// the background-fallback distance threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPalette {
    entries: Vec<PaletteEntry>,
    background_threshold: u32,
}

/// Background fallback threshold on the summed per-channel L1 distance.
pub const DEFAULT_BACKGROUND_THRESHOLD: u32 = 230;

impl Default for ClassPalette {
    fn default() -> Self {
        let colors: [(ClassId, [u8; 3]); 7] = [
            (ClassId::Streets, [0xff, 0x00, 0xff]),
            (ClassId::Highways, [0xff, 0xff, 0x00]),
            (ClassId::Parks, [0x00, 0xff, 0x00]),
            (ClassId::Water, [0x00, 0x00, 0xff]),
            (ClassId::Buildings, [0x00, 0xff, 0xff]),
            (ClassId::Hospitals, [0x80, 0x80, 0x80]),
            (ClassId::Background, [0xff, 0xff, 0xff]),
        ];
        let entries = colors
            .into_iter()
            .map(|(class, rgb)| PaletteEntry {
                class,
                name: class.display_name().to_string(),
                rgb,
            })
            .collect();
        ClassPalette {
            entries,
            background_threshold: DEFAULT_BACKGROUND_THRESHOLD,
        }
    }
}

impl ClassPalette {
    /// Build a palette from explicit class colors. Every class must appear
    /// exactly once and all colors must be pairwise distinct.
    pub fn new(
        colors: BTreeMap<ClassId, [u8; 3]>,
        background_threshold: u32,
    ) -> Result<Self, PaletteError> {
        for class in ClassId::ALL {
            if !colors.contains_key(&class) {
                return Err(PaletteError::ClassCount(class, "missing"));
            }
        }
        let entries: Vec<PaletteEntry> = ClassId::ALL
            .into_iter()
            .map(|class| PaletteEntry {
                class,
                name: class.display_name().to_string(),
                rgb: colors[&class],
            })
            .collect();
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                if entries[i].rgb == entries[j].rgb {
                    let [r, g, b] = entries[i].rgb;
                    return Err(PaletteError::DuplicateColor(
                        entries[i].class,
                        entries[j].class,
                        r,
                        g,
                        b,
                    ));
                }
            }
        }
        Ok(ClassPalette {
            entries,
            background_threshold,
        })
    }

    /// Parse a plain-text `key = value` palette file. Keys are the lowercase
    /// class names mapped to 6-digit hex colors (an optional `#` or `0x`
    /// prefix is accepted), plus an optional `background_threshold`.
    pub fn from_config_str(text: &str) -> Result<Self, PaletteError> {
        let mut colors: BTreeMap<ClassId, [u8; 3]> = BTreeMap::new();
        let mut threshold = DEFAULT_BACKGROUND_THRESHOLD;
        let mut saw_threshold = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or(PaletteError::ConfigSyntax { line })?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            if key == "background_threshold" {
                if saw_threshold {
                    return Err(PaletteError::DuplicateKey { line, key });
                }
                saw_threshold = true;
                threshold = value.parse().map_err(|_| PaletteError::BadThreshold {
                    line,
                    value: value.to_string(),
                })?;
                continue;
            }
            let class = ClassId::from_name(&key).ok_or_else(|| PaletteError::UnknownKey {
                line,
                key: key.clone(),
            })?;
            if colors.contains_key(&class) {
                return Err(PaletteError::DuplicateKey { line, key });
            }
            colors.insert(class, parse_hex_color(value, line)?);
        }
        ClassPalette::new(colors, threshold)
    }

    pub fn from_config_file(path: &Path) -> Result<Self, PaletteError> {
        ClassPalette::from_config_str(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[PaletteEntry] {
        &self.entries
    }

    pub fn background_threshold(&self) -> u32 {
        self.background_threshold
    }

    /// The exact RGB color bound to a class.
    pub fn color(&self, class: ClassId) -> [u8; 3] {
        self.entries
            .iter()
            .find(|e| e.class == class)
            .map(|e| e.rgb)
            .expect("palette holds every class")
    }

    /// Nearest-color classification of one pixel.
    ///
    /// Returns the palette entry minimizing the summed per-channel absolute
    /// difference, ties broken by palette order. If even the best match is
    /// further than the background threshold, the pixel is background.
    pub fn classify_pixel(&self, rgb: [u8; 3]) -> ClassId {
        let mut best = ClassId::Background;
        let mut best_dist = u32::MAX;
        for entry in &self.entries {
            let dist = l1_distance(rgb, entry.rgb);
            if dist < best_dist {
                best_dist = dist;
                best = entry.class;
            }
        }
        if best_dist > self.background_threshold {
            ClassId::Background
        } else {
            best
        }
    }

    /// Per-pixel classification of a whole image.
    pub fn segment_image(&self, img: &RgbImage) -> ClassMask {
        let labels = img.pixels().map(|p| self.classify_pixel(p)).collect();
        ClassMask {
            width: img.width,
            height: img.height,
            labels,
        }
    }

    /// Paint a class mask back into an image using the exact palette colors.
    /// `segment_image(render_mask(m)) == m` for every mask.
    pub fn render_mask(&self, mask: &ClassMask) -> RgbImage {
        let mut data = Vec::with_capacity(mask.labels.len() * 3);
        for &label in &mask.labels {
            data.extend_from_slice(&self.color(label));
        }
        RgbImage {
            width: mask.width,
            height: mask.height,
            data,
        }
    }

    /// Replace each classified region with its black-on-white fill pattern,
    /// e.g. for a tactile-texture preview. Background stays white.
    pub fn texturize(
        &self,
        tactile: &RgbImage,
        textures: &TextureMap,
    ) -> Result<RgbImage, PaletteError> {
        let mut out = RgbImage::filled(tactile.width, tactile.height, [255, 255, 255]);
        for y in 0..tactile.height {
            for x in 0..tactile.width {
                let class = self.classify_pixel(tactile.get(x, y));
                if class == ClassId::Background {
                    continue;
                }
                let pattern = textures.pattern(class)?;
                if pattern.ink(x, y) {
                    out.set(x, y, [0, 0, 0]);
                }
            }
        }
        Ok(out)
    }
}

/// Summed per-channel absolute difference, range 0..=765.
pub fn l1_distance(a: [u8; 3], b: [u8; 3]) -> u32 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (i32::from(x) - i32::from(y)).unsigned_abs())
        .sum()
}

fn parse_hex_color(value: &str, line: usize) -> Result<[u8; 3], PaletteError> {
    let digits = value
        .strip_prefix("0x")
        .or_else(|| value.strip_prefix('#'))
        .unwrap_or(value);
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(PaletteError::BadColor {
            line,
            value: value.to_string(),
        });
    }
    let parse = |s: &str| u8::from_str_radix(s, 16).unwrap();
    Ok([
        parse(&digits[0..2]),
        parse(&digits[2..4]),
        parse(&digits[4..6]),
    ])
}

/// A row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be positive, got {0}x{1}")]
    EmptyDimensions(u32, u32),
    #[error("buffer length {len} does not match {width}x{height}x3")]
    BufferLength { len: usize, width: u32, height: u32 },
    #[error("decoding {path}: {source}")]
    Decode {
        path: String,
        source: image::ImageError,
    },
    #[error("encoding {path}: {source}")]
    Encode {
        path: String,
        source: image::ImageError,
    },
    #[error("{path}: expected an 8-bit RGB(A) image")]
    UnsupportedFormat { path: String },
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions(width, height));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImageError::BufferLength {
                len: data.len(),
                width,
                height,
            });
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    /// A solid-color image.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&rgb);
        }
        RgbImage {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.index(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.index(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    fn index(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * 3
    }

    /// Row-major pixel iterator.
    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let buf = image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("dimensions validated at construction");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| ImageError::Encode {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        let img = image::open(path).map_err(|source| ImageError::Decode {
            path: path.display().to_string(),
            source,
        })?;
        let rgb = img.into_rgb8();
        let (width, height) = rgb.dimensions();
        Ok(RgbImage {
            width,
            height,
            data: rgb.into_raw(),
        })
    }

    /// Encode to in-memory PNG bytes.
    pub fn png_bytes(&self) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        let buf = image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("dimensions validated at construction");
        buf.write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory png encode");
        out.into_inner()
    }

    pub fn decode_png(bytes: &[u8], origin: &str) -> Result<Self, ImageError> {
        let img = image::load_from_memory(bytes).map_err(|source| ImageError::Decode {
            path: origin.to_string(),
            source,
        })?;
        let rgb = img.into_rgb8();
        let (width, height) = rgb.dimensions();
        Ok(RgbImage {
            width,
            height,
            data: rgb.into_raw(),
        })
    }
}

/// Per-pixel class labels with the same dimensions as the image they were
/// derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask {
    width: u32,
    height: u32,
    labels: Vec<ClassId>,
}

impl ClassMask {
    pub fn new(width: u32, height: u32, labels: Vec<ClassId>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions(width, height));
        }
        if labels.len() != width as usize * height as usize {
            return Err(ImageError::BufferLength {
                len: labels.len(),
                width,
                height,
            });
        }
        Ok(ClassMask {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: u32, height: u32, class: ClassId) -> Self {
        ClassMask {
            width,
            height,
            labels: vec![class; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn get(&self, x: u32, y: u32) -> ClassId {
        debug_assert!(x < self.width && y < self.height);
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, class: ClassId) {
        debug_assert!(x < self.width && y < self.height);
        self.labels[y as usize * self.width as usize + x as usize] = class;
    }

    /// Number of pixels labeled `class`.
    pub fn count(&self, class: ClassId) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }
}

/// A black-on-white fill pattern for one tactile class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TexturePattern {
    /// Solid black fill.
    Solid,
    /// Diagonal lines with the given period.
    Hatch { period: u32 },
    /// Crossing diagonals with the given period.
    CrossHatch { period: u32 },
    /// One dot at the origin of every period x period cell.
    DotGrid { period: u32 },
}

impl TexturePattern {
    /// Whether the pattern puts ink at global pixel coordinates (x, y).
    pub fn ink(self, x: u32, y: u32) -> bool {
        match self {
            TexturePattern::Solid => true,
            TexturePattern::Hatch { period } => (x + y) % period.max(1) == 0,
            TexturePattern::CrossHatch { period } => {
                let p = period.max(1);
                (x + y) % p == 0 || (x + p - y % p) % p == 0
            }
            TexturePattern::DotGrid { period } => {
                let p = period.max(1);
                x % p == 0 && y % p == 0
            }
        }
    }
}

/// Assigns each feature class its fill pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextureMap {
    patterns: BTreeMap<ClassId, TexturePattern>,
}

impl TextureMap {
    pub fn new(patterns: BTreeMap<ClassId, TexturePattern>) -> Result<Self, PaletteError> {
        if patterns.contains_key(&ClassId::Background) {
            return Err(PaletteError::TextureForBackground(ClassId::Background));
        }
        Ok(TextureMap { patterns })
    }

    /// A reasonable default: solid streets, distinct periodic fills elsewhere.
    pub fn default_patterns() -> Self {
        let patterns = BTreeMap::from([
            (ClassId::Streets, TexturePattern::Solid),
            (ClassId::Highways, TexturePattern::CrossHatch { period: 6 }),
            (ClassId::Parks, TexturePattern::DotGrid { period: 4 }),
            (ClassId::Water, TexturePattern::Hatch { period: 4 }),
            (ClassId::Buildings, TexturePattern::Hatch { period: 3 }),
            (ClassId::Hospitals, TexturePattern::DotGrid { period: 3 }),
        ]);
        TextureMap { patterns }
    }

    fn pattern(&self, class: ClassId) -> Result<TexturePattern, PaletteError> {
        self.patterns
            .get(&class)
            .copied()
            .ok_or(PaletteError::MissingTexture(class))
    }
}
