//! Dataset construction: style rules and query formats for the Static Maps
//! endpoint, pair acquisition (live or mock), center cropping, the seeded
//! procedural map generator, manifests, and train/test splits.

mod fetch;
mod manifest;
pub mod mock;
mod style;
mod synth;

pub use fetch::{
    center_crop, FetchError, MapRequest, MapVariant, RateLimiter, StaticMapsClient,
    SOURCE_TILE_SIZE, TACTILE_TILE_SIZE,
};
pub use manifest::{read_manifest, split_dataset, write_manifest, ManifestEntry, SplitPolicy};
pub use style::{build_query, compile_style, default_style_rules, LocationQuery, StyleRule};
pub use synth::{synth_pair, synth_pair_with_geometry, SynthGeometry, SynthProfile};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::palette::RgbImage;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("style specification `{0}` matches neither color:0xRRGGBB nor visibility:off")]
    BadStyleSpec(String),
    #[error("query part `{0}` must not be empty")]
    EmptyQueryPart(&'static str),
    #[error("zoom {0} outside the supported 15..=18 range")]
    ZoomOutOfRange(u8),
    #[error("crop target {target} exceeds image dimensions {width}x{height}")]
    CropTooLarge { target: u32, width: u32, height: u32 },
    #[error("split policy wants {requested} pairs but only {available} are available")]
    SplitTooLarge { requested: usize, available: usize },
    #[error(
        "could not meet class frequency targets after {attempts} attempts (zoom analog {zoom})"
    )]
    InfeasibleFrequencies { attempts: u32, zoom: u8 },
    #[error("buildings require zoom analog >= 17, profile says zoom {0} with buildings enabled")]
    BuildingsBelowZoom17(u8),
    #[error("frequency interval for {class} is [{lo}, {hi}], outside [0, 1]")]
    BadFrequencyInterval { class: String, lo: f64, hi: f64 },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error(transparent)]
    Image(#[from] crate::palette::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a location came from. Mirrors the four query templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocationType {
    City,
    Landmark,
    Hospital,
    University,
}

impl LocationType {
    pub fn name(self) -> &'static str {
        match self {
            LocationType::City => "city",
            LocationType::Landmark => "landmark",
            LocationType::Hospital => "hospital",
            LocationType::University => "university",
        }
    }
}

/// Dataset split membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    TestEnglish,
    TestWorld,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestEnglish => "test-english",
            Split::TestWorld => "test-world",
        }
    }
}

/// A registered source/tactile pair with its acquisition metadata. Both
/// images are 512x512 after the tactile center crop (or profile-sized for
/// synthetic pairs).
#[derive(Debug, Clone)]
pub struct MapPair {
    pub id: String,
    pub location: String,
    pub zoom: u8,
    pub country: String,
    pub location_type: LocationType,
    pub split: Split,
    pub source: RgbImage,
    pub tactile: RgbImage,
}
