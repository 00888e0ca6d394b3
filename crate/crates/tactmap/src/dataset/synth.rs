//! Seeded procedural source/tactile pair generator.
//!
//! Draws a street network, optional highways, park/water/hospital areas, and
//! (above zoom analog 16) building footprints onto two aligned views: a
//! "source" with approximate visual-map styling plus distractor pseudo-text
//! and icons, and a "tactile" ground truth in exact palette colors with all
//! decorations omitted. Class pixel fractions are steered toward per-class
//! target intervals derived from the real training sets' mean pixel
//! percentages; a pair that misses its intervals is regenerated from a fresh
//! sub-seed a bounded number of times.
//!
//! Everything is deterministic given (profile seed, pair index).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, LocationType, MapPair, Split};
use crate::palette::{ClassId, ClassPalette, RgbImage};

/// Configuration of the synthetic generator.
#[derive(Debug, Clone)]
pub struct SynthProfile {
    /// Which real zoom level this pair imitates (15..=18).
    pub zoom_analog: u8,
    /// Square canvas side in pixels.
    pub size: u32,
    /// Building footprints are only drawn when enabled, and enabling them
    /// below zoom analog 17 is invalid.
    pub include_buildings: bool,
    /// Per-class target intervals for final pixel fractions.
    pub freq_targets: BTreeMap<ClassId, (f64, f64)>,
    /// Pseudo-text density knob (1.0 = roughly eight labels on a 512 canvas).
    pub label_density: f64,
    /// Icon density knob (1.0 = roughly five icons on a 512 canvas).
    pub icon_density: f64,
    pub seed: u64,
    /// Regeneration budget when a draw misses its frequency targets.
    pub max_attempts: u32,
}

/// Mean class pixel fractions of the real training sets, used as calibration
/// midpoints (zoom 16 column applies to 15/16, zoom 18 column to 17/18).
fn calibration_midpoints(zoom: u8) -> Vec<(ClassId, f64)> {
    if zoom >= 17 {
        vec![
            (ClassId::Streets, 0.1244),
            (ClassId::Highways, 0.0139),
            (ClassId::Parks, 0.0646),
            (ClassId::Water, 0.0174),
            (ClassId::Buildings, 0.2704),
            (ClassId::Hospitals, 0.1008),
        ]
    } else {
        vec![
            (ClassId::Streets, 0.1664),
            (ClassId::Highways, 0.0195),
            (ClassId::Parks, 0.0592),
            (ClassId::Water, 0.0371),
            (ClassId::Hospitals, 0.0399),
        ]
    }
}

impl SynthProfile {
    /// Default profile for a zoom analog: targets are +/-50% bands around the
    /// real training sets' mean pixel percentages.
    pub fn for_zoom(zoom_analog: u8, size: u32, seed: u64) -> Result<Self, DatasetError> {
        if !(15..=18).contains(&zoom_analog) {
            return Err(DatasetError::ZoomOutOfRange(zoom_analog));
        }
        let freq_targets = calibration_midpoints(zoom_analog)
            .into_iter()
            .map(|(class, mid)| (class, (mid * 0.5, mid * 1.5)))
            .collect();
        Ok(SynthProfile {
            zoom_analog,
            size,
            include_buildings: zoom_analog >= 17,
            freq_targets,
            label_density: 1.0,
            icon_density: 1.0,
            seed,
            max_attempts: 25,
        })
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(15..=18).contains(&self.zoom_analog) {
            return Err(DatasetError::ZoomOutOfRange(self.zoom_analog));
        }
        if self.include_buildings && self.zoom_analog < 17 {
            return Err(DatasetError::BuildingsBelowZoom17(self.zoom_analog));
        }
        for (&class, &(lo, hi)) in &self.freq_targets {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(DatasetError::BadFrequencyInterval {
                    class: class.name().to_string(),
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }
}

/// Centerline geometry of a generated pair, for alignment checks and
/// previews.
#[derive(Debug, Clone, Default)]
pub struct SynthGeometry {
    pub street_centerlines: Vec<Vec<(f64, f64)>>,
    pub street_width: f64,
    pub highway_centerlines: Vec<Vec<(f64, f64)>>,
    pub highway_width: f64,
}

/// Generate the pair at `index` under this profile.
pub fn synth_pair(profile: &SynthProfile, index: u64) -> Result<MapPair, DatasetError> {
    synth_pair_with_geometry(profile, index).map(|(pair, _)| pair)
}

/// Like [`synth_pair`], also returning the drawn centerline geometry.
pub fn synth_pair_with_geometry(
    profile: &SynthProfile,
    index: u64,
) -> Result<(MapPair, SynthGeometry), DatasetError> {
    profile.validate()?;
    for attempt in 0..profile.max_attempts.max(1) {
        let rng_seed = mix_seed(profile.seed, index, attempt as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let (scene, geometry) = draw_scene(profile, &mut rng);
        if scene.within_targets(&profile.freq_targets) {
            let palette = ClassPalette::default();
            let tactile = scene.render_tactile(&palette);
            let pair = MapPair {
                id: format!("synth-z{}-{:06}", profile.zoom_analog, index),
                location: format!("synthetic:{}:{}", profile.seed, index),
                zoom: profile.zoom_analog,
                country: "Synthetic".to_string(),
                location_type: LocationType::City,
                split: Split::Train,
                source: scene.source,
                tactile,
            };
            return Ok((pair, geometry));
        }
    }
    Err(DatasetError::InfeasibleFrequencies {
        attempts: profile.max_attempts.max(1),
        zoom: profile.zoom_analog,
    })
}

fn mix_seed(seed: u64, index: u64, attempt: u64) -> u64 {
    // splitmix64 over the three inputs
    let mut z = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(attempt.wrapping_mul(0x94d0_49bb_1331_11eb))
        .wrapping_add(0x2545_f491_4f6c_dd1d);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Scene: aligned label grid + styled source view
// ---------------------------------------------------------------------------

struct Scene {
    size: u32,
    labels: Vec<ClassId>,
    counts: BTreeMap<ClassId, i64>,
    source: RgbImage,
}

impl Scene {
    fn new(size: u32, background: [u8; 3]) -> Self {
        let mut counts = BTreeMap::new();
        counts.insert(ClassId::Background, (size as i64) * (size as i64));
        Scene {
            size,
            labels: vec![ClassId::Background; size as usize * size as usize],
            counts,
            source: RgbImage::filled(size, size, background),
        }
    }

    fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.size as i64 && y < self.size as i64
    }

    fn label_at(&self, x: i64, y: i64) -> ClassId {
        self.labels[y as usize * self.size as usize + x as usize]
    }

    /// Paint one pixel in both views.
    fn set_class(&mut self, x: i64, y: i64, class: ClassId, src_color: [u8; 3]) {
        if !self.in_bounds(x, y) {
            return;
        }
        let idx = y as usize * self.size as usize + x as usize;
        let old = self.labels[idx];
        if old != class {
            *self.counts.entry(old).or_insert(0) -= 1;
            *self.counts.entry(class).or_insert(0) += 1;
            self.labels[idx] = class;
        }
        self.source.set(x as u32, y as u32, src_color);
    }

    /// Paint a source-only decoration (casings, labels, icons).
    fn set_source_only(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if self.in_bounds(x, y) {
            self.source.set(x as u32, y as u32, color);
        }
    }

    fn fraction(&self, class: ClassId) -> f64 {
        let total = (self.size as f64) * (self.size as f64);
        *self.counts.get(&class).unwrap_or(&0) as f64 / total
    }

    fn class_pixels(&self, class: ClassId) -> i64 {
        *self.counts.get(&class).unwrap_or(&0)
    }

    fn within_targets(&self, targets: &BTreeMap<ClassId, (f64, f64)>) -> bool {
        targets.iter().all(|(&class, &(lo, hi))| {
            let f = self.fraction(class);
            f >= lo && f <= hi
        })
    }

    fn render_tactile(&self, palette: &ClassPalette) -> RgbImage {
        let mut data = Vec::with_capacity(self.labels.len() * 3);
        for &label in &self.labels {
            data.extend_from_slice(&palette.color(label));
        }
        RgbImage::new(self.size, self.size, data).expect("scene dimensions are positive")
    }
}

// ---------------------------------------------------------------------------
// Styling
// ---------------------------------------------------------------------------

/// Approximate visual-map colors for the source view, jittered slightly per
/// map so the model cannot key on exact values.
struct SourceStyle {
    background: [u8; 3],
    street_fill: [u8; 3],
    street_casing: [u8; 3],
    highway_fill: [u8; 3],
    highway_casing: [u8; 3],
    park: [u8; 3],
    water: [u8; 3],
    building_fill: [u8; 3],
    building_edge: [u8; 3],
    medical: [u8; 3],
    text: [u8; 3],
}

fn jitter(rng: &mut ChaCha8Rng, base: [u8; 3], amount: i16) -> [u8; 3] {
    let mut out = [0u8; 3];
    for (o, &b) in out.iter_mut().zip(base.iter()) {
        let delta = rng.random_range(-amount..=amount);
        *o = (b as i16 + delta).clamp(0, 255) as u8;
    }
    out
}

impl SourceStyle {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        SourceStyle {
            background: jitter(rng, [236, 237, 240], 2),
            street_fill: [255, 255, 255],
            street_casing: jitter(rng, [213, 216, 219], 2),
            highway_fill: jitter(rng, [254, 221, 125], 2),
            highway_casing: jitter(rng, [234, 171, 73], 2),
            park: jitter(rng, [187, 226, 181], 2),
            water: jitter(rng, [158, 197, 248], 2),
            building_fill: jitter(rng, [225, 223, 219], 2),
            building_edge: jitter(rng, [204, 201, 196], 2),
            medical: jitter(rng, [247, 216, 218], 2),
            text: [68, 68, 68],
        }
    }
}

struct Dims {
    street_width: f64,
    highway_width: f64,
    building_side: f64,
    building_gap: f64,
    blob_radius_max: f64,
    glyph_height: i64,
}

fn dims(zoom: u8, size: u32) -> Dims {
    let f = size as f64 / 512.0;
    let street_base = match zoom {
        15 => 5.0,
        16 => 7.0,
        17 => 10.0,
        _ => 13.0,
    };
    let street_width = (street_base * f).max(3.0);
    let building_base = if zoom >= 18 { 18.0 } else { 14.0 };
    Dims {
        street_width,
        highway_width: (street_width * 1.7).max(4.0),
        building_side: (building_base * f).max(4.0),
        building_gap: (6.0 * f).max(2.0),
        blob_radius_max: (90.0 * f).max(10.0),
        glyph_height: ((10.0 * f).round() as i64).max(4),
    }
}

// ---------------------------------------------------------------------------
// Drawing primitives
// ---------------------------------------------------------------------------

fn dist2_to_segment(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (ax, ay) = a;
    let (bx, by) = b;
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    (px - cx) * (px - cx) + (py - cy) * (py - cy)
}

/// Stamp a half-width `radius` capsule along a polyline.
fn stamp_polyline<FN: FnMut(&mut Scene, i64, i64)>(
    scene: &mut Scene,
    points: &[(f64, f64)],
    radius: f64,
    mut paint: FN,
) {
    for window in points.windows(2) {
        let (a, b) = (window[0], window[1]);
        let x_min = (a.0.min(b.0) - radius).floor() as i64;
        let x_max = (a.0.max(b.0) + radius).ceil() as i64;
        let y_min = (a.1.min(b.1) - radius).floor() as i64;
        let y_max = (a.1.max(b.1) + radius).ceil() as i64;
        let r2 = radius * radius;
        for y in y_min..=y_max {
            for x in x_min..=x_max {
                if dist2_to_segment(x as f64, y as f64, a, b) <= r2 {
                    paint(scene, x, y);
                }
            }
        }
    }
}

/// Fill an irregular polygon (even-odd rule).
fn fill_polygon<FN: FnMut(&mut Scene, i64, i64)>(
    scene: &mut Scene,
    vertices: &[(f64, f64)],
    mut paint: FN,
) {
    let y_min = vertices.iter().map(|v| v.1).fold(f64::MAX, f64::min).floor() as i64;
    let y_max = vertices.iter().map(|v| v.1).fold(f64::MIN, f64::max).ceil() as i64;
    for y in y_min..=y_max {
        let yc = y as f64;
        let mut crossings = Vec::new();
        for i in 0..vertices.len() {
            let (x1, y1) = vertices[i];
            let (x2, y2) = vertices[(i + 1) % vertices.len()];
            if (y1 <= yc && y2 > yc) || (y2 <= yc && y1 > yc) {
                crossings.push(x1 + (yc - y1) / (y2 - y1) * (x2 - x1));
            }
        }
        crossings.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in crossings.chunks_exact(2) {
            for x in pair[0].ceil() as i64..=pair[1].floor() as i64 {
                paint(scene, x, y);
            }
        }
    }
}

fn fill_rect<FN: FnMut(&mut Scene, i64, i64)>(
    scene: &mut Scene,
    x0: i64,
    y0: i64,
    w: i64,
    h: i64,
    mut paint: FN,
) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            paint(scene, x, y);
        }
    }
}

/// Random blob polygon around a center.
fn blob_vertices(rng: &mut ChaCha8Rng, cx: f64, cy: f64, radius: f64) -> Vec<(f64, f64)> {
    let n = rng.random_range(6..=10);
    (0..n)
        .map(|i| {
            let angle = (i as f64 / n as f64) * std::f64::consts::TAU
                + rng.random_range(-0.15..0.15);
            let r = radius * rng.random_range(0.7..1.3);
            (cx + r * angle.cos(), cy + r * angle.sin())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// The generator proper
// ---------------------------------------------------------------------------

fn draw_scene(profile: &SynthProfile, rng: &mut ChaCha8Rng) -> (Scene, SynthGeometry) {
    let size = profile.size;
    let style = SourceStyle::sample(rng);
    let d = dims(profile.zoom_analog, size);
    let mut scene = Scene::new(size, style.background);
    let mut geometry = SynthGeometry {
        street_width: d.street_width,
        highway_width: d.highway_width,
        ..SynthGeometry::default()
    };

    // Sample the per-pair target point for each class, inside its interval
    // but away from the edges.
    let target = |rng: &mut ChaCha8Rng, class: ClassId| -> f64 {
        profile
            .freq_targets
            .get(&class)
            .map(|&(lo, hi)| {
                let mid = (lo + hi) / 2.0;
                let half = (hi - lo) / 2.0;
                mid + rng.random_range(-0.4..0.4) * half
            })
            .unwrap_or(0.0)
    };
    let t_parks = target(rng, ClassId::Parks);
    let t_water = target(rng, ClassId::Water);
    let t_hosp = target(rng, ClassId::Hospitals);
    let t_build = if profile.include_buildings {
        target(rng, ClassId::Buildings)
    } else {
        0.0
    };
    let t_streets = target(rng, ClassId::Streets);
    let t_highways = target(rng, ClassId::Highways);

    // Later layers overpaint earlier ones roughly uniformly, so aim each
    // earlier layer higher by the coverage of everything above it.
    let boost = |t: f64, later: f64| (t / (1.0 - later).max(0.3)).min(0.95);
    let later_than_areas = t_build + t_streets + t_highways;

    draw_blob_layer(
        &mut scene,
        rng,
        ClassId::Parks,
        style.park,
        boost(t_parks, later_than_areas),
        &d,
    );
    draw_water(
        &mut scene,
        rng,
        style.water,
        boost(t_water, later_than_areas),
        &d,
    );
    let hospital_zones = draw_blob_layer(
        &mut scene,
        rng,
        ClassId::Hospitals,
        style.medical,
        boost(t_hosp, later_than_areas),
        &d,
    );

    if profile.include_buildings {
        draw_buildings(
            &mut scene,
            rng,
            &style,
            boost(t_build, t_streets + t_highways),
            &d,
            &hospital_zones,
        );
    }

    draw_streets(
        &mut scene,
        rng,
        &style,
        boost(t_streets, t_highways),
        &d,
        &mut geometry,
    );
    draw_highways(&mut scene, rng, &style, t_highways, &d, &mut geometry);

    draw_decorations(&mut scene, rng, profile, &style, &d, &geometry);

    (scene, geometry)
}

/// Add blobs of one class until its pixel share reaches the target. Returns
/// blob centers and radii (used to seed hospital buildings).
fn draw_blob_layer(
    scene: &mut Scene,
    rng: &mut ChaCha8Rng,
    class: ClassId,
    color: [u8; 3],
    target_fraction: f64,
    d: &Dims,
) -> Vec<(f64, f64, f64)> {
    let mut zones = Vec::new();
    if target_fraction <= 0.0 {
        return zones;
    }
    let size = scene.size as f64;
    let total = size * size;
    let target_px = (target_fraction * total) as i64;
    let mut guard = 0;
    while scene.class_pixels(class) < target_px && guard < 40 {
        guard += 1;
        let remaining = (target_px - scene.class_pixels(class)) as f64;
        let radius = (remaining / std::f64::consts::PI)
            .sqrt()
            .clamp(6.0, d.blob_radius_max);
        let cx = rng.random_range(0.0..size);
        let cy = rng.random_range(0.0..size);
        let vertices = blob_vertices(rng, cx, cy, radius);
        fill_polygon(scene, &vertices, |s, x, y| s.set_class(x, y, class, color));
        zones.push((cx, cy, radius));
    }
    zones
}

/// Water is blobs, with an occasional river band instead.
fn draw_water(
    scene: &mut Scene,
    rng: &mut ChaCha8Rng,
    color: [u8; 3],
    target_fraction: f64,
    d: &Dims,
) {
    if target_fraction <= 0.0 {
        return;
    }
    let size = scene.size as f64;
    let total = size * size;
    let target_px = (target_fraction * total) as i64;
    let river_width = target_px as f64 / (size * 1.2) / 2.0;
    if river_width >= 3.0 && rng.random_bool(0.35) {
        // River: a wide band across the canvas sized to the target area.
        let width = river_width.min(size / 6.0);
        let vertical = rng.random_bool(0.5);
        let o0 = rng.random_range(0.2..0.8) * size;
        let o1 = (o0 + rng.random_range(-0.25..0.25) * size).clamp(0.0, size);
        let mid = (o0 + o1) / 2.0 + rng.random_range(-0.1..0.1) * size;
        let points: Vec<(f64, f64)> = if vertical {
            vec![(o0, 0.0), (mid, size / 2.0), (o1, size)]
        } else {
            vec![(0.0, o0), (size / 2.0, mid), (size, o1)]
        };
        stamp_polyline(scene, &points, width, |s, x, y| {
            s.set_class(x, y, ClassId::Water, color)
        });
    }
    // Top up with lakes until the target holds.
    let mut guard = 0;
    while scene.class_pixels(ClassId::Water) < target_px && guard < 40 {
        guard += 1;
        let remaining = (target_px - scene.class_pixels(ClassId::Water)) as f64;
        let radius = (remaining / std::f64::consts::PI)
            .sqrt()
            .clamp(6.0, d.blob_radius_max);
        let cx = rng.random_range(0.0..size);
        let cy = rng.random_range(0.0..size);
        let vertices = blob_vertices(rng, cx, cy, radius);
        fill_polygon(scene, &vertices, |s, x, y| {
            s.set_class(x, y, ClassId::Water, color)
        });
    }
}

/// Rows of rectangular footprints, skipping cells already claimed by an area
/// class; a few extra footprints land inside hospital zones.
fn draw_buildings(
    scene: &mut Scene,
    rng: &mut ChaCha8Rng,
    style: &SourceStyle,
    target_fraction: f64,
    d: &Dims,
    hospital_zones: &[(f64, f64, f64)],
) {
    let size = scene.size as i64;
    let total = (size * size) as f64;
    let target_px = (target_fraction * total) as i64;
    let cell = (d.building_side + d.building_gap).round() as i64;
    let per_row = (size / cell).max(1);
    let mut cells: Vec<(i64, i64)> = (0..per_row * per_row)
        .map(|i| (i % per_row, i / per_row))
        .collect();
    // Shuffle cell visit order.
    for i in (1..cells.len()).rev() {
        let j = rng.random_range(0..=i);
        cells.swap(i, j);
    }
    let paint = |s: &mut Scene, x: i64, y: i64, fill: [u8; 3]| {
        s.set_class(x, y, ClassId::Buildings, fill);
    };
    for (cx, cy) in cells {
        if scene.class_pixels(ClassId::Buildings) >= target_px {
            break;
        }
        let x0 = cx * cell + rng.random_range(0..=d.building_gap.round() as i64);
        let y0 = cy * cell + rng.random_range(0..=d.building_gap.round() as i64);
        let w = (d.building_side * rng.random_range(0.7..1.3)).round() as i64;
        let h = (d.building_side * rng.random_range(0.7..1.3)).round() as i64;
        let (mx, my) = (x0 + w / 2, y0 + h / 2);
        if !scene.in_bounds(mx, my) || scene.label_at(mx, my) != ClassId::Background {
            continue;
        }
        fill_rect(scene, x0, y0, w, h, |s, x, y| {
            paint(s, x, y, style.building_fill)
        });
        draw_rect_edge(scene, x0, y0, w, h, style.building_edge);
    }
    // Hospital campuses keep a couple of buildings of their own.
    for &(zx, zy, zr) in hospital_zones {
        for _ in 0..rng.random_range(1..=2) {
            let w = (d.building_side * rng.random_range(0.8..1.4)).round() as i64;
            let h = (d.building_side * rng.random_range(0.8..1.4)).round() as i64;
            let x0 = (zx + rng.random_range(-0.4..0.4) * zr) as i64 - w / 2;
            let y0 = (zy + rng.random_range(-0.4..0.4) * zr) as i64 - h / 2;
            fill_rect(scene, x0, y0, w, h, |s, x, y| {
                paint(s, x, y, style.building_fill)
            });
            draw_rect_edge(scene, x0, y0, w, h, style.building_edge);
        }
    }
}

/// Source-only 1px outline on a building footprint.
fn draw_rect_edge(scene: &mut Scene, x0: i64, y0: i64, w: i64, h: i64, color: [u8; 3]) {
    for x in x0..x0 + w {
        for y in [y0, y0 + h - 1] {
            if scene.in_bounds(x, y) && scene.label_at(x, y) == ClassId::Buildings {
                scene.set_source_only(x, y, color);
            }
        }
    }
    for y in y0..y0 + h {
        for x in [x0, x0 + w - 1] {
            if scene.in_bounds(x, y) && scene.label_at(x, y) == ClassId::Buildings {
                scene.set_source_only(x, y, color);
            }
        }
    }
}

/// A wobbly near-axis polyline from one canvas edge to the other.
fn edge_to_edge_polyline(rng: &mut ChaCha8Rng, size: f64, vertical: bool) -> Vec<(f64, f64)> {
    let o0 = rng.random_range(0.05..0.95) * size;
    let wobble = size / 14.0;
    let mut offsets = vec![o0];
    for _ in 0..2 {
        let prev = *offsets.last().unwrap();
        offsets.push((prev + rng.random_range(-wobble..wobble)).clamp(0.0, size));
    }
    offsets.push((o0 + rng.random_range(-wobble..wobble)).clamp(0.0, size));
    let stations = [0.0, size / 3.0, 2.0 * size / 3.0, size];
    offsets
        .iter()
        .zip(stations.iter())
        .map(|(&o, &s)| if vertical { (o, s) } else { (s, o) })
        .collect()
}

/// Stamp a cased road along a polyline, segment by segment, stopping once the
/// class has `target_px` pixels. Returns the portion actually drawn.
fn stamp_road(
    scene: &mut Scene,
    points: &[(f64, f64)],
    width: f64,
    class: ClassId,
    fill: [u8; 3],
    casing: [u8; 3],
    target_px: i64,
) -> Vec<(f64, f64)> {
    let mut drawn = vec![points[0]];
    for window in points.windows(2) {
        let segment = [window[0], window[1]];
        stamp_polyline(scene, &segment, width / 2.0 + 1.0, |s, x, y| {
            s.set_source_only(x, y, casing)
        });
        stamp_polyline(scene, &segment, width / 2.0, |s, x, y| {
            s.set_class(x, y, class, fill)
        });
        drawn.push(window[1]);
        if scene.class_pixels(class) >= target_px {
            break;
        }
    }
    drawn
}

fn draw_streets(
    scene: &mut Scene,
    rng: &mut ChaCha8Rng,
    style: &SourceStyle,
    target_fraction: f64,
    d: &Dims,
    geometry: &mut SynthGeometry,
) {
    let size = scene.size as f64;
    let total = size * size;
    let target_px = (target_fraction * total) as i64;
    let mut guard = 0;
    while scene.class_pixels(ClassId::Streets) < target_px && guard < 80 {
        guard += 1;
        let vertical = rng.random_bool(0.5);
        let points = if rng.random_bool(0.15) {
            // Occasional diagonal connector.
            let (a, b) = if vertical {
                (
                    (rng.random_range(0.0..size), 0.0),
                    (rng.random_range(0.0..size), size),
                )
            } else {
                (
                    (0.0, rng.random_range(0.0..size)),
                    (size, rng.random_range(0.0..size)),
                )
            };
            vec![a, b]
        } else {
            edge_to_edge_polyline(rng, size, vertical)
        };
        let drawn = stamp_road(
            scene,
            &points,
            d.street_width,
            ClassId::Streets,
            style.street_fill,
            style.street_casing,
            target_px,
        );
        geometry.street_centerlines.push(drawn);
    }
}

fn draw_highways(
    scene: &mut Scene,
    rng: &mut ChaCha8Rng,
    style: &SourceStyle,
    target_fraction: f64,
    d: &Dims,
    geometry: &mut SynthGeometry,
) {
    if target_fraction <= 0.0 {
        return;
    }
    let size = scene.size as f64;
    let total = size * size;
    let target_px = (target_fraction * total) as i64;
    let mut guard = 0;
    while scene.class_pixels(ClassId::Highways) < target_px && guard < 6 {
        guard += 1;
        let vertical = rng.random_bool(0.5);
        // Finer stations than streets use, so the early stop can trim the
        // highway to its small pixel budget.
        let coarse = edge_to_edge_polyline(rng, size, vertical);
        let points = densify(&coarse, 8);
        let drawn = stamp_road(
            scene,
            &points,
            d.highway_width,
            ClassId::Highways,
            style.highway_fill,
            style.highway_casing,
            target_px,
        );
        geometry.highway_centerlines.push(drawn);
    }
}

/// Subdivide each polyline segment into `n` pieces.
fn densify(points: &[(f64, f64)], n: usize) -> Vec<(f64, f64)> {
    let mut out = vec![points[0]];
    for window in points.windows(2) {
        let (a, b) = (window[0], window[1]);
        for i in 1..=n {
            let t = i as f64 / n as f64;
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Source-only decorations: pseudo-text and icons
// ---------------------------------------------------------------------------

fn draw_decorations(
    scene: &mut Scene,
    rng: &mut ChaCha8Rng,
    profile: &SynthProfile,
    style: &SourceStyle,
    d: &Dims,
    geometry: &SynthGeometry,
) {
    let size = scene.size as f64;
    let area_scale = (size / 512.0) * (size / 512.0);
    let n_labels = ((profile.label_density * area_scale * 8.0).round() as i64).max(2);
    let n_icons = ((profile.icon_density * area_scale * 5.0).round() as i64).max(1);

    for _ in 0..n_labels {
        let anchor = if !geometry.street_centerlines.is_empty() && rng.random_bool(0.7) {
            // Street name: somewhere along a street centerline.
            let line = &geometry.street_centerlines
                [rng.random_range(0..geometry.street_centerlines.len())];
            let seg = rng.random_range(0..line.len() - 1);
            let t = rng.random_range(0.2..0.8);
            let (a, b) = (line[seg], line[seg + 1]);
            (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
        } else {
            (
                rng.random_range(0.1..0.9) * size,
                rng.random_range(0.1..0.9) * size,
            )
        };
        draw_pseudo_text(scene, rng, anchor, d.glyph_height, style.text);
    }

    const ICON_COLORS: [[u8; 3]; 3] = [[219, 68, 55], [66, 133, 244], [15, 157, 88]];
    for _ in 0..n_icons {
        let cx = rng.random_range(0.1..0.9) * size;
        let cy = rng.random_range(0.1..0.9) * size;
        let r = (d.glyph_height as f64 * 0.5).max(2.0);
        let color = ICON_COLORS[rng.random_range(0..ICON_COLORS.len())];
        for y in (cy - r - 1.0).floor() as i64..=(cy + r + 1.0).ceil() as i64 {
            for x in (cx - r - 1.0).floor() as i64..=(cx + r + 1.0).ceil() as i64 {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                if d2 <= r * r {
                    scene.set_source_only(x, y, color);
                } else if d2 <= (r + 1.0) * (r + 1.0) {
                    scene.set_source_only(x, y, [255, 255, 255]);
                }
            }
        }
    }
}

/// A run of glyph-like stroke clusters approximating a map label.
fn draw_pseudo_text(
    scene: &mut Scene,
    rng: &mut ChaCha8Rng,
    anchor: (f64, f64),
    glyph_h: i64,
    color: [u8; 3],
) {
    let n_glyphs = rng.random_range(3..=8);
    let glyph_w = (glyph_h as f64 * 0.6).ceil() as i64 + 1;
    let x_start = anchor.0 as i64 - n_glyphs * glyph_w / 2;
    let y_top = anchor.1 as i64 - glyph_h / 2;
    for g in 0..n_glyphs {
        let gx = x_start + g * glyph_w;
        for _ in 0..rng.random_range(2..=3) {
            // One short stroke inside the glyph box.
            let x0 = gx + rng.random_range(0..glyph_w.max(2) - 1);
            let y0 = y_top + rng.random_range(0..glyph_h / 2);
            let len = rng.random_range(glyph_h / 2..=glyph_h);
            let slant = rng.random_range(-1..=1);
            for i in 0..len {
                let x = x0 + (i * slant) / glyph_h.max(1);
                let y = y0 + i;
                if y < y_top + glyph_h {
                    scene.set_source_only(x, y, color);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_byte_identical() {
        let profile = SynthProfile::for_zoom(16, 128, 7).unwrap();
        let a = synth_pair(&profile, 3).unwrap();
        let b = synth_pair(&profile, 3).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.tactile, b.tactile);
        let c = synth_pair(&profile, 4).unwrap();
        assert_ne!(a.source, c.source);
    }

    #[test]
    fn zoom16_has_no_buildings() {
        let profile = SynthProfile::for_zoom(16, 128, 11).unwrap();
        let palette = ClassPalette::default();
        for index in 0..3 {
            let pair = synth_pair(&profile, index).unwrap();
            let mask = palette.segment_image(&pair.tactile);
            assert_eq!(mask.count(ClassId::Buildings), 0, "index {index}");
        }
    }

    #[test]
    fn zoom18_has_buildings() {
        let profile = SynthProfile::for_zoom(18, 128, 11).unwrap();
        let palette = ClassPalette::default();
        let pair = synth_pair(&profile, 0).unwrap();
        let mask = palette.segment_image(&pair.tactile);
        assert!(mask.count(ClassId::Buildings) > 0);
    }

    #[test]
    fn tactile_is_palette_pure() {
        let profile = SynthProfile::for_zoom(17, 128, 3).unwrap();
        let palette = ClassPalette::default();
        let pair = synth_pair(&profile, 0).unwrap();
        let exact: Vec<[u8; 3]> = ClassId::ALL.iter().map(|&c| palette.color(c)).collect();
        assert!(pair.tactile.pixels().all(|p| exact.contains(&p)));
        // Round trip: segment -> render -> segment is a fixed point.
        let mask = palette.segment_image(&pair.tactile);
        let rendered = palette.render_mask(&mask);
        assert_eq!(palette.segment_image(&rendered), mask);
        assert_eq!(rendered, pair.tactile);
    }

    #[test]
    fn class_fractions_meet_profile_targets() {
        let profile = SynthProfile::for_zoom(16, 128, 41).unwrap();
        let palette = ClassPalette::default();
        let pair = synth_pair(&profile, 9).unwrap();
        let mask = palette.segment_image(&pair.tactile);
        let total = (pair.tactile.width() * pair.tactile.height()) as f64;
        for (&class, &(lo, hi)) in &profile.freq_targets {
            let f = mask.count(class) as f64 / total;
            assert!(
                f >= lo && f <= hi,
                "{class}: fraction {f:.4} outside [{lo:.4}, {hi:.4}]"
            );
        }
    }

    #[test]
    fn streets_cover_their_centerlines() {
        let profile = SynthProfile::for_zoom(16, 128, 23).unwrap();
        let palette = ClassPalette::default();
        let (pair, geometry) = synth_pair_with_geometry(&profile, 1).unwrap();
        let mask = palette.segment_image(&pair.tactile);
        let radius = geometry.street_width / 2.0;
        for line in &geometry.street_centerlines {
            for window in line.windows(2) {
                // Walk the segment densely; every sample must be within the
                // dilated street mask.
                let (a, b) = (window[0], window[1]);
                let steps = 32;
                for i in 0..=steps {
                    let t = i as f64 / steps as f64;
                    let x = a.0 + t * (b.0 - a.0);
                    let y = a.1 + t * (b.1 - a.1);
                    if x < 0.0 || y < 0.0 || x >= 127.0 || y >= 127.0 {
                        continue;
                    }
                    let mut covered = false;
                    let r = radius.ceil() as i64 + 1;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let (px, py) = (x as i64 + dx, y as i64 + dy);
                            if px >= 0
                                && py >= 0
                                && (px as u32) < mask.width()
                                && (py as u32) < mask.height()
                                && mask.get(px as u32, py as u32) == ClassId::Streets
                            {
                                covered = true;
                            }
                        }
                    }
                    assert!(covered, "centerline point ({x:.1},{y:.1}) uncovered");
                }
            }
        }
    }

    #[test]
    fn profile_validation() {
        let mut profile = SynthProfile::for_zoom(16, 64, 1).unwrap();
        profile.include_buildings = true;
        assert!(matches!(
            profile.validate(),
            Err(DatasetError::BuildingsBelowZoom17(16))
        ));
        let mut profile = SynthProfile::for_zoom(16, 64, 1).unwrap();
        profile
            .freq_targets
            .insert(ClassId::Streets, (0.2, 1.4));
        assert!(matches!(
            profile.validate(),
            Err(DatasetError::BadFrequencyInterval { .. })
        ));
    }
}
