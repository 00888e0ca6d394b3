//! Per-class segmentation metrics and the median/mean report tables.
//!
//! Background is never a scored class: confusion counts cover the six feature
//! classes only. A class is N/A for an image when it appears in neither the
//! ground truth nor the prediction (tp + fp + fn = 0); aggregation skips N/A
//! images, and a table cell is N/A only when every image was. Values are kept
//! as raw fractions and rounded to one decimal of a percent at render time
//! only.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::MapPair;
use crate::palette::{ClassId, ClassMask, ClassPalette, RgbImage};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("cannot aggregate an empty image list")]
    EmptyInput,
    #[error("{model} is only evaluated on zooms {allowed:?}, got zoom {zoom}")]
    IncompatibleZoom {
        model: ModelId,
        zoom: u8,
        allowed: &'static [u8],
    },
    #[error("expected {expected} predictions for {expected} pairs, got {got}")]
    PredictionCount { expected: usize, got: usize },
    #[error("parsing report line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which trained model a run belongs to; fixes the zooms it may be tested on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelId {
    /// Trained on zoom 16 only; evaluated on zooms 15 and 16.
    Zoom16,
    /// Trained on zoom 18 only; evaluated on zooms 17 and 18.
    Zoom18,
    /// The double-zoom model, trained on 16 and 18; evaluated on 15..=18.
    Zoom16_18,
}

impl ModelId {
    pub fn train_zooms(self) -> &'static [u8] {
        match self {
            ModelId::Zoom16 => &[16],
            ModelId::Zoom18 => &[18],
            ModelId::Zoom16_18 => &[16, 18],
        }
    }

    /// Zooms the model may be evaluated on: its trained zooms plus the
    /// compatible neighbor (15 pairs with 16, 17 with 18).
    pub fn eval_zooms(self) -> &'static [u8] {
        match self {
            ModelId::Zoom16 => &[15, 16],
            ModelId::Zoom18 => &[17, 18],
            ModelId::Zoom16_18 => &[15, 16, 17, 18],
        }
    }

    pub fn from_train_zooms(zooms: &[u8]) -> Option<ModelId> {
        let mut sorted: Vec<u8> = zooms.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        match sorted.as_slice() {
            [16] => Some(ModelId::Zoom16),
            [18] => Some(ModelId::Zoom18),
            [16, 18] => Some(ModelId::Zoom16_18),
            _ => None,
        }
    }

    pub fn parse(name: &str) -> Option<ModelId> {
        match name.to_ascii_lowercase().as_str() {
            "zoom16" | "zoom-16" => Some(ModelId::Zoom16),
            "zoom18" | "zoom-18" => Some(ModelId::Zoom18),
            "zoom16-18" | "zoom-16/18" | "zoom16/18" => Some(ModelId::Zoom16_18),
            _ => None,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelId::Zoom16 => write!(f, "Zoom-16"),
            ModelId::Zoom18 => write!(f, "Zoom-18"),
            ModelId::Zoom16_18 => write!(f, "Zoom-16/18"),
        }
    }
}

/// Pixel-level confusion counts for one feature class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

/// Confusion counts over all six feature classes for one image.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    counts: [Counts; 6],
}

impl ConfusionCounts {
    pub fn get(&self, class: ClassId) -> Counts {
        self.counts[feature_index(class)]
    }

    pub fn get_mut(&mut self, class: ClassId) -> &mut Counts {
        &mut self.counts[feature_index(class)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, Counts)> + '_ {
        ClassId::FEATURES.into_iter().map(|c| (c, self.get(c)))
    }
}

fn feature_index(class: ClassId) -> usize {
    ClassId::FEATURES
        .iter()
        .position(|&c| c == class)
        .expect("background is not a scored class")
}

/// Count per-class tp/fp/fn between a ground-truth and a predicted mask.
pub fn confusion(gt: &ClassMask, pred: &ClassMask) -> Result<ConfusionCounts, MetricsError> {
    if gt.width() != pred.width() || gt.height() != pred.height() {
        return Err(MetricsError::DimensionMismatch(
            gt.width(),
            gt.height(),
            pred.width(),
            pred.height(),
        ));
    }
    let mut out = ConfusionCounts::default();
    for (&g, &p) in gt.labels().iter().zip(pred.labels().iter()) {
        if g == p {
            if g != ClassId::Background {
                out.get_mut(g).tp += 1;
            }
        } else {
            if g != ClassId::Background {
                out.get_mut(g).fn_ += 1;
            }
            if p != ClassId::Background {
                out.get_mut(p).fp += 1;
            }
        }
    }
    Ok(out)
}

/// The four scores for one class on one image, as fractions in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub iou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Iou,
    F1,
    Precision,
    Recall,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Iou,
        MetricKind::F1,
        MetricKind::Precision,
        MetricKind::Recall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Iou => "IoU",
            MetricKind::F1 => "F1",
            MetricKind::Precision => "Precision",
            MetricKind::Recall => "Recall",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            MetricKind::Iou => "iou",
            MetricKind::F1 => "f1",
            MetricKind::Precision => "precision",
            MetricKind::Recall => "recall",
        }
    }
}

impl ClassScores {
    pub fn get(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::Iou => self.iou,
            MetricKind::F1 => self.f1,
            MetricKind::Precision => self.precision,
            MetricKind::Recall => self.recall,
        }
    }
}

/// Per-class scores for one image; `None` marks a class that is N/A because
/// it appears in neither mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    scores: BTreeMap<ClassId, Option<ClassScores>>,
}

impl ImageMetrics {
    pub fn get(&self, class: ClassId) -> Option<ClassScores> {
        self.scores.get(&class).copied().flatten()
    }
}

/// Turn confusion counts into per-class scores. A class absent from both
/// masks is N/A; a 0/0 ratio inside a present class evaluates to 0.
pub fn class_metrics(counts: &ConfusionCounts) -> ImageMetrics {
    let mut scores = BTreeMap::new();
    for (class, c) in counts.iter() {
        let total = c.tp + c.fp + c.fn_;
        if total == 0 {
            scores.insert(class, None);
            continue;
        }
        let precision = ratio_or_zero(c.tp, c.tp + c.fp);
        let recall = ratio_or_zero(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let iou = c.tp as f64 / total as f64;
        scores.insert(
            class,
            Some(ClassScores {
                iou,
                f1,
                precision,
                recall,
            }),
        );
    }
    ImageMetrics { scores }
}

fn ratio_or_zero(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Median,
    Mean,
}

impl Statistic {
    pub const ALL: [Statistic; 2] = [Statistic::Median, Statistic::Mean];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Median => "median",
            Statistic::Mean => "mean",
        }
    }
}

/// One statistic applied to a non-empty value list. Median of an even count
/// is the midpoint average.
pub fn aggregate_stat(values: &[f64], statistic: Statistic) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    match statistic {
        Statistic::Mean => Some(values.iter().sum::<f64>() / values.len() as f64),
        Statistic::Median => {
            let mut sorted = values.to_vec();
            sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("metric values are finite"));
            let n = sorted.len();
            Some(if n % 2 == 1 {
                sorted[n / 2]
            } else {
                (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
            })
        }
    }
}

/// Median and mean scores for one class across a test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub median: ClassScores,
    pub mean: ClassScores,
}

impl ClassStats {
    pub fn get(&self, statistic: Statistic) -> ClassScores {
        match statistic {
            Statistic::Median => self.median,
            Statistic::Mean => self.mean,
        }
    }
}

/// The per-class median/mean table for one evaluation run. `None` rows are
/// classes that were N/A on every image (e.g. buildings below zoom 17).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    rows: BTreeMap<ClassId, Option<ClassStats>>,
}

impl MetricTable {
    pub fn from_rows(rows: BTreeMap<ClassId, Option<ClassStats>>) -> Self {
        let mut full = BTreeMap::new();
        for class in ClassId::FEATURES {
            full.insert(class, rows.get(&class).copied().flatten());
        }
        MetricTable { rows: full }
    }

    pub fn get(&self, class: ClassId) -> Option<ClassStats> {
        self.rows.get(&class).copied().flatten()
    }

    /// One raw-fraction cell, or `None` for N/A.
    pub fn cell(&self, class: ClassId, statistic: Statistic, kind: MetricKind) -> Option<f64> {
        self.get(class).map(|s| s.get(statistic).get(kind))
    }
}

/// Aggregate per-image metrics into a median/mean table. N/A images are
/// excluded per class; a class with no present images renders as N/A.
pub fn aggregate(per_image: &[ImageMetrics]) -> Result<MetricTable, MetricsError> {
    if per_image.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut rows = BTreeMap::new();
    for class in ClassId::FEATURES {
        let stats = collect_class(per_image, class);
        rows.insert(class, stats);
    }
    Ok(MetricTable { rows })
}

fn collect_class(per_image: &[ImageMetrics], class: ClassId) -> Option<ClassStats> {
    let present: Vec<ClassScores> = per_image.iter().filter_map(|m| m.get(class)).collect();
    if present.is_empty() {
        return None;
    }
    let stat = |statistic: Statistic| {
        let score = |kind: MetricKind| {
            let values: Vec<f64> = present.iter().map(|s| s.get(kind)).collect();
            aggregate_stat(&values, statistic).expect("non-empty by construction")
        };
        ClassScores {
            iou: score(MetricKind::Iou),
            f1: score(MetricKind::F1),
            precision: score(MetricKind::Precision),
            recall: score(MetricKind::Recall),
        }
    };
    Some(ClassStats {
        median: stat(Statistic::Median),
        mean: stat(Statistic::Mean),
    })
}

/// A double-vs-single comparison: per cell, both values and their difference.
/// N/A on either side propagates.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffTable {
    pub double: MetricTable,
    pub single: MetricTable,
}

impl DiffTable {
    /// (double, single, double - single) for one cell, or `None` when either
    /// side is N/A.
    pub fn cell(
        &self,
        class: ClassId,
        statistic: Statistic,
        kind: MetricKind,
    ) -> Option<(f64, f64, f64)> {
        let d = self.double.cell(class, statistic, kind)?;
        let s = self.single.cell(class, statistic, kind)?;
        Some((d, s, d - s))
    }
}

/// Pair a double-zoom table with a single-zoom table for Diff reporting.
pub fn diff_table(double: MetricTable, single: MetricTable) -> DiffTable {
    DiffTable { double, single }
}

/// Segment ground truth and predictions, compute per-image metrics, and
/// aggregate both statistics. Refuses model/zoom pairings outside the
/// compatibility matrix.
pub fn evaluate_run(
    model: ModelId,
    pairs: &[MapPair],
    predictions: &[RgbImage],
    palette: &ClassPalette,
) -> Result<MetricTable, MetricsError> {
    if pairs.len() != predictions.len() {
        return Err(MetricsError::PredictionCount {
            expected: pairs.len(),
            got: predictions.len(),
        });
    }
    for pair in pairs {
        if !model.eval_zooms().contains(&pair.zoom) {
            return Err(MetricsError::IncompatibleZoom {
                model,
                zoom: pair.zoom,
                allowed: model.eval_zooms(),
            });
        }
    }
    let mut per_image = Vec::with_capacity(pairs.len());
    for (pair, pred) in pairs.iter().zip(predictions.iter()) {
        let gt_mask = palette.segment_image(&pair.tactile);
        let pred_mask = palette.segment_image(pred);
        let counts = confusion(&gt_mask, &pred_mask)?;
        per_image.push(class_metrics(&counts));
    }
    aggregate(&per_image)
}

// ---------------------------------------------------------------------------
// Rendering and parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// Format a fraction as a percentage with one decimal, N/A for `None`.
fn fmt_cell(value: Option<f64>) -> String {
    match value {
        None => "N/A".to_string(),
        Some(v) => {
            let pct = v * 100.0;
            let mut s = format!("{pct:.1}");
            if s == "-0.0" {
                s = "0.0".to_string();
            }
            s
        }
    }
}

impl MetricTable {
    /// Deterministic report with one row per (class, statistic).
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.render_csv(),
            ReportFormat::Markdown => self.render_markdown(),
        }
    }

    fn render_csv(&self) -> String {
        let mut out = String::from("class,statistic,iou,f1,precision,recall\n");
        for class in ClassId::FEATURES {
            for statistic in Statistic::ALL {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    class.display_name(),
                    statistic.name(),
                    fmt_cell(self.cell(class, statistic, MetricKind::Iou)),
                    fmt_cell(self.cell(class, statistic, MetricKind::F1)),
                    fmt_cell(self.cell(class, statistic, MetricKind::Precision)),
                    fmt_cell(self.cell(class, statistic, MetricKind::Recall)),
                ));
            }
        }
        out
    }

    fn render_markdown(&self) -> String {
        let mut out = String::from("| Class | Statistic | IoU | F1 | Precision | Recall |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for class in ClassId::FEATURES {
            for statistic in Statistic::ALL {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} |\n",
                    class.display_name(),
                    statistic.name(),
                    fmt_cell(self.cell(class, statistic, MetricKind::Iou)),
                    fmt_cell(self.cell(class, statistic, MetricKind::F1)),
                    fmt_cell(self.cell(class, statistic, MetricKind::Precision)),
                    fmt_cell(self.cell(class, statistic, MetricKind::Recall)),
                ));
            }
        }
        out
    }

    /// Parse the CSV emitted by [`MetricTable::render`]. Round-trips exactly
    /// for tables whose values sit on the 0.1-percent grid.
    pub fn parse_csv(text: &str) -> Result<MetricTable, MetricsError> {
        let mut cells: BTreeMap<ClassId, BTreeMap<Statistic, ClassScores>> = BTreeMap::new();
        let mut na: BTreeMap<ClassId, u32> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let line_no = idx + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(MetricsError::Parse {
                    line: line_no,
                    message: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let class = ClassId::from_name(fields[0]).ok_or_else(|| MetricsError::Parse {
                line: line_no,
                message: format!("unknown class `{}`", fields[0]),
            })?;
            let statistic = match fields[1] {
                "median" => Statistic::Median,
                "mean" => Statistic::Mean,
                other => {
                    return Err(MetricsError::Parse {
                        line: line_no,
                        message: format!("unknown statistic `{other}`"),
                    })
                }
            };
            let values: Vec<Option<f64>> = fields[2..]
                .iter()
                .map(|f| parse_cell(f, line_no))
                .collect::<Result<_, _>>()?;
            match (values[0], values[1], values[2], values[3]) {
                (Some(iou), Some(f1), Some(precision), Some(recall)) => {
                    cells.entry(class).or_default().insert(
                        statistic,
                        ClassScores {
                            iou,
                            f1,
                            precision,
                            recall,
                        },
                    );
                }
                (None, None, None, None) => {
                    *na.entry(class).or_insert(0) += 1;
                }
                _ => {
                    return Err(MetricsError::Parse {
                        line: line_no,
                        message: "mixed N/A and numeric cells in one row".to_string(),
                    })
                }
            }
        }
        let mut rows = BTreeMap::new();
        for class in ClassId::FEATURES {
            let stats = cells.get(&class);
            let row = match stats {
                Some(by_stat) => {
                    let median = by_stat.get(&Statistic::Median);
                    let mean = by_stat.get(&Statistic::Mean);
                    match (median, mean) {
                        (Some(&median), Some(&mean)) => Some(ClassStats { median, mean }),
                        _ => {
                            return Err(MetricsError::Parse {
                                line: 0,
                                message: format!(
                                    "class {class} needs both median and mean rows"
                                ),
                            })
                        }
                    }
                }
                None => None,
            };
            rows.insert(class, row);
        }
        Ok(MetricTable { rows })
    }
}

fn parse_cell(field: &str, line: usize) -> Result<Option<f64>, MetricsError> {
    let field = field.trim();
    if field == "N/A" {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(|pct| Some(pct / 100.0))
        .map_err(|_| MetricsError::Parse {
            line,
            message: format!("`{field}` is neither a number nor N/A"),
        })
}

impl DiffTable {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.render_csv(),
            ReportFormat::Markdown => self.render_markdown(),
        }
    }

    fn row_cells(&self, class: ClassId, statistic: Statistic) -> Vec<String> {
        let mut cells = Vec::with_capacity(12);
        for kind in MetricKind::ALL {
            match self.cell(class, statistic, kind) {
                Some((d, s, diff)) => {
                    cells.push(fmt_cell(Some(d)));
                    cells.push(fmt_cell(Some(s)));
                    cells.push(fmt_cell(Some(diff)));
                }
                None => {
                    cells.extend(std::iter::repeat_n("N/A".to_string(), 3));
                }
            }
        }
        cells
    }

    fn render_csv(&self) -> String {
        let mut out = String::from("class,statistic");
        for kind in MetricKind::ALL {
            for side in ["double", "single", "diff"] {
                out.push_str(&format!(",{}_{}", kind.key(), side));
            }
        }
        out.push('\n');
        for class in ClassId::FEATURES {
            for statistic in Statistic::ALL {
                out.push_str(&format!("{},{}", class.display_name(), statistic.name()));
                for cell in self.row_cells(class, statistic) {
                    out.push(',');
                    out.push_str(&cell);
                }
                out.push('\n');
            }
        }
        out
    }

    fn render_markdown(&self) -> String {
        let mut out = String::from("| Class | Statistic |");
        for kind in MetricKind::ALL {
            for side in ["Double", "Single", "Diff"] {
                out.push_str(&format!(" {} {side} |", kind.name()));
            }
        }
        out.push('\n');
        out.push_str("|---|---|");
        out.push_str(&"---|".repeat(12));
        out.push('\n');
        for class in ClassId::FEATURES {
            for statistic in Statistic::ALL {
                out.push_str(&format!(
                    "| {} | {} |",
                    class.display_name(),
                    statistic.name()
                ));
                for cell in self.row_cells(class, statistic) {
                    out.push_str(&format!(" {cell} |"));
                }
                out.push('\n');
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Machine-readable per-run metrics records
// ---------------------------------------------------------------------------

/// One JSONL record per (class, statistic); raw fractions, nulls for N/A.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecord {
    pub class: String,
    pub statistic: String,
    pub iou: Option<f64>,
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl MetricTable {
    pub fn to_records(&self) -> Vec<MetricRecord> {
        let mut records = Vec::new();
        for class in ClassId::FEATURES {
            for statistic in Statistic::ALL {
                let scores = self.get(class).map(|s| s.get(statistic));
                records.push(MetricRecord {
                    class: class.name().to_string(),
                    statistic: statistic.name().to_string(),
                    iou: scores.map(|s| s.iou),
                    f1: scores.map(|s| s.f1),
                    precision: scores.map(|s| s.precision),
                    recall: scores.map(|s| s.recall),
                });
            }
        }
        records
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in self.to_records() {
            out.push_str(&serde_json::to_string(&record).expect("metric record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<MetricTable, MetricsError> {
        let mut by_class: BTreeMap<ClassId, BTreeMap<Statistic, Option<ClassScores>>> =
            BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: MetricRecord =
                serde_json::from_str(line).map_err(|e| MetricsError::Parse {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            let class = ClassId::from_name(&record.class).ok_or_else(|| MetricsError::Parse {
                line: idx + 1,
                message: format!("unknown class `{}`", record.class),
            })?;
            let statistic = match record.statistic.as_str() {
                "median" => Statistic::Median,
                "mean" => Statistic::Mean,
                other => {
                    return Err(MetricsError::Parse {
                        line: idx + 1,
                        message: format!("unknown statistic `{other}`"),
                    })
                }
            };
            let scores = match (record.iou, record.f1, record.precision, record.recall) {
                (Some(iou), Some(f1), Some(precision), Some(recall)) => Some(ClassScores {
                    iou,
                    f1,
                    precision,
                    recall,
                }),
                _ => None,
            };
            by_class.entry(class).or_default().insert(statistic, scores);
        }
        let mut rows = BTreeMap::new();
        for class in ClassId::FEATURES {
            let row = by_class.get(&class).and_then(|by_stat| {
                match (
                    by_stat.get(&Statistic::Median).copied().flatten(),
                    by_stat.get(&Statistic::Mean).copied().flatten(),
                ) {
                    (Some(median), Some(mean)) => Some(ClassStats { median, mean }),
                    _ => None,
                }
            });
            rows.insert(class, row);
        }
        Ok(MetricTable { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(labels: &[ClassId], width: u32) -> ClassMask {
        let height = labels.len() as u32 / width;
        ClassMask::new(width, height, labels.to_vec()).unwrap()
    }

    #[test]
    fn confusion_identical_masks() {
        let mut gt = ClassMask::filled(5, 2, ClassId::Background);
        for x in 0..5 {
            gt.set(x, 0, ClassId::Streets);
            gt.set(x, 1, ClassId::Streets);
        }
        let counts = confusion(&gt, &gt).unwrap();
        assert_eq!(
            counts.get(ClassId::Streets),
            Counts {
                tp: 10,
                fp: 0,
                fn_: 0
            }
        );
        assert_eq!(counts.get(ClassId::Water), Counts::default());
    }

    #[test]
    fn confusion_disjoint_masks() {
        let gt = ClassMask::filled(2, 2, ClassId::Streets);
        let pred = ClassMask::filled(2, 2, ClassId::Water);
        let counts = confusion(&gt, &pred).unwrap();
        assert_eq!(
            counts.get(ClassId::Streets),
            Counts {
                tp: 0,
                fp: 0,
                fn_: 4
            }
        );
        assert_eq!(
            counts.get(ClassId::Water),
            Counts {
                tp: 0,
                fp: 4,
                fn_: 0
            }
        );
    }

    #[test]
    fn confusion_hand_counted_two_by_two() {
        use ClassId::{Background as Bg, Streets as S, Water as W};
        let gt = mask_from(&[S, S, W, Bg], 2);
        let pred = mask_from(&[S, W, W, Bg], 2);
        let counts = confusion(&gt, &pred).unwrap();
        assert_eq!(
            counts.get(S),
            Counts {
                tp: 1,
                fp: 0,
                fn_: 1
            }
        );
        assert_eq!(
            counts.get(W),
            Counts {
                tp: 1,
                fp: 1,
                fn_: 0
            }
        );
    }

    #[test]
    fn confusion_rejects_dimension_mismatch() {
        let a = ClassMask::filled(2, 2, ClassId::Streets);
        let b = ClassMask::filled(2, 3, ClassId::Streets);
        assert!(matches!(
            confusion(&a, &b),
            Err(MetricsError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn confusion_totals_cover_every_pixel() {
        use ClassId::*;
        let gt = mask_from(&[Streets, Water, Background, Parks, Background, Hospitals], 3);
        let pred = mask_from(&[Water, Water, Streets, Parks, Background, Background], 3);
        let counts = confusion(&gt, &pred).unwrap();
        let gt_feature: u64 = counts.iter().map(|(_, c)| c.tp + c.fn_).sum();
        let gt_background = gt.count(ClassId::Background) as u64;
        assert_eq!(gt_feature + gt_background, 6);
    }

    #[test]
    fn class_metrics_worked_example() {
        let mut counts = ConfusionCounts::default();
        *counts.get_mut(ClassId::Streets) = Counts {
            tp: 6,
            fp: 2,
            fn_: 2,
        };
        let metrics = class_metrics(&counts);
        let s = metrics.get(ClassId::Streets).unwrap();
        assert_eq!(s.precision, 0.75);
        assert_eq!(s.recall, 0.75);
        assert_eq!(s.f1, 0.75);
        assert_eq!(s.iou, 0.6);
        // Classes untouched by either mask are N/A.
        assert!(metrics.get(ClassId::Water).is_none());
    }

    #[test]
    fn class_metrics_perfect_and_zero() {
        let mut counts = ConfusionCounts::default();
        *counts.get_mut(ClassId::Parks) = Counts {
            tp: 50,
            fp: 0,
            fn_: 0,
        };
        *counts.get_mut(ClassId::Water) = Counts {
            tp: 0,
            fp: 10,
            fn_: 10,
        };
        let metrics = class_metrics(&counts);
        let parks = metrics.get(ClassId::Parks).unwrap();
        assert_eq!(
            (parks.iou, parks.f1, parks.precision, parks.recall),
            (1.0, 1.0, 1.0, 1.0)
        );
        let water = metrics.get(ClassId::Water).unwrap();
        assert_eq!(
            (water.iou, water.f1, water.precision, water.recall),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn aggregate_stat_median_and_mean() {
        let values = [0.90, 0.95, 0.70];
        assert_eq!(aggregate_stat(&values, Statistic::Median), Some(0.90));
        assert_eq!(aggregate_stat(&values, Statistic::Mean), Some(0.85));
        // Even count takes the midpoint; N/A values never reach this point.
        let even = aggregate_stat(&[0.9, 0.7], Statistic::Median).unwrap();
        assert!((even - 0.8).abs() < 1e-12);
        assert_eq!(aggregate_stat(&[], Statistic::Mean), None);
    }

    fn image_metrics_with(class: ClassId, value: f64) -> ImageMetrics {
        let mut metrics = class_metrics(&ConfusionCounts::default()); // all N/A
        metrics.scores.insert(
            class,
            Some(ClassScores {
                iou: value,
                f1: value,
                precision: value,
                recall: value,
            }),
        );
        metrics
    }

    #[test]
    fn aggregate_skips_na_images() {
        let a = image_metrics_with(ClassId::Streets, 0.9);
        let b = class_metrics(&ConfusionCounts::default()); // all N/A
        let c = image_metrics_with(ClassId::Streets, 0.7);
        let table = aggregate(&[a, b, c]).unwrap();
        let median = table
            .cell(ClassId::Streets, Statistic::Median, MetricKind::Iou)
            .unwrap();
        assert!((median - 0.8).abs() < 1e-12);
        // Buildings never appeared: N/A row.
        assert!(table.get(ClassId::Buildings).is_none());
        assert!(matches!(aggregate(&[]), Err(MetricsError::EmptyInput)));
    }

    #[test]
    fn aggregate_median_is_permutation_invariant() {
        let images: Vec<ImageMetrics> = [0.6, 0.9, 0.2, 0.8]
            .iter()
            .map(|&v| image_metrics_with(ClassId::Parks, v))
            .collect();
        let reversed: Vec<ImageMetrics> = images.iter().rev().cloned().collect();
        assert_eq!(
            aggregate(&images).unwrap(),
            aggregate(&reversed).unwrap()
        );
    }

    fn table_with(class: ClassId, value: f64) -> MetricTable {
        let scores = ClassScores {
            iou: value,
            f1: value,
            precision: value,
            recall: value,
        };
        let stats = ClassStats {
            median: scores,
            mean: scores,
        };
        MetricTable::from_rows(BTreeMap::from([(class, Some(stats))]))
    }

    #[test]
    fn diff_reproduces_streets_median_iou() {
        // Zoom-16 English test set: double 94.8, single 97.1, diff -2.3.
        let diff = diff_table(
            table_with(ClassId::Streets, 0.948),
            table_with(ClassId::Streets, 0.971),
        );
        let (d, s, delta) = diff
            .cell(ClassId::Streets, Statistic::Median, MetricKind::Iou)
            .unwrap();
        assert_eq!(fmt_cell(Some(d)), "94.8");
        assert_eq!(fmt_cell(Some(s)), "97.1");
        assert_eq!(fmt_cell(Some(delta)), "-2.3");
        // Zoom-15: 88.7 vs 90.3 -> -1.6.
        let diff15 = diff_table(
            table_with(ClassId::Streets, 0.887),
            table_with(ClassId::Streets, 0.903),
        );
        let (_, _, delta15) = diff15
            .cell(ClassId::Streets, Statistic::Median, MetricKind::Iou)
            .unwrap();
        assert_eq!(fmt_cell(Some(delta15)), "-1.6");
    }

    #[test]
    fn diff_of_equal_tables_is_zero_and_na_propagates() {
        let t = table_with(ClassId::Streets, 0.5);
        let diff = diff_table(t.clone(), t);
        let (_, _, delta) = diff
            .cell(ClassId::Streets, Statistic::Mean, MetricKind::Recall)
            .unwrap();
        assert_eq!(fmt_cell(Some(delta)), "0.0");
        // Buildings is N/A on both sides -> N/A cell.
        assert!(diff
            .cell(ClassId::Buildings, Statistic::Median, MetricKind::Iou)
            .is_none());
        let rendered = diff.render(ReportFormat::Csv);
        assert!(rendered.contains("Buildings,median,N/A,N/A,N/A"));
    }

    #[test]
    fn csv_round_trip_is_exact_on_rounded_values() {
        let mut rows = BTreeMap::new();
        rows.insert(
            ClassId::Streets,
            Some(ClassStats {
                median: ClassScores {
                    iou: 0.948,
                    f1: 0.973,
                    precision: 0.963,
                    recall: 0.985,
                },
                mean: ClassScores {
                    iou: 0.942,
                    f1: 0.970,
                    precision: 0.961,
                    recall: 0.979,
                },
            }),
        );
        let table = MetricTable::from_rows(rows);
        let rendered = table.render(ReportFormat::Csv);
        // One parse pins the values to the 0.1-percent grid; from there,
        // parse(render(t)) == t exactly.
        let pinned = MetricTable::parse_csv(&rendered).unwrap();
        assert_eq!(pinned.render(ReportFormat::Csv), rendered);
        let round_tripped = MetricTable::parse_csv(&pinned.render(ReportFormat::Csv)).unwrap();
        assert_eq!(round_tripped, pinned);
        assert!(rendered.contains("Buildings,median,N/A,N/A,N/A,N/A"));
    }

    #[test]
    fn jsonl_round_trip() {
        let t = table_with(ClassId::Water, 0.987654321);
        let parsed = MetricTable::from_jsonl(&t.to_jsonl()).unwrap();
        assert_eq!(parsed, t);
    }

    #[test]
    fn render_is_deterministic() {
        let t = table_with(ClassId::Parks, 0.913);
        assert_eq!(
            t.render(ReportFormat::Markdown),
            t.render(ReportFormat::Markdown)
        );
    }

    #[test]
    fn model_zoom_matrix() {
        assert_eq!(ModelId::Zoom16.eval_zooms(), &[15, 16]);
        assert_eq!(ModelId::Zoom18.eval_zooms(), &[17, 18]);
        assert_eq!(ModelId::Zoom16_18.eval_zooms(), &[15, 16, 17, 18]);
        assert_eq!(ModelId::from_train_zooms(&[16, 18]), Some(ModelId::Zoom16_18));
        assert_eq!(ModelId::from_train_zooms(&[15]), None);
    }
}
