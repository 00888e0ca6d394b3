//! tactmap — a toolkit for turning visual street maps into color-coded
//! tactile map images with a conditional adversarial image-to-image model.
//!
//! The pipeline stages are:
//!
//! 1. **Dataset** – acquire aligned source/tactile map pairs, either from a
//!    Static Maps endpoint (with the tactile style applied server-side), from
//!    the bundled mock server, or from the seeded procedural generator.
//! 2. **Augment** – paired geometric transforms plus the grey street/building
//!    recoloring used when training across two zoom levels.
//! 3. **Model** – a nested-skip encoder/decoder generator and a patch-based
//!    discriminator, with hand-written forward/backward passes on `ndarray`.
//! 4. **Train / Infer** – the adversarial training loop (BCE-on-logits GAN
//!    loss plus weighted L1) and batch inference back to 8-bit RGB.
//! 5. **Evaluate** – nearest-color segmentation into the tactile class
//!    palette, per-class IoU/F1/precision/recall, and median/mean tables
//!    with double-vs-single model diffs.

pub mod augment;
pub mod dataset;
pub mod gan;
pub mod metrics;
pub mod nn;
pub mod palette;
pub mod train;


pub use palette::{ClassId, ClassMask, ClassPalette, RgbImage};
