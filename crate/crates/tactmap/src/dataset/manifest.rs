//! Pair manifests and train/test splits.
//!
//! A manifest is one JSON record per pair: identity, acquisition metadata,
//! split membership, relative image paths, and a content hash over both PNG
//! files. Images are stored as lossless PNG because evaluation is
//! exact-color.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DatasetError, LocationType, MapPair, Split};
use crate::palette::RgbImage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub location: String,
    pub zoom: u8,
    pub country: String,
    pub location_type: LocationType,
    pub split: Split,
    pub source_path: String,
    pub tactile_path: String,
    pub sha256: String,
}

fn hex_digest(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Store a pair's images under `<base>/images/` and return its manifest
/// entry.
pub fn save_pair(pair: &MapPair, base: &Path) -> Result<ManifestEntry, DatasetError> {
    let images = base.join("images");
    std::fs::create_dir_all(&images)?;
    let source_path = format!("images/{}-source.png", pair.id);
    let tactile_path = format!("images/{}-tactile.png", pair.id);
    pair.source.save_png(&base.join(&source_path))?;
    pair.tactile.save_png(&base.join(&tactile_path))?;
    let source_bytes = std::fs::read(base.join(&source_path))?;
    let tactile_bytes = std::fs::read(base.join(&tactile_path))?;
    Ok(ManifestEntry {
        id: pair.id.clone(),
        location: pair.location.clone(),
        zoom: pair.zoom,
        country: pair.country.clone(),
        location_type: pair.location_type,
        split: pair.split,
        source_path,
        tactile_path,
        sha256: hex_digest(&[&source_bytes, &tactile_bytes]),
    })
}

/// Load a pair back from its manifest entry. Verifies the content hash.
pub fn load_pair(entry: &ManifestEntry, base: &Path) -> Result<MapPair, DatasetError> {
    let source_bytes = std::fs::read(base.join(&entry.source_path))?;
    let tactile_bytes = std::fs::read(base.join(&entry.tactile_path))?;
    let digest = hex_digest(&[&source_bytes, &tactile_bytes]);
    if digest != entry.sha256 {
        return Err(DatasetError::Manifest {
            line: 0,
            message: format!("content hash mismatch for pair {}", entry.id),
        });
    }
    Ok(MapPair {
        id: entry.id.clone(),
        location: entry.location.clone(),
        zoom: entry.zoom,
        country: entry.country.clone(),
        location_type: entry.location_type,
        split: entry.split,
        source: RgbImage::decode_png(&source_bytes, &entry.source_path)?,
        tactile: RgbImage::decode_png(&tactile_bytes, &entry.tactile_path)?,
    })
}

/// Write a manifest as one JSON record per line.
pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = String::new();
    for entry in entries {
        out.push_str(&serde_json::to_string(entry).expect("manifest entry serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| DatasetError::Manifest {
                line: idx + 1,
                message: e.to_string(),
            })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// SHA-256 of a manifest file, recorded in training runs for provenance.
pub fn manifest_hash(path: &Path) -> Result<String, DatasetError> {
    let bytes = std::fs::read(path)?;
    Ok(hex_digest(&[&bytes]))
}

/// How to partition the non-World pool.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

/// Assign splits: World-flagged entries pass through untouched, the rest are
/// shuffled by the policy seed and partitioned into exactly (train, test).
/// The counts must cover the pool exactly so splits stay disjoint and
/// exhaustive.
pub fn split_dataset(
    entries: &[ManifestEntry],
    policy: &SplitPolicy,
) -> Result<Vec<ManifestEntry>, DatasetError> {
    let pool: Vec<usize> = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.split != Split::TestWorld)
        .map(|(i, _)| i)
        .collect();
    if policy.train + policy.test != pool.len() {
        return Err(DatasetError::SplitTooLarge {
            requested: policy.train + policy.test,
            available: pool.len(),
        });
    }
    let mut order = pool;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut out = entries.to_vec();
    for (rank, &idx) in order.iter().enumerate() {
        out[idx].split = if rank < policy.train {
            Split::Train
        } else {
            Split::TestEnglish
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, split: Split) -> ManifestEntry {
        ManifestEntry {
            id: id.to_string(),
            location: format!("loc {id}"),
            zoom: 16,
            country: "Canada".to_string(),
            location_type: LocationType::City,
            split,
            source_path: format!("images/{id}-source.png"),
            tactile_path: format!("images/{id}-tactile.png"),
            sha256: "0".repeat(64),
        }
    }

    #[test]
    fn split_counts_and_disjointness() {
        let entries: Vec<ManifestEntry> = (0..12)
            .map(|i| entry(&format!("p{i}"), Split::Train))
            .chain((0..3).map(|i| entry(&format!("w{i}"), Split::TestWorld)))
            .collect();
        let policy = SplitPolicy {
            train: 9,
            test: 3,
            seed: 5,
        };
        let split = split_dataset(&entries, &policy).unwrap();
        assert_eq!(split.iter().filter(|e| e.split == Split::Train).count(), 9);
        assert_eq!(
            split.iter().filter(|e| e.split == Split::TestEnglish).count(),
            3
        );
        assert_eq!(
            split.iter().filter(|e| e.split == Split::TestWorld).count(),
            3
        );
        // World entries untouched.
        assert!(split
            .iter()
            .filter(|e| e.id.starts_with('w'))
            .all(|e| e.split == Split::TestWorld));
    }

    #[test]
    fn split_is_seed_deterministic() {
        let entries: Vec<ManifestEntry> =
            (0..20).map(|i| entry(&format!("p{i}"), Split::Train)).collect();
        let policy = SplitPolicy {
            train: 15,
            test: 5,
            seed: 99,
        };
        let a = split_dataset(&entries, &policy).unwrap();
        let b = split_dataset(&entries, &policy).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(
            &entries,
            &SplitPolicy {
                seed: 100,
                ..policy
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_rejects_miscounted_policy() {
        let entries: Vec<ManifestEntry> =
            (0..12).map(|i| entry(&format!("p{i}"), Split::Train)).collect();
        let policy = SplitPolicy {
            train: 10,
            test: 5,
            seed: 0,
        };
        assert!(matches!(
            split_dataset(&entries, &policy),
            Err(DatasetError::SplitTooLarge {
                requested: 15,
                available: 12
            })
        ));
    }

    #[test]
    fn manifest_round_trip_with_images() {
        let dir = tempfile::tempdir().unwrap();
        let profile = crate::dataset::SynthProfile::for_zoom(16, 96, 2).unwrap();
        let pair = crate::dataset::synth_pair(&profile, 0).unwrap();
        let entry = save_pair(&pair, dir.path()).unwrap();
        write_manifest(std::slice::from_ref(&entry), &dir.path().join("manifest.jsonl")).unwrap();
        let read = read_manifest(&dir.path().join("manifest.jsonl")).unwrap();
        assert_eq!(read, vec![entry.clone()]);
        let loaded = load_pair(&entry, dir.path()).unwrap();
        assert_eq!(loaded.source, pair.source);
        assert_eq!(loaded.tactile, pair.tactile);

        // Tampering with an image breaks the content hash.
        let mut tampered = pair.clone();
        tampered.source.set(0, 0, [1, 2, 3]);
        tampered.source.save_png(&dir.path().join(&entry.source_path)).unwrap();
        assert!(load_pair(&entry, dir.path()).is_err());
    }
}
