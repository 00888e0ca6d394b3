//! Static-API request construction and pair acquisition.
//!
//! Requests carry a center query, an integer zoom, a pixel size, and (for
//! tactile variants) the compiled style parameters. The client retries
//! transient failures with exponential backoff, honors a global request-rate
//! ceiling, and center-crops the 572x572 tactile tile down to the 512x512
//! source footprint so the logo/copyright strip falls away.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::style::{compile_style, default_style_rules, StyleRule};
use super::{DatasetError, LocationType, MapPair, Split};
use crate::palette::RgbImage;

/// Source tiles are requested at 512x512.
pub const SOURCE_TILE_SIZE: u32 = 512;
/// Tactile tiles are requested at 572x572 and center-cropped to 512x512.
pub const TACTILE_TILE_SIZE: u32 = 572;

/// Environment variable holding the API key for live fetching.
pub const API_KEY_ENV: &str = "TACTMAP_API_KEY";

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("HTTP {status} from {url} after {attempts} attempt(s)")]
    Http {
        status: u16,
        url: String,
        attempts: u32,
    },
    #[error("quota exceeded (HTTP 429) from {url}")]
    QuotaExceeded { url: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("expected a {expected_w}x{expected_h} tile, server sent {got_w}x{got_h}")]
    UnexpectedSize {
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("live fetching requires an API key in ${API_KEY_ENV}")]
    MissingApiKey,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Image(#[from] crate::palette::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapVariant {
    Source,
    Tactile,
}

/// One Static-API request. Construct through [`MapRequest::source`] /
/// [`MapRequest::tactile`] so the size and style invariants hold.
#[derive(Debug, Clone)]
pub struct MapRequest {
    pub center: String,
    pub zoom: u8,
    pub size: (u32, u32),
    pub variant: MapVariant,
    pub style: Vec<StyleRule>,
}

impl MapRequest {
    pub fn source(center: &str, zoom: u8) -> Result<Self, DatasetError> {
        check_zoom(zoom)?;
        Ok(MapRequest {
            center: center.to_string(),
            zoom,
            size: (SOURCE_TILE_SIZE, SOURCE_TILE_SIZE),
            variant: MapVariant::Source,
            style: Vec::new(),
        })
    }

    pub fn tactile(center: &str, zoom: u8) -> Result<Self, DatasetError> {
        check_zoom(zoom)?;
        Ok(MapRequest {
            center: center.to_string(),
            zoom,
            size: (TACTILE_TILE_SIZE, TACTILE_TILE_SIZE),
            variant: MapVariant::Tactile,
            style: default_style_rules(),
        })
    }
}

fn check_zoom(zoom: u8) -> Result<(), DatasetError> {
    if (15..=18).contains(&zoom) {
        Ok(())
    } else {
        Err(DatasetError::ZoomOutOfRange(zoom))
    }
}

/// Crop the centered `target`x`target` window; odd remainders floor the
/// offset.
pub fn center_crop(img: &RgbImage, target: u32) -> Result<RgbImage, DatasetError> {
    if target > img.width() || target > img.height() || target == 0 {
        return Err(DatasetError::CropTooLarge {
            target,
            width: img.width(),
            height: img.height(),
        });
    }
    let off_x = (img.width() - target) / 2;
    let off_y = (img.height() - target) / 2;
    let mut data = Vec::with_capacity(target as usize * target as usize * 3);
    for y in 0..target {
        for x in 0..target {
            data.extend_from_slice(&img.get(off_x + x, off_y + y));
        }
    }
    Ok(RgbImage::new(target, target, data).expect("crop dimensions are positive"))
}

/// Minimum-interval rate limiter shared across worker threads.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        RateLimiter {
            min_interval,
            next_slot: Mutex::new(Instant::now()),
        }
    }

    /// Block until a request slot is available.
    pub fn acquire(&self) {
        let wait_until = {
            let mut next = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let slot = if *next > now { *next } else { now };
            *next = slot + self.min_interval;
            slot
        };
        let now = Instant::now();
        if wait_until > now {
            std::thread::sleep(wait_until - now);
        }
    }
}

/// Metadata accompanying one fetched pair.
#[derive(Debug, Clone)]
pub struct PairMeta {
    pub id: String,
    pub country: String,
    pub location_type: LocationType,
    pub split: Split,
}

/// Blocking Static-API client with retries, backoff, and rate limiting.
pub struct StaticMapsClient {
    base_url: String,
    api_key: Option<String>,
    max_attempts: u32,
    backoff_base: Duration,
    limiter: RateLimiter,
    max_concurrency: usize,
    agent: ureq::Agent,
}

impl StaticMapsClient {
    /// Client against an arbitrary endpoint (the bundled mock server, or the
    /// real one when built with `live-fetch`).
    pub fn new(base_url: &str) -> Self {
        StaticMapsClient {
            base_url: base_url.trim_end_matches(['?', '&']).to_string(),
            api_key: None,
            max_attempts: 3,
            backoff_base: Duration::from_millis(50),
            limiter: RateLimiter::new(Duration::from_millis(20)),
            max_concurrency: 4,
            agent: ureq::Agent::new_with_defaults(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_max_attempts(mut self, attempts: u32) -> Self {
        self.max_attempts = attempts.max(1);
        self
    }

    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.limiter = RateLimiter::new(interval);
        self
    }

    pub fn with_max_concurrency(mut self, ceiling: usize) -> Self {
        self.max_concurrency = ceiling.max(1);
        self
    }

    /// The full request URL for one tile.
    pub fn request_url(&self, req: &MapRequest) -> Result<String, FetchError> {
        let mut url = format!(
            "{}?center={}&zoom={}&size={}x{}",
            self.base_url,
            encode_query(&req.center),
            req.zoom,
            req.size.0,
            req.size.1
        );
        for param in compile_style(&req.style)? {
            url.push_str("&style=");
            url.push_str(&encode_query(&param));
        }
        if let Some(key) = &self.api_key {
            url.push_str("&key=");
            url.push_str(&encode_query(key));
        }
        Ok(url)
    }

    /// GET one tile with retries on transient failures.
    pub fn get_tile(&self, req: &MapRequest) -> Result<RgbImage, FetchError> {
        let url = self.request_url(req)?;
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.limiter.acquire();
            match self.try_get(&url) {
                Ok(bytes) => {
                    let img = RgbImage::decode_png(&bytes, &url)?;
                    if (img.width(), img.height()) != req.size {
                        return Err(FetchError::UnexpectedSize {
                            expected_w: req.size.0,
                            expected_h: req.size.1,
                            got_w: img.width(),
                            got_h: img.height(),
                        });
                    }
                    return Ok(img);
                }
                Err(TileError::Quota) => return Err(FetchError::QuotaExceeded { url }),
                Err(TileError::Status(status)) if !retryable(status) => {
                    return Err(FetchError::Http {
                        status,
                        url,
                        attempts: attempt,
                    })
                }
                Err(err) => {
                    if attempt >= self.max_attempts {
                        return Err(match err {
                            TileError::Status(status) => FetchError::Http {
                                status,
                                url,
                                attempts: attempt,
                            },
                            TileError::Transport(message) => FetchError::Transport {
                                attempts: attempt,
                                message,
                            },
                            TileError::Quota => unreachable!("handled above"),
                        });
                    }
                    std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
                }
            }
        }
    }

    fn try_get(&self, url: &str) -> Result<Vec<u8>, TileError> {
        match self.agent.get(url).call() {
            Ok(mut response) => response
                .body_mut()
                .read_to_vec()
                .map_err(|e| TileError::Transport(e.to_string())),
            Err(ureq::Error::StatusCode(429)) => Err(TileError::Quota),
            Err(ureq::Error::StatusCode(code)) => Err(TileError::Status(code)),
            Err(other) => Err(TileError::Transport(other.to_string())),
        }
    }

    /// Download one source/tactile pair, validate sizes, and center-crop the
    /// tactile tile to the source footprint.
    pub fn fetch_pair(
        &self,
        req_source: &MapRequest,
        req_tactile: &MapRequest,
        meta: &PairMeta,
    ) -> Result<MapPair, FetchError> {
        let source = self.get_tile(req_source)?;
        let tactile_full = self.get_tile(req_tactile)?;
        let tactile = center_crop(&tactile_full, SOURCE_TILE_SIZE)?;
        Ok(MapPair {
            id: meta.id.clone(),
            location: req_source.center.clone(),
            zoom: req_source.zoom,
            country: meta.country.clone(),
            location_type: meta.location_type,
            split: meta.split,
            source,
            tactile,
        })
    }

    /// Fetch many pairs with bounded worker concurrency; results come back in
    /// input order. The rate limiter stays global across workers.
    pub fn fetch_batch(
        &self,
        jobs: &[(MapRequest, MapRequest, PairMeta)],
    ) -> Vec<Result<MapPair, FetchError>> {
        let next = AtomicUsize::new(0);
        let results: Vec<Mutex<Option<Result<MapPair, FetchError>>>> =
            jobs.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.max_concurrency.min(jobs.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::Relaxed);
                    if idx >= jobs.len() {
                        break;
                    }
                    let (src, tac, meta) = &jobs[idx];
                    let outcome = self.fetch_pair(src, tac, meta);
                    *results[idx].lock().unwrap() = Some(outcome);
                });
            }
        });
        results
            .into_iter()
            .map(|slot| slot.into_inner().unwrap().expect("worker filled every slot"))
            .collect()
    }
}

enum TileError {
    Status(u16),
    Quota,
    Transport(String),
}

fn retryable(status: u16) -> bool {
    status >= 500
}

fn encode_query(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for byte in value.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            _ => out.push_str(&format!("%{byte:02X}")),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_offsets() {
        let mut img = RgbImage::filled(572, 572, [10, 10, 10]);
        img.set(30, 30, [200, 0, 0]); // lands at (0,0) after the crop
        img.set(541, 541, [0, 200, 0]); // lands at (511,511)
        let cropped = center_crop(&img, 512).unwrap();
        assert_eq!(cropped.width(), 512);
        assert_eq!(cropped.get(0, 0), [200, 0, 0]);
        assert_eq!(cropped.get(511, 511), [0, 200, 0]);
    }

    #[test]
    fn crop_identity_and_floor() {
        let img = RgbImage::filled(512, 512, [1, 2, 3]);
        assert_eq!(center_crop(&img, 512).unwrap(), img);

        // 573x572 -> offsets floor to (30, 30).
        let mut odd = RgbImage::filled(573, 572, [0, 0, 0]);
        odd.set(30, 30, [9, 9, 9]);
        let cropped = center_crop(&odd, 512).unwrap();
        assert_eq!(cropped.get(0, 0), [9, 9, 9]);
    }

    #[test]
    fn crop_rejects_oversized_target() {
        let img = RgbImage::filled(100, 100, [0, 0, 0]);
        assert!(matches!(
            center_crop(&img, 200),
            Err(DatasetError::CropTooLarge { .. })
        ));
    }

    #[test]
    fn request_constructors_enforce_sizes() {
        let src = MapRequest::source("Ottawa, Ontario, Canada", 16).unwrap();
        assert_eq!(src.size, (512, 512));
        assert!(src.style.is_empty());
        let tac = MapRequest::tactile("Ottawa, Ontario, Canada", 16).unwrap();
        assert_eq!(tac.size, (572, 572));
        assert_eq!(tac.style.len(), 26);
        assert!(matches!(
            MapRequest::source("x", 19),
            Err(DatasetError::ZoomOutOfRange(19))
        ));
    }

    #[test]
    fn url_carries_style_parameters() {
        let client = StaticMapsClient::new("http://127.0.0.1:1/map");
        let tac = MapRequest::tactile("Leeds, England, UK", 16).unwrap();
        let url = client.request_url(&tac).unwrap();
        assert!(url.starts_with("http://127.0.0.1:1/map?center=Leeds%2C%20England%2C%20UK"));
        assert!(url.contains("zoom=16"));
        assert!(url.contains("size=572x572"));
        assert_eq!(url.matches("&style=").count(), 26);
        assert!(url.contains(&encode_query(
            "feature:poi.medical|element:geometry.fill|color:0x808080"
        )));
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let limiter = RateLimiter::new(Duration::from_millis(30));
        let start = Instant::now();
        limiter.acquire();
        limiter.acquire();
        limiter.acquire();
        // Third slot is two intervals after the first.
        assert!(start.elapsed() >= Duration::from_millis(60));
    }
}
