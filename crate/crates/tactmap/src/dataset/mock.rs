//! A tiny in-process tile server for offline acquisition and tests.
//!
//! Serves deterministic synthetic tiles over plain HTTP, keyed by (center,
//! zoom, server seed): a styled request (any `style` parameter present)
//! returns the tactile view, an unstyled one returns the source view of the
//! same geometry. Source tiles render on a canvas 60px wider so that the
//! client's 572-to-512 tactile center crop lands on exactly the source
//! footprint, as with the real endpoint. A failure plan can inject error
//! responses for retry testing.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::fetch::center_crop;
use super::synth::{synth_pair, SynthProfile};

/// Size margin between tactile and source tiles (572 - 512).
const CANVAS_MARGIN: u32 = 60;

#[derive(Debug, Clone)]
pub struct MockServerConfig {
    /// Seed mixed into every tile's geometry.
    pub seed: u64,
    /// Respond with `fail_status` to this many requests before recovering.
    pub fail_first: u32,
    pub fail_status: u16,
    /// Misbehave by serving tiles of this size regardless of the request.
    pub wrong_size: Option<u32>,
}

impl Default for MockServerConfig {
    fn default() -> Self {
        MockServerConfig {
            seed: 0,
            fail_first: 0,
            fail_status: 500,
            wrong_size: None,
        }
    }
}

pub struct MockMapServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockMapServer {
    /// Bind to an ephemeral localhost port and start serving.
    pub fn start(config: MockServerConfig) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = shutdown.clone();
        let failures = Arc::new(AtomicU32::new(config.fail_first));
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                handle_connection(stream, &config, &failures);
            }
        });
        Ok(MockMapServer {
            addr,
            shutdown,
            handle: Some(handle),
        })
    }

    /// Endpoint URL to hand to `StaticMapsClient::new`.
    pub fn url(&self) -> String {
        format!("http://{}/map", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(handle) = self.handle.take() {
            self.shutdown.store(true, Ordering::SeqCst);
            // Unblock the accept loop.
            let _ = TcpStream::connect(self.addr);
            let _ = handle.join();
        }
    }
}

impl Drop for MockMapServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

fn handle_connection(stream: TcpStream, config: &MockServerConfig, failures: &AtomicU32) {
    let mut stream = stream;
    let Some(target) = read_request_target(&stream) else {
        respond_error(&mut stream, 400, "unreadable request");
        return;
    };
    let remaining = failures.load(Ordering::SeqCst);
    if remaining > 0
        && failures
            .compare_exchange(remaining, remaining - 1, Ordering::SeqCst, Ordering::SeqCst)
            .is_ok()
    {
        respond_error(&mut stream, config.fail_status, "injected failure");
        return;
    }
    match render_tile(&target, config.seed, config.wrong_size) {
        Ok(png) => respond_png(&mut stream, &png),
        Err(message) => respond_error(&mut stream, 400, &message),
    }
}

fn read_request_target(stream: &TcpStream) -> Option<String> {
    let mut reader = BufReader::new(stream.take(16 * 1024));
    let mut request_line = String::new();
    reader.read_line(&mut request_line).ok()?;
    // Drain the header block.
    loop {
        let mut line = String::new();
        let n = reader.read_line(&mut line).ok()?;
        if n == 0 || line == "\r\n" || line == "\n" {
            break;
        }
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next()?;
    let target = parts.next()?;
    if method != "GET" {
        return None;
    }
    Some(target.to_string())
}

fn render_tile(
    target: &str,
    server_seed: u64,
    wrong_size: Option<u32>,
) -> Result<Vec<u8>, String> {
    let (path, query) = target.split_once('?').unwrap_or((target, ""));
    if path != "/map" {
        return Err(format!("unknown path {path}"));
    }
    let mut center = None;
    let mut zoom = None;
    let mut size = None;
    let mut styled = false;
    for item in query.split('&').filter(|s| !s.is_empty()) {
        let (key, value) = item.split_once('=').unwrap_or((item, ""));
        match key {
            "center" => center = Some(percent_decode(value)),
            "zoom" => zoom = value.parse::<u8>().ok(),
            "size" => {
                let (w, h) = value.split_once('x').ok_or("size must be WxH")?;
                size = Some((
                    w.parse::<u32>().map_err(|_| "bad width")?,
                    h.parse::<u32>().map_err(|_| "bad height")?,
                ));
            }
            "style" => styled = true,
            "key" => {}
            _ => return Err(format!("unknown parameter {key}")),
        }
    }
    let center = center.ok_or("missing center")?;
    let zoom = zoom.ok_or("missing or invalid zoom")?;
    let (req_w, req_h) = size.ok_or("missing size")?;
    if req_w != req_h {
        return Err("mock server only renders square tiles".to_string());
    }
    let w = wrong_size.unwrap_or(req_w);
    let canvas = if styled { w } else { w + CANVAS_MARGIN };
    let tile_seed = mix(server_seed, fnv1a(center.as_bytes()), u64::from(zoom));
    let profile =
        SynthProfile::for_zoom(zoom, canvas, tile_seed).map_err(|e| e.to_string())?;
    let pair = synth_pair(&profile, 0).map_err(|e| e.to_string())?;
    let img = if styled {
        pair.tactile
    } else {
        center_crop(&pair.source, w).map_err(|e| e.to_string())?
    };
    Ok(img.png_bytes())
}

fn respond_png(stream: &mut TcpStream, png: &[u8]) {
    let header = format!(
        "HTTP/1.1 200 OK\r\nContent-Type: image/png\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        png.len()
    );
    let _ = stream.write_all(header.as_bytes());
    let _ = stream.write_all(png);
    let _ = stream.flush();
}

fn respond_error(stream: &mut TcpStream, status: u16, message: &str) {
    let reason = match status {
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Error",
    };
    let body = format!("{message}\n");
    let header = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    let _ = stream.write_all(header.as_bytes());
    let _ = stream.write_all(body.as_bytes());
    let _ = stream.flush();
}

fn percent_decode(value: &str) -> String {
    let bytes = value.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() + 1 && i + 2 <= bytes.len() - 1 {
            if let Ok(b) = u8::from_str_radix(&value[i + 1..i + 3], 16) {
                out.push(b);
                i += 3;
                continue;
            }
        }
        out.push(if bytes[i] == b'+' { b' ' } else { bytes[i] });
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn mix(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(b)
        .wrapping_add(c.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        FetchError, LocationType, MapRequest, Split, StaticMapsClient,
    };
    use crate::dataset::fetch::PairMeta;
    use crate::palette::{ClassId, ClassPalette};
    use std::time::Duration;

    fn meta(id: &str) -> PairMeta {
        PairMeta {
            id: id.to_string(),
            country: "Canada".to_string(),
            location_type: LocationType::City,
            split: Split::Train,
        }
    }

    fn quick_client(url: &str) -> StaticMapsClient {
        StaticMapsClient::new(url)
            .with_min_interval(Duration::from_millis(1))
            .with_backoff_base(Duration::from_millis(1))
    }

    #[test]
    fn fetch_pair_round_trip() {
        let server = MockMapServer::start(MockServerConfig::default()).unwrap();
        let client = quick_client(&server.url());
        let src = MapRequest::source("Ottawa, Ontario, Canada", 16).unwrap();
        let tac = MapRequest::tactile("Ottawa, Ontario, Canada", 16).unwrap();
        let pair = client.fetch_pair(&src, &tac, &meta("ottawa-16")).unwrap();
        assert_eq!((pair.source.width(), pair.source.height()), (512, 512));
        assert_eq!((pair.tactile.width(), pair.tactile.height()), (512, 512));

        // Tactile tile is palette-pure after the crop.
        let palette = ClassPalette::default();
        let exact: Vec<[u8; 3]> = ClassId::ALL.iter().map(|&c| palette.color(c)).collect();
        assert!(pair.tactile.pixels().all(|p| exact.contains(&p)));

        // Same request twice is byte-identical.
        let again = client.fetch_pair(&src, &tac, &meta("ottawa-16")).unwrap();
        assert_eq!(pair.source, again.source);
        assert_eq!(pair.tactile, again.tactile);
        server.stop();
    }

    #[test]
    fn source_and_tactile_views_align() {
        // The mock's source tile is the center crop of the same geometry the
        // tactile tile renders, so street pixels in the source sit on street
        // labels in the tactile ground truth.
        let server = MockMapServer::start(MockServerConfig::default()).unwrap();
        let client = quick_client(&server.url());
        let src = MapRequest::source("Alignment Test City", 16).unwrap();
        let tac = MapRequest::tactile("Alignment Test City", 16).unwrap();
        let pair = client.fetch_pair(&src, &tac, &meta("align")).unwrap();
        let palette = ClassPalette::default();
        let mask = palette.segment_image(&pair.tactile);
        let mut street_hits = 0u32;
        let mut street_total = 0u32;
        for y in 0..512 {
            for x in 0..512 {
                if pair.source.get(x, y) == [255, 255, 255] {
                    street_total += 1;
                    if mask.get(x, y) == ClassId::Streets {
                        street_hits += 1;
                    }
                }
            }
        }
        assert!(street_total > 1000, "mock source should show streets");
        // Pseudo-text may overprint a few white pixels; alignment holds for
        // the overwhelming majority.
        assert!(
            f64::from(street_hits) / f64::from(street_total) > 0.95,
            "{street_hits}/{street_total} white source pixels on street labels"
        );
        server.stop();
    }

    #[test]
    fn transient_failures_recover_and_hard_failures_surface() {
        // Two failures then success: inside the 3-attempt budget.
        let server = MockMapServer::start(MockServerConfig {
            seed: 1,
            fail_first: 2,
            fail_status: 500,
            ..MockServerConfig::default()
        })
        .unwrap();
        let client = quick_client(&server.url());
        let src = MapRequest::source("Recovery City", 15).unwrap();
        assert!(client.get_tile(&src).is_ok());
        server.stop();

        // Three failures exhaust the budget and surface the attempt count.
        let server = MockMapServer::start(MockServerConfig {
            seed: 1,
            fail_first: 3,
            fail_status: 500,
            ..MockServerConfig::default()
        })
        .unwrap();
        let client = quick_client(&server.url());
        match client.get_tile(&src) {
            Err(FetchError::Http {
                status, attempts, ..
            }) => {
                assert_eq!(status, 500);
                assert_eq!(attempts, 3);
            }
            other => panic!("expected an HTTP error, got {other:?}"),
        }
        server.stop();
    }

    #[test]
    fn quota_and_size_errors_are_distinct() {
        let server = MockMapServer::start(MockServerConfig {
            seed: 1,
            fail_first: 1,
            fail_status: 429,
            ..MockServerConfig::default()
        })
        .unwrap();
        let client = quick_client(&server.url());
        let src = MapRequest::source("Quota City", 16).unwrap();
        assert!(matches!(
            client.get_tile(&src),
            Err(FetchError::QuotaExceeded { .. })
        ));
        server.stop();

        // A server that answers with the wrong tile size trips the size
        // validation rather than decoding silently.
        let server = MockMapServer::start(MockServerConfig {
            seed: 1,
            wrong_size: Some(448),
            ..MockServerConfig::default()
        })
        .unwrap();
        let client = quick_client(&server.url());
        assert!(matches!(
            client.get_tile(&src),
            Err(FetchError::UnexpectedSize {
                expected_w: 512,
                got_w: 448,
                ..
            })
        ));
        server.stop();
    }

    #[test]
    fn batch_fetch_preserves_order() {
        let server = MockMapServer::start(MockServerConfig::default()).unwrap();
        let client = quick_client(&server.url()).with_max_concurrency(4);
        let jobs: Vec<_> = (0..6)
            .map(|i| {
                let center = format!("Batch City {i}");
                (
                    MapRequest::source(&center, 16).unwrap(),
                    MapRequest::tactile(&center, 16).unwrap(),
                    meta(&format!("batch-{i}")),
                )
            })
            .collect();
        let results = client.fetch_batch(&jobs);
        assert_eq!(results.len(), 6);
        for (i, result) in results.iter().enumerate() {
            let pair = result.as_ref().unwrap();
            assert_eq!(pair.id, format!("batch-{i}"));
        }
        server.stop();
    }
}
