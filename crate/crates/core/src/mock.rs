//! Deterministic mock of the record site: generated HTML record pages and
//! artifact images (plus per-image ground-truth masks), served over local
//! HTTP with a request log and scriptable failures. This keeps every
//! harvest and pipeline test offline and reproducible.

use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::segment::{opening_cross, BinaryMask};

/// Parameters of one generated site. The same spec always produces a
/// byte-identical directory tree.
#[derive(Debug, Clone)]
pub struct MockSpec {
    pub record_count: u32,
    pub seed: u64,
    pub views: Vec<char>,
    /// Scripted HTTP statuses per path, consumed in order; afterwards the
    /// path serves normally.
    pub failure_script: BTreeMap<String, Vec<u16>>,
    pub robots_text: String,
    /// Oversize the scale bar so it rivals the artifact, to exercise the
    /// multiple-large-components flag.
    pub adversarial_scale_bar: bool,
    pub image_size: (u32, u32),
}

impl MockSpec {
    pub fn new(record_count: u32, seed: u64) -> Self {
        Self {
            record_count,
            seed,
            views: vec!['f', 'r', 's'],
            failure_script: BTreeMap::new(),
            robots_text: "User-agent: *\nAllow: /\n".to_string(),
            adversarial_scale_bar: false,
            image_size: (320, 320),
        }
    }
}

#[derive(Debug, Error)]
pub enum MockError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image encoding failed: {0}")]
    Encode(String),
}

pub const RECORD_LABELS: [&str; 13] = [
    "Sitename",
    "Country",
    "Continent",
    "Biface type",
    "Completeness",
    "Finder",
    "Finder's number",
    "Site subdivision",
    "Context or level",
    "Date found",
    "Museum or holder",
    "Museum accession number",
    "Museum accession date",
];

const SITES: [&str; 8] = [
    "WARREN HILL",
    "BOXGROVE",
    "SWANSCOMBE",
    "HOXNE",
    "OLDUVAI GORGE",
    "KALAMBO FALLS",
    "OLORGESAILIE",
    "UBEIDIYA",
];

// (country, continent) pairs so the two columns stay consistent.
const PLACES: [(&str, &str); 6] = [
    ("ENGLAND", "EUROPE"),
    ("FRANCE", "EUROPE"),
    ("TANZANIA", "AFRICA"),
    ("KENYA", "AFRICA"),
    ("ZAMBIA", "AFRICA"),
    ("ISRAEL", "NEAR EAST"),
];

const TYPES: [&str; 4] = ["HANDAXE", "CLEAVER", "PICK", "FICRON"];
const COMPLETENESS: [&str; 3] = ["COMPLETE", "BROKEN", "TIP MISSING"];
const FINDERS: [&str; 6] = ["STURGE", "MARSHALL", "LEAKEY", "CLARK", "FROST", "SMITH"];
const MUSEUMS: [&str; 4] = [
    "BRITISH MUSEUM, LONDON, ENGLAND",
    "NATURAL HISTORY MUSEUM, LONDON, ENGLAND",
    "NATIONAL MUSEUM, NAIROBI, KENYA",
    "MUSEE DE L'HOMME, PARIS, FRANCE",
];
const DESCRIPTIONS: [&str; 5] = [
    "POSSIBLE ROUGHOUT",
    "IRREGULAR FLINT HANDAXE",
    "LINEAR FLINT HANDAXE",
    "OVATE HANDAXE",
    "POINTED HANDAXE",
];

/// The details-table content of one generated record, in label order.
pub fn record_fields(spec_seed: u64, id: u32) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec_seed ^ (u64::from(id) << 20) ^ 0xF1E1D);
    let (country, continent) = *PLACES.choose(&mut rng).unwrap();
    let unclear_or = |rng: &mut ChaCha8Rng, value: String| -> String {
        if rng.gen_bool(0.4) {
            "UNCLEAR".to_string()
        } else {
            value
        }
    };
    let candidate = format!("{}", rng.gen_range(1..900));
    let finders_number = unclear_or(&mut rng, candidate);
    let candidate = format!("AREA {}", rng.gen_range(1..9));
    let subdivision = unclear_or(&mut rng, candidate);
    let candidate = format!("LEVEL {}", rng.gen_range(1..6));
    let context = unclear_or(&mut rng, candidate);
    let candidate = format!("{}", rng.gen_range(1880..1999));
    let date_found = unclear_or(&mut rng, candidate);
    let accession_date = if rng.gen_bool(0.3) {
        String::new() // blank dates occur in the source collection
    } else {
        format!("{}", rng.gen_range(1900..2001))
    };
    vec![
        ("Sitename".into(), SITES.choose(&mut rng).unwrap().to_string()),
        ("Country".into(), country.to_string()),
        ("Continent".into(), continent.to_string()),
        ("Biface type".into(), TYPES.choose(&mut rng).unwrap().to_string()),
        (
            "Completeness".into(),
            COMPLETENESS.choose(&mut rng).unwrap().to_string(),
        ),
        ("Finder".into(), FINDERS.choose(&mut rng).unwrap().to_string()),
        ("Finder's number".into(), finders_number),
        ("Site subdivision".into(), subdivision),
        ("Context or level".into(), context),
        ("Date found".into(), date_found),
        (
            "Museum or holder".into(),
            MUSEUMS.choose(&mut rng).unwrap().to_string(),
        ),
        (
            "Museum accession number".into(),
            format!("{}", rng.gen_range(1..9000)),
        ),
        ("Museum accession date".into(), accession_date),
    ]
}

pub fn record_description(spec_seed: u64, id: u32) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(spec_seed ^ (u64::from(id) << 20) ^ 0xDE5C);
    DESCRIPTIONS.choose(&mut rng).unwrap().to_string()
}

fn escape_html(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Reference record-page markup the extractor defaults are keyed on.
pub fn render_record_page(spec: &MockSpec, id: u32) -> String {
    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html>\n<head><title>Biface record ");
    html.push_str(&id.to_string());
    html.push_str("</title></head>\n<body>\n<h1 class=\"record-title\">Full Record - No. ");
    html.push_str(&id.to_string());
    html.push_str("</h1>\n<div class=\"views\">\n");
    for &view in &spec.views {
        html.push_str(&format!(
            "  <a href=\"/images/full/{id}{view}.jpg\"><img src=\"/images/thumb/{id}{view}.jpg\" alt=\"Thumbnail {id}{view}\"></a>\n"
        ));
    }
    html.push_str("</div>\n<p class=\"description\">");
    html.push_str(&escape_html(&record_description(spec.seed, id)));
    html.push_str("</p>\n<h2>Details</h2>\n<table class=\"details\">\n");
    for (label, value) in record_fields(spec.seed, id) {
        html.push_str(&format!(
            "<tr><td>{}</td><td>{}</td></tr>\n",
            escape_html(&label),
            escape_html(&value)
        ));
    }
    html.push_str("</table>\n</body>\n</html>\n");
    html
}

/// One generated artifact photograph plus its ground-truth mask.
pub struct GeneratedImage {
    pub jpeg: Vec<u8>,
    pub truth: BinaryMask,
}

/// Generates the photograph for one (record, view): dark noisy background,
/// one bright convex artifact, and a small bright "scale bar" strip near
/// the top edge. The truth mask is exactly the artifact blob, which is
/// constructed to be invariant under the pipeline's 3x3-cross opening.
pub fn generate_artifact_image(spec: &MockSpec, id: u32, view: char) -> GeneratedImage {
    let (w, h) = spec.image_size;
    let mut rng =
        ChaCha8Rng::seed_from_u64(spec.seed ^ (u64::from(id) << 16) ^ u64::from(view as u32));

    // Scale bar near the top edge.
    let (bar_w, bar_h) = if spec.adversarial_scale_bar {
        (120u32, 40u32)
    } else {
        (30u32, 6u32)
    };
    let bar_x = rng.gen_range(12..w - bar_w - 12);
    let bar_y = rng.gen_range(6..12);

    // Artifact blob: rotated ellipse or convex hull of annulus points.
    // Semi-extents stay in [60, 90] so the discrete-boundary polygon area
    // stays well within 2% of the pixel count.
    let bar_bottom = bar_y + bar_h;
    let max_r = 90.0f64;
    let min_r = 60.0f64;
    let cx = rng.gen_range((max_r as u32 + 14)..(w - max_r as u32 - 14)) as f64;
    let cy = rng.gen_range((bar_bottom + max_r as u32 + 16)..(h - max_r as u32 - 14)) as f64;

    let mut shape = BinaryMask::new(w, h);
    if rng.gen_bool(0.5) {
        let a = rng.gen_range(min_r..=max_r);
        let b = rng.gen_range(min_r..=max_r);
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let (sin_t, cos_t) = theta.sin_cos();
        for y in 0..h {
            for x in 0..w {
                let dx = f64::from(x) - cx;
                let dy = f64::from(y) - cy;
                let u = dx * cos_t + dy * sin_t;
                let v = -dx * sin_t + dy * cos_t;
                if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                    shape.set(x, y, true);
                }
            }
        }
    } else {
        // Stratified angles keep the hull round-ish and full-bodied.
        let k = rng.gen_range(7..=11u32);
        let mut vertices: Vec<(f64, f64)> = Vec::with_capacity(k as usize);
        for i in 0..k {
            let base = 2.0 * std::f64::consts::PI * f64::from(i) / f64::from(k);
            let jitter = rng.gen_range(-0.35..0.35);
            let r = rng.gen_range(min_r..=max_r);
            let angle = base + jitter;
            vertices.push((cx + r * angle.cos(), cy + r * angle.sin()));
        }
        let hull = convex_hull(&vertices);
        for y in 0..h {
            for x in 0..w {
                if point_in_convex(&hull, f64::from(x), f64::from(y)) {
                    shape.set(x, y, true);
                }
            }
        }
    }
    // The truth is the opened shape, so segmenting the rendered image with
    // the same opening reproduces it exactly.
    let truth = opening_cross(&shape);

    let mut pixels = vec![0u8; (w as usize) * (h as usize)];
    for y in 0..h {
        for x in 0..w {
            let i = (y as usize) * (w as usize) + x as usize;
            let in_bar =
                x >= bar_x && x < bar_x + bar_w && y >= bar_y && y < bar_y + bar_h;
            pixels[i] = if truth.get(i64::from(x), i64::from(y)) || in_bar {
                rng.gen_range(190..=210)
            } else {
                rng.gen_range(10..=20)
            };
        }
    }

    GeneratedImage {
        jpeg: encode_jpeg_gray(&pixels, w, h),
        truth,
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; returns the hull in counter-clockwise order.
fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len() * 2);
    for &p in pts.iter().chain(pts.iter().rev().skip(1)) {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn point_in_convex(hull: &[(f64, f64)], x: f64, y: f64) -> bool {
    if hull.len() < 3 {
        return false;
    }
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        if cross(a, b, (x, y)) < 0.0 {
            return false;
        }
    }
    true
}

/// Quality-100 grayscale JPEG. At this quality the decode error is a few
/// gray levels at most, far inside the background/foreground separation the
/// generator guarantees, so thresholding recovers the painted sets exactly.
fn encode_jpeg_gray(pixels: &[u8], w: u32, h: u32) -> Vec<u8> {
    let mut out = Vec::new();
    let mut cursor = std::io::Cursor::new(&mut out);
    let mut encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut cursor, 100);
    encoder
        .encode(pixels, w, h, image::ExtendedColorType::L8)
        .expect("in-memory jpeg encode");
    drop(encoder);
    drop(cursor);
    out
}

fn encode_png_mask(mask: &BinaryMask) -> Vec<u8> {
    let buf: Vec<u8> = mask.bits.iter().map(|&b| if b { 255u8 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(mask.width, mask.height, buf).expect("sized buffer");
    let mut out = Vec::new();
    image::DynamicImage::ImageLuma8(img)
        .write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)
        .expect("in-memory png encode");
    out
}

/// Counts of what [`generate_site`] wrote.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteStats {
    pub records: u32,
    pub images: u32,
}

/// Writes the full site tree: `robots.txt`, `index.html`, one record page
/// per id, thumbnail and full images per view, and a ground-truth mask per
/// image under `truth/`.
pub fn generate_site(spec: &MockSpec, dir: &Path) -> Result<SiteStats, MockError> {
    std::fs::create_dir_all(dir.join("record"))?;
    std::fs::create_dir_all(dir.join("images/full"))?;
    std::fs::create_dir_all(dir.join("images/thumb"))?;
    std::fs::create_dir_all(dir.join("truth"))?;

    std::fs::write(dir.join("robots.txt"), &spec.robots_text)?;

    let mut index = String::from("<!DOCTYPE html>\n<html><body>\n<h1>Record index</h1>\n<ul>\n");
    let thumb = thumbnail_jpeg();
    let mut images = 0u32;
    for id in 1..=spec.record_count {
        index.push_str(&format!(
            "  <li><a href=\"/record/{id}.html\">Record {id}</a></li>\n"
        ));
        std::fs::write(
            dir.join(format!("record/{id}.html")),
            render_record_page(spec, id),
        )?;
        for &view in &spec.views {
            let generated = generate_artifact_image(spec, id, view);
            std::fs::write(dir.join(format!("images/full/{id}{view}.jpg")), &generated.jpeg)?;
            std::fs::write(dir.join(format!("images/thumb/{id}{view}.jpg")), &thumb)?;
            std::fs::write(
                dir.join(format!("truth/{id}{view}.png")),
                encode_png_mask(&generated.truth),
            )?;
            images += 1;
        }
    }
    index.push_str("</ul>\n</body></html>\n");
    std::fs::write(dir.join("index.html"), index)?;

    Ok(SiteStats {
        records: spec.record_count,
        images,
    })
}

fn thumbnail_jpeg() -> Vec<u8> {
    encode_jpeg_gray(&[120u8; 24 * 24], 24, 24)
}

// -------------------------------------------------------------- server ----

/// One logged request.
#[derive(Debug, Clone)]
pub struct RequestLogEntry {
    pub method: String,
    /// Path as requested, including any query string.
    pub path: String,
    pub at: Instant,
}

/// Running mock HTTP endpoint. Dropping the handle stops the server.
#[derive(Debug)]
pub struct MockServer {
    addr: SocketAddr,
    log: Arc<Mutex<Vec<RequestLogEntry>>>,
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Snapshot of all requests seen so far.
    pub fn log(&self) -> Vec<RequestLogEntry> {
        self.log.lock().unwrap().clone()
    }

    pub fn requests_for(&self, path: &str) -> usize {
        self.log().iter().filter(|e| e.path == path).count()
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serves a generated site directory on 127.0.0.1. Port 0 picks a free
/// port; query the actual address via [`MockServer::addr`]. Scripted
/// statuses are consumed per request in order, then the path serves
/// normally.
pub fn serve(
    dir: &Path,
    port: u16,
    failure_script: BTreeMap<String, Vec<u16>>,
) -> Result<MockServer, MockError> {
    let listener = TcpListener::bind(("127.0.0.1", port)).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            MockError::PortInUse(port)
        } else {
            MockError::Io(e)
        }
    })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;

    let log: Arc<Mutex<Vec<RequestLogEntry>>> = Arc::new(Mutex::new(Vec::new()));
    let stop = Arc::new(AtomicBool::new(false));
    let scripts: Arc<Mutex<BTreeMap<String, VecDeque<u16>>>> = Arc::new(Mutex::new(
        failure_script
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect(),
    ));

    let root = dir.to_path_buf();
    let log_in = Arc::clone(&log);
    let stop_in = Arc::clone(&stop);
    let handle = std::thread::spawn(move || loop {
        match listener.accept() {
            Ok((stream, _)) => {
                let _ = handle_connection(stream, &root, &log_in, &scripts);
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if stop_in.load(Ordering::SeqCst) {
                    return;
                }
                std::thread::sleep(std::time::Duration::from_millis(3));
            }
            Err(_) => {
                if stop_in.load(Ordering::SeqCst) {
                    return;
                }
            }
        }
    });

    Ok(MockServer {
        addr,
        log,
        stop,
        handle: Some(handle),
    })
}

fn handle_connection(
    mut stream: TcpStream,
    root: &PathBuf,
    log: &Arc<Mutex<Vec<RequestLogEntry>>>,
    scripts: &Arc<Mutex<BTreeMap<String, VecDeque<u16>>>>,
) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(std::time::Duration::from_secs(5)))?;

    // Read until the end of the request headers; GET requests have no body.
    let mut buf = Vec::new();
    let mut chunk = [0u8; 1024];
    while !buf.windows(4).any(|w| w == b"\r\n\r\n") {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
        if buf.len() > 64 * 1024 {
            break;
        }
    }
    let text = String::from_utf8_lossy(&buf);
    let mut parts = text.lines().next().unwrap_or("").split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let raw_path = parts.next().unwrap_or("/").to_string();

    log.lock().unwrap().push(RequestLogEntry {
        method: method.clone(),
        path: raw_path.clone(),
        at: Instant::now(),
    });

    let path = raw_path.split('?').next().unwrap_or("/").to_string();

    if method != "GET" {
        return write_response(&mut stream, 405, "text/plain", b"method not allowed");
    }

    if let Some(queue) = scripts.lock().unwrap().get_mut(&path) {
        if let Some(status) = queue.pop_front() {
            if status != 200 {
                return write_response(
                    &mut stream,
                    status,
                    "text/plain",
                    format!("scripted {status}").as_bytes(),
                );
            }
        }
    }

    let rel = path.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    if rel.split('/').any(|seg| seg == "..") {
        return write_response(&mut stream, 403, "text/plain", b"forbidden");
    }
    let file = root.join(rel);
    match std::fs::read(&file) {
        Ok(body) => write_response(&mut stream, 200, content_type(rel), &body),
        Err(_) => write_response(&mut stream, 404, "text/plain", b"not found"),
    }
}

fn content_type(path: &str) -> &'static str {
    match path.rsplit('.').next() {
        Some("html") => "text/html; charset=utf-8",
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("txt") => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

fn write_response(
    stream: &mut TcpStream,
    status: u16,
    content_type: &str,
    body: &[u8],
) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        403 => "Forbidden",
        404 => "Not Found",
        405 => "Method Not Allowed",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let head = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes())?;
    stream.write_all(body)?;
    stream.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ThresholdMode;
    use crate::segment::{
        binarize, connected_components, histogram, largest_component, otsu_threshold,
        to_grayscale,
    };

    #[test]
    fn same_spec_generates_identical_trees() {
        let spec = MockSpec::new(3, 11);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        generate_site(&spec, dir_a.path()).unwrap();
        generate_site(&spec, dir_b.path()).unwrap();

        let mut files_a = collect_files(dir_a.path());
        let files_b = collect_files(dir_b.path());
        files_a.sort();
        assert!(!files_a.is_empty());
        for rel in &files_a {
            let a = std::fs::read(dir_a.path().join(rel)).unwrap();
            let b = std::fs::read(dir_b.path().join(rel)).unwrap();
            assert_eq!(a, b, "file {rel} differs between runs");
        }
        assert_eq!(files_a.len(), files_b.len());
    }

    fn collect_files(dir: &Path) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let entry = entry.unwrap();
                if entry.file_type().unwrap().is_dir() {
                    stack.push(entry.path());
                } else {
                    out.push(
                        entry
                            .path()
                            .strip_prefix(dir)
                            .unwrap()
                            .to_string_lossy()
                            .into_owned(),
                    );
                }
            }
        }
        out
    }

    #[test]
    fn zero_records_leaves_only_the_skeleton() {
        let spec = MockSpec::new(0, 1);
        let dir = tempfile::tempdir().unwrap();
        let stats = generate_site(&spec, dir.path()).unwrap();
        assert_eq!(stats, SiteStats { records: 0, images: 0 });
        assert!(dir.path().join("robots.txt").exists());
        assert!(dir.path().join("index.html").exists());
        assert!(std::fs::read_dir(dir.path().join("record")).unwrap().next().is_none());
    }

    #[test]
    fn expected_counts_for_a_small_site() {
        let spec = MockSpec::new(5, 2);
        let dir = tempfile::tempdir().unwrap();
        let stats = generate_site(&spec, dir.path()).unwrap();
        assert_eq!(stats, SiteStats { records: 5, images: 15 });
        assert_eq!(std::fs::read_dir(dir.path().join("images/full")).unwrap().count(), 15);
        assert_eq!(std::fs::read_dir(dir.path().join("truth")).unwrap().count(), 15);
    }

    /// The linchpin of the oracle suite: decoding the quality-100 JPEG and
    /// running binarize+opening must reproduce the saved truth mask exactly.
    #[test]
    fn jpeg_round_trip_preserves_the_truth_mask() {
        let spec = MockSpec::new(0, 77);
        for (id, view) in [(1u32, 'f'), (2, 'r'), (3, 's'), (4, 'f')] {
            let generated = generate_artifact_image(&spec, id, view);
            let decoded = image::load_from_memory(&generated.jpeg).unwrap();
            let gray = to_grayscale(&decoded).unwrap();
            let level = otsu_threshold(&histogram(&gray)).unwrap();
            let opened = opening_cross(&binarize(&gray, level));
            let labeled = connected_components(&opened, crate::config::Connectivity::Eight);
            let largest = *largest_component(&labeled.components).unwrap();
            let mask = labeled.component_mask(largest.label);
            assert_eq!(
                mask, generated.truth,
                "pipeline mask diverged from truth for {id}{view}"
            );
        }
    }

    #[test]
    fn segment_options_match_the_generated_scene() {
        // The full `segment` entry point agrees with the truth as well.
        let spec = MockSpec::new(0, 123);
        let generated = generate_artifact_image(&spec, 9, 'f');
        let decoded = image::load_from_memory(&generated.jpeg).unwrap();
        let opts = crate::segment::SegmentOptions {
            threshold: ThresholdMode::Otsu,
            ..Default::default()
        };
        let result = crate::segment::segment(&decoded, &opts).unwrap();
        assert_eq!(result.mask, generated.truth);
        assert!(result.flags.is_empty());
    }

    #[test]
    fn adversarial_scale_bar_is_flagged_not_selected() {
        let mut spec = MockSpec::new(0, 5);
        spec.adversarial_scale_bar = true;
        let generated = generate_artifact_image(&spec, 1, 'f');
        let decoded = image::load_from_memory(&generated.jpeg).unwrap();
        let result =
            crate::segment::segment(&decoded, &crate::segment::SegmentOptions::default()).unwrap();
        assert_eq!(result.mask, generated.truth, "artifact still wins");
        assert!(result
            .flags
            .contains(&crate::segment::QualityFlag::MultipleLargeComponents));
    }

    #[test]
    fn server_serves_scripts_and_logs() {
        let spec = MockSpec::new(1, 3);
        let dir = tempfile::tempdir().unwrap();
        generate_site(&spec, dir.path()).unwrap();

        let mut script = BTreeMap::new();
        script.insert("/record/1.html".to_string(), vec![500, 200]);
        let mut server = serve(dir.path(), 0, script).unwrap();
        let base = server.base_url();

        let get = |path: &str| -> (u16, Vec<u8>) {
            let resp = reqwest::blocking::get(format!("{base}{path}")).unwrap();
            let status = resp.status().as_u16();
            (status, resp.bytes().unwrap().to_vec())
        };

        assert_eq!(get("/record/1.html").0, 500, "first scripted status");
        let (status, body) = get("/record/1.html");
        assert_eq!(status, 200, "script exhausted, normal service");
        assert!(String::from_utf8_lossy(&body).contains("Full Record - No. 1"));
        assert_eq!(get("/nope.html").0, 404);
        assert_eq!(get("/robots.txt").0, 200);
        assert_eq!(get("/images/full/1f.jpg").0, 200);

        let log = server.log();
        assert_eq!(log.len(), 5);
        assert_eq!(server.requests_for("/record/1.html"), 2);
        assert!(log.windows(2).all(|w| w[0].at <= w[1].at));
        server.stop();
    }

    #[test]
    fn busy_port_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("index.html"), "x").unwrap();
        let server = serve(dir.path(), 0, BTreeMap::new()).unwrap();
        let port = server.addr().port();
        match serve(dir.path(), port, BTreeMap::new()) {
            Err(MockError::PortInUse(p)) => assert_eq!(p, port),
            other => panic!("expected PortInUse, got {other:?}"),
        }
    }

    #[test]
    fn record_pages_extract_cleanly() {
        let spec = MockSpec::new(0, 42);
        let html = render_record_page(&spec, 190);
        let out = crate::extract::extract_record(
            &html,
            190,
            &crate::config::ExtractorSelectors::default(),
        )
        .unwrap();
        assert_eq!(out.images.len(), 3);
        assert!(!out.unexpected_image_count);
        let labels: Vec<&str> = out.metadata.fields.keys().map(String::as_str).collect();
        assert_eq!(labels, RECORD_LABELS.to_vec());
        assert_eq!(out.images[0].original_filename, "190f.jpg");
    }
}
