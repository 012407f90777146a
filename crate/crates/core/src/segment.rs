//! Classical single-object segmentation: grayscale → threshold → morphological
//! opening → connected components → largest component → Moore-neighbor contour
//! → bounding box, with quality flags for the known failure modes.

use std::collections::{BTreeSet, VecDeque};

use image::DynamicImage;
use thiserror::Error;

use crate::config::{Connectivity, RunConfig, ThresholdMode};

/// 8-bit luminance image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), (width as usize) * (height as usize));
        Self {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y as usize) * (self.width as usize) + x as usize]
    }
}

/// Row-major boolean foreground mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        (y as usize) * (self.width as usize) + x as usize
    }

    #[inline]
    pub fn get(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return false;
        }
        self.bits[(y as usize) * (self.width as usize) + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let i = self.idx(x, y);
        self.bits[i] = v;
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// True when any set pixel lies on the outermost row or column.
    pub fn touches_border(&self) -> bool {
        let (w, h) = (self.width as i64, self.height as i64);
        (0..w).any(|x| self.get(x, 0) || self.get(x, h - 1))
            || (0..h).any(|y| self.get(0, y) || self.get(w - 1, y))
    }
}

/// Integer pixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

/// Closed boundary ring: the last point connects back to the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<Point>,
}

/// Tight axis-aligned box, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// One connected foreground region. Components are reported in raster order
/// of their seed pixel (the first set pixel found scanning rows then columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub label: u32,
    pub area_px: usize,
    pub seed: (u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum QualityFlag {
    TouchesBorder,
    LowContrast,
    MultipleLargeComponents,
}

impl QualityFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            QualityFlag::TouchesBorder => "touches_border",
            QualityFlag::LowContrast => "low_contrast",
            QualityFlag::MultipleLargeComponents => "multiple_large_components",
        }
    }
}

/// Full segmentation output for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub mask: BinaryMask,
    pub contour: Contour,
    pub bbox: BoundingBox,
    pub area_px: usize,
    pub flags: BTreeSet<QualityFlag>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("unsupported pixel depth or color type")]
    UnsupportedDepth,
    #[error("histogram mass concentrated in a single bin; no threshold separates it")]
    Degenerate,
    #[error("no component list to choose from")]
    NoComponents,
    #[error("no foreground pixel survived thresholding and opening")]
    EmptyForeground,
}

/// Segmentation knobs, typically derived from the run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOptions {
    pub threshold: ThresholdMode,
    pub connectivity: Connectivity,
    pub polygon_epsilon_px: f64,
    /// 3x3-cross morphological opening before labelling; on by default.
    pub opening: bool,
    /// Between-class variance below this raises the low-contrast flag.
    pub low_contrast_floor: f64,
    /// Second-largest component above this fraction of the largest raises
    /// the multiple-large-components flag.
    pub secondary_component_ratio: f64,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            threshold: ThresholdMode::Otsu,
            connectivity: Connectivity::Eight,
            polygon_epsilon_px: 0.0,
            opening: true,
            low_contrast_floor: 100.0,
            secondary_component_ratio: 0.25,
        }
    }
}

impl SegmentOptions {
    pub fn from_run_config(cfg: &RunConfig) -> Self {
        Self {
            threshold: cfg.threshold_mode,
            connectivity: cfg.connectivity,
            polygon_epsilon_px: cfg.polygon_epsilon_px,
            ..Self::default()
        }
    }
}

/// BT.601 luma conversion; gray input passes through unchanged.
pub fn to_grayscale(image: &DynamicImage) -> Result<GrayImage, SegmentError> {
    let (width, height) = (image.width(), image.height());
    let pixels = match image {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().clone(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(buf) => {
            buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect()
        }
        _ => return Err(SegmentError::UnsupportedDepth),
    };
    Ok(GrayImage::new(width, height, pixels))
}

#[inline]
fn luma(r: u8, g: u8, b: u8) -> u8 {
    let v = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    v.round().clamp(0.0, 255.0) as u8
}

/// 256-bin intensity histogram.
pub fn histogram(gray: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &p in &gray.pixels {
        hist[p as usize] += 1;
    }
    hist
}

/// Between-class variance of splitting the histogram into `<= level` and
/// `> level` classes.
pub fn between_class_variance(hist: &[u64; 256], level: u8) -> f64 {
    let total: f64 = hist.iter().map(|&c| c as f64).sum();
    if total == 0.0 {
        return 0.0;
    }
    let sum_total: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for v in 0..=level as usize {
        w0 += hist[v] as f64;
        sum0 += v as f64 * hist[v] as f64;
    }
    let w1 = total - w0;
    if w0 == 0.0 || w1 == 0.0 {
        return 0.0;
    }
    let m0 = sum0 / w0;
    let m1 = (sum_total - sum0) / w1;
    w0 / total * (w1 / total) * (m0 - m1) * (m0 - m1)
}

/// Otsu's threshold: the level maximising between-class variance, ties going
/// to the lowest level. Foreground is strictly greater than the level.
pub fn otsu_threshold(hist: &[u64; 256]) -> Result<u8, SegmentError> {
    let total: u64 = hist.iter().sum();
    if total == 0 || hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(SegmentError::Degenerate);
    }
    let totalf = total as f64;
    let sum_total: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();

    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    let mut best = (0u8, f64::NEG_INFINITY);
    for t in 0..=255u16 {
        w0 += hist[t as usize] as f64;
        sum0 += t as f64 * hist[t as usize] as f64;
        let w1 = totalf - w0;
        if w0 == 0.0 {
            continue;
        }
        if w1 == 0.0 {
            break;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_total - sum0) / w1;
        let sigma = w0 / totalf * (w1 / totalf) * (m0 - m1) * (m0 - m1);
        if sigma > best.1 {
            best = (t as u8, sigma);
        }
    }
    Ok(best.0)
}

/// Bit set iff pixel value is strictly greater than `level`.
pub fn binarize(gray: &GrayImage, level: u8) -> BinaryMask {
    let mut mask = BinaryMask::new(gray.width, gray.height);
    for (i, &p) in gray.pixels.iter().enumerate() {
        mask.bits[i] = p > level;
    }
    mask
}

const CROSS: [(i64, i64); 5] = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)];

fn erode_cross(mask: &BinaryMask) -> BinaryMask {
    let mut out = BinaryMask::new(mask.width, mask.height);
    for y in 0..mask.height as i64 {
        for x in 0..mask.width as i64 {
            let keep = CROSS.iter().all(|&(dx, dy)| mask.get(x + dx, y + dy));
            if keep {
                out.set(x as u32, y as u32, true);
            }
        }
    }
    out
}

fn dilate_cross(mask: &BinaryMask) -> BinaryMask {
    let mut out = BinaryMask::new(mask.width, mask.height);
    for y in 0..mask.height as i64 {
        for x in 0..mask.width as i64 {
            let hit = CROSS.iter().any(|&(dx, dy)| mask.get(x + dx, y + dy));
            if hit {
                out.set(x as u32, y as u32, true);
            }
        }
    }
    out
}

/// Morphological opening with a 3x3 cross, one pass. Pixels outside the
/// image count as background for the erosion.
pub fn opening_cross(mask: &BinaryMask) -> BinaryMask {
    dilate_cross(&erode_cross(mask))
}

/// Connected-component labelling output. `labels` is 0 for background,
/// 1-based component labels otherwise.
#[derive(Debug, Clone)]
pub struct Labeled {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

impl Labeled {
    /// Extracts the binary mask of one labelled component.
    pub fn component_mask(&self, label: u32) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }
}

/// Labels all foreground components under the given adjacency. Components
/// come out ordered by the raster position of their seed pixel and their
/// areas always sum to the mask's popcount.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Labeled {
    let neighbors: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ],
    };
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut labels = vec![0u32; mask.bits.len()];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();

    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            if !mask.bits[idx] || labels[idx] != 0 {
                continue;
            }
            let label = components.len() as u32 + 1;
            let mut area = 0usize;
            labels[idx] = label;
            queue.push_back((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                area += 1;
                for &(dx, dy) in neighbors {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let nidx = (ny * w + nx) as usize;
                    if mask.bits[nidx] && labels[nidx] == 0 {
                        labels[nidx] = label;
                        queue.push_back((nx, ny));
                    }
                }
            }
            components.push(Component {
                label,
                area_px: area,
                seed: (x as u32, y as u32),
            });
        }
    }
    Labeled {
        width: mask.width,
        height: mask.height,
        labels,
        components,
    }
}

/// Largest component by area; ties go to the raster-earlier seed, which is
/// simply the earlier list entry.
pub fn largest_component(components: &[Component]) -> Result<&Component, SegmentError> {
    let best_area = components
        .iter()
        .map(|c| c.area_px)
        .max()
        .ok_or(SegmentError::NoComponents)?;
    Ok(components
        .iter()
        .find(|c| c.area_px == best_area)
        .expect("nonempty"))
}

/// Clockwise Moore neighborhood in image coordinates, starting West.
const MOORE: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

/// Traces the outer boundary of the mask's single component clockwise with
/// Moore-neighbor following, starting at the raster-first pixel. The walk
/// is a deterministic function of the (pixel, backtrack-direction) state, so
/// it terminates exactly when the first transition out of the start pixel is
/// about to repeat; that closes one full traversal even on 1-px-wide spurs
/// where naive return-to-start criteria loop or stop early.
///
/// Components of one or two pixels degenerate to the corner ring of their
/// bounding box, so downstream polygon consumers always get >= 3 points.
pub fn trace_contour(mask: &BinaryMask) -> Contour {
    let Some(start) = raster_first(mask) else {
        return Contour { points: Vec::new() };
    };

    let set_count_small = {
        // Cheap early count capped at 3; full popcount is not needed here.
        let mut n = 0;
        for &b in &mask.bits {
            if b {
                n += 1;
                if n >= 3 {
                    break;
                }
            }
        }
        n
    };
    if set_count_small < 3 {
        return corner_ring(mask);
    }

    let (sx, sy) = (start.0 as i64, start.1 as i64);
    let mut points = vec![Point::new(sx as i32, sy as i32)];

    // Direction from the current pixel toward the last examined empty cell.
    // West is guaranteed empty for the raster-first pixel.
    let mut dir_to_b = 0usize;
    let (mut cx, mut cy) = (sx, sy);
    let mut first_move: Option<(i64, i64, usize)> = None;

    let cap = mask.bits.len() * 8 + 16;
    for _ in 0..cap {
        let mut step: Option<(i64, i64, usize)> = None;
        for k in 1..=8usize {
            let d = (dir_to_b + k) % 8;
            let (nx, ny) = (cx + MOORE[d].0, cy + MOORE[d].1);
            if mask.get(nx, ny) {
                let dp = (dir_to_b + k - 1) % 8;
                let (px, py) = (cx + MOORE[dp].0, cy + MOORE[dp].1);
                // The previously examined (empty) cell expressed as a
                // direction from the new current pixel. Consecutive Moore
                // ring cells are always 8-adjacent, so this lookup holds.
                step = Some((nx, ny, dir_index(px - nx, py - ny)));
                break;
            }
        }
        let Some(next) = step else {
            break; // start pixel has no set neighbor
        };
        if first_move == Some(next) {
            break; // the walk is about to repeat: one full cycle done
        }
        if first_move.is_none() {
            first_move = Some(next);
        }
        (cx, cy, dir_to_b) = next;
        points.push(Point::new(cx as i32, cy as i32));
    }

    // A trace that ends back on its first point keeps the ring implicit.
    if points.len() > 1 && points.last() == points.first() {
        points.pop();
    }
    if points.len() < 3 {
        return corner_ring(mask);
    }
    Contour { points }
}

fn raster_first(mask: &BinaryMask) -> Option<(u32, u32)> {
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.bits[mask.idx(x, y)] {
                return Some((x, y));
            }
        }
    }
    None
}

/// Corner lattice ring of the mask's bounding box; the single-pixel case
/// yields that pixel's four corners.
fn corner_ring(mask: &BinaryMask) -> Contour {
    let Some(bbox) = tight_bbox(mask) else {
        return Contour { points: Vec::new() };
    };
    let (x0, y0) = (bbox.x as i32, bbox.y as i32);
    let (x1, y1) = (x0 + bbox.w as i32, y0 + bbox.h as i32);
    Contour {
        points: vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ],
    }
}

fn dir_index(dx: i64, dy: i64) -> usize {
    MOORE
        .iter()
        .position(|&(mx, my)| (mx, my) == (dx, dy))
        .expect("consecutive Moore ring cells are 8-adjacent")
}

/// Absolute shoelace area of the closed ring.
pub fn polygon_area(contour: &Contour) -> f64 {
    let pts = &contour.points;
    if pts.len() < 3 {
        return 0.0;
    }
    let mut acc: i64 = 0;
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        acc += i64::from(a.x) * i64::from(b.y) - i64::from(b.x) * i64::from(a.y);
    }
    (acc.abs() as f64) / 2.0
}

/// Douglas-Peucker simplification of the closed ring. Epsilon zero is the
/// identity. The epsilon is automatically tightened until the simplified
/// polygon's area stays within 2% of the original, so the output is always
/// a faithful stand-in for the traced boundary.
pub fn simplify(contour: &Contour, epsilon_px: f64) -> Contour {
    if epsilon_px <= 0.0 || contour.points.len() <= 4 {
        return contour.clone();
    }
    let original_area = polygon_area(contour);
    let mut eps = epsilon_px;
    for _ in 0..24 {
        let candidate = simplify_ring_once(contour, eps);
        if candidate.points.len() >= 3 {
            let area = polygon_area(&candidate);
            if original_area == 0.0 || (area - original_area).abs() <= 0.02 * original_area {
                return candidate;
            }
        }
        eps /= 2.0;
    }
    contour.clone()
}

fn simplify_ring_once(contour: &Contour, eps: f64) -> Contour {
    let pts = &contour.points;
    let n = pts.len();
    // Split the ring at the first point and the point farthest from it,
    // then simplify the two open halves independently.
    let far = (1..n)
        .max_by(|&a, &b| {
            dist2(pts[0], pts[a])
                .partial_cmp(&dist2(pts[0], pts[b]))
                .unwrap()
        })
        .unwrap();

    let mut first_half: Vec<Point> = pts[0..=far].to_vec();
    let mut second_half: Vec<Point> = pts[far..n].to_vec();
    second_half.push(pts[0]);

    dp_simplify(&mut first_half, eps);
    dp_simplify(&mut second_half, eps);

    let mut out = first_half;
    out.extend_from_slice(&second_half[1..second_half.len() - 1]);
    Contour { points: out }
}

fn dist2(a: Point, b: Point) -> f64 {
    let dx = f64::from(a.x - b.x);
    let dy = f64::from(a.y - b.y);
    dx * dx + dy * dy
}

fn perpendicular_distance(p: Point, a: Point, b: Point) -> f64 {
    let (ax, ay) = (f64::from(a.x), f64::from(a.y));
    let (bx, by) = (f64::from(b.x), f64::from(b.y));
    let (px, py) = (f64::from(p.x), f64::from(p.y));
    let num = ((by - ay) * px - (bx - ax) * py + bx * ay - by * ax).abs();
    let den = ((by - ay).powi(2) + (bx - ax).powi(2)).sqrt();
    if den == 0.0 {
        ((px - ax).powi(2) + (py - ay).powi(2)).sqrt()
    } else {
        num / den
    }
}

fn dp_simplify(points: &mut Vec<Point>, eps: f64) {
    if points.len() < 3 {
        return;
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    *keep.last_mut().unwrap() = true;
    let mut stack = vec![(0usize, points.len() - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (mut max_d, mut max_i) = (0.0f64, lo);
        for i in lo + 1..hi {
            let d = perpendicular_distance(points[i], points[lo], points[hi]);
            if d > max_d {
                max_d = d;
                max_i = i;
            }
        }
        if max_d > eps {
            keep[max_i] = true;
            stack.push((lo, max_i));
            stack.push((max_i, hi));
        }
    }
    let mut i = 0;
    points.retain(|_| {
        let k = keep[i];
        i += 1;
        k
    });
}

/// Tight bounding box of all set pixels.
pub fn tight_bbox(mask: &BinaryMask) -> Option<BoundingBox> {
    let (mut min_x, mut min_y) = (u32::MAX, u32::MAX);
    let (mut max_x, mut max_y) = (0u32, 0u32);
    let mut any = false;
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.bits[mask.idx(x, y)] {
                any = true;
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
            }
        }
    }
    any.then(|| BoundingBox {
        x: min_x,
        y: min_y,
        w: max_x - min_x + 1,
        h: max_y - min_y + 1,
    })
}

/// End-to-end segmentation of one decoded image.
pub fn segment(image: &DynamicImage, opts: &SegmentOptions) -> Result<SegmentationResult, SegmentError> {
    let gray = to_grayscale(image)?;
    let hist = histogram(&gray);
    let level = match opts.threshold {
        ThresholdMode::Otsu => match otsu_threshold(&hist) {
            Ok(level) => level,
            Err(SegmentError::Degenerate) => return Err(SegmentError::EmptyForeground),
            Err(e) => return Err(e),
        },
        ThresholdMode::Fixed(level) => level,
    };
    let variance = between_class_variance(&hist, level);

    let mut mask = binarize(&gray, level);
    if opts.opening {
        mask = opening_cross(&mask);
    }
    if mask.count_set() == 0 {
        return Err(SegmentError::EmptyForeground);
    }

    let labeled = connected_components(&mask, opts.connectivity);
    let largest = *largest_component(&labeled.components)?;

    let mut flags = BTreeSet::new();
    let second_area = labeled
        .components
        .iter()
        .filter(|c| c.label != largest.label)
        .map(|c| c.area_px)
        .max()
        .unwrap_or(0);
    if (second_area as f64) > opts.secondary_component_ratio * largest.area_px as f64 {
        flags.insert(QualityFlag::MultipleLargeComponents);
    }

    let comp_mask = labeled.component_mask(largest.label);
    if comp_mask.touches_border() {
        flags.insert(QualityFlag::TouchesBorder);
    }
    if variance < opts.low_contrast_floor {
        flags.insert(QualityFlag::LowContrast);
    }

    let contour = simplify(&trace_contour(&comp_mask), opts.polygon_epsilon_px);
    let bbox = tight_bbox(&comp_mask).expect("nonempty component");

    Ok(SegmentationResult {
        mask: comp_mask,
        contour,
        bbox,
        area_px: largest.area_px,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let mut m = BinaryMask::new(w, h);
        for (y, row) in rows.iter().enumerate() {
            for (x, c) in row.chars().enumerate() {
                if c == '#' {
                    m.set(x as u32, y as u32, true);
                }
            }
        }
        m
    }

    // ---- grayscale ----

    #[test]
    fn grayscale_weights() {
        let mut buf = image::RgbImage::new(3, 1);
        buf.put_pixel(0, 0, image::Rgb([255, 255, 255]));
        buf.put_pixel(1, 0, image::Rgb([0, 0, 0]));
        buf.put_pixel(2, 0, image::Rgb([255, 0, 0]));
        let g = to_grayscale(&DynamicImage::ImageRgb8(buf)).unwrap();
        assert_eq!(g.pixels, vec![255, 0, 76]);
    }

    #[test]
    fn gray_input_passes_through() {
        let buf = image::GrayImage::from_raw(2, 2, vec![1, 2, 3, 4]).unwrap();
        let g = to_grayscale(&DynamicImage::ImageLuma8(buf)).unwrap();
        assert_eq!(g.pixels, vec![1, 2, 3, 4]);
    }

    #[test]
    fn sixteen_bit_input_is_unsupported() {
        let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(2, 2);
        let r = to_grayscale(&DynamicImage::ImageLuma16(buf));
        assert_eq!(r.unwrap_err(), SegmentError::UnsupportedDepth);
    }

    // ---- otsu ----

    /// Independent oracle: naive double loop over all 256 candidate levels.
    fn otsu_naive(hist: &[u64; 256]) -> u8 {
        let mut best = (0u8, f64::NEG_INFINITY);
        for t in 0..=255u16 {
            let sigma = between_class_variance(hist, t as u8);
            if sigma > best.1 {
                best = (t as u8, sigma);
            }
        }
        best.0
    }

    #[test]
    fn otsu_separates_bimodal_population() {
        let mut hist = [0u64; 256];
        hist[10] = 800;
        hist[200] = 200;
        let level = otsu_threshold(&hist).unwrap();
        assert!((10..200).contains(&level), "level {level}");
        // Binarizing at that level separates the populations exactly.
        assert!(10 <= level && level < 200);
    }

    #[test]
    fn otsu_single_bin_is_degenerate() {
        let mut hist = [0u64; 256];
        hist[128] = 10_000;
        assert_eq!(otsu_threshold(&hist).unwrap_err(), SegmentError::Degenerate);
        assert_eq!(
            otsu_threshold(&[0u64; 256]).unwrap_err(),
            SegmentError::Degenerate
        );
    }

    #[test]
    fn otsu_two_point_equal_mass_keeps_bright_population() {
        let mut hist = [0u64; 256];
        hist[0] = 500;
        hist[255] = 500;
        let level = otsu_threshold(&hist).unwrap();
        // Ties go to the lowest level, so thresholding keeps the 255 class.
        assert_eq!(level, 0);
    }

    #[test]
    fn otsu_matches_naive_argmax_on_random_histograms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..100 {
            let mut hist = [0u64; 256];
            let bins = rng.gen_range(2..40);
            for _ in 0..bins {
                let b = rng.gen_range(0..256);
                hist[b] += rng.gen_range(1..5000);
            }
            assert_eq!(otsu_threshold(&hist).unwrap(), otsu_naive(&hist));
        }
    }

    // ---- binarize ----

    #[test]
    fn binarize_edge_cases() {
        let zeros = GrayImage::new(2, 2, vec![0; 4]);
        assert_eq!(binarize(&zeros, 0).count_set(), 0);

        let full = GrayImage::new(2, 2, vec![255; 4]);
        assert_eq!(binarize(&full, 0).count_set(), 4);

        let checker = GrayImage::new(2, 2, vec![0, 255, 255, 0]);
        let m = binarize(&checker, 128);
        assert_eq!(m.bits, vec![false, true, true, false]);
    }

    // ---- connected components ----

    #[test]
    fn two_disjoint_blobs() {
        let m = mask_from(&[
            "###....",
            "###....",
            "###..##",
            ".....##",
        ]);
        let l = connected_components(&m, Connectivity::Eight);
        let areas: Vec<usize> = l.components.iter().map(|c| c.area_px).collect();
        assert_eq!(areas, vec![9, 4]);
    }

    #[test]
    fn diagonal_touch_depends_on_connectivity() {
        let m = mask_from(&["#.", ".#"]);
        assert_eq!(connected_components(&m, Connectivity::Eight).components.len(), 1);
        assert_eq!(connected_components(&m, Connectivity::Four).components.len(), 2);
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = BinaryMask::new(4, 4);
        assert!(connected_components(&m, Connectivity::Eight).components.is_empty());
    }

    #[test]
    fn component_areas_sum_to_popcount_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let (w, h) = (rng.gen_range(1..24u32), rng.gen_range(1..24u32));
            let mut m = BinaryMask::new(w, h);
            for b in m.bits.iter_mut() {
                *b = rng.gen_bool(0.4);
            }
            for conn in [Connectivity::Four, Connectivity::Eight] {
                let l = connected_components(&m, conn);
                let total: usize = l.components.iter().map(|c| c.area_px).sum();
                assert_eq!(total, m.count_set());
            }
        }
    }

    // ---- largest component ----

    #[test]
    fn largest_component_selection_and_ties() {
        let a = Component { label: 1, area_px: 9, seed: (0, 0) };
        let b = Component { label: 2, area_px: 4, seed: (5, 0) };
        assert_eq!(largest_component(&[a, b]).unwrap().label, 1);

        let c = Component { label: 1, area_px: 5, seed: (3, 0) };
        let d = Component { label: 2, area_px: 5, seed: (0, 2) };
        // Tie: the raster-earlier seed is the earlier list entry.
        assert_eq!(largest_component(&[c, d]).unwrap().label, 1);
        assert_eq!(largest_component(&[d]).unwrap().label, 2);
        assert_eq!(largest_component(&[]).unwrap_err(), SegmentError::NoComponents);
    }

    // ---- contour ----

    /// Independent oracle: boundary pixels are set pixels with at least one
    /// unset 4-neighbor or lying on the image edge.
    fn boundary_pixels(mask: &BinaryMask) -> std::collections::BTreeSet<(i32, i32)> {
        let mut out = std::collections::BTreeSet::new();
        for y in 0..mask.height as i64 {
            for x in 0..mask.width as i64 {
                if !mask.get(x, y) {
                    continue;
                }
                let edge = x == 0 || y == 0 || x == mask.width as i64 - 1 || y == mask.height as i64 - 1;
                let open = !(mask.get(x - 1, y) && mask.get(x + 1, y) && mask.get(x, y - 1) && mask.get(x, y + 1));
                if edge || open {
                    out.insert((x as i32, y as i32));
                }
            }
        }
        out
    }

    #[test]
    fn square_contour_is_the_eight_point_ring() {
        let m = mask_from(&[
            ".....",
            ".###.",
            ".###.",
            ".###.",
            ".....",
        ]);
        let c = trace_contour(&m);
        let visited: std::collections::BTreeSet<(i32, i32)> =
            c.points.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(visited, boundary_pixels(&m));
        assert_eq!(c.points.len(), 8);
        assert_eq!(c.points[0], Point::new(1, 1));
        // Clockwise in image coordinates: the second point moves east.
        assert_eq!(c.points[1], Point::new(2, 1));
    }

    #[test]
    fn single_pixel_contour_degenerates_to_corner_ring() {
        let mut m = BinaryMask::new(5, 5);
        m.set(2, 2, true);
        let c = trace_contour(&m);
        assert_eq!(
            c.points,
            vec![
                Point::new(2, 2),
                Point::new(3, 2),
                Point::new(3, 3),
                Point::new(2, 3)
            ]
        );
        assert_eq!(polygon_area(&c), 1.0);
    }

    #[test]
    fn domino_contour_degenerates_to_corner_ring() {
        let mut m = BinaryMask::new(5, 5);
        m.set(1, 1, true);
        m.set(2, 1, true);
        let c = trace_contour(&m);
        assert_eq!(c.points.len(), 4);
        assert_eq!(polygon_area(&c), 2.0);
    }

    #[test]
    fn one_pixel_wide_line_traces_and_terminates() {
        let m = mask_from(&["......", ".####.", "......"]);
        let c = trace_contour(&m);
        let visited: std::collections::BTreeSet<(i32, i32)> =
            c.points.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(visited, boundary_pixels(&m));
        for w in c.points.windows(2) {
            let (dx, dy) = ((w[1].x - w[0].x).abs(), (w[1].y - w[0].y).abs());
            assert!(dx <= 1 && dy <= 1 && (dx, dy) != (0, 0));
        }
    }

    #[test]
    fn full_image_component_contour_follows_the_border() {
        let m = mask_from(&["###", "###", "###"]);
        let c = trace_contour(&m);
        let visited: std::collections::BTreeSet<(i32, i32)> =
            c.points.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(visited, boundary_pixels(&m));
        assert!(m.touches_border());
    }

    #[test]
    fn l_shape_contour_visits_every_boundary_pixel() {
        let m = mask_from(&[
            "......",
            ".##...",
            ".##...",
            ".####.",
            ".####.",
            "......",
        ]);
        let c = trace_contour(&m);
        let visited: std::collections::BTreeSet<(i32, i32)> =
            c.points.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(visited, boundary_pixels(&m));
        for i in 0..c.points.len() {
            let a = c.points[i];
            let b = c.points[(i + 1) % c.points.len()];
            assert!((a.x - b.x).abs() <= 1 && (a.y - b.y).abs() <= 1);
        }
    }

    // ---- polygon area ----

    #[test]
    fn shoelace_square() {
        let c = Contour {
            points: vec![
                Point::new(0, 0),
                Point::new(2, 0),
                Point::new(2, 2),
                Point::new(0, 2),
            ],
        };
        assert_eq!(polygon_area(&c), 4.0);
        let reversed = Contour {
            points: c.points.iter().rev().cloned().collect(),
        };
        assert_eq!(polygon_area(&reversed), 4.0);
    }

    #[test]
    fn collinear_points_have_zero_area() {
        let c = Contour {
            points: vec![Point::new(0, 0), Point::new(1, 1), Point::new(2, 2)],
        };
        assert_eq!(polygon_area(&c), 0.0);
    }

    // ---- simplify ----

    #[test]
    fn epsilon_zero_is_identity() {
        let c = Contour {
            points: vec![
                Point::new(0, 0),
                Point::new(1, 0),
                Point::new(2, 0),
                Point::new(2, 2),
                Point::new(0, 2),
            ],
        };
        assert_eq!(simplify(&c, 0.0), c);
    }

    #[test]
    fn edge_midpoint_is_removed() {
        let c = Contour {
            points: vec![
                Point::new(0, 0),
                Point::new(2, 0),
                Point::new(4, 0),
                Point::new(4, 4),
                Point::new(0, 4),
            ],
        };
        let s = simplify(&c, 0.5);
        assert_eq!(
            s.points,
            vec![
                Point::new(0, 0),
                Point::new(4, 0),
                Point::new(4, 4),
                Point::new(0, 4)
            ]
        );
        assert_eq!(polygon_area(&s), polygon_area(&c));
    }

    #[test]
    fn circle_simplification_preserves_area_within_two_percent() {
        let n = 200;
        let r = 50.0f64;
        let points: Vec<Point> = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                Point::new(
                    (200.0 + r * a.cos()).round() as i32,
                    (200.0 + r * a.sin()).round() as i32,
                )
            })
            .collect();
        let c = Contour { points };
        let s = simplify(&c, 1.0);
        assert!(s.points.len() < c.points.len());
        let target = std::f64::consts::PI * r * r;
        let area = polygon_area(&s);
        assert!(
            (area - target).abs() <= 0.02 * target,
            "area {area} vs {target}"
        );
    }

    // ---- segment pipeline ----

    fn synthetic_scene() -> DynamicImage {
        // Dark noisy background, bright ellipse, small bright strip at top.
        let (w, h) = (200u32, 200u32);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut buf = image::GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                buf.put_pixel(x, y, image::Luma([rng.gen_range(10..=20)]));
            }
        }
        // Scale-bar strip near the top: 30x6 at (20, 8).
        for y in 8..14 {
            for x in 20..50 {
                buf.put_pixel(x, y, image::Luma([rng.gen_range(190..=210)]));
            }
        }
        // Ellipse centered (100, 120), semi-axes 55/40.
        for y in 0..h {
            for x in 0..w {
                let dx = (x as f64 - 100.0) / 55.0;
                let dy = (y as f64 - 120.0) / 40.0;
                if dx * dx + dy * dy <= 1.0 {
                    buf.put_pixel(x, y, image::Luma([rng.gen_range(190..=210)]));
                }
            }
        }
        DynamicImage::ImageLuma8(buf)
    }

    /// Independent oracle: flood fill every bright region of the
    /// binarized+opened image and keep the largest.
    fn brute_force_largest_region(mask: &BinaryMask) -> BinaryMask {
        let mut best: Option<Vec<usize>> = None;
        let mut seen = vec![false; mask.bits.len()];
        let w = mask.width as i64;
        let h = mask.height as i64;
        for start in 0..mask.bits.len() {
            if !mask.bits[start] || seen[start] {
                continue;
            }
            let mut region = vec![start];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                let (x, y) = ((i as i64) % w, (i as i64) / w);
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        if (dx, dy) == (0, 0) {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let ni = (ny * w + nx) as usize;
                        if mask.bits[ni] && !seen[ni] {
                            seen[ni] = true;
                            region.push(ni);
                            stack.push(ni);
                        }
                    }
                }
            }
            if best.as_ref().map_or(true, |b| region.len() > b.len()) {
                best = Some(region);
            }
        }
        let mut out = BinaryMask::new(mask.width, mask.height);
        if let Some(region) = best {
            for i in region {
                out.bits[i] = true;
            }
        }
        out
    }

    #[test]
    fn segment_selects_the_ellipse_and_drops_the_scale_bar() {
        let img = synthetic_scene();
        let result = segment(&img, &SegmentOptions::default()).unwrap();

        // Check against the independent flood-fill oracle on the same
        // binarized+opened input.
        let gray = to_grayscale(&img).unwrap();
        let level = otsu_threshold(&histogram(&gray)).unwrap();
        let opened = opening_cross(&binarize(&gray, level));
        let oracle = brute_force_largest_region(&opened);
        assert_eq!(result.mask, oracle);

        // The scale bar (y < 14) is not part of the mask.
        for y in 0..14i64 {
            for x in 0..200i64 {
                assert!(!result.mask.get(x, y));
            }
        }
        assert_eq!(result.area_px, result.mask.count_set());
        assert!(result.flags.is_empty(), "flags: {:?}", result.flags);

        // Bounding box tightness: every edge touches a set pixel.
        let bb = result.bbox;
        assert!((bb.x..bb.x + bb.w).any(|x| result.mask.get(x as i64, bb.y as i64)));
        assert!((bb.x..bb.x + bb.w).any(|x| result.mask.get(x as i64, (bb.y + bb.h - 1) as i64)));
        assert!((bb.y..bb.y + bb.h).any(|y| result.mask.get(bb.x as i64, y as i64)));
        assert!((bb.y..bb.y + bb.h).any(|y| result.mask.get((bb.x + bb.w - 1) as i64, y as i64)));
    }

    #[test]
    fn all_black_image_is_empty_foreground() {
        let buf = image::GrayImage::new(32, 32);
        let r = segment(&DynamicImage::ImageLuma8(buf), &SegmentOptions::default());
        assert_eq!(r.unwrap_err(), SegmentError::EmptyForeground);
    }

    #[test]
    fn blob_clipped_at_edge_is_flagged_touches_border() {
        let (w, h) = (120u32, 120u32);
        let mut buf = image::GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let dx = (x as f64 + 10.0 - 30.0) / 35.0; // center off-image to the left
                let dy = (y as f64 - 60.0) / 35.0;
                let v = if dx * dx + dy * dy <= 1.0 { 200 } else { 15 };
                buf.put_pixel(x, y, image::Luma([v]));
            }
        }
        let result = segment(&DynamicImage::ImageLuma8(buf), &SegmentOptions::default()).unwrap();
        assert!(result.flags.contains(&QualityFlag::TouchesBorder));
    }

    #[test]
    fn oversized_second_component_is_flagged() {
        let (w, h) = (200u32, 200u32);
        let mut buf = image::GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                buf.put_pixel(x, y, image::Luma([15]));
            }
        }
        // Main blob: 60x60 square. Second blob: 40x40 (44% of the main area).
        for y in 100..160 {
            for x in 20..80 {
                buf.put_pixel(x, y, image::Luma([200]));
            }
        }
        for y in 20..60 {
            for x in 120..160 {
                buf.put_pixel(x, y, image::Luma([200]));
            }
        }
        let result = segment(&DynamicImage::ImageLuma8(buf), &SegmentOptions::default()).unwrap();
        assert!(result
            .flags
            .contains(&QualityFlag::MultipleLargeComponents));
        assert_eq!(result.bbox.w, 60);
    }

    #[test]
    fn low_contrast_scene_is_flagged() {
        let (w, h) = (100u32, 100u32);
        let mut buf = image::GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                buf.put_pixel(x, y, image::Luma([15]));
            }
        }
        for y in 40..60 {
            for x in 40..60 {
                buf.put_pixel(x, y, image::Luma([22]));
            }
        }
        let result = segment(&DynamicImage::ImageLuma8(buf), &SegmentOptions::default()).unwrap();
        assert!(result.flags.contains(&QualityFlag::LowContrast));
    }

    #[test]
    fn opening_removes_speckle_and_keeps_open_shapes() {
        let m = mask_from(&[
            ".......",
            ".#.....",
            "...###.",
            "...###.",
            "...###.",
            ".......",
        ]);
        let opened = opening_cross(&m);
        assert!(!opened.get(1, 1), "isolated speckle must vanish");
        // The 3x3 square opened with a cross keeps its cross-shaped core
        // plus dilation: center column/row survive.
        assert!(opened.get(4, 3));
        let reopened = opening_cross(&opened);
        assert_eq!(opened, reopened, "opening is idempotent");
    }
}
