//! Bright-blob extraction and classification on 8-bit grayscale frames.
//!
//! The image pipeline is: static binarization, 8-connected component
//! labeling, intensity-weighted sub-pixel centroids, then classification into
//! direct marker light, its surface reflection, and persistent background.
//! The reflection's elliptical extent is measured from the thresholded
//! neighborhood of its centroid.

use image::GrayImage;
use nalgebra::Vector2;
use thiserror::Error;

use crate::camera::{azimuth, compensate_attitude, CameraCalibration, ObserverAttitude};
use crate::scalar::{deg_to_rad, Real};

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("empty image")]
    EmptyImage,
    #[error("bounding box does not contain the reflection centroid")]
    BboxExcludesCentroid,
    #[error("centroid is not classified as a reflection")]
    NotAReflection,
}

/// Blob class assigned by [`classify_centroids`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CentroidClass {
    Direct,
    Reflection,
    Background,
    #[default]
    Unknown,
}

impl std::fmt::Display for CentroidClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CentroidClass::Direct => "direct",
            CentroidClass::Reflection => "reflection",
            CentroidClass::Background => "background",
            CentroidClass::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for CentroidClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(CentroidClass::Direct),
            "reflection" => Ok(CentroidClass::Reflection),
            "background" => Ok(CentroidClass::Background),
            "unknown" => Ok(CentroidClass::Unknown),
            other => Err(format!("unknown centroid class '{other}'")),
        }
    }
}

/// A detected bright blob.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid<T: Real> {
    /// Sub-pixel position `(u, v)`.
    pub position: Vector2<T>,
    /// Component size in pixels.
    pub area: u32,
    /// Brightest original intensity inside the component.
    pub peak_intensity: u8,
    pub class: CentroidClass,
    /// For reflections: index of the paired direct centroid in the same frame.
    pub partner: Option<usize>,
}

impl<T: Real> Centroid<T> {
    pub fn at(u: T, v: T, area: u32, peak_intensity: u8) -> Self {
        Self {
            position: Vector2::new(u, v),
            area,
            peak_intensity,
            class: CentroidClass::Unknown,
            partner: None,
        }
    }
}

/// Boolean image produced by [`binarize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[(y * self.width + x) as usize] = value;
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Static binarization: output pixel is true iff intensity >= threshold.
pub fn binarize(img: &GrayImage, threshold: u8) -> Result<BinaryImage, DetectionError> {
    if img.width() == 0 || img.height() == 0 {
        return Err(DetectionError::EmptyImage);
    }
    let mut out = BinaryImage::new(img.width(), img.height());
    for (x, y, pixel) in img.enumerate_pixels() {
        if pixel.0[0] >= threshold {
            out.set(x, y, true);
        }
    }
    Ok(out)
}

/// 8-connected component labeling.
///
/// Each centroid is the unweighted mean of its member pixel coordinates; the
/// output is ordered by the row-major position of each component's first
/// (seed) pixel, so repeated runs on the same image agree exactly.
pub fn connected_components<T: Real>(bin: &BinaryImage) -> Vec<Centroid<T>> {
    components(bin)
        .into_iter()
        .map(|pixels| {
            let n = T::of(pixels.len() as f64);
            let mut sum = Vector2::zeros();
            for &(x, y) in &pixels {
                sum += Vector2::new(T::of(x as f64), T::of(y as f64));
            }
            Centroid::at(sum.x / n, sum.y / n, pixels.len() as u32, u8::MAX)
        })
        .collect()
}

/// Raw component pixel lists in deterministic (seed row-major) order.
fn components(bin: &BinaryImage) -> Vec<Vec<(u32, u32)>> {
    let (w, h) = (bin.width, bin.height);
    let mut visited = vec![false; (w * h) as usize];
    let mut result = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            if !bin.data[idx] || visited[idx] {
                continue;
            }
            let mut pixels = Vec::new();
            visited[idx] = true;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                pixels.push((cx, cy));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let nx = cx as i64 + dx;
                        let ny = cy as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let nidx = (ny as u32 * w + nx as u32) as usize;
                        if bin.data[nidx] && !visited[nidx] {
                            visited[nidx] = true;
                            stack.push((nx as u32, ny as u32));
                        }
                    }
                }
            }
            result.push(pixels);
        }
    }
    result
}

/// Binarize, label, and refine: sub-pixel centroids use the original
/// (pre-binarization) intensities as weights, and the peak intensity is taken
/// from the original image.
pub fn extract_centroids<T: Real>(
    img: &GrayImage,
    threshold: u8,
) -> Result<Vec<Centroid<T>>, DetectionError> {
    Ok(extract_components(img, threshold)?
        .into_iter()
        .map(|(c, _)| c)
        .collect())
}

/// Like [`extract_centroids`], additionally returning each component's pixel
/// bounding box (used to size the extent-measurement search region).
pub fn extract_components<T: Real>(
    img: &GrayImage,
    threshold: u8,
) -> Result<Vec<(Centroid<T>, Rect)>, DetectionError> {
    let bin = binarize(img, threshold)?;
    let out = components(&bin)
        .into_iter()
        .map(|pixels| {
            let mut weighted = Vector2::zeros();
            let mut total = T::zero();
            let mut peak = 0u8;
            for &(x, y) in &pixels {
                let intensity = img.get_pixel(x, y).0[0];
                peak = peak.max(intensity);
                let w = T::of(intensity as f64);
                weighted += Vector2::new(T::of(x as f64), T::of(y as f64)) * w;
                total += w;
            }
            // a threshold of 0 admits intensity-0 pixels, leaving zero weight
            let position = if total > T::zero() {
                weighted / total
            } else {
                let n = T::of(pixels.len() as f64);
                let mut sum = Vector2::zeros();
                for &(x, y) in &pixels {
                    sum += Vector2::new(T::of(x as f64), T::of(y as f64));
                }
                sum / n
            };
            let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
            for &(x, y) in &pixels {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
            let centroid = Centroid {
                position,
                area: pixels.len() as u32,
                peak_intensity: peak,
                class: CentroidClass::Unknown,
                partner: None,
            };
            (centroid, Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
        })
        .collect();
    Ok(out)
}

/// Classification parameters.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierConfig<T: Real> {
    /// Maximum azimuth difference (compensated bearings) for a reflection to
    /// count as "vertically below" a direct centroid, radians.
    pub pairing_azimuth_tol: T,
    /// Frames a blob must persist to count as background.
    pub background_frames: u32,
    /// Relative area variation allowed for a persistent background blob.
    pub background_area_tol: T,
    /// Pixel radius for matching blobs across frames in the persistence record.
    pub persistence_match_px: T,
}

impl<T: Real> Default for ClassifierConfig<T> {
    fn default() -> Self {
        Self {
            pairing_azimuth_tol: deg_to_rad(T::of(2.0)),
            background_frames: 30,
            background_area_tol: T::of(0.2),
            persistence_match_px: T::of(3.0),
        }
    }
}

#[derive(Debug, Clone)]
struct PersistentBlob<T: Real> {
    position: Vector2<T>,
    min_area: u32,
    max_area: u32,
    frames_seen: u32,
}

/// Cross-frame blob persistence record; one per camera stream.
#[derive(Debug, Clone, Default)]
pub struct PersistenceRecord<T: Real> {
    blobs: Vec<PersistentBlob<T>>,
}

impl<T: Real> PersistenceRecord<T> {
    pub fn new() -> Self {
        Self { blobs: Vec::new() }
    }

    /// Match the frame's centroids against the record and report, per input
    /// centroid, how many consecutive frames it has persisted with bounded
    /// area variation. Unmatched record entries are dropped.
    fn advance(&mut self, centroids: &[Centroid<T>], cfg: &ClassifierConfig<T>) -> Vec<u32> {
        let mut next: Vec<PersistentBlob<T>> = Vec::with_capacity(centroids.len());
        let mut streaks = Vec::with_capacity(centroids.len());
        let mut taken = vec![false; self.blobs.len()];
        for c in centroids {
            let mut best: Option<(usize, T)> = None;
            for (i, blob) in self.blobs.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                let d = (blob.position - c.position).norm();
                if d <= cfg.persistence_match_px && best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            let entry = match best {
                Some((i, _)) => {
                    taken[i] = true;
                    let prev = &self.blobs[i];
                    let min_area = prev.min_area.min(c.area);
                    let max_area = prev.max_area.max(c.area);
                    let variation = T::of(max_area as f64) / T::of(min_area.max(1) as f64) - T::one();
                    if variation <= cfg.background_area_tol {
                        PersistentBlob {
                            position: c.position,
                            min_area,
                            max_area,
                            frames_seen: prev.frames_seen + 1,
                        }
                    } else {
                        // size changed too much: restart the streak
                        PersistentBlob {
                            position: c.position,
                            min_area: c.area,
                            max_area: c.area,
                            frames_seen: 1,
                        }
                    }
                }
                None => PersistentBlob {
                    position: c.position,
                    min_area: c.area,
                    max_area: c.area,
                    frames_seen: 1,
                },
            };
            streaks.push(entry.frames_seen);
            next.push(entry);
        }
        self.blobs = next;
        streaks
    }
}

/// Assign classes to the frame's centroids.
///
/// Blobs persisting with stable area become background. Of the rest, blobs
/// whose attitude-compensated bearing points at or above the horizon are
/// direct candidates; below-horizon blobs are paired to the direct candidate
/// with the closest azimuth (within the tolerance) and become reflections.
/// Ambiguities resolve to the smallest azimuth difference, then the larger
/// area. Everything else below the horizon stays unknown.
pub fn classify_centroids<T: Real>(
    centroids: &mut [Centroid<T>],
    history: &mut PersistenceRecord<T>,
    calibration: &CameraCalibration<T>,
    attitude: &ObserverAttitude<T>,
    cfg: &ClassifierConfig<T>,
) {
    let streaks = history.advance(centroids, cfg);

    // compensated bearing azimuth/elevation sign per centroid, where resolvable
    let mut geometry: Vec<Option<(T, bool)>> = Vec::with_capacity(centroids.len());
    for c in centroids.iter() {
        let g = calibration.cam2world(c.position).ok().and_then(|b| {
            let b = compensate_attitude(b, attitude);
            (b.x > T::zero()).then(|| (azimuth(&b), b.z >= T::zero()))
        });
        geometry.push(g);
    }

    let mut direct_indices = Vec::new();
    for (i, c) in centroids.iter_mut().enumerate() {
        c.partner = None;
        if streaks[i] >= cfg.background_frames {
            c.class = CentroidClass::Background;
            continue;
        }
        match geometry[i] {
            Some((_, true)) => {
                c.class = CentroidClass::Direct;
                direct_indices.push(i);
            }
            _ => c.class = CentroidClass::Unknown,
        }
    }

    // pair each direct candidate with at most one below-horizon blob
    for &di in &direct_indices {
        let (direct_az, _) = geometry[di].expect("direct candidates have geometry");
        let mut best: Option<(usize, T, u32)> = None;
        for (i, c) in centroids.iter().enumerate() {
            if c.class != CentroidClass::Unknown || c.partner.is_some() {
                continue;
            }
            let Some((az, above)) = geometry[i] else { continue };
            if above {
                continue;
            }
            let delta = wrap_angle(az - direct_az).abs();
            if delta > cfg.pairing_azimuth_tol {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, bd, barea)) => delta < bd || (delta == bd && c.area > barea),
            };
            if better {
                best = Some((i, delta, c.area));
            }
        }
        if let Some((ri, _, _)) = best {
            centroids[ri].class = CentroidClass::Reflection;
            centroids[ri].partner = Some(di);
        }
    }
}

fn wrap_angle<T: Real>(a: T) -> T {
    let mut a = a;
    let pi = T::pi();
    let two_pi = T::two_pi();
    while a > pi {
        a -= two_pi;
    }
    while a < -pi {
        a += two_pi;
    }
    a
}

/// Pixel rectangle, inclusive of `x..x+width` and `y..y+height` (exclusive ends).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self { x, y, width, height }
    }

    /// Grow a rectangle about its center by an integer factor, clipped to the image.
    pub fn scaled(rect: &Rect, factor: u32, img: &GrayImage) -> Self {
        let cx = rect.x + rect.width / 2;
        let cy = rect.y + rect.height / 2;
        let half_w = (rect.width * factor / 2).max(1);
        let half_h = (rect.height * factor / 2).max(1);
        let x0 = cx.saturating_sub(half_w);
        let y0 = cy.saturating_sub(half_h);
        let x1 = (cx + half_w + 1).min(img.width());
        let y1 = (cy + half_h + 1).min(img.height());
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Box centered on `center` with the given half extents, clipped to the image.
    pub fn around<T: Real>(center: Vector2<T>, half_w: u32, half_h: u32, img: &GrayImage) -> Self {
        let cx = center.x.round().as_f64().max(0.0) as u32;
        let cy = center.y.round().as_f64().max(0.0) as u32;
        let x0 = cx.saturating_sub(half_w);
        let y0 = cy.saturating_sub(half_h);
        let x1 = (cx + half_w + 1).min(img.width());
        let y1 = (cy + half_h + 1).min(img.height());
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn contains<T: Real>(&self, p: Vector2<T>) -> bool {
        let (x, y) = (p.x.as_f64(), p.y.as_f64());
        x >= self.x as f64
            && x < (self.x + self.width) as f64
            && y >= self.y as f64
            && y < (self.y + self.height) as f64
    }
}

/// Measured elliptical extent of a reflection blob.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipseExtent<T: Real> {
    /// Reflection centroid the ellipse is centered on.
    pub center: Vector2<T>,
    /// Farthest qualifying pixel measured along the image vertical.
    pub vertical_extremum: Vector2<T>,
    /// Farthest qualifying pixel measured along the image horizontal.
    pub horizontal_extremum: Vector2<T>,
    /// Intensity threshold the extremal pixels exceeded.
    pub threshold: u8,
    /// Region that was searched.
    pub bbox: Rect,
}

/// Find, inside `bbox`, the pixels with intensity >= `threshold` that lie
/// farthest from the reflection centroid along the vertical and horizontal
/// image directions. If no qualifying pixel lies beyond the centroid's own
/// pixel in a direction, that extremum degenerates to the centroid itself.
pub fn measure_extent<T: Real>(
    img: &GrayImage,
    reflection: &Centroid<T>,
    threshold: u8,
    bbox: Rect,
) -> Result<EllipseExtent<T>, DetectionError> {
    if reflection.class != CentroidClass::Reflection {
        return Err(DetectionError::NotAReflection);
    }
    if !bbox.contains(reflection.position) {
        return Err(DetectionError::BboxExcludesCentroid);
    }
    let center = reflection.position;
    let mut best_v: Option<(T, Vector2<T>)> = None;
    let mut best_h: Option<(T, Vector2<T>)> = None;
    for y in bbox.y..(bbox.y + bbox.height).min(img.height()) {
        for x in bbox.x..(bbox.x + bbox.width).min(img.width()) {
            if img.get_pixel(x, y).0[0] < threshold {
                continue;
            }
            let p = Vector2::new(T::of(x as f64), T::of(y as f64));
            let dv = (p.y - center.y).abs();
            let dh = (p.x - center.x).abs();
            if best_v.map_or(true, |(d, _)| dv > d) {
                best_v = Some((dv, p));
            }
            if best_h.map_or(true, |(d, _)| dh > d) {
                best_h = Some((dh, p));
            }
        }
    }
    let half = T::of(0.5);
    let pick = |best: Option<(T, Vector2<T>)>| match best {
        Some((d, p)) if d >= half => p,
        _ => center,
    };
    Ok(EllipseExtent {
        center,
        vertical_extremum: pick(best_v),
        horizontal_extremum: pick(best_h),
        threshold,
        bbox,
    })
}

/// Append one frame of centroids as CSV rows `(frame, u, v, area, peak, class)`.
pub fn write_centroid_csv<W: std::io::Write, T: Real>(
    out: &mut W,
    frame: u64,
    centroids: &[Centroid<T>],
) -> std::io::Result<()> {
    for c in centroids {
        writeln!(
            out,
            "{frame},{},{},{},{},{}",
            c.position.x, c.position.y, c.area, c.peak_intensity, c.class
        )?;
    }
    Ok(())
}

/// Header row matching [`write_centroid_csv`].
pub const CENTROID_CSV_HEADER: &str = "frame,u,v,area,peak,class";

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use image::GrayImage;
    use rand::{Rng, SeedableRng};

    fn blank(w: u32, h: u32) -> GrayImage {
        GrayImage::new(w, h)
    }

    #[test]
    fn binarize_uniform_below_threshold_is_all_false() {
        let img = GrayImage::from_pixel(16, 16, image::Luma([39]));
        let bin = binarize(&img, 40).unwrap();
        assert_eq!(bin.count_true(), 0);
    }

    #[test]
    fn binarize_zero_threshold_is_all_true() {
        let img = blank(8, 8);
        let bin = binarize(&img, 0).unwrap();
        assert_eq!(bin.count_true(), 64);
    }

    #[test]
    fn binarize_single_bright_pixel() {
        let mut img = blank(32, 32);
        img.put_pixel(5, 9, image::Luma([200]));
        let bin = binarize(&img, 60).unwrap();
        assert_eq!(bin.count_true(), 1);
        assert!(bin.get(5, 9));
    }

    #[test]
    fn binarize_rejects_empty_image() {
        let img = GrayImage::new(0, 0);
        assert!(matches!(binarize(&img, 10), Err(DetectionError::EmptyImage)));
    }

    #[test]
    fn two_disjoint_blocks() {
        let mut img = blank(32, 32);
        for dy in 0..3 {
            for dx in 0..3 {
                img.put_pixel(4 + dx, 4 + dy, image::Luma([255]));
                img.put_pixel(20 + dx, 18 + dy, image::Luma([255]));
            }
        }
        let bin = binarize(&img, 100).unwrap();
        let cs = connected_components::<f64>(&bin);
        assert_eq!(cs.len(), 2);
        assert_relative_eq!(cs[0].position, Vector2::new(5.0, 5.0), epsilon = 1e-12);
        assert_relative_eq!(cs[1].position, Vector2::new(21.0, 19.0), epsilon = 1e-12);
        assert_eq!(cs[0].area, 9);
        assert_eq!(cs[1].area, 9);
    }

    #[test]
    fn l_shaped_component_mean() {
        let mut img = blank(16, 16);
        // L shape: (3,3) (3,4) (3,5) (4,5) (5,5)
        let pixels = [(3u32, 3u32), (3, 4), (3, 5), (4, 5), (5, 5)];
        for &(x, y) in &pixels {
            img.put_pixel(x, y, image::Luma([255]));
        }
        let bin = binarize(&img, 100).unwrap();
        let cs = connected_components::<f64>(&bin);
        assert_eq!(cs.len(), 1);
        let mean_u = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / 5.0;
        let mean_v = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / 5.0;
        assert_relative_eq!(cs[0].position, Vector2::new(mean_u, mean_v), epsilon = 1e-12);
        assert_eq!(cs[0].area, 5);
    }

    #[test]
    fn empty_binary_image_yields_no_components() {
        let bin = BinaryImage::new(16, 16);
        assert!(connected_components::<f64>(&bin).is_empty());
    }

    #[test]
    fn diagonal_pixels_are_one_component() {
        let mut bin = BinaryImage::new(8, 8);
        bin.set(1, 1, true);
        bin.set(2, 2, true);
        bin.set(3, 3, true);
        assert_eq!(connected_components::<f64>(&bin).len(), 1);
    }

    /// Union-find labeling, an independent route to the component count.
    fn union_find_count(bin: &BinaryImage) -> usize {
        let (w, h) = (bin.width(), bin.height());
        let mut parent: Vec<usize> = (0..(w * h) as usize).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            let mut i = i;
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for y in 0..h {
            for x in 0..w {
                if !bin.get(x, y) {
                    continue;
                }
                let idx = (y * w + x) as usize;
                for (dx, dy) in [(1i64, 0i64), (0, 1), (1, 1), (-1, 1)] {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    if bin.get(nx as u32, ny as u32) {
                        let nidx = (ny as u32 * w + nx as u32) as usize;
                        let (a, b) = (find(&mut parent, idx), find(&mut parent, nidx));
                        if a != b {
                            parent[a] = b;
                        }
                    }
                }
            }
        }
        let mut roots = std::collections::HashSet::new();
        for y in 0..h {
            for x in 0..w {
                if bin.get(x, y) {
                    let idx = (y * w + x) as usize;
                    roots.insert(find(&mut parent, idx));
                }
            }
        }
        roots.len()
    }

    #[test]
    fn component_count_matches_union_find_on_random_images() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for density in [0.05, 0.2, 0.5, 0.8] {
            for _ in 0..10 {
                let mut bin = BinaryImage::new(64, 64);
                for y in 0..64 {
                    for x in 0..64 {
                        if rng.gen::<f64>() < density {
                            bin.set(x, y, true);
                        }
                    }
                }
                assert_eq!(
                    connected_components::<f64>(&bin).len(),
                    union_find_count(&bin),
                    "density {density}"
                );
            }
        }
    }

    #[test]
    fn pipeline_translation_equivariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut img = blank(64, 64);
        // a few random blobs away from the borders
        for _ in 0..5 {
            let cx = rng.gen_range(10..40);
            let cy = rng.gen_range(10..40);
            for dy in 0..3u32 {
                for dx in 0..3u32 {
                    img.put_pixel(cx + dx, cy + dy, image::Luma([rng.gen_range(120..=255)]));
                }
            }
        }
        let (du, dv) = (7u32, 11u32);
        let mut shifted = blank(64, 64);
        for (x, y, p) in img.enumerate_pixels() {
            if x + du < 64 && y + dv < 64 {
                shifted.put_pixel(x + du, y + dv, *p);
            }
        }
        let a = extract_centroids::<f64>(&img, 100).unwrap();
        let b = extract_centroids::<f64>(&shifted, 100).unwrap();
        assert_eq!(a.len(), b.len());
        for (ca, cb) in a.iter().zip(&b) {
            assert_relative_eq!(
                cb.position,
                ca.position + Vector2::new(du as f64, dv as f64),
                epsilon = 1e-9
            );
            assert_eq!(ca.area, cb.area);
            assert_eq!(ca.peak_intensity, cb.peak_intensity);
        }
    }

    #[test]
    fn subpixel_centroid_uses_intensity_weights() {
        let mut img = blank(16, 16);
        img.put_pixel(5, 5, image::Luma([100]));
        img.put_pixel(6, 5, image::Luma([200]));
        let cs = extract_centroids::<f64>(&img, 50).unwrap();
        assert_eq!(cs.len(), 1);
        // weighted mean: (5*100 + 6*200) / 300
        assert_relative_eq!(cs[0].position.x, (500.0 + 1200.0) / 300.0, epsilon = 1e-12);
        assert_eq!(cs[0].peak_intensity, 200);
    }

    fn classify_setup() -> (CameraCalibration<f64>, ObserverAttitude<f64>, ClassifierConfig<f64>) {
        (
            CameraCalibration::ideal_equidistant(752, 480, 185.0),
            ObserverAttitude::level(2.0).unwrap(),
            ClassifierConfig::default(),
        )
    }

    /// Pixels a transmitter and its surface reflection would produce.
    fn scene_pixels(
        cal: &CameraCalibration<f64>,
        transmitter: nalgebra::Vector3<f64>,
        z_o: f64,
    ) -> (Vector2<f64>, Vector2<f64>) {
        let direct = cal.world2cam(transmitter.normalize()).unwrap();
        let mirrored =
            nalgebra::Vector3::new(transmitter.x, transmitter.y, -2.0 * z_o - transmitter.z);
        let reflection = cal.world2cam(mirrored.normalize()).unwrap();
        (direct, reflection)
    }

    #[test]
    fn direct_above_reflection_below_get_paired() {
        let (cal, att, cfg) = classify_setup();
        let (dp, rp) = scene_pixels(&cal, nalgebra::Vector3::new(4.0, 0.5, 1.0), 2.0);
        let mut cs = vec![
            Centroid::at(dp.x, dp.y, 9, 220),
            Centroid::at(rp.x, rp.y, 14, 90),
        ];
        let mut record = PersistenceRecord::new();
        classify_centroids(&mut cs, &mut record, &cal, &att, &cfg);
        assert_eq!(cs[0].class, CentroidClass::Direct);
        assert_eq!(cs[1].class, CentroidClass::Reflection);
        assert_eq!(cs[1].partner, Some(0));
    }

    #[test]
    fn lone_blob_above_horizon_is_direct_without_reflection() {
        let (cal, att, cfg) = classify_setup();
        let mut cs = vec![Centroid::at(400.0, 200.0, 9, 220)];
        let mut record = PersistenceRecord::new();
        classify_centroids(&mut cs, &mut record, &cal, &att, &cfg);
        assert_eq!(cs[0].class, CentroidClass::Direct);
        assert!(cs[0].partner.is_none());
        assert!(!cs.iter().any(|c| c.class == CentroidClass::Reflection));
    }

    #[test]
    fn persistent_constant_area_blob_becomes_background() {
        let (cal, att, cfg) = classify_setup();
        let mut record = PersistenceRecord::new();
        let mut last = Vec::new();
        for _ in 0..120 {
            let mut cs = vec![
                Centroid::at(300.0, 100.0, 25, 255), // static bright sky blob
                Centroid::at(500.0, 180.0, 9, 220),
            ];
            classify_centroids(&mut cs, &mut record, &cal, &att, &cfg);
            last = cs;
        }
        assert_eq!(last[0].class, CentroidClass::Background);
        assert_eq!(last[1].class, CentroidClass::Background);
    }

    #[test]
    fn unpaired_below_horizon_blob_stays_unknown() {
        let (cal, att, cfg) = classify_setup();
        // below-horizon blob far in azimuth from the only direct candidate
        let mut cs = vec![
            Centroid::at(500.0, 180.0, 9, 220),
            Centroid::at(200.0, 350.0, 12, 80),
        ];
        let mut record = PersistenceRecord::new();
        classify_centroids(&mut cs, &mut record, &cal, &att, &cfg);
        assert_eq!(cs[0].class, CentroidClass::Direct);
        assert_eq!(cs[1].class, CentroidClass::Unknown);
    }

    #[test]
    fn ambiguous_pairing_takes_smallest_azimuth_difference() {
        let (cal, att, cfg) = classify_setup();
        let (dp, rp_near) = scene_pixels(&cal, nalgebra::Vector3::new(4.0, 0.0, 1.0), 2.0);
        // a second below-horizon blob, offset slightly in azimuth but within tolerance
        let rp_far = cal
            .world2cam(nalgebra::Vector3::new(4.0, 0.1, -5.0).normalize())
            .unwrap();
        let mut cs = vec![
            Centroid::at(dp.x, dp.y, 9, 220),
            Centroid::at(rp_near.x, rp_near.y, 10, 90),
            Centroid::at(rp_far.x, rp_far.y, 30, 90),
        ];
        let mut record = PersistenceRecord::new();
        classify_centroids(&mut cs, &mut record, &cal, &att, &cfg);
        assert_eq!(cs[1].class, CentroidClass::Reflection);
        assert_eq!(cs[1].partner, Some(0));
        assert_eq!(cs[2].class, CentroidClass::Unknown);
    }

    #[test]
    fn classification_is_stable_across_reruns() {
        let (cal, att, cfg) = classify_setup();
        let base = vec![
            Centroid::at(500.0, 180.0, 9, 220),
            Centroid::at(502.0, 320.0, 14, 90),
            Centroid::at(100.0, 50.0, 25, 255),
        ];
        let record = PersistenceRecord::new();
        let run = |mut cs: Vec<Centroid<f64>>, mut rec: PersistenceRecord<f64>| {
            classify_centroids(&mut cs, &mut rec, &cal, &att, &cfg);
            cs
        };
        let a = run(base.clone(), record.clone());
        let b = run(base, record);
        assert_eq!(a, b);
    }

    fn reflection_centroid(u: f64, v: f64) -> Centroid<f64> {
        Centroid {
            position: Vector2::new(u, v),
            area: 9,
            peak_intensity: 200,
            class: CentroidClass::Reflection,
            partner: Some(0),
        }
    }

    #[test]
    fn vertical_stripe_extent() {
        let mut img = blank(64, 64);
        for v in 20..=40 {
            img.put_pixel(30, v, image::Luma([200]));
        }
        let refl = reflection_centroid(30.0, 30.0);
        let bbox = Rect::new(10, 10, 44, 44);
        let e = measure_extent(&img, &refl, 100, bbox).unwrap();
        assert_relative_eq!((e.vertical_extremum.y - 30.0).abs(), 10.0, epsilon = 1e-12);
        assert_relative_eq!(e.vertical_extremum.x, 30.0, epsilon = 1e-12);
        assert_eq!(e.horizontal_extremum, refl.position);
    }

    #[test]
    fn all_neighbors_below_threshold_degenerates() {
        let mut img = blank(32, 32);
        img.put_pixel(16, 16, image::Luma([200]));
        let refl = reflection_centroid(16.0, 16.0);
        let e = measure_extent(&img, &refl, 100, Rect::new(8, 8, 16, 16)).unwrap();
        assert_eq!(e.vertical_extremum, refl.position);
        assert_eq!(e.horizontal_extremum, refl.position);
    }

    #[test]
    fn extent_monotone_in_threshold() {
        // gaussian-ish blob: intensity falls off with distance
        let mut img = blank(64, 64);
        for y in 0..64u32 {
            for x in 0..64u32 {
                let d2 = (x as f64 - 32.0).powi(2) / 49.0 + (y as f64 - 32.0).powi(2) / 16.0;
                let val = (220.0 * (-d2 / 2.0).exp()) as u8;
                img.put_pixel(x, y, image::Luma([val]));
            }
        }
        let refl = reflection_centroid(32.0, 32.0);
        let bbox = Rect::new(2, 2, 60, 60);
        let mut last_v = f64::INFINITY;
        let mut last_h = f64::INFINITY;
        for threshold in [20u8, 60, 120, 180] {
            let e = measure_extent(&img, &refl, threshold, bbox).unwrap();
            let dv = (e.vertical_extremum - refl.position).norm();
            let dh = (e.horizontal_extremum - refl.position).norm();
            assert!(dv <= last_v + 1e-12, "vertical extent grew at {threshold}");
            assert!(dh <= last_h + 1e-12, "horizontal extent grew at {threshold}");
            last_v = dv;
            last_h = dh;
        }
    }

    #[test]
    fn bbox_must_contain_centroid() {
        let img = blank(32, 32);
        let refl = reflection_centroid(16.0, 16.0);
        assert!(matches!(
            measure_extent(&img, &refl, 100, Rect::new(0, 0, 8, 8)),
            Err(DetectionError::BboxExcludesCentroid)
        ));
    }

    #[test]
    fn extent_requires_reflection_class() {
        let img = blank(32, 32);
        let c = Centroid::at(16.0, 16.0, 9, 200);
        assert!(matches!(
            measure_extent(&img, &c, 100, Rect::new(0, 0, 32, 32)),
            Err(DetectionError::NotAReflection)
        ));
    }

    #[test]
    fn centroid_csv_rows() {
        let mut buf = Vec::new();
        let cs = vec![
            Centroid::<f64> {
                position: Vector2::new(1.5, 2.25),
                area: 9,
                peak_intensity: 220,
                class: CentroidClass::Direct,
                partner: None,
            },
        ];
        write_centroid_csv(&mut buf, 3, &cs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "3,1.5,2.25,9,220,direct\n");
    }
}
