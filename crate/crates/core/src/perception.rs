//! Synthetic over-segmented observations.
//!
//! Objects are split into convex "surface facets" by random chords and drawn
//! into a single-channel working image where each segment carries its own gray
//! level. Rendering is anti-aliased (supersampled coverage followed by a small
//! Gaussian pixel footprint) so that resampling the image under rotation stays
//! close to re-rendering a rotated scene.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{principal_axes, ConvexPolygon, Vec2};
use crate::rng::rng_from;
use crate::scene::{ObjectId, Scene, TableSpec};

/// Default working-image resolution (pixels per meter).
pub const DEFAULT_SCALE: f64 = 320.0;
/// Lowest gray level given to a segment; background is 0.
pub const MIN_GRAY: f32 = 0.3;
pub const MAX_GRAY: f32 = 1.0;
/// Name of the gray-level assignment, stored with trained models.
pub const GRAY_SCHEME: &str = "uniform[0.3,1.0]/stride-permuted";
/// Default probability that an object is split into several segments.
pub const DEFAULT_SPLIT_PROB: f64 = 0.3;

pub const SIDECAR_SCHEMA: &str = "singulate.observation/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalAxes {
    pub major: Vec2,
    pub minor: Vec2,
    /// Standard deviation of the area along `major` (m).
    pub major_extent: f64,
    pub minor_extent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    pub parent_object: ObjectId,
    /// World-frame polygon.
    pub polygon: ConvexPolygon,
    pub centroid: Vec2,
    pub principal_axes: PrincipalAxes,
}

impl Segment {
    pub fn new(id: SegmentId, parent_object: ObjectId, polygon: ConvexPolygon) -> Self {
        let centroid = polygon.centroid();
        let (cxx, cyy, cxy) = polygon.covariance();
        let (major, minor, major_extent, minor_extent) = principal_axes(cxx, cyy, cxy);
        Self {
            id,
            parent_object,
            polygon,
            centroid,
            principal_axes: PrincipalAxes {
                major,
                minor,
                major_extent,
                minor_extent,
            },
        }
    }
}

/// Orthographic world → image map with a y-down image axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewTransform {
    /// Pixels per meter.
    pub scale: f64,
    pub width: usize,
    pub height: usize,
    /// Continuous pixel coordinates of the world origin.
    pub world_origin_pixel: Vec2,
}

/// Result of projecting a world point; `inside` flags whether the pixel lies
/// within the image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected {
    pub pixel: Vec2,
    pub inside: bool,
}

impl ViewTransform {
    pub fn new(scale: f64, width: usize, height: usize, world_origin_pixel: Vec2) -> Result<Self> {
        if !(scale > 0.0) || width == 0 || height == 0 {
            return Err(Error::InvalidScene(format!(
                "bad view: scale {scale}, size {width}x{height}"
            )));
        }
        Ok(Self {
            scale,
            width,
            height,
            world_origin_pixel,
        })
    }

    /// Image exactly covering `table` at `scale`.
    pub fn for_table(table: &TableSpec, scale: f64) -> Self {
        let width = (table.width * scale).ceil() as usize;
        let height = (table.height * scale).ceil() as usize;
        let world_origin_pixel = Vec2::new(
            -table.origin.x * scale,
            height as f64 + table.origin.y * scale,
        );
        Self {
            scale,
            width,
            height,
            world_origin_pixel,
        }
    }

    #[inline]
    pub fn to_pixel(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            self.world_origin_pixel.x + p.x * self.scale,
            self.world_origin_pixel.y - p.y * self.scale,
        )
    }

    #[inline]
    pub fn to_world(&self, px: Vec2) -> Vec2 {
        Vec2::new(
            (px.x - self.world_origin_pixel.x) / self.scale,
            (self.world_origin_pixel.y - px.y) / self.scale,
        )
    }

    pub fn world_to_image(&self, p: Vec2) -> Projected {
        let pixel = self.to_pixel(p);
        Projected {
            pixel,
            inside: self.contains_pixel(pixel),
        }
    }

    pub fn image_to_world(&self, px: Vec2) -> Projected {
        Projected {
            pixel: self.to_world(px),
            inside: self.contains_pixel(px),
        }
    }

    pub fn contains_pixel(&self, px: Vec2) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x <= self.width as f64 && px.y <= self.height as f64
    }

    /// Whether every table corner projects into the image.
    pub fn covers(&self, table: &TableSpec) -> bool {
        let b = table.bounds();
        [b.min, b.max, Vec2::new(b.min.x, b.max.y), Vec2::new(b.max.x, b.min.y)]
            .iter()
            .all(|&c| {
                let p = self.to_pixel(c);
                p.x >= -1e-9
                    && p.y >= -1e-9
                    && p.x <= self.width as f64 + 1e-9
                    && p.y <= self.height as f64 + 1e-9
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderStyle {
    /// Samples per pixel along each axis.
    pub supersample: usize,
    /// Gaussian footprint in pixels; 0 disables the blur.
    pub blur_sigma: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            supersample: 8,
            blur_sigma: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationImage {
    pub view: ViewTransform,
    /// Row-major `height × width` intensities in `[0, 1]`.
    pub pixels: Vec<f32>,
    /// Segment drawn at each pixel center, `None` for background.
    pub segment_id_map: Vec<Option<SegmentId>>,
}

impl ObservationImage {
    pub fn width(&self) -> usize {
        self.view.width
    }

    pub fn height(&self) -> usize {
        self.view.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.view.width + x]
    }

    pub fn segment_at(&self, x: usize, y: usize) -> Option<SegmentId> {
        self.segment_id_map[y * self.view.width + x]
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(self.width(), self.height(), &self.pixels)
    }

    pub fn sidecar(&self) -> ObservationSidecar {
        let mut rle: Vec<(i64, u32)> = Vec::new();
        for s in &self.segment_id_map {
            let v = s.map_or(-1, |id| id.0 as i64);
            match rle.last_mut() {
                Some((last, n)) if *last == v => *n += 1,
                _ => rle.push((v, 1)),
            }
        }
        ObservationSidecar {
            schema: SIDECAR_SCHEMA.to_string(),
            view: self.view,
            segment_map_rle: rle,
        }
    }
}

/// JSON companion of an exported observation PGM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSidecar {
    pub schema: String,
    pub view: ViewTransform,
    /// `(segment id or -1, run length)` over the row-major pixel order.
    pub segment_map_rle: Vec<(i64, u32)>,
}

impl ObservationSidecar {
    pub fn decode_segment_map(&self) -> Vec<Option<SegmentId>> {
        self.segment_map_rle
            .iter()
            .flat_map(|&(v, n)| {
                std::iter::repeat(if v < 0 { None } else { Some(SegmentId(v as u32)) })
                    .take(n as usize)
            })
            .collect()
    }
}

/// Binary 8-bit PGM (P5).
pub fn encode_pgm(width: usize, height: usize, pixels: &[f32]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

/// Splits each object into one to three convex segments.
///
/// With probability `split_prob` an object gets 2 or 3 pieces: each cut is a
/// chord through a point jittered around the centroid of the current largest
/// piece, at a uniformly random angle.
pub fn over_segment(scene: &Scene, noise_seed: u64, split_prob: f64) -> Vec<Segment> {
    let split_prob = split_prob.clamp(0.0, 1.0);
    let mut rng = rng_from(noise_seed);
    let mut segments = Vec::new();
    for obj in &scene.objects {
        let poly = obj.world_polygon();
        let mut pieces = vec![poly];
        // draw unconditionally so the stream does not depend on split_prob
        let u: f64 = rng.gen();
        let n_pieces = rng.gen_range(2..=3usize);
        if u < split_prob {
            while pieces.len() < n_pieces {
                let (k, _) = pieces
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.area().total_cmp(&b.1.area()))
                    .expect("non-empty");
                let target = pieces.swap_remove(k);
                let (a, b) = split_by_chord(&target, &mut rng);
                pieces.push(a);
                pieces.push(b);
            }
        }
        for p in pieces {
            segments.push(Segment::new(SegmentId(segments.len() as u32), obj.id, p));
        }
    }
    segments
}

fn split_by_chord<R: Rng>(poly: &ConvexPolygon, rng: &mut R) -> (ConvexPolygon, ConvexPolygon) {
    let c = poly.centroid();
    let (cxx, cyy, cxy) = poly.covariance();
    let (_, _, _, minor_sd) = principal_axes(cxx, cyy, cxy);
    let min_piece = 0.15 * poly.area();
    for attempt in 0..16 {
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let jitter = if attempt < 15 {
            Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (0.5 * minor_sd)
        } else {
            Vec2::ZERO
        };
        let normal = Vec2::from_angle(angle);
        let offset = normal.dot(c + jitter);
        if let (Some(a), Some(b)) = (
            poly.clip_halfplane(normal, offset),
            poly.clip_halfplane(-normal, -offset),
        ) {
            if a.area() >= min_piece && b.area() >= min_piece {
                return (a, b);
            }
        }
    }
    // a chord through the centroid leaves at least 4/9 of the area on each side
    let normal = Vec2::new(1.0, 0.0);
    let offset = normal.dot(c);
    (
        poly.clip_halfplane(normal, offset).expect("centroid chord"),
        poly.clip_halfplane(-normal, -offset).expect("centroid chord"),
    )
}

/// Gray level of the `index`-th of `count` segments. Levels are spaced
/// uniformly in `[MIN_GRAY, MAX_GRAY]` and assigned through a stride
/// permutation so consecutive segments get distant levels.
pub fn gray_level(index: usize, count: usize) -> f32 {
    if count <= 1 {
        return MAX_GRAY;
    }
    let mut stride = (count / 3).max(1);
    while gcd(stride, count) != 1 {
        stride += 1;
    }
    let slot = (index * stride) % count;
    MIN_GRAY + (MAX_GRAY - MIN_GRAY) * slot as f32 / (count - 1) as f32
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Half-plane form of a convex polygon in image coordinates: inside iff
/// `a·x + b·y <= c` for every edge.
struct PixelPolygon {
    edges: Vec<(f64, f64, f64)>,
    min: Vec2,
    max: Vec2,
}

impl PixelPolygon {
    fn new(poly: &ConvexPolygon, view: &ViewTransform) -> Self {
        let pts: Vec<Vec2> = poly.vertices().iter().map(|&v| view.to_pixel(v)).collect();
        let n = pts.len();
        let mut edges = Vec::with_capacity(n);
        // world CCW becomes clockwise in the y-down frame; outward normal flips side
        for i in 0..n {
            let (p, q) = (pts[i], pts[(i + 1) % n]);
            let d = q - p;
            let normal = Vec2::new(-d.y, d.x);
            edges.push((normal.x, normal.y, normal.dot(p)));
        }
        let bb = crate::geometry::Aabb::from_points(&pts);
        Self {
            edges,
            min: bb.min,
            max: bb.max,
        }
    }

    #[inline]
    fn contains(&self, x: f64, y: f64) -> bool {
        self.edges.iter().all(|&(a, b, c)| a * x + b * y <= c)
    }
}

pub fn render(scene: &Scene, segments: &[Segment], view: &ViewTransform) -> ObservationImage {
    render_with(scene, segments, view, &RenderStyle::default())
}

pub fn render_with(
    scene: &Scene,
    segments: &[Segment],
    view: &ViewTransform,
    style: &RenderStyle,
) -> ObservationImage {
    debug_assert!(segments
        .iter()
        .all(|s| scene.object(s.parent_object).is_some()));
    let (w, h) = (view.width, view.height);
    let ss = style.supersample.max(1);
    let inv = 1.0 / ss as f64;
    let mut coverage = vec![0f32; w * h];
    let mut ids = vec![None; w * h];
    let mut samples = vec![0f32; w * h * ss * ss];
    let sw = w * ss;

    for (k, seg) in segments.iter().enumerate() {
        let level = gray_level(k, segments.len());
        let pp = PixelPolygon::new(&seg.polygon, view);
        let x0 = (pp.min.x.floor().max(0.0)) as usize;
        let y0 = (pp.min.y.floor().max(0.0)) as usize;
        let x1 = (pp.max.x.ceil().min(w as f64)).max(0.0) as usize;
        let y1 = (pp.max.y.ceil().min(h as f64)).max(0.0) as usize;
        for py in y0..y1 {
            for px in x0..x1 {
                if pp.contains(px as f64 + 0.5, py as f64 + 0.5) {
                    ids[py * w + px] = Some(seg.id);
                }
                for sy in 0..ss {
                    let y = py as f64 + (sy as f64 + 0.5) * inv;
                    for sx in 0..ss {
                        let x = px as f64 + (sx as f64 + 0.5) * inv;
                        if pp.contains(x, y) {
                            samples[(py * ss + sy) * sw + px * ss + sx] = level;
                        }
                    }
                }
            }
        }
    }

    let norm = 1.0 / (ss * ss) as f32;
    for py in 0..h {
        for px in 0..w {
            let mut acc = 0f32;
            for sy in 0..ss {
                let row = (py * ss + sy) * sw + px * ss;
                acc += samples[row..row + ss].iter().sum::<f32>();
            }
            coverage[py * w + px] = acc * norm;
        }
    }

    let pixels = if style.blur_sigma > 0.0 {
        gaussian_blur(&coverage, w, h, style.blur_sigma)
    } else {
        coverage
    };

    ObservationImage {
        view: *view,
        pixels,
        segment_id_map: ids,
    }
}

/// Separable Gaussian blur truncated at 3σ with zero padding.
fn gaussian_blur(src: &[f32], w: usize, h: usize, sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let xx = x as isize + k as isize - radius;
                if xx >= 0 && (xx as usize) < w {
                    acc += kv * src[y * w + xx as usize] as f64;
                }
            }
            tmp[y * w + x] = acc as f32;
        }
    }
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let yy = y as isize + k as isize - radius;
                if yy >= 0 && (yy as usize) < h {
                    acc += kv * tmp[yy as usize * w + x] as f64;
                }
            }
            out[y * w + x] = (acc as f32).clamp(0.0, 1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::scene::{default_shape_library, generate_scene, SceneObject};

    fn square_scene(side: f64, center: Vec2) -> Scene {
        Scene::new(
            TableSpec::default(),
            vec![SceneObject::new(
                ObjectId(0),
                ConvexPolygon::rectangle(side, side).unwrap(),
                Pose::new(center, 0.0),
            )],
            0,
        )
        .unwrap()
    }

    #[test]
    fn no_split_gives_one_segment_per_object() {
        let scene = generate_scene(5, &default_shape_library(), TableSpec::default(), 3).unwrap();
        let segs = over_segment(&scene, 11, 0.0);
        assert_eq!(segs.len(), 5);
        for (s, o) in segs.iter().zip(&scene.objects) {
            assert_eq!(s.parent_object, o.id);
            assert_eq!(s.polygon, o.world_polygon());
        }
    }

    #[test]
    fn full_split_partitions_square() {
        let scene = square_scene(0.1, Vec2::new(0.5, 0.4));
        let segs = over_segment(&scene, 5, 1.0);
        assert!((2..=3).contains(&segs.len()), "{} segments", segs.len());
        let total: f64 = segs.iter().map(|s| s.polygon.area()).sum();
        assert!((total - 0.01).abs() <= 1e-6);
    }

    #[test]
    fn two_object_bookkeeping() {
        let scene = generate_scene(2, &default_shape_library(), TableSpec::default(), 8).unwrap();
        let ids: Vec<_> = scene.objects.iter().map(|o| o.id).collect();
        for s in over_segment(&scene, 1, 0.7) {
            assert!(ids.contains(&s.parent_object));
            let (maj, min) = (s.principal_axes.major, s.principal_axes.minor);
            assert!(maj.dot(min).abs() <= 1e-9);
        }
    }

    #[test]
    fn view_examples() {
        let view = ViewTransform::for_table(&TableSpec::default(), DEFAULT_SCALE);
        assert_eq!((view.width, view.height), (320, 256));
        assert!(view.covers(&TableSpec::default()));
        let o = view.world_to_image(Vec2::ZERO);
        assert_eq!(o.pixel, view.world_origin_pixel);
        let p = view.to_pixel(Vec2::new(1.0, 0.0));
        assert!((p.x - view.world_origin_pixel.x - 320.0).abs() < 1e-12);
        assert!(!view.world_to_image(Vec2::new(-0.5, 0.1)).inside);
        assert!(view.world_to_image(Vec2::new(0.5, 0.1)).inside);
    }

    #[test]
    fn rendering_basics() {
        let scene = square_scene(0.1, Vec2::new(0.5, 0.4));
        let view = ViewTransform::for_table(&scene.table, DEFAULT_SCALE);
        let segs = over_segment(&scene, 0, 0.0);
        let img = render(&scene, &segs, &view);
        assert_eq!(img.pixels.len(), 320 * 256);
        assert_eq!(img.get(5, 5), 0.0);
        assert_eq!(img.segment_at(5, 5), None);
        let c = view.to_pixel(Vec2::new(0.5, 0.4));
        let (cx, cy) = (c.x as usize, c.y as usize);
        assert!(img.get(cx, cy) > 0.0);
        assert_eq!(img.segment_at(cx, cy), Some(segs[0].id));
        let count = img.segment_id_map.iter().filter(|s| s.is_some()).count() as f64;
        assert!((count - 1024.0).abs() <= 0.03 * 1024.0, "{count}");
    }

    #[test]
    fn gray_levels_distinct_and_in_range() {
        for n in 1..40 {
            let mut levels: Vec<f32> = (0..n).map(|i| gray_level(i, n)).collect();
            assert!(levels.iter().all(|&l| (MIN_GRAY..=MAX_GRAY).contains(&l)));
            levels.sort_by(f32::total_cmp);
            levels.dedup();
            assert_eq!(levels.len(), n);
        }
    }

    #[test]
    fn sidecar_round_trips_segment_map() {
        let scene = generate_scene(3, &default_shape_library(), TableSpec::default(), 4).unwrap();
        let view = ViewTransform::for_table(&scene.table, DEFAULT_SCALE);
        let img = render(&scene, &over_segment(&scene, 2, 0.5), &view);
        let sc = img.sidecar();
        let js = serde_json::to_string(&sc).unwrap();
        let back: ObservationSidecar = serde_json::from_str(&js).unwrap();
        assert_eq!(back.decode_segment_map(), img.segment_id_map);
        let pgm = img.to_pgm();
        assert!(pgm.starts_with(b"P5\n320 256\n255\n"));
        assert_eq!(pgm.len(), "P5\n320 256\n255\n".len() + 320 * 256);
    }
}
