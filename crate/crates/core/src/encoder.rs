//! Push-centric network input: the working image translated so the push
//! start sits on the crop anchor, rotated so the push points along +x, then
//! cropped to 64×64 with bilinear resampling and zero fill.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::perception::{encode_pgm, ObservationImage, RenderStyle, GRAY_SCHEME};
use crate::proposals::PushProposal;

pub const CROP_SIZE: usize = 64;
pub const CROP_PIXELS: usize = CROP_SIZE * CROP_SIZE;
/// Continuous pixel coordinates of the push start inside the crop.
pub const ANCHOR: (f64, f64) = (32.0, 32.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushImage {
    /// Row-major 64×64 intensities in `[0, 1]`.
    pub pixels: Vec<f32>,
    pub proposal: PushProposal,
}

impl PushImage {
    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(CROP_SIZE, CROP_SIZE, &self.pixels)
    }
}

/// Conventions a trained model depends on; stored in the model file so that
/// training and deployment encode observations identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConventions {
    pub crop_size: u32,
    pub anchor: (f64, f64),
    pub gray_scheme: String,
    pub view_scale: f64,
    pub supersample: u32,
    pub blur_sigma: f64,
    pub interpolation: String,
    pub fill: f32,
}

impl EncoderConventions {
    pub fn current(view_scale: f64, style: &RenderStyle) -> Self {
        Self {
            crop_size: CROP_SIZE as u32,
            anchor: ANCHOR,
            gray_scheme: GRAY_SCHEME.to_string(),
            view_scale,
            supersample: style.supersample as u32,
            blur_sigma: style.blur_sigma,
            interpolation: "bilinear".to_string(),
            fill: 0.0,
        }
    }
}

impl Default for EncoderConventions {
    fn default() -> Self {
        Self::current(crate::perception::DEFAULT_SCALE, &RenderStyle::default())
    }
}

/// Bilinear sample at continuous image coordinates (pixel centers at `+0.5`),
/// reading 0 outside the image.
#[inline]
fn sample(img: &ObservationImage, p: Vec2) -> f32 {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let fx = p.x - 0.5;
    let fy = p.y - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = (fx - x0) as f32;
    let ty = (fy - y0) as f32;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let at = |x: isize, y: isize| -> f32 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            img.pixels[(y * w + x) as usize]
        }
    };
    let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
    let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
    top * (1.0 - ty) + bottom * ty
}

pub fn encode(observation: &ObservationImage, proposal: &PushProposal) -> PushImage {
    let (s, c) = proposal.alpha.sin_cos();
    let mut pixels = vec![0f32; CROP_PIXELS];
    for v in 0..CROP_SIZE {
        let ry = v as f64 + 0.5 - ANCHOR.1;
        for u in 0..CROP_SIZE {
            let rx = u as f64 + 0.5 - ANCHOR.0;
            let src = Vec2::new(
                proposal.c.x + c * rx - s * ry,
                proposal.c.y + s * rx + c * ry,
            );
            pixels[v * CROP_SIZE + u] = sample(observation, src).clamp(0.0, 1.0);
        }
    }
    PushImage {
        pixels,
        proposal: *proposal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{SegmentId, ViewTransform};
    use crate::proposals::PushHandle;
    use crate::scene::ObjectId;

    fn ramp_image() -> ObservationImage {
        let view = ViewTransform::new(320.0, 320, 256, Vec2::new(0.0, 256.0)).unwrap();
        let pixels = (0..320 * 256)
            .map(|i| ((i % 320) as f32 * 7.0 + (i / 320) as f32 * 13.0) % 255.0 / 255.0)
            .collect();
        ObservationImage {
            view,
            pixels,
            segment_id_map: vec![None; 320 * 256],
        }
    }

    fn proposal(c: Vec2, alpha: f64) -> PushProposal {
        PushProposal {
            c,
            alpha,
            handle: PushHandle {
                position: Vec2::ZERO,
                normal: Vec2::new(1.0, 0.0),
                segment: SegmentId(0),
                object: ObjectId(0),
                length: 0.2,
            },
        }
    }

    #[test]
    fn identity_is_centered_crop() {
        let img = ramp_image();
        let out = encode(&img, &proposal(Vec2::new(160.0, 128.0), 0.0));
        for v in 0..CROP_SIZE {
            for u in 0..CROP_SIZE {
                assert_eq!(out.pixels[v * CROP_SIZE + u], img.get(u + 128, v + 96));
            }
        }
    }

    #[test]
    fn boundary_proposal_is_zero_padded() {
        let img = ramp_image();
        let out = encode(&img, &proposal(Vec2::new(0.0, 0.0), 0.7));
        assert_eq!(out.pixels.len(), CROP_PIXELS);
        assert_eq!(out.pixels[0], 0.0);
        assert!(out.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
