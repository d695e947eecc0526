//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use singulate::encoder::{encode, CROP_PIXELS};
use singulate::geometry::{ConvexPolygon, Pose, Vec2};
use singulate::network::*;
use singulate::perception::{over_segment, render_with, RenderStyle, Segment, ViewTransform};
use singulate::proposals::{sample_handles, to_proposals, PushHandle};
use singulate::scene::{default_shape_library, generate_scene, Scene, TableSpec};

/// Direct nested-loop evaluation, sharing nothing with the library kernels.
pub fn naive_forward(params: &NetworkParams, input: &[f32]) -> f64 {
    naive_forward_margin(params, input).0
}

/// Also returns the distance to the nearest non-smooth point: the smallest
/// |pre-activation| over ReLU units and the smallest winner/runner-up gap over
/// pooling windows.
pub fn naive_forward_margin(params: &NetworkParams, input: &[f32]) -> (f64, f64) {
    let mut margin = f64::INFINITY;
    let arch = &params.architecture;
    let (mut c, mut h, mut w) = (arch.input.c, arch.input.h, arch.input.w);
    let mut x: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    for (layer, lp) in arch.layers.iter().zip(&params.tensors.layers) {
        match *layer {
            LayerSpec::Convolution {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let oh = (h + 2 * padding - kernel) / stride + 1;
                let ow = (w + 2 * padding - kernel) / stride + 1;
                let mut y = vec![0.0; out_channels * oh * ow];
                for co in 0..out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = lp.bias[co];
                            for ci in 0..in_channels {
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let iy = (oy * stride + ky) as i64 - padding as i64;
                                        let ix = (ox * stride + kx) as i64 - padding as i64;
                                        if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                            continue;
                                        }
                                        let wi = ((co * in_channels + ci) * kernel + ky) * kernel + kx;
                                        acc += lp.weights[wi]
                                            * x[(ci * h + iy as usize) * w + ix as usize];
                                    }
                                }
                            }
                            y[(co * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                x = y;
                c = out_channels;
                h = oh;
                w = ow;
            }
            LayerSpec::Relu => x.iter_mut().for_each(|v| {
                margin = margin.min(v.abs());
                *v = v.max(0.0);
            }),
            LayerSpec::MaxPool { size } => {
                let (oh, ow) = (h / size, w / size);
                let mut y = vec![f64::NEG_INFINITY; c * oh * ow];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut window = Vec::with_capacity(size * size);
                            for dy in 0..size {
                                for dx in 0..size {
                                    window.push(x[(ch * h + oy * size + dy) * w + ox * size + dx]);
                                }
                            }
                            window.sort_by(|a, b| b.total_cmp(a));
                            // a tie among zeros carries no gradient either way
                            if window[0] > 0.0 {
                                margin = margin.min(window[0] - window[1]);
                            }
                            y[(ch * oh + oy) * ow + ox] = window[0];
                        }
                    }
                }
                x = y;
                h = oh;
                w = ow;
            }
            LayerSpec::Flatten => {
                c *= h * w;
                h = 1;
                w = 1;
            }
            LayerSpec::FullyConnected { inputs, units } => {
                x = (0..units)
                    .map(|u| lp.bias[u] + (0..inputs).map(|i| lp.weights[u * inputs + i] * x[i]).sum::<f64>())
                    .collect();
                c = units;
            }
            LayerSpec::Sigmoid => x.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
        }
    }
    (x[0], margin)
}

pub fn random_input(rng: &mut impl Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen::<f32>()).collect()
}

/// Random weights plus random biases (the library initializer zeroes biases).
pub fn random_params(arch: Architecture, seed: u64) -> NetworkParams {
    let mut p = NetworkParams::random_uniform(arch, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for l in &mut p.tensors.layers {
        for b in &mut l.bias {
            *b = rng.gen_range(-0.1..0.1);
        }
    }
    p
}


/// Random convex polygon: sorted angles on a rotated ellipse.
pub fn random_convex_polygon(rng: &mut impl Rng, center: Vec2, size: f64) -> ConvexPolygon {
    loop {
        let n = rng.gen_range(3..=8);
        let (a, b) = (rng.gen_range(0.3..1.0) * size, rng.gen_range(0.3..1.0) * size);
        let rot = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let pts = angles
            .iter()
            .map(|&t| Vec2::new(a * t.cos(), b * t.sin()).rotated(rot) + center)
            .collect();
        if let Ok(p) = ConvexPolygon::new(pts) {
            return p;
        }
    }
}

fn seg_point(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let l2 = dx * dx + dy * dy;
    let t = if l2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.x - a.x - t * dx).powi(2) + (p.y - a.y - t * dy).powi(2)).sqrt()
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 <= 0.0 && o3 * o4 <= 0.0
}

fn segment_distance(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    if segments_cross(a, b, c, d) {
        return 0.0;
    }
    seg_point(a, c, d)
        .min(seg_point(b, c, d))
        .min(seg_point(c, a, b))
        .min(seg_point(d, a, b))
}

/// Strict winding-number containment.
fn inside(p: Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    (0..n).all(|i| orient(poly[i], poly[(i + 1) % n], p) > 0.0)
}

/// Brute force over every edge pair; 0 when one polygon contains the other.
pub fn brute_force_distance(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    let (va, vb) = (a.vertices(), b.vertices());
    if va.iter().any(|&p| inside(p, vb)) || vb.iter().any(|&p| inside(p, va)) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..va.len() {
        for j in 0..vb.len() {
            let d = segment_distance(va[i], va[(i + 1) % va.len()], vb[j], vb[(j + 1) % vb.len()]);
            best = best.min(d);
        }
    }
    best
}

pub fn brute_force_min_pairwise(polys: &[ConvexPolygon]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..polys.len() {
        for j in i + 1..polys.len() {
            best = best.min(brute_force_distance(&polys[i], &polys[j]));
        }
    }
    best
}

fn rotate_about(p: Vec2, pivot: Vec2, phi: f64) -> Vec2 {
    (p - pivot).rotated(phi) + pivot
}

/// Canvas 3 m wide centred on the default table, so scenes rotated about any
/// point on the table stay in frame.
pub fn wide_view() -> ViewTransform {
    ViewTransform::new(320.0, 960, 960, Vec2::new(480.0 - 0.5 * 320.0, 480.0 + 0.4 * 320.0)).unwrap()
}

/// Rotates the scene and its segmentation by `phi` about the push start,
/// re-renders, and returns the fraction of push-image pixels that agree
/// within `tol` with the unrotated encoding.
pub fn equivariance_fraction(seed: u64, tol: f32, style: &RenderStyle) -> f64 {
    let view = wide_view();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=6);
    let scene = generate_scene(n, &default_shape_library(), TableSpec::default(), seed).unwrap();
    let segs = over_segment(&scene, seed, 0.3);
    let hs = sample_handles(&segs, &scene.table, 4, 0.2, seed);
    let h = hs[rng.gen_range(0..hs.len())];
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);

    let pivot = h.position;
    let rot_scene = Scene {
        objects: scene
            .objects
            .iter()
            .map(|o| {
                let mut o = o.clone();
                o.pose = Pose::new(rotate_about(o.pose.translation, pivot, phi), o.pose.rotation + phi);
                o
            })
            .collect(),
        ..scene.clone()
    };
    let rot_segs: Vec<Segment> = segs
        .iter()
        .map(|s| {
            let verts = s.polygon.vertices().iter().map(|&v| rotate_about(v, pivot, phi)).collect();
            Segment::new(s.id, s.parent_object, ConvexPolygon::new(verts).unwrap())
        })
        .collect();
    let rot_h = PushHandle {
        normal: h.normal.rotated(phi),
        ..h
    };

    let a = render_with(&scene, &segs, &view, style);
    let b = render_with(&rot_scene, &rot_segs, &view, style);
    // the rotated proposal is re-derived through the image-angle convention
    let (pa, _) = to_proposals(&[h], &view);
    let (pb, _) = to_proposals(&[rot_h], &view);
    let ea = encode(&a, &pa[0]);
    let eb = encode(&b, &pb[0]);
    let ok = ea
        .pixels
        .iter()
        .zip(&eb.pixels)
        .filter(|(x, y)| (**x - **y).abs() <= tol)
        .count();
    ok as f64 / CROP_PIXELS as f64
}

pub fn batch_loss(p: &NetworkParams, batch: &[(&[f32], bool)]) -> f64 {
    batch
        .iter()
        .map(|(x, y)| nll(naive_forward(p, x), *y))
        .sum::<f64>()
        / batch.len() as f64
}

pub struct GradientCheck {
    pub worst: f64,
    pub checked: usize,
    pub kinds: std::collections::BTreeSet<&'static str>,
}

/// Central differences of the naive loss against the library gradient on the
/// reduced network, at `coords` random coordinates.
pub fn gradient_check(seed: u64, coords: usize, h: f64) -> GradientCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Central differences straddle a kink whenever a perturbation of size h
    // flips a ReLU or a pooling winner; draw until every unit is well clear.
    let (p, inputs) = (0..)
        .map(|draw| {
            let p = random_params(build_reduced_architecture(), 77 + draw);
            let inputs: Vec<Vec<f32>> = (0..4).map(|_| random_input(&mut rng, 256)).collect();
            (p, inputs)
        })
        .find(|(p, inputs)| inputs.iter().all(|x| naive_forward_margin(p, x).1 > 2e-3))
        .unwrap();
    let batch: Vec<(&[f32], bool)> = inputs
        .iter()
        .enumerate()
        .map(|(i, x)| (x.as_slice(), i % 2 == 0))
        .collect();
    let (_, grads) = loss_and_gradients_inputs(&p, &batch).unwrap();

    let n = p.tensors.len();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut kinds = std::collections::BTreeSet::new();
    for _ in 0..coords {
        let i = rng.gen_range(0..n);
        kinds.insert(p.architecture.layers[grads.layer_of(i)].name());
        let mut plus = p.clone();
        plus.tensors.set(i, p.tensors.get(i) + h);
        let mut minus = p.clone();
        minus.tensors.set(i, p.tensors.get(i) - h);
        let fd = (batch_loss(&plus, &batch) - batch_loss(&minus, &batch)) / (2.0 * h);
        let an = grads.get(i);
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
        worst = worst.max(rel);
        checked += 1;
    }
    GradientCheck { worst, checked, kinds }
}
