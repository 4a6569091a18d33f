//! Synthetic datasets: the two-parameter regression line, Gaussian blobs and
//! procedurally rendered 28×28 digits.

use std::f64::consts::PI;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const LINREG_SLOPE: f64 = 2.0;
pub const LINREG_INTERCEPT: f64 = 17.0;
pub const LINREG_X_RANGE: (f64, f64) = (0.0, 10.0);

pub const DIGIT_SIDE: usize = 28;

/// `y = 2x + 17 + noise`
pub fn linreg_target(x: f64, noise: f64) -> f64 {
    LINREG_SLOPE * x + LINREG_INTERCEPT + noise
}

/// `n` points with `x ~ U[0, 10)` and `y = 2x + 17 + N(0, 1)`.
pub fn generate_linreg_data<T: Scalar>(n: usize, rng: &mut StreamRng) -> Result<Dataset<T>> {
    generate_linreg_data_with_noise(n, rng, |r| r.normal())
}

/// As [`generate_linreg_data`] with a caller-supplied noise draw.
pub fn generate_linreg_data_with_noise<T: Scalar>(
    n: usize,
    rng: &mut StreamRng,
    mut noise: impl FnMut(&mut StreamRng) -> f64,
) -> Result<Dataset<T>> {
    if n < 2 {
        return Err(Error::Invalid(format!("linear regression needs at least 2 points, got {n}")));
    }
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.uniform(LINREG_X_RANGE.0, LINREG_X_RANGE.1);
        let e = noise(rng);
        xs.push(T::of(x));
        ys.push(T::of(linreg_target(x, e)));
    }
    Dataset::new(Tensor::matrix(n, 1, xs)?, Tensor::vector(ys), None)
}

/// Center of blob `c` among `k`: evenly spaced on a circle of radius
/// `separation`.
pub fn blob_center(c: usize, k: usize, separation: f64) -> [f64; 2] {
    let a = 2.0 * PI * c as f64 / k as f64;
    [separation * a.cos(), separation * a.sin()]
}

/// Isotropic unit-variance 2-D Gaussian clusters; example `i` has label `i % k`.
pub fn generate_blobs<T: Scalar>(n: usize, k: usize, separation: f64, rng: &mut StreamRng) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(Error::Empty("blob dataset with n = 0".into()));
    }
    if k < 2 {
        return Err(Error::Invalid(format!("blobs need at least 2 classes, got {k}")));
    }
    let mut xs = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let [cx, cy] = blob_center(c, k, separation);
        xs.push(T::of(cx + rng.normal()));
        xs.push(T::of(cy + rng.normal()));
        ys.push(T::of(c as f64));
    }
    Dataset::new(Tensor::matrix(n, 2, xs)?, Tensor::vector(ys), Some(k))
}

type Stroke = &'static [(f64, f64)];

fn ring(cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64) -> Vec<(f64, f64)> {
    let steps = 14;
    (0..=steps)
        .map(|i| {
            let t = from + (to - from) * i as f64 / steps as f64;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

// Glyph strokes in a unit box, y pointing down.
fn glyph(d: usize) -> Vec<Vec<(f64, f64)>> {
    const ONE: Stroke = &[(0.35, 0.25), (0.55, 0.08), (0.55, 0.92)];
    const FOUR_A: Stroke = &[(0.6, 0.08), (0.15, 0.62), (0.85, 0.62)];
    const FOUR_B: Stroke = &[(0.65, 0.35), (0.65, 0.92)];
    const FIVE: Stroke = &[(0.8, 0.08), (0.25, 0.08), (0.22, 0.45)];
    const SEVEN: Stroke = &[(0.15, 0.08), (0.85, 0.08), (0.4, 0.92)];
    const TWO_TAIL: Stroke = &[(0.8, 0.4), (0.15, 0.92), (0.85, 0.92)];
    const NINE_TAIL: Stroke = &[(0.78, 0.3), (0.7, 0.92)];
    match d {
        0 => vec![ring(0.5, 0.5, 0.3, 0.42, 0.0, 2.0 * PI)],
        1 => vec![ONE.to_vec()],
        2 => vec![ring(0.5, 0.3, 0.3, 0.22, PI, 2.15 * PI), TWO_TAIL.to_vec()],
        3 => {
            vec![ring(0.48, 0.29, 0.3, 0.21, -0.85 * PI, 0.5 * PI), ring(0.48, 0.71, 0.32, 0.21, -0.5 * PI, 0.85 * PI)]
        }
        4 => vec![FOUR_A.to_vec(), FOUR_B.to_vec()],
        5 => vec![FIVE.to_vec(), ring(0.47, 0.66, 0.32, 0.26, -0.9 * PI, 0.8 * PI)],
        6 => vec![ring(0.62, 0.55, 0.4, 0.47, 1.05 * PI, 1.5 * PI), ring(0.5, 0.68, 0.28, 0.24, 0.0, 2.0 * PI)],
        7 => vec![SEVEN.to_vec()],
        8 => vec![ring(0.5, 0.29, 0.25, 0.21, 0.0, 2.0 * PI), ring(0.5, 0.71, 0.3, 0.21, 0.0, 2.0 * PI)],
        9 => vec![ring(0.5, 0.33, 0.28, 0.24, 0.0, 2.0 * PI), NINE_TAIL.to_vec()],
        _ => unreachable!("digits are 0..=9"),
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 { 0.0 } else { ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0) };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    (dx * dx + dy * dy).sqrt()
}

/// Renders one digit with random scale, slant, offset, stroke width and
/// background noise. Pixels are quantized to multiples of 1/255.
pub fn render_digit(d: usize, rng: &mut StreamRng) -> Vec<f64> {
    let strokes = glyph(d);
    let scale = rng.uniform(15.0, 19.0);
    let slant = rng.uniform(-0.25, 0.25);
    let rot = rng.uniform(-0.15, 0.15);
    let (sin, cos) = rot.sin_cos();
    let ox = 14.0 + rng.uniform(-1.5, 1.5);
    let oy = 14.5 + rng.uniform(-1.0, 1.0);
    let width = rng.uniform(0.9, 1.6);
    let place = |(u, v): (f64, f64)| {
        let x = (u - 0.5) * scale * 0.8 + slant * (0.5 - v) * scale * 0.5;
        let y = (v - 0.5) * scale;
        (ox + cos * x - sin * y, oy + sin * x + cos * y)
    };
    let segments: Vec<((f64, f64), (f64, f64))> =
        strokes.iter().flat_map(|s| s.windows(2).map(|w| (place(w[0]), place(w[1]))).collect::<Vec<_>>()).collect();

    let mut img = vec![0.0; DIGIT_SIDE * DIGIT_SIDE];
    for y in 0..DIGIT_SIDE {
        for x in 0..DIGIT_SIDE {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let dist = segments.iter().fold(f64::INFINITY, |m, &(a, b)| m.min(segment_distance(p, a, b)));
            let ink = (1.0 - (dist - width).max(0.0) / 1.0).clamp(0.0, 1.0);
            let noise = 0.04 * rng.normal().abs();
            let v = (ink + noise).clamp(0.0, 1.0);
            img[y * DIGIT_SIDE + x] = (v * 255.0).round() / 255.0;
        }
    }
    img
}

/// `n` synthetic 28×28 digits with balanced labels (`i % 10`).
pub fn generate_digits<T: Scalar>(n: usize, rng: &mut StreamRng) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(Error::Empty("digit dataset with n = 0".into()));
    }
    let mut pixels = Vec::with_capacity(n * DIGIT_SIDE * DIGIT_SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let d = i % 10;
        pixels.extend(render_digit(d, rng).into_iter().map(T::of));
        labels.push(T::of(d as f64));
    }
    Dataset::new(Tensor::from_parts(vec![n, DIGIT_SIDE, DIGIT_SIDE], pixels)?, Tensor::vector(labels), Some(10))
}
