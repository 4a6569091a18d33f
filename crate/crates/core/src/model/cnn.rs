use super::softmax_xent;
use crate::scalar::Scalar;

pub const CNN_CONV1_CHANNELS: usize = 8;
pub const CNN_CONV2_CHANNELS: usize = 16;
const K: usize = 3;
const STRIDE: usize = 2;

fn out_side(side: usize) -> usize {
    (side - K) / STRIDE + 1
}

pub(super) fn conv1_side(side: usize) -> usize {
    out_side(side)
}

pub(super) fn conv2_side(side: usize) -> usize {
    out_side(conv1_side(side))
}

pub(super) fn valid_side(side: usize) -> bool {
    side >= 7
}

pub(super) fn param_count(side: usize, classes: usize) -> usize {
    let c1 = CNN_CONV1_CHANNELS;
    let c2 = CNN_CONV2_CHANNELS;
    let s2 = conv2_side(side);
    c1 * K * K + c1 + c2 * c1 * K * K + c2 + classes * c2 * s2 * s2 + classes
}

struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
    wd: usize,
    bd: usize,
}

fn offsets(side: usize, classes: usize) -> Offsets {
    let c1 = CNN_CONV1_CHANNELS;
    let c2 = CNN_CONV2_CHANNELS;
    let s2 = conv2_side(side);
    let b1 = c1 * K * K;
    let w2 = b1 + c1;
    let b2 = w2 + c2 * c1 * K * K;
    let wd = b2 + c2;
    let bd = wd + classes * c2 * s2 * s2;
    Offsets { b1, w2, b2, wd, bd }
}

/// Activations kept for the backward pass.
struct Forward<T> {
    a1: Vec<T>, // [c1][s1][s1], post-tanh
    a2: Vec<T>, // [c2][s2][s2], post-tanh
    z: Vec<T>,
}

fn forward<T: Scalar>(p: &[T], side: usize, classes: usize, x: &[T]) -> Forward<T> {
    let c1 = CNN_CONV1_CHANNELS;
    let c2 = CNN_CONV2_CHANNELS;
    let s1 = conv1_side(side);
    let s2 = conv2_side(side);
    let o = offsets(side, classes);

    let mut a1 = vec![T::zero(); c1 * s1 * s1];
    for c in 0..c1 {
        let w = &p[c * K * K..(c + 1) * K * K];
        for oy in 0..s1 {
            for ox in 0..s1 {
                let mut acc = p[o.b1 + c];
                for ky in 0..K {
                    let row = (oy * STRIDE + ky) * side + ox * STRIDE;
                    for kx in 0..K {
                        acc += w[ky * K + kx] * x[row + kx];
                    }
                }
                a1[(c * s1 + oy) * s1 + ox] = acc.tanh();
            }
        }
    }

    let mut a2 = vec![T::zero(); c2 * s2 * s2];
    for c in 0..c2 {
        let wbase = o.w2 + c * c1 * K * K;
        for oy in 0..s2 {
            for ox in 0..s2 {
                let mut acc = p[o.b2 + c];
                for ic in 0..c1 {
                    let w = &p[wbase + ic * K * K..wbase + (ic + 1) * K * K];
                    for ky in 0..K {
                        let row = (ic * s1 + oy * STRIDE + ky) * s1 + ox * STRIDE;
                        for kx in 0..K {
                            acc += w[ky * K + kx] * a1[row + kx];
                        }
                    }
                }
                a2[(c * s2 + oy) * s2 + ox] = acc.tanh();
            }
        }
    }

    let flat = c2 * s2 * s2;
    let mut z = vec![T::zero(); classes];
    for (k, zk) in z.iter_mut().enumerate() {
        let mut acc = p[o.bd + k];
        for (&w, &a) in p[o.wd + k * flat..o.wd + (k + 1) * flat].iter().zip(&a2) {
            acc += w * a;
        }
        *zk = acc;
    }
    Forward { a1, a2, z }
}

pub(super) fn logits<T: Scalar>(p: &[T], side: usize, classes: usize, x: &[T], z: &mut [T]) {
    z.copy_from_slice(&forward(p, side, classes, x).z);
}

pub(super) fn example<T: Scalar>(
    p: &[T],
    side: usize,
    classes: usize,
    x: &[T],
    y: usize,
    grad: Option<(&mut [T], T)>,
) -> T {
    let f = forward(p, side, classes, x);
    let mut dz = vec![T::zero(); classes];
    let loss = softmax_xent(&f.z, y, &mut dz);
    let Some((g, scale)) = grad else {
        return loss;
    };

    let c1 = CNN_CONV1_CHANNELS;
    let c2 = CNN_CONV2_CHANNELS;
    let s1 = conv1_side(side);
    let s2 = conv2_side(side);
    let o = offsets(side, classes);
    let flat = c2 * s2 * s2;

    // dense head
    let mut da2 = vec![T::zero(); flat];
    for k in 0..classes {
        let d = dz[k] * scale;
        g[o.bd + k] += d;
        let wrow = o.wd + k * flat;
        for i in 0..flat {
            g[wrow + i] += d * f.a2[i];
            da2[i] += d * p[wrow + i];
        }
    }
    for (d, &a) in da2.iter_mut().zip(&f.a2) {
        *d *= T::one() - a * a;
    }

    // conv2
    let mut da1 = vec![T::zero(); c1 * s1 * s1];
    for c in 0..c2 {
        let wbase = o.w2 + c * c1 * K * K;
        for oy in 0..s2 {
            for ox in 0..s2 {
                let d = da2[(c * s2 + oy) * s2 + ox];
                if d == T::zero() {
                    continue;
                }
                g[o.b2 + c] += d;
                for ic in 0..c1 {
                    let wb = wbase + ic * K * K;
                    for ky in 0..K {
                        let row = (ic * s1 + oy * STRIDE + ky) * s1 + ox * STRIDE;
                        for kx in 0..K {
                            g[wb + ky * K + kx] += d * f.a1[row + kx];
                            da1[row + kx] += d * p[wb + ky * K + kx];
                        }
                    }
                }
            }
        }
    }
    for (d, &a) in da1.iter_mut().zip(&f.a1) {
        *d *= T::one() - a * a;
    }

    // conv1
    for c in 0..c1 {
        for oy in 0..s1 {
            for ox in 0..s1 {
                let d = da1[(c * s1 + oy) * s1 + ox];
                if d == T::zero() {
                    continue;
                }
                g[o.b1 + c] += d;
                for ky in 0..K {
                    let row = (oy * STRIDE + ky) * side + ox * STRIDE;
                    for kx in 0..K {
                        g[c * K * K + ky * K + kx] += d * x[row + kx];
                    }
                }
            }
        }
    }
    loss
}
