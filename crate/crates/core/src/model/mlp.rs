use super::softmax_xent;
use crate::scalar::Scalar;

pub(super) fn param_count(inputs: usize, hidden: usize, classes: usize) -> usize {
    hidden * inputs + hidden + classes * hidden + classes
}

// layout: W1 [hidden × inputs], b1 [hidden], W2 [classes × hidden], b2 [classes]
struct Views<'a, T> {
    w1: &'a [T],
    b1: &'a [T],
    w2: &'a [T],
    b2: &'a [T],
}

fn views<T>(params: &[T], inputs: usize, hidden: usize, classes: usize) -> Views<'_, T> {
    let (w1, rest) = params.split_at(hidden * inputs);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(classes * hidden);
    Views { w1, b1, w2, b2 }
}

fn hidden_layer<T: Scalar>(v: &Views<'_, T>, inputs: usize, x: &[T], h: &mut [T]) {
    for (j, hj) in h.iter_mut().enumerate() {
        let mut acc = v.b1[j];
        for (&w, &xv) in v.w1[j * inputs..(j + 1) * inputs].iter().zip(x) {
            acc += w * xv;
        }
        *hj = acc.tanh();
    }
}

fn output_layer<T: Scalar>(v: &Views<'_, T>, hidden: usize, h: &[T], z: &mut [T]) {
    for (c, zc) in z.iter_mut().enumerate() {
        let mut acc = v.b2[c];
        for (&w, &hv) in v.w2[c * hidden..(c + 1) * hidden].iter().zip(h) {
            acc += w * hv;
        }
        *zc = acc;
    }
}

pub(super) fn logits<T: Scalar>(params: &[T], inputs: usize, hidden: usize, classes: usize, x: &[T], z: &mut [T]) {
    let v = views(params, inputs, hidden, classes);
    let mut h = vec![T::zero(); hidden];
    hidden_layer(&v, inputs, x, &mut h);
    output_layer(&v, hidden, &h, z);
}

pub(super) fn example<T: Scalar>(
    params: &[T],
    inputs: usize,
    hidden: usize,
    classes: usize,
    x: &[T],
    y: usize,
    grad: Option<(&mut [T], T)>,
) -> T {
    let v = views(params, inputs, hidden, classes);
    let mut h = vec![T::zero(); hidden];
    hidden_layer(&v, inputs, x, &mut h);
    let mut z = vec![T::zero(); classes];
    output_layer(&v, hidden, &h, &mut z);
    let mut dz = vec![T::zero(); classes];
    let loss = softmax_xent(&z, y, &mut dz);

    let Some((g, scale)) = grad else {
        return loss;
    };
    let (gw1, rest) = g.split_at_mut(hidden * inputs);
    let (gb1, rest) = rest.split_at_mut(hidden);
    let (gw2, gb2) = rest.split_at_mut(classes * hidden);

    let mut dh = vec![T::zero(); hidden];
    for c in 0..classes {
        let d = dz[c] * scale;
        gb2[c] += d;
        let wrow = &v.w2[c * hidden..(c + 1) * hidden];
        for j in 0..hidden {
            gw2[c * hidden + j] += d * h[j];
            dh[j] += d * wrow[j];
        }
    }
    for j in 0..hidden {
        // d tanh(a) = 1 - tanh(a)^2
        let da = dh[j] * (T::one() - h[j] * h[j]);
        if da == T::zero() {
            continue;
        }
        gb1[j] += da;
        for (gv, &xv) in gw1[j * inputs..(j + 1) * inputs].iter_mut().zip(x) {
            *gv += da * xv;
        }
    }
    loss
}
