use super::softmax_xent;
use crate::scalar::Scalar;

pub(super) fn param_count(inputs: usize, classes: usize) -> usize {
    classes * inputs + classes
}

// layout: W [classes × inputs] row-major, then b [classes]
pub(super) fn logits<T: Scalar>(params: &[T], inputs: usize, classes: usize, x: &[T], z: &mut [T]) {
    let (w, b) = params.split_at(classes * inputs);
    for c in 0..classes {
        let row = &w[c * inputs..(c + 1) * inputs];
        let mut acc = b[c];
        for (&wv, &xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        z[c] = acc;
    }
}

pub(super) fn example<T: Scalar>(
    params: &[T],
    inputs: usize,
    classes: usize,
    x: &[T],
    y: usize,
    grad: Option<(&mut [T], T)>,
) -> T {
    let mut z = vec![T::zero(); classes];
    logits(params, inputs, classes, x, &mut z);
    let mut dz = vec![T::zero(); classes];
    let loss = softmax_xent(&z, y, &mut dz);
    if let Some((g, scale)) = grad {
        let (gw, gb) = g.split_at_mut(classes * inputs);
        for c in 0..classes {
            let d = dz[c] * scale;
            for (gv, &xv) in gw[c * inputs..(c + 1) * inputs].iter_mut().zip(x) {
                *gv += d * xv;
            }
            gb[c] += d;
        }
    }
    loss
}
