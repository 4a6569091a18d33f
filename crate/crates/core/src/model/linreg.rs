use crate::scalar::Scalar;

#[inline]
pub(super) fn predict<T: Scalar>(params: &[T], x: T) -> T {
    params[0] * x + params[1]
}

pub(super) fn example<T: Scalar>(params: &[T], x: T, y: T, grad: Option<(&mut [T], T)>) -> T {
    let r = predict(params, x) - y;
    if let Some((g, scale)) = grad {
        let d = (r + r) * scale;
        g[0] += d * x;
        g[1] += d;
    }
    r * r
}
