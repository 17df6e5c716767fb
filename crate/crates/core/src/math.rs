//! Small numeric helpers. `libm` stands in for the `std` float methods.

/// A 2D vector, `[x, y]`.
pub type Vec2 = [f64; 2];

#[inline]
pub(crate) fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn norm(a: Vec2) -> f64 {
    libm::sqrt(dot(a, a))
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn powf(x: f64, e: f64) -> f64 {
    libm::pow(x, e)
}

pub(crate) fn all_finite(v: &[Vec2]) -> bool {
    v.iter().all(|p| p[0].is_finite() && p[1].is_finite())
}

pub(crate) fn max_norm(v: &[Vec2]) -> f64 {
    v.iter().map(|&p| norm(p)).fold(0.0, f64::max)
}
