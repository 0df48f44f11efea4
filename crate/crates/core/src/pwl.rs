//! Piecewise-linear evaluation over sorted knots.

/// Where `x` falls relative to knots `xs` (strictly increasing, non-empty).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Locate {
    Knot(usize),
    /// Strictly between knots `i` and `i + 1`.
    Between(usize),
    Below,
    Above,
}

pub(crate) fn locate(xs: &[f64], x: f64) -> Locate {
    debug_assert!(!xs.is_empty());
    if x < xs[0] {
        return Locate::Below;
    }
    if x > xs[xs.len() - 1] {
        return Locate::Above;
    }
    let i = xs.partition_point(|&k| k < x);
    if xs[i] == x {
        Locate::Knot(i)
    } else {
        Locate::Between(i - 1)
    }
}

/// Linear interpolation on the segment `[x0, x1]`.
#[inline]
pub(crate) fn lerp(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    y0 + (y1 - y0) * ((x - x0) / (x1 - x0))
}
