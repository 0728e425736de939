//! Arithmetic shared by direct evaluation and tape recording.
//!
//! Both paths call these functions so that recorded forward values are
//! bitwise equal to the unrecorded ones.

/// `base + h Σ c_j v_j`, summing terms in the given order.
pub fn combine<'v>(base: &[f64], h: f64, terms: impl Iterator<Item = (f64, &'v [f64])>) -> Vec<f64> {
    let mut acc = vec![0.0; base.len()];
    for (c, v) in terms {
        if c == 0.0 {
            continue;
        }
        for (a, vi) in acc.iter_mut().zip(v) {
            *a += c * vi;
        }
    }
    base.iter().zip(&acc).map(|(b, a)| b + h * a).collect()
}

/// `W x + b` with `W` stored row-major as `rows × x.len()`.
pub fn affine(w: &[f64], bias: Option<&[f64]>, x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| {
            let mut s = 0.0;
            for (wc, xc) in w[r * cols..(r + 1) * cols].iter().zip(x) {
                s += wc * xc;
            }
            match bias {
                Some(b) => s + b[r],
                None => s,
            }
        })
        .collect()
}

pub fn tanh(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

pub fn concat_time(x: &[f64], t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1);
    out.extend_from_slice(x);
    out.push(t);
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `max |a - b| / max |b|`, falling back to the absolute difference when
/// `b` vanishes.
pub fn relative_linf(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}
