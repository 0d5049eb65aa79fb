//! LPC <-> line spectral frequency conversion.
//!
//! `A(z)` is split into the symmetric and antisymmetric polynomials
//! `Q(z) = A(z) + z^-(p+1) A(1/z)` and `P(z) = A(z) - z^-(p+1) A(1/z)`, whose
//! non-trivial unit-circle roots interleave and form the LSFs. Roots are
//! located on a uniform angular grid and refined by bisection.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::signal::LpcModel;

/// Minimum spacing enforced by [`stabilize_lsf`], in radians.
pub const MIN_GAP: f64 = 1e-4;

const GRID_POINTS: usize = 4096;
const MAX_GRID_POINTS: usize = 1 << 16;
// Slack for comparisons against MIN_GAP so that stabilisation is idempotent.
const GAP_SLACK: f64 = 1e-12;

/// Strictly increasing angles in `(0, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsfVector(Vec<f64>);

impl LsfVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let in_range = values.iter().all(|&w| w > 0.0 && w < PI);
        let increasing = values.windows(2).all(|w| w[0] < w[1]);
        if !in_range || !increasing {
            return Err(Error::NotOrdered);
        }
        Ok(LsfVector(values))
    }

    /// The LSFs of the all-zero predictor, `k pi / (p + 1)`.
    pub fn uniform(order: usize) -> Self {
        LsfVector(
            (1..=order)
                .map(|k| k as f64 * PI / (order + 1) as f64)
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min_gap(&self) -> f64 {
        self.0
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(self.0.first().copied().unwrap_or(PI), f64::min)
            .min(self.0.last().map_or(PI, |w| PI - w))
    }
}

/// Evaluates the symmetric polynomial `c_0 .. c_2m` on the unit circle with the
/// linear phase removed: `c_m + 2 sum_i c_i cos((m - i) w)`.
fn symmetric_response(c: &[f64], omega: f64) -> f64 {
    let m = c.len() / 2;
    let two_cos = 2.0 * omega.cos();
    // cos(k w) by the Chebyshev recurrence.
    let (mut prev, mut cur) = (1.0, omega.cos());
    let mut acc = c[m];
    for k in 1..=m {
        if k > 1 {
            let next = two_cos * cur - prev;
            prev = cur;
            cur = next;
        }
        acc += 2.0 * c[m - k] * cur;
    }
    acc
}

/// Symmetric and antisymmetric parts with their trivial roots divided out.
/// Returns `(q, p)`, both symmetric with even degree.
fn deflated_polynomials(model: &LpcModel) -> (Vec<f64>, Vec<f64>) {
    let order = model.order();
    let mut a = model.polynomial();
    a.push(0.0);
    let n = order + 2;
    let sym: Vec<f64> = (0..n).map(|i| a[i] + a[n - 1 - i]).collect();
    let anti: Vec<f64> = (0..n).map(|i| a[i] - a[n - 1 - i]).collect();
    if order.is_multiple_of(2) {
        // Q / (1 + z^-1), P / (1 - z^-1)
        let mut q = vec![0.0; n - 1];
        let mut p = vec![0.0; n - 1];
        for i in 0..n - 1 {
            q[i] = sym[i] - if i > 0 { q[i - 1] } else { 0.0 };
            p[i] = anti[i] + if i > 0 { p[i - 1] } else { 0.0 };
        }
        (q, p)
    } else {
        // Q keeps degree p + 1, P / (1 - z^-2)
        let mut p = vec![0.0; n - 2];
        for i in 0..n - 2 {
            p[i] = anti[i] + if i > 1 { p[i - 2] } else { 0.0 };
        }
        (sym, p)
    }
}

fn roots_on_grid(c: &[f64], grid: usize) -> Vec<f64> {
    let step = PI / grid as f64;
    let mut roots = Vec::with_capacity(c.len() / 2);
    let mut prev_w = 0.0;
    let mut prev_v = symmetric_response(c, 0.0);
    if prev_v == 0.0 {
        roots.push(0.0);
    }
    for j in 1..=grid {
        let w = j as f64 * step;
        let v = symmetric_response(c, w);
        if v == 0.0 {
            roots.push(w);
        } else if prev_v * v < 0.0 {
            let (mut lo, mut hi, mut lo_v) = (prev_w, w, prev_v);
            // Bisect to machine precision: paired P and Q roots of poles near
            // the unit circle can be closer than any fixed tolerance.
            loop {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let mv = symmetric_response(c, mid);
                if mv == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (mv < 0.0) == (lo_v < 0.0) {
                    lo = mid;
                    lo_v = mv;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_w = w;
        prev_v = v;
    }
    roots
}

pub fn lpc_to_lsf(model: &LpcModel) -> Result<LsfVector> {
    if !model.is_stable() {
        return Err(Error::UnstableFilter);
    }
    let order = model.order();
    let (q, p) = deflated_polynomials(model);
    let (want_q, want_p) = (q.len() / 2, p.len() / 2);
    let mut grid = GRID_POINTS;
    let (q_roots, p_roots) = loop {
        let qr = roots_on_grid(&q, grid);
        let pr = roots_on_grid(&p, grid);
        if qr.len() == want_q && pr.len() == want_p {
            break (qr, pr);
        }
        // Closely spaced roots can share one grid cell; refine before giving up.
        if grid >= MAX_GRID_POINTS {
            return Err(Error::RootCountError {
                found: qr.len() + pr.len(),
                expected: order,
            });
        }
        grid *= 4;
    };
    let mut lsf = Vec::with_capacity(order);
    for i in 0..want_q {
        lsf.push(q_roots[i]);
        if i < want_p {
            lsf.push(p_roots[i]);
        }
    }
    LsfVector::new(lsf)
}

fn multiply(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn from_conjugate_roots<'a>(angles: impl Iterator<Item = &'a f64>) -> Vec<f64> {
    angles.fold(vec![1.0], |acc, w| multiply(&acc, &[1.0, -2.0 * w.cos(), 1.0]))
}

/// Rebuilds the predictor as `A(z) = (P(z) + Q(z)) / 2`.
pub fn lsf_to_lpc(lsf: &LsfVector, residual_gain: f64) -> Result<LpcModel> {
    let values = LsfVector::new(lsf.values().to_vec())?.into_inner();
    let order = values.len();
    let q_prime = from_conjugate_roots(values.iter().step_by(2));
    let p_prime = from_conjugate_roots(values.iter().skip(1).step_by(2));
    let (q, p) = if order % 2 == 0 {
        (multiply(&q_prime, &[1.0, 1.0]), multiply(&p_prime, &[1.0, -1.0]))
    } else {
        (q_prime, multiply(&p_prime, &[1.0, 0.0, -1.0]))
    };
    let coeffs = (1..=order).map(|k| -0.5 * (p[k] + q[k])).collect();
    Ok(LpcModel {
        coeffs,
        residual_gain,
    })
}

/// Repairs an estimated LSF vector: clamp into `[d, pi - d]`, sort, then push
/// neighbours apart to a gap of at least `d = MIN_GAP`.
pub fn stabilize_lsf(raw: &[f64]) -> LsfVector {
    let order = raw.len();
    let lo = MIN_GAP;
    let hi = PI - MIN_GAP;
    let mut v: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            if w.is_finite() {
                w.clamp(lo, hi)
            } else {
                (k + 1) as f64 * PI / (order + 1) as f64
            }
        })
        .collect();
    v.sort_by(f64::total_cmp);
    for i in 1..order {
        if v[i] - v[i - 1] < MIN_GAP - GAP_SLACK {
            v[i] = v[i - 1] + MIN_GAP;
        }
    }
    if order > 0 && v[order - 1] > hi {
        v[order - 1] = hi;
        for i in (0..order - 1).rev() {
            if v[i + 1] - v[i] < MIN_GAP - GAP_SLACK {
                v[i] = v[i + 1] - MIN_GAP;
            }
        }
    }
    LsfVector(v)
}
