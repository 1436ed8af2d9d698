//! Adaptive Gauss–Kronrod quadrature on panel lists, log-space integration of
//! positive integrands and half-line integrals with tail doubling.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Tolerances and truncation limits for improper integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Left end of the initial window of half-line integrals.
    pub y_min: f64,
    /// Right end of the initial window of half-line integrals.
    pub y_max: f64,
    /// Relative growth of a half-line integral on one doubling that is read as divergence.
    pub tail_growth: f64,
    /// Relative size of the last panel at which a half-line integral is accepted.
    pub tail_negligible: f64,
    pub max_doublings: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 0.0,
            max_subdivisions: 4000,
            y_min: 1e-4,
            y_max: 30.0,
            tail_growth: 0.01,
            tail_negligible: 1e-10,
            max_doublings: 400,
        }
    }
}

impl QuadratureConfig {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_y_max(mut self, y_max: f64) -> Self {
        self.y_max = y_max;
        self
    }
}

/// Value of an integral with its error estimate and the integral of the absolute value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub l1: f64,
    pub evaluations: usize,
}

impl Estimate {
    fn add(&mut self, other: &Estimate) {
        self.value += other.value;
        self.error += other.error;
        self.l1 += other.l1;
        self.evaluations += other.evaluations;
    }
}

/// Logarithm of a positive integral and its relative error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LnEstimate {
    pub ln_value: f64,
    pub rel_error: f64,
}

impl LnEstimate {
    pub fn value(&self) -> f64 {
        self.ln_value.exp()
    }
}

/// The 15 Kronrod nodes and weights on `[a, b]`.
pub(crate) fn kronrod_rule(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    (0..15).map(move |i| {
        let (j, sign) = if i < 7 { (i, -1.0) } else if i == 7 { (7, 0.0) } else { (14 - i, 1.0) };
        (c + sign * h * XGK[j], h * WGK[j])
    })
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    l1: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = (fc * WGK[7]).abs();
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kron += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kron;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let hw = h.abs();
    let value = kron * h;
    let asc = asc * hw;
    let abs = abs * hw;
    let mut error = ((kron - gauss) * h).abs();
    if asc != 0.0 && error != 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    if abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * abs);
    }
    Segment { a, b, value, error, l1: abs }
}

/// Integrates `f` over `[points[0], points[last]]`, starting from the panels given by the
/// sorted break points and bisecting the panel with the largest error until the total
/// error is within `max(abs_tol, rel_tol · ∫|f|)`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], cfg: &QuadratureConfig) -> Result<Estimate> {
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(gk15(&mut f, w[0], w[1]));
            evaluations += 15;
        }
    }
    let totals = |heap: &BinaryHeap<Segment>| {
        heap.iter().fold((0.0, 0.0, 0.0), |acc, s| (acc.0 + s.value, acc.1 + s.error, acc.2 + s.l1))
    };
    let mut splits = 0;
    loop {
        let (value, error, l1) = totals(&heap);
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature { value, error });
        }
        let target = cfg.abs_tol.max(cfg.rel_tol * l1);
        if error <= target || heap.is_empty() {
            return Ok(Estimate { value, error, l1, evaluations });
        }
        if splits >= cfg.max_subdivisions {
            return Err(Error::Quadrature { value, error });
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // panel no longer divisible in floating point; accept it as is
            let (value, error, l1) = totals(&heap);
            let total_error = error + worst.error;
            let value = value + worst.value;
            if total_error <= 10.0 * cfg.abs_tol.max(cfg.rel_tol * (l1 + worst.l1)) {
                return Ok(Estimate { value, error: total_error, l1: l1 + worst.l1, evaluations });
            }
            return Err(Error::Quadrature { value, error: total_error });
        }
        heap.push(gk15(&mut f, worst.a, mid));
        heap.push(gk15(&mut f, mid, worst.b));
        evaluations += 30;
        splits += 1;
    }
}

/// Maximum of a log-integrand over a few sample points per panel, used as the shift
/// that keeps `exp` in range.
fn log_shift<F: Fn(f64) -> f64>(ln_f: &F, points: &[f64]) -> f64 {
    let mut shift = f64::NEG_INFINITY;
    for w in points.windows(2) {
        for k in 0..=8 {
            let v = ln_f(w[0] + (w[1] - w[0]) * k as f64 / 8.0);
            if v.is_finite() || v == f64::INFINITY {
                shift = shift.max(v);
            }
        }
    }
    shift
}

/// A log-integrand of size `|shift|` is only known to about `|shift| ε` in absolute
/// terms, which bounds the relative accuracy of its exponential.
fn conditioned(cfg: &QuadratureConfig, shift: f64) -> QuadratureConfig {
    let mut c = *cfg;
    c.rel_tol = c.rel_tol.max(64.0 * f64::EPSILON * shift.abs());
    c
}

/// Integrates the positive function `exp(ln_f)` over the panels, returning the logarithm
/// of the integral. The integrand is shifted by its sampled maximum before exponentiation.
pub fn integrate_ln<F: Fn(f64) -> f64>(ln_f: F, points: &[f64], cfg: &QuadratureConfig) -> Result<LnEstimate> {
    let shift = log_shift(&ln_f, points);
    if shift == f64::NEG_INFINITY {
        return Ok(LnEstimate { ln_value: f64::NEG_INFINITY, rel_error: 0.0 });
    }
    let cfg = &conditioned(cfg, shift);
    let est = integrate(|w| (ln_f(w) - shift).exp(), points, cfg)?;
    Ok(LnEstimate { ln_value: shift + est.value.ln(), rel_error: est.error / est.value })
}

/// As [`integrate_ln`], then continues to the right of the last point with panels of
/// doubling width until a panel adds less than `cfg.tail_negligible` of the total.
pub fn integrate_ln_right_tail<F: Fn(f64) -> f64>(
    ln_f: F,
    points: &[f64],
    first_step: f64,
    cfg: &QuadratureConfig,
) -> Result<LnEstimate> {
    let shift = log_shift(&ln_f, points);
    if shift == f64::NEG_INFINITY {
        return Ok(LnEstimate { ln_value: f64::NEG_INFINITY, rel_error: 0.0 });
    }
    let cfg = &conditioned(cfg, shift);
    let g = |w: f64| (ln_f(w) - shift).exp();
    let mut total = integrate(g, points, cfg)?;
    let mut left = *points.last().expect("at least two points");
    let mut step = first_step;
    let mut quiet = 0;
    for _ in 0..cfg.max_doublings {
        let panel = integrate(g, &[left, left + step], cfg)?;
        total.add(&panel);
        if !total.value.is_finite() {
            return Err(Error::Quadrature { value: total.value, error: total.error });
        }
        if panel.l1 <= cfg.tail_negligible.min(0.1 * cfg.rel_tol) * total.l1 {
            quiet += 1;
            if quiet >= 2 {
                return Ok(LnEstimate { ln_value: shift + total.value.ln(), rel_error: total.error / total.value });
            }
        } else {
            quiet = 0;
        }
        left += step;
        step *= 2.0;
    }
    Err(Error::Quadrature { value: total.value, error: total.error })
}

/// Integral of `f` over `(0, ∞)`, computed in the variable `v = ln y`.
///
/// The core window is `[min(y_min, first break), max(y_max, last break)]`. It is extended
/// by doubling to the right and halving to the left. A doubling that adds more than
/// `tail_growth` of the running `∫|f|` without shrinking relative to the previous one, or
/// more than the whole running integral, is reported as divergence; the extension stops
/// when two consecutive panels add less than `tail_negligible` of it.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, breaks: &[f64], cfg: &QuadratureConfig) -> Result<Estimate> {
    let g = |v: f64| {
        let y = v.exp();
        let fy = f(y);
        if fy == 0.0 {
            0.0
        } else {
            fy * y
        }
    };
    let mut lo = cfg.y_min;
    let mut hi = cfg.y_max;
    for &b in breaks {
        if b > 0.0 && b.is_finite() {
            lo = lo.min(b);
            hi = hi.max(b);
        }
    }
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|b| *b > 0.0 && b.is_finite()).map(f64::ln).collect();
    pts.push(lo.ln());
    pts.push(hi.ln());
    // unit steps in ln y inside the core keep each starting panel moderately sized
    let mut v = lo.ln().ceil();
    while v < hi.ln() {
        pts.push(v);
        v += 1.0;
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    let mut total = integrate(g, &pts, cfg)?;
    let ln2 = std::f64::consts::LN_2;

    for direction in [1.0_f64, -1.0] {
        let mut edge = if direction > 0.0 { hi.ln() } else { lo.ln() };
        let mut quiet = 0;
        let mut settled = false;
        let mut previous = f64::INFINITY;
        for _ in 0..cfg.max_doublings {
            let next = edge + direction * ln2;
            let (a, b) = if direction > 0.0 { (edge, next) } else { (next, edge) };
            let mut panel_cfg = *cfg;
            panel_cfg.abs_tol = cfg.abs_tol.max(cfg.rel_tol * total.l1);
            let panel = match integrate(g, &[a, b], &panel_cfg) {
                Ok(p) => p,
                Err(Error::Quadrature { .. }) => {
                    return Err(Error::Inadmissible(format!(
                        "integrand not integrable near y = {:e}",
                        next.exp()
                    )))
                }
                Err(e) => return Err(e),
            };
            let growing = panel.l1 > cfg.tail_growth * total.l1.max(f64::MIN_POSITIVE);
            if !panel.l1.is_finite() || panel.l1 > total.l1 || (growing && panel.l1 >= previous) {
                return Err(Error::Inadmissible(format!(
                    "integral grows by {:.3e} of its value on [{:e}, {:e}]",
                    panel.l1 / total.l1,
                    a.exp(),
                    b.exp()
                )));
            }
            total.add(&panel);
            if panel.l1 <= cfg.tail_negligible * total.l1 {
                quiet += 1;
                if quiet >= 2 {
                    settled = true;
                    break;
                }
            } else {
                quiet = 0;
            }
            previous = panel.l1;
            edge = next;
        }
        if !settled {
            return Err(Error::Inadmissible(format!(
                "tail did not settle after {} doublings",
                cfg.max_doublings
            )));
        }
    }
    Ok(total)
}
