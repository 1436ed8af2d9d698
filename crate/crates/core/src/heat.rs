//! The heat semigroup `e^{-tL}`: closed-form kernels, the eigenfunction series,
//! transforms, bound envelopes and the truncated maximal operator.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quadrature::{integrate_half_line, Estimate, QuadratureConfig};
use crate::special::{angle, eigenfunctions, lgamma, ln_bessel_scaled_parts, ln_bi_parts, bessel_crossover, SemigroupParams};
use crate::tabulated::ScalarFn;

/// Which closed form is used for a given time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeatForm {
    RForm,
    SForm,
}

/// The two time variables `r = e^{-2t}` and `s = tanh t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatParametrization {
    pub kind: HeatForm,
    pub t: f64,
    pub r: f64,
    pub s: f64,
}

impl HeatParametrization {
    /// The s-form is selected while `s ≤ 1/2`, the r-form afterwards.
    pub fn from_t(t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return domain(format!("time must be positive and finite, got {t}"));
        }
        let s = t.tanh();
        let kind = if s <= 0.5 { HeatForm::SForm } else { HeatForm::RForm };
        Ok(Self { kind, t, r: (-2.0 * t).exp(), s })
    }
}

/// `ln cosh t` without overflow.
fn ln_cosh(t: f64) -> f64 {
    t + (-2.0 * t).exp().ln_1p() - LN_2
}

/// Kernel in the `s = tanh t` variable.
fn ln_kernel_s(alpha: f64, mu: f64, t: f64, x: f64, y: f64) -> f64 {
    let s = t.tanh();
    let ln_1ms2 = -2.0 * ln_cosh(t);
    let ln_s = s.ln();
    let ln_z = ln_1ms2 + x.ln() + y.ln() - LN_2 - ln_s;
    let z = ln_z.exp();
    let d = x - y;
    let p = x + y;
    -2.0 * mu * t + 0.5 * (ln_1ms2 - LN_2 - ln_s) + ln_bi_parts(alpha, z, ln_z) - d * d / (4.0 * s) - 0.25 * s * p * p
}

/// Kernel in the `r = e^{-2t}` variable. For small Bessel arguments the powers of `r` are
/// collected into `r^{α+μ+1}`, which keeps `λ_0 t` exact for large `t`.
fn ln_kernel_r(alpha: f64, mu: f64, t: f64, x: f64, y: f64) -> f64 {
    let ln_r = -2.0 * t;
    let r = ln_r.exp();
    let one_m_r2 = -(2.0 * ln_r).exp_m1();
    let ln_1mr2 = one_m_r2.ln();
    let ln_z_over_r = LN_2 + x.ln() + y.ln() - ln_1mr2;
    let ln_z = ln_r + ln_z_over_r;
    let z = ln_z.exp();
    let d = x - r * y;
    let gauss = -d * d / one_m_r2 + 0.5 * (x * x - y * y);
    if z <= bessel_crossover(alpha) {
        let q = 0.25 * z * z;
        let mut term = 1.0_f64;
        let mut sum = 1.0_f64;
        let mut k = 0usize;
        loop {
            let kf = k as f64;
            term *= q / ((kf + 1.0) * (kf + alpha + 1.0));
            sum += term;
            k += 1;
            if (kf > 0.5 * z && term < 1e-17 * sum) || k > 10_000 {
                break;
            }
        }
        (alpha + mu + 1.0) * ln_r + 0.5 * (LN_2 - ln_1mr2) + (alpha + 0.5) * ln_z_over_r
            - alpha * LN_2
            - lgamma(alpha + 1.0)
            - z
            + sum.ln()
            + gauss
    } else {
        mu * ln_r + 0.5 * (LN_2 + ln_r - ln_1mr2) + 0.5 * ln_z + ln_bessel_scaled_parts(alpha, z, ln_z) + gauss
    }
}

/// The closed forms are symmetric only in exact arithmetic; evaluating on the ordered pair
/// makes the computed kernel symmetric too.
fn ordered(x: f64, y: f64) -> (f64, f64) {
    if x <= y {
        (x, y)
    } else {
        (y, x)
    }
}

pub(crate) fn ln_heat_kernel_raw(alpha: f64, mu: f64, t: f64, x: f64, y: f64) -> f64 {
    let (x, y) = ordered(x, y);
    // tanh t = 1/2 at t = atanh(1/2)
    if t <= 0.549_306_144_334_054_8 {
        ln_kernel_s(alpha, mu, t, x, y)
    } else {
        ln_kernel_r(alpha, mu, t, x, y)
    }
}

fn check_txy(t: f64, x: f64, y: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("time must be positive and finite, got {t}"));
    }
    if !(x > 0.0) || !(y > 0.0) || !x.is_finite() || !y.is_finite() {
        return domain(format!("kernel arguments must be positive, got ({x}, {y})"));
    }
    Ok(())
}

/// `ln e^{-tL}(x, y)`.
pub fn ln_heat_kernel(params: &SemigroupParams, t: f64, x: f64, y: f64) -> Result<f64> {
    check_txy(t, x, y)?;
    Ok(ln_heat_kernel_raw(params.alpha(), params.mu(), t, x, y))
}

/// `ln e^{-tL}(x, y)` with the closed form forced.
pub fn ln_heat_kernel_with(params: &SemigroupParams, form: HeatForm, t: f64, x: f64, y: f64) -> Result<f64> {
    check_txy(t, x, y)?;
    let (x, y) = ordered(x, y);
    Ok(match form {
        HeatForm::SForm => ln_kernel_s(params.alpha(), params.mu(), t, x, y),
        HeatForm::RForm => ln_kernel_r(params.alpha(), params.mu(), t, x, y),
    })
}

/// The heat kernel `e^{-tL}(x, y)`.
pub fn heat_kernel(params: &SemigroupParams, t: f64, x: f64, y: f64) -> Result<f64> {
    ln_heat_kernel(params, t, x, y).map(f64::exp)
}

/// Partial sum of the eigenfunction expansion with a bound on the omitted terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    /// `sup_{n>n_max} |φ_n(x)φ_n(y)| · e^{-λ_{n_max+1} t} / (1 - e^{-4t})`, the sup taken
    /// over `n_max < n ≤ 2 n_max + 20`.
    pub tail_bound: f64,
    /// Floating-point bound `(n_max+1) ε Σ|terms|` on the summation itself.
    pub rounding_bound: f64,
}

/// `Σ_{n ≤ n_max} e^{-λ_n t} φ_n(x) φ_n(y)`.
pub fn heat_kernel_series(params: &SemigroupParams, t: f64, x: f64, y: f64, n_max: usize) -> Result<SeriesValue> {
    check_txy(t, x, y)?;
    let window = 2 * n_max + 20;
    let px = eigenfunctions(params.alpha(), window, x)?;
    let py = eigenfunctions(params.alpha(), window, y)?;
    let mut value = 0.0;
    let mut abs = 0.0;
    for n in 0..=n_max {
        let term = (-params.eigenvalue(n) * t).exp() * px[n] * py[n];
        value += term;
        abs += term.abs();
    }
    let sup = (n_max + 1..=window).map(|n| (px[n] * py[n]).abs()).fold(0.0, f64::max);
    let tail_bound = sup * (-params.eigenvalue(n_max + 1) * t).exp() / (-(-4.0 * t).exp_m1());
    let rounding_bound = (n_max as f64 + 1.0) * f64::EPSILON * abs;
    Ok(SeriesValue { value, tail_bound, rounding_bound })
}

/// Break points placing quadrature panels around the gaussian peak at `y = x`.
pub(crate) fn peak_breaks(x: f64, width: f64) -> Vec<f64> {
    let mut b = vec![x];
    for k in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
        let d = k * width;
        b.push(x + d);
        if x - d > 0.0 {
            b.push(x - d);
        }
    }
    b
}

/// `e^{-tL} f(x) = ∫_0^∞ e^{-tL}(x, y) f(y) dy`.
pub fn heat_transform(params: &SemigroupParams, t: f64, f: &dyn ScalarFn, x: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    check_txy(t, x, x)?;
    let s = t.tanh();
    let mut breaks = peak_breaks(x, (2.0 * s).sqrt());
    breaks.extend(f.breakpoints());
    let (a, m) = (params.alpha(), params.mu());
    integrate_half_line(
        |y| {
            let (sg, lf) = f.eval(y);
            if sg == 0.0 {
                0.0
            } else {
                sg * (ln_heat_kernel_raw(a, m, t, x, y) + lf).exp()
            }
        },
        &breaks,
        cfg,
    )
}

/// Local/global region of the heat bound envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Local,
    Global,
}

/// Parameters of the two-region heat envelope: `γ > 1` and `M` with `(M/(M-1))³ = γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatBoundEnvelope {
    pub gamma: f64,
    pub big_m: f64,
}

impl HeatBoundEnvelope {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return domain(format!("gamma must exceed 1, got {gamma}"));
        }
        Ok(Self { gamma, big_m: 1.0 / (1.0 - gamma.powf(-1.0 / 3.0)) })
    }

    /// `c(x) = 1/⟨x⟩^{α+3/2}`.
    pub fn c_of_x(&self, alpha: f64, x: f64) -> f64 {
        angle(x).powf(-(alpha + 1.5))
    }
}

/// Logarithm of the envelope and the region it was taken from.
pub fn ln_heat_bound_envelope(params: &SemigroupParams, env: &HeatBoundEnvelope, t: f64, x: f64, y: f64) -> Result<(f64, Region)> {
    check_txy(t, x, y)?;
    if params.mu() != 0.0 {
        return domain(format!("the heat envelope is stated for mu = 0, got {}", params.mu()));
    }
    let a = params.alpha();
    let s = t.tanh();
    if 0.5 * x <= y && y <= env.big_m * x {
        let d = x - y;
        let v = -d * d / (4.0 * s) - 0.5 * s.ln() + (a + 0.5) * angle(x * y / s).ln();
        Ok((v, Region::Local))
    } else {
        let v = -(a + 1.5) * angle(x).ln() + (a + 0.5) * angle(y).ln() - y * y / (2.0 * env.gamma * (2.0 * t).tanh());
        Ok((v, Region::Global))
    }
}

/// Right-hand side of the two-region heat bound without its constant.
pub fn heat_bound_envelope(params: &SemigroupParams, env: &HeatBoundEnvelope, t: f64, x: f64, y: f64) -> Result<(f64, Region)> {
    ln_heat_bound_envelope(params, env, t, x, y).map(|(v, r)| (v.exp(), r))
}

/// `ln φ_T(y) = (α+1/2) ln⟨y⟩ - y²/(2 tanh 2T)`, the decay profile that makes heat
/// integrals up to time `T` finite.
pub fn ln_phi_heat(params: &SemigroupParams, big_t: f64, y: f64) -> f64 {
    (params.alpha() + 0.5) * angle(y).ln() - y * y / (2.0 * (2.0 * big_t).tanh())
}

/// `n` geometric points per decade covering `[t0·10^{-decades}, t0]`, ending at `t0`.
pub fn time_grid(t0: f64, decades: f64, per_decade: usize) -> Vec<f64> {
    let n = (decades * per_decade as f64).round() as usize;
    (0..=n).map(|i| t0 * 10f64.powf(-decades * (n - i) as f64 / n as f64)).collect()
}

/// Maximum of `|g|` over a time grid, refined once at the geometric midpoints next to
/// the best grid point. Returns `(t, value)`.
pub fn sup_over_times<G: FnMut(f64) -> Result<f64>>(t_grid: &[f64], mut g: G) -> Result<(f64, f64)> {
    if t_grid.is_empty() {
        return domain("empty time grid");
    }
    let mut best = (t_grid[0], f64::NEG_INFINITY);
    let mut best_i = 0;
    for (i, &t) in t_grid.iter().enumerate() {
        let v = g(t)?.abs();
        if v > best.1 {
            best = (t, v);
            best_i = i;
        }
    }
    let mut extra = Vec::new();
    if best_i > 0 {
        extra.push((t_grid[best_i - 1] * t_grid[best_i]).sqrt());
    }
    if best_i + 1 < t_grid.len() {
        extra.push((t_grid[best_i + 1] * t_grid[best_i]).sqrt());
    }
    for t in extra {
        let v = g(t)?.abs();
        if v > best.1 {
            best = (t, v);
        }
    }
    Ok(best)
}

pub(crate) fn check_grid(t0: f64, t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return domain("empty time grid");
    }
    if t_grid.iter().any(|&t| !(t > 0.0) || t > t0 * (1.0 + 1e-12)) {
        return domain(format!("time grid must lie in (0, {t0}]"));
    }
    Ok(())
}

/// `max_{t ∈ grid} |e^{-tL} f(x)|`, a lower approximation of `sup_{0<t≤t0} |e^{-tL} f(x)|`.
pub fn heat_maximal(
    params: &SemigroupParams,
    t0: f64,
    f: &dyn ScalarFn,
    x: f64,
    t_grid: &[f64],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    check_grid(t0, t_grid)?;
    let mut best = 0.0_f64;
    for &t in t_grid {
        best = best.max(heat_transform(params, t, f, x, cfg)?.value.abs());
    }
    Ok(best)
}



#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabulated::Analytic;

    fn p(a: f64, m: f64) -> SemigroupParams {
        SemigroupParams::new(a, m, 0.5).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn reference_values() {
        // 40-digit evaluations of the closed form
        let cases = [
            (0.0, 0.0, 0.5, 1.0, 1.0, 0.27224638780563377448),
            (1.5, 0.5, 0.3, 0.8, 1.7, 0.064761112286585929336),
            (-0.75, 0.0, 0.05, 0.3, 0.35, 1.1096579176355413088),
            (1.5, -2.5, 5.0, 2.0, 3.0, 0.081429574943409134310),
            (0.0, 0.0, 0.01, 20.0, 20.1, 0.039444783081738458998),
        ];
        for (a, m, t, x, y, want) in cases {
            let got = heat_kernel(&p(a, m), t, x, y).unwrap();
            assert!(rel(got, want) < 1e-11, "{a} {m} {t} {x} {y}: {got} vs {want}");
        }
    }

    #[test]
    fn forms_agree() {
        for (a, m) in [(-0.75, 0.0), (0.0, 0.5), (1.5, -2.5), (3.0, 1.0)] {
            let q = p(a, m);
            for t in [0.1, 0.5493061443340548, 1.2] {
                for (x, y) in [(0.1, 0.2), (1.0, 1.3), (3.0, 2.5), (0.01, 5.0)] {
                    let s = ln_heat_kernel_with(&q, HeatForm::SForm, t, x, y).unwrap();
                    let r = ln_heat_kernel_with(&q, HeatForm::RForm, t, x, y).unwrap();
                    assert!((s - r).abs() < 1e-10 * s.abs().max(1.0), "{a} {m} {t} {x} {y}: {s} {r}");
                }
            }
        }
    }

    #[test]
    fn symmetric_and_positive() {
        let q = p(0.3, 0.2);
        for t in [0.01, 0.3, 2.0, 40.0] {
            assert_eq!(heat_kernel(&q, t, 2.0, 3.0).unwrap(), heat_kernel(&q, t, 3.0, 2.0).unwrap());
            assert!(heat_kernel(&q, t, 0.2, 1.5).unwrap() > 0.0);
            assert!(ln_heat_kernel(&q, t, 0.2, 7.0).unwrap().is_finite());
        }
        assert!(heat_kernel(&q, 0.0, 1.0, 1.0).is_err());
        assert!(heat_kernel(&q, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn large_time_follows_ground_state() {
        let q = p(1.5, -2.5);
        let v = heat_kernel(&q, 400.0, 1.0, 2.0).unwrap();
        let g = (crate::special::ln_phi0(1.5, 1.0) + crate::special::ln_phi0(1.5, 2.0)).exp();
        assert!(rel(v, g) < 1e-12);
        let q = p(0.0, 0.0);
        let v = ln_heat_kernel(&q, 400.0, 1.0, 2.0).unwrap();
        let g = -800.0 + crate::special::ln_phi0(0.0, 1.0) + crate::special::ln_phi0(0.0, 2.0);
        assert!((v - g).abs() < 1e-12);
    }

    #[test]
    fn series_matches_closed_form() {
        let q = p(0.0, 0.0);
        let s = heat_kernel_series(&q, 0.5, 1.0, 1.0, 60).unwrap();
        assert!(rel(s.value, heat_kernel(&q, 0.5, 1.0, 1.0).unwrap()) < 1e-9);
        let q = p(1.5, 0.5);
        let s = heat_kernel_series(&q, 0.3, 0.8, 1.7, 80).unwrap();
        let c = heat_kernel(&q, 0.3, 0.8, 1.7).unwrap();
        assert!((s.value - c).abs() <= (1e-9 * c).max(s.tail_bound + s.rounding_bound));
        let s = heat_kernel_series(&q, 5.0, 0.8, 1.7, 0).unwrap();
        assert!(rel(s.value, heat_kernel(&q, 5.0, 0.8, 1.7).unwrap()) < 1e-6);
    }

    #[test]
    fn tail_bound_decreases() {
        let q = p(-0.5, 0.0);
        let mut last = f64::INFINITY;
        for n in [0, 5, 10, 20, 40] {
            let s = heat_kernel_series(&q, 0.2, 0.7, 1.1, n).unwrap();
            assert!(s.tail_bound <= last);
            last = s.tail_bound;
        }
    }

    #[test]
    fn envelope_regions() {
        let q = p(0.0, 0.0);
        let env = HeatBoundEnvelope::new(2.0).unwrap();
        assert!(env.big_m > 1.0);
        assert!(((env.big_m / (env.big_m - 1.0)).powi(3) - 2.0).abs() < 1e-12);
        assert!(HeatBoundEnvelope::new(3.0).unwrap().big_m < env.big_m);
        assert_eq!(heat_bound_envelope(&q, &env, 0.2, 1.0, 0.4).unwrap().1, Region::Global);
        assert_eq!(heat_bound_envelope(&q, &env, 0.2, 1.0, 1.0).unwrap().1, Region::Local);
        assert!(heat_bound_envelope(&p(0.0, 1.0), &env, 0.2, 1.0, 1.0).is_err());
    }

    #[test]
    fn transform_of_ground_state() {
        let q = p(0.0, 0.0);
        let cfg = QuadratureConfig::default();
        let f = Analytic::positive(|y| crate::special::ln_phi0(0.0, y));
        for t in [0.05, 0.7] {
            let got = heat_transform(&q, t, &f, 1.3, &cfg).unwrap().value;
            let want = (-q.eigenvalue(0) * t).exp() * f.value(1.3);
            assert!(rel(got, want) < 1e-7, "t={t}: {got} vs {want}");
        }
        assert_eq!(heat_transform(&q, 0.3, &Analytic::zero(), 1.0, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn time_grid_shape() {
        let g = time_grid(0.5, 2.0, 64);
        assert_eq!(g.len(), 129);
        assert!((g[0] - 0.005).abs() < 1e-15 && g[128] == 0.5);
        let (t, v) = sup_over_times(&g, |t| Ok(-(-(t / 0.1).ln().powi(2)).exp())).unwrap();
        assert!(v > 0.999 && (t - 0.1).abs() < 0.01);
        assert!(sup_over_times(&[], |_| Ok(0.0)).is_err());
    }
}
