//! The Poisson semigroup obtained by subordination:
//! `P_t(x,y) = t^{2ν}/(4^ν Γ(ν)) ∫_0^∞ e^{-t²/4u} e^{-uL}(x,y) u^{-1-ν} du`.
//!
//! The `u`-integral is computed in `w = ln u` in log space. Panels are placed at the
//! gaussian peak, at `u = t²/4` and at `u_0 = ½ ln(1/r_0)`, the point separating the
//! two regions of the kernel estimates.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::heat::{ln_heat_kernel_raw, sup_over_times};
use crate::quadrature::{integrate_half_line, integrate_ln, integrate_ln_right_tail, Estimate, LnEstimate, QuadratureConfig};
use crate::report::{relative_change, BoundReport, BoundRow, STABILITY_LIMIT};
use crate::special::{angle, lgamma, SemigroupParams};
use rayon::prelude::*;

use crate::tabulated::{Extension, ScalarFn, TabulatedFunction};
use crate::transference::SystemKind;

fn ln_log_factor(params: &SemigroupParams, y: f64) -> f64 {
    params.log_power() * (std::f64::consts::E + y).ln().ln()
}

/// `ln Φ` as listed for each system in the table of decay functions.
pub(crate) fn ln_table_phi(system: SystemKind, params: &SemigroupParams, y: f64) -> f64 {
    let (a, mu) = (params.alpha(), params.mu());
    let ly = y.ln();
    let l1 = y.ln_1p();
    let lg = ln_log_factor(params, y);
    match system {
        SystemKind::BasePhi => (a + 0.5) * ly - 0.5 * y * y - (1.0 + a + mu) * l1 - lg,
        SystemKind::Psi => (2.0 * a + 1.0) * ly - 0.5 * y * y - (1.0 + a + mu) * l1 - lg,
        SystemKind::FrakL => 0.5 * a * ly - 0.5 * y - 0.5 * (1.0 + a + mu) * l1 - lg,
        SystemKind::SmallEll => a * ly - 0.5 * y - 0.5 * (1.0 + a + mu) * l1 - lg,
        SystemKind::LaguerrePoly => a * ly - y - params.m() * l1 - lg,
    }
}

/// `ln Φ(y)`. For the base system
/// `Φ(y) = ⟨y⟩^{α+1/2} e^{-y²/2} / [(1+y)^{μ+1/2} log(y+e)^{1+ν}]`; the other systems use
/// their table entries. In the extreme case `μ = -(α+1)` the log power is `ν`.
pub(crate) fn ln_phi_raw(system: SystemKind, params: &SemigroupParams, y: f64) -> f64 {
    match system {
        SystemKind::BasePhi => {
            (params.alpha() + 0.5) * angle(y).ln() - 0.5 * y * y - (params.mu() + 0.5) * y.ln_1p() - ln_log_factor(params, y)
        }
        _ => ln_table_phi(system, params, y),
    }
}

fn check_y(y: f64) -> Result<()> {
    if !(y > 0.0) || !y.is_finite() {
        return domain(format!("Φ is defined for y > 0, got {y}"));
    }
    Ok(())
}

pub fn ln_phi(system: SystemKind, params: &SemigroupParams, y: f64) -> Result<f64> {
    check_y(y)?;
    Ok(ln_phi_raw(system, params, y))
}

/// The decay function `Φ` of a system.
pub fn phi(system: SystemKind, params: &SemigroupParams, y: f64) -> Result<f64> {
    ln_phi(system, params, y).map(f64::exp)
}

/// The literal table entry for `Φ`, including the base row
/// `y^{α+1/2} e^{-y²/2} / [(1+y)^{1+α+μ} ln(e+y)^{1+ν}]`.
pub fn table_phi(system: SystemKind, params: &SemigroupParams, y: f64) -> Result<f64> {
    check_y(y)?;
    Ok(ln_table_phi(system, params, y).exp())
}

/// `Φ` of a system as a function object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiWeight {
    pub system: SystemKind,
    pub params: SemigroupParams,
}

impl PhiWeight {
    pub fn new(system: SystemKind, params: SemigroupParams) -> Self {
        Self { system, params }
    }

    pub fn log_value_at(&self, y: f64) -> f64 {
        ln_phi_raw(self.system, &self.params, y)
    }
}

impl ScalarFn for PhiWeight {
    fn eval(&self, y: f64) -> (f64, f64) {
        (1.0, self.log_value_at(y))
    }
}

/// `F_t(λ) = Γ(ν)^{-1} ∫_0^∞ e^{-v - t²λ/(4v)} v^{ν-1} dv`, the factor by which `P_t`
/// acts on an eigenfunction with eigenvalue `λ`.
pub fn subordination_multiplier(nu: f64, t: f64, lambda: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return domain(format!("nu must be positive, got {nu}"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return domain(format!("lambda must be non-negative, got {lambda}"));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return domain(format!("t must be non-negative, got {t}"));
    }
    if t == 0.0 || lambda == 0.0 {
        return Ok(1.0);
    }
    let b = 0.25 * t * t * lambda;
    let lg = lgamma(nu);
    let w_star = (0.5 * (nu + (nu * nu + 4.0 * b).sqrt())).ln();
    let w_lo = (b.ln() - 6.0).max(w_star - 60.0 / nu - 5.0);
    let w_hi = w_star.max(0.0) + 5.0;
    let mut pts = vec![w_lo];
    let mut w = w_lo.ceil();
    while w < w_hi {
        if w > w_lo {
            pts.push(w);
        }
        w += 1.0;
    }
    pts.push(w_star);
    pts.push(w_hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let cfg = QuadratureConfig::default().with_rel_tol(1e-13);
    let est = integrate_ln(|w| -w.exp() - b * (-w).exp() + nu * w - lg, &pts, &cfg)?;
    Ok(est.ln_value.exp())
}

/// `r_0` separating the two regions of the kernel estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPoint {
    pub xy: f64,
    pub r0: f64,
}

impl SplitPoint {
    pub fn new(xy: f64) -> Result<Self> {
        if !(xy > 0.0) || !xy.is_finite() {
            return domain(format!("xy must be positive, got {xy}"));
        }
        let r0 = if xy >= 1.0 { 1.0 / (2.0 * xy) } else { 1.0 - 0.5 * xy };
        Ok(Self { xy, r0 })
    }

    /// `u_0 = ½ ln(1/r_0)`, the same point in the heat time variable.
    pub fn u0(&self) -> f64 {
        -0.5 * self.r0.ln()
    }
}

fn check_kernel_args(t: f64, x: f64, y: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("t must be positive, got {t}"));
    }
    if !(x > 0.0) || !(y > 0.0) || !x.is_finite() || !y.is_finite() {
        return domain(format!("kernel arguments must be positive, got ({x}, {y})"));
    }
    Ok(())
}

/// `ln(t^{2ν}/(4^ν Γ(ν)))`.
fn ln_prefactor(nu: f64, t: f64) -> f64 {
    2.0 * nu * t.ln() - 2.0 * nu * LN_2 - lgamma(nu)
}

struct Subordinand {
    alpha: f64,
    mu: f64,
    nu: f64,
    t: f64,
    x: f64,
    y: f64,
}

impl Subordinand {
    fn new(params: &SemigroupParams, t: f64, x: f64, y: f64) -> Self {
        Self { alpha: params.alpha(), mu: params.mu(), nu: params.nu(), t, x, y }
    }

    /// Log of the integrand in `w = ln u`, without the prefactor.
    fn ln_at(&self, w: f64) -> f64 {
        let u = w.exp();
        if u == 0.0 || !u.is_finite() {
            return f64::NEG_INFINITY;
        }
        -self.t * self.t / (4.0 * u) + ln_heat_kernel_raw(self.alpha, self.mu, u, self.x, self.y) - self.nu * w
    }

    /// Panel points in `w` and `ln u_0`.
    fn points(&self) -> (Vec<f64>, f64) {
        let (t, x, y, nu) = (self.t, self.x, self.y, self.nu);
        let d2 = (x - y) * (x - y);
        let a = t * t + d2;
        let w_pk = (a / (4.0 * nu + 2.0)).ln();
        let ln_u0 = SplitPoint::new(x * y).map(|s| s.u0().ln()).unwrap_or(0.0);
        let ln_t24 = (0.25 * t * t).ln();
        let w_lo = (t * t / 3000.0).ln().min((a / 3000.0).ln());
        let w_hi = w_pk.min(20f64.ln()).max(ln_u0).max(ln_t24).max(0.55f64.ln()) + 3.0;
        let mut pts = vec![w_lo, w_hi, ln_u0, ln_t24, 0.549_306_144_334_054_8f64.ln()];
        for k in [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
            pts.push(w_pk + k);
        }
        let mut w = w_lo.ceil();
        while w < w_hi {
            pts.push(w);
            w += 1.0;
        }
        pts.retain(|p| *p >= w_lo && *p <= w_hi);
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        (pts, ln_u0)
    }
}

fn accept(est: LnEstimate, cfg: &QuadratureConfig) -> Result<LnEstimate> {
    // ln P itself carries a rounding error of about |ln P| ε
    let floor = 64.0 * f64::EPSILON * est.ln_value.abs();
    if !est.ln_value.is_finite() && est.ln_value != f64::NEG_INFINITY || est.rel_error > 10.0 * cfg.rel_tol.max(1e-14) + floor {
        return Err(Error::Quadrature { value: est.ln_value.exp(), error: est.rel_error * est.ln_value.exp() });
    }
    Ok(est)
}

/// `ln P_t(x, y)` with the relative error estimate of the subordination quadrature.
pub fn ln_poisson_kernel(params: &SemigroupParams, t: f64, x: f64, y: f64, cfg: &QuadratureConfig) -> Result<LnEstimate> {
    check_kernel_args(t, x, y)?;
    Ok(ln_poisson_kernel_raw(params, t, x, y, cfg)?)
}

pub(crate) fn ln_poisson_kernel_raw(params: &SemigroupParams, t: f64, x: f64, y: f64, cfg: &QuadratureConfig) -> Result<LnEstimate> {
    let s = Subordinand::new(params, t, x, y);
    let (pts, _) = s.points();
    let est = accept(integrate_ln_right_tail(|w| s.ln_at(w), &pts, 1.0, cfg)?, cfg)?;
    Ok(LnEstimate { ln_value: est.ln_value + ln_prefactor(params.nu(), t), rel_error: est.rel_error })
}

/// The Poisson kernel `P_t(x, y)`.
pub fn poisson_kernel(params: &SemigroupParams, t: f64, x: f64, y: f64, cfg: &QuadratureConfig) -> Result<f64> {
    Ok(ln_poisson_kernel(params, t, x, y, cfg)?.value())
}

/// The two parts of `P_t(x,y)`: `B` from `r < r_0` (large heat times) and `A` from
/// `r > r_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitParts {
    pub r0: f64,
    pub ln_b: f64,
    pub ln_a: f64,
    pub rel_error: f64,
}

impl SplitParts {
    pub fn b_part(&self) -> f64 {
        self.ln_b.exp()
    }

    pub fn a_part(&self) -> f64 {
        self.ln_a.exp()
    }
}

pub fn poisson_split(params: &SemigroupParams, t: f64, x: f64, y: f64, cfg: &QuadratureConfig) -> Result<SplitParts> {
    check_kernel_args(t, x, y)?;
    let s = Subordinand::new(params, t, x, y);
    let (pts, ln_u0) = s.points();
    let mut a_pts: Vec<f64> = pts.iter().copied().filter(|p| *p < ln_u0).collect();
    if a_pts.is_empty() {
        a_pts.push(ln_u0 - 40.0);
    }
    a_pts.push(ln_u0);
    let mut b_pts = vec![ln_u0];
    b_pts.extend(pts.iter().copied().filter(|p| *p > ln_u0));
    if b_pts.len() < 2 {
        b_pts.push(ln_u0 + 1.0);
    }
    let a = accept(integrate_ln(|w| s.ln_at(w), &a_pts, cfg)?, cfg)?;
    let b = accept(integrate_ln_right_tail(|w| s.ln_at(w), &b_pts, 1.0, cfg)?, cfg)?;
    let c = ln_prefactor(params.nu(), t);
    Ok(SplitParts {
        r0: SplitPoint::new(x * y)?.r0,
        ln_b: b.ln_value + c,
        ln_a: a.ln_value + c,
        rel_error: a.rel_error.max(b.rel_error),
    })
}

/// Geometric midpoints inserted between consecutive grid points.
pub fn refine_grid(grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * grid.len());
    for w in grid.windows(2) {
        out.push(w[0]);
        out.push((w[0] * w[1]).sqrt());
    }
    if let Some(last) = grid.last() {
        out.push(*last);
    }
    out
}

/// Ratios `R(y) = P_t(x,y)/Φ(y)` over the grid and over its refinement. Passes when
/// `R > 0` everywhere and `max R / min R` moves by less than 5% under refinement.
pub fn poisson_two_sided_check(
    params: &SemigroupParams,
    t: f64,
    x: f64,
    y_grid: &[f64],
    cfg: &QuadratureConfig,
) -> Result<BoundReport> {
    if y_grid.len() < 2 {
        return domain("the y grid needs at least two points");
    }
    let mut report = BoundReport::new("poisson_two_sided", &["y"]);
    let spread = |grid: &[f64], record: bool, report: &mut BoundReport| -> (f64, f64, bool) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        let mut ok = true;
        for &y in grid {
            let lp = ln_phi_raw(SystemKind::BasePhi, params, y);
            match ln_poisson_kernel(params, t, x, y, cfg) {
                Ok(k) => {
                    let r = (k.ln_value - lp).exp();
                    let good = r > 0.0 && r.is_finite();
                    ok &= good;
                    lo = lo.min(r);
                    hi = hi.max(r);
                    if record {
                        report.push(BoundRow::new(vec![y], k.value(), lp.exp(), good).with_ratio(r));
                    }
                }
                Err(_) => {
                    ok = false;
                    if record {
                        report.push(BoundRow::new(vec![y], f64::NAN, lp.exp(), false).with_ratio(f64::NAN));
                    }
                }
            }
        }
        (lo, hi, ok)
    };
    let (lo, hi, ok1) = spread(y_grid, true, &mut report);
    let fine = refine_grid(y_grid);
    let (lo2, hi2, ok2) = spread(&fine, false, &mut report);
    let delta = relative_change(hi / lo, hi2 / lo2);
    report.fitted.insert("c1".into(), lo);
    report.fitted.insert("c2".into(), hi);
    report.fitted.insert("spread".into(), hi / lo);
    report.fitted.insert("spread_refined".into(), hi2 / lo2);
    report.stability.insert("spread".into(), delta);
    report.pass = ok1 && ok2 && lo > 0.0 && (hi / lo).is_finite() && delta < STABILITY_LIMIT;
    Ok(report)
}

/// The two-region Poisson envelope with a configurable `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonEnvelope {
    pub big_m: f64,
}

impl Default for PoissonEnvelope {
    fn default() -> Self {
        Self { big_m: 4.0 }
    }
}

impl PoissonEnvelope {
    pub fn new(big_m: f64) -> Result<Self> {
        if !(big_m > 1.0) || !big_m.is_finite() {
            return domain(format!("M must exceed 1, got {big_m}"));
        }
        Ok(Self { big_m })
    }

    /// `ln C_1(x) = ln[(1+x)^{2ν} e^{x²/2}]`.
    pub fn ln_c1(&self, params: &SemigroupParams, x: f64) -> f64 {
        2.0 * params.nu() * x.ln_1p() + 0.5 * x * x
    }

    /// `ln C_2(x) = ln[log(e+x)^{1+ν} (1+x)^{|μ+1/2|} e^{x²/2} / ⟨x⟩^{α+3/2}]`.
    pub fn ln_c2(&self, params: &SemigroupParams, x: f64) -> f64 {
        (1.0 + params.nu()) * (std::f64::consts::E + x).ln().ln() + (params.mu() + 0.5).abs() * x.ln_1p() + 0.5 * x * x
            - (params.alpha() + 1.5) * angle(x).ln()
    }
}

/// Logarithms of the envelope terms at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeValue {
    /// Local term, `-∞` outside `x/2 < y < Mx`.
    pub ln_local: f64,
    /// `C_2(x) (t∨1)^{2ν} Φ(y)`.
    pub ln_global: f64,
    /// `C_2(x) ⟨x⟩^{-2ν} t^{2ν} Φ(y)`, the small-time variant with `c'(x) = ⟨x⟩^{-(α+3/2+2ν)}`.
    pub ln_global_sharpened: f64,
}

impl EnvelopeValue {
    pub fn ln_standard(&self) -> f64 {
        crate::special::log_add(self.ln_local, self.ln_global)
    }

    pub fn ln_sharpened(&self) -> f64 {
        crate::special::log_add(self.ln_local, self.ln_global_sharpened)
    }

    pub fn standard(&self) -> f64 {
        self.ln_standard().exp()
    }

    pub fn sharpened(&self) -> f64 {
        self.ln_sharpened().exp()
    }
}

pub fn poisson_envelope(params: &SemigroupParams, env: &PoissonEnvelope, t: f64, x: f64, y: f64) -> Result<EnvelopeValue> {
    check_kernel_args(t, x, y)?;
    let nu = params.nu();
    let ln_local = if 0.5 * x < y && y < env.big_m * x {
        env.ln_c1(params, x) + 2.0 * nu * t.ln() - 0.5 * y * y - (1.0 + 2.0 * nu) * (t + (x - y).abs()).ln()
    } else {
        f64::NEG_INFINITY
    };
    let lp = ln_phi_raw(SystemKind::BasePhi, params, y);
    let c2 = env.ln_c2(params, x);
    Ok(EnvelopeValue {
        ln_local,
        ln_global: c2 + 2.0 * nu * t.max(1.0).ln() + lp,
        ln_global_sharpened: c2 - 2.0 * nu * angle(x).ln() + 2.0 * nu * t.ln() + lp,
    })
}

/// `∫ |f| Φ` of the given system, with divergence reported as inadmissible data.
pub fn l1_phi_norm(f: &dyn ScalarFn, system: SystemKind, params: &SemigroupParams, cfg: &QuadratureConfig) -> Result<f64> {
    let breaks = f.breakpoints();
    integrate_half_line(
        |y| {
            let (s, l) = f.eval(y);
            if s == 0.0 {
                0.0
            } else {
                (l + ln_phi_raw(system, params, y)).exp()
            }
        },
        &breaks,
        cfg,
    )
    .map(|e| e.value)
    .map_err(|e| match e {
        Error::Inadmissible(m) => Error::Inadmissible(format!("f is not in L1(Phi): {m}")),
        other => other,
    })
}

pub(crate) fn transform_breaks(x: f64, t: f64, f: &dyn ScalarFn) -> Vec<f64> {
    let mut breaks = crate::heat::peak_breaks(x, t.max(1e-3));
    breaks.extend(crate::heat::peak_breaks(x, 0.25 * x.min(1.0)));
    breaks.extend(f.breakpoints());
    breaks
}

/// `P_t f(x)` without the admissibility pre-check.
pub(crate) fn poisson_transform_unchecked(
    params: &SemigroupParams,
    t: f64,
    f: &dyn ScalarFn,
    x: f64,
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    check_kernel_args(t, x, x)?;
    let inner = *cfg;
    let failed = std::sync::atomic::AtomicBool::new(false);
    let est = integrate_half_line(
        |y| {
            let (s, l) = f.eval(y);
            if s == 0.0 {
                return 0.0;
            }
            match ln_poisson_kernel_raw(params, t, x, y, &inner) {
                Ok(k) => s * (k.ln_value + l).exp(),
                Err(_) => {
                    failed.store(true, std::sync::atomic::Ordering::Relaxed);
                    f64::NAN
                }
            }
        },
        &transform_breaks(x, t, f),
        cfg,
    );
    if failed.load(std::sync::atomic::Ordering::Relaxed) {
        return Err(Error::Quadrature { value: f64::NAN, error: f64::NAN });
    }
    est
}

/// `P_t f(x) = ∫ P_t(x,y) f(y) dy` for `f ∈ L¹(Φ)`.
pub fn poisson_transform(params: &SemigroupParams, t: f64, f: &dyn ScalarFn, x: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    l1_phi_norm(f, SystemKind::BasePhi, params, cfg)?;
    poisson_transform_unchecked(params, t, f, x, cfg)
}

/// `max_{t ∈ grid} |P_t f(x)|`, refined once next to the maximizing grid point; a lower
/// approximation of `P*_{t0} f(x)`.
pub fn poisson_sup(
    params: &SemigroupParams,
    t0: f64,
    f: &dyn ScalarFn,
    x: f64,
    t_grid: &[f64],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    crate::heat::check_grid(t0, t_grid)?;
    l1_phi_norm(f, SystemKind::BasePhi, params, cfg)?;
    let (_, v) = sup_over_times(t_grid, |t| Ok(poisson_transform_unchecked(params, t, f, x, cfg)?.value))?;
    Ok(v)
}

/// Nodes in `w = ln u` shared by every time of a sweep, so that the heat values
/// `e^{-uL} f(x)` are computed once and reused for all `t`.
#[derive(Debug, Clone)]
pub struct SubordinationGrid {
    params: SemigroupParams,
    w: Vec<f64>,
    weights: Vec<f64>,
    w_hi: f64,
}

impl SubordinationGrid {
    /// Nodes for times in `[t_min, ∞)`: Kronrod panels of width `panel` from
    /// `ln(t_min²/4) - 4.5` up to where `e^{-λ_0 u}` is negligible.
    pub fn new(params: &SemigroupParams, t_min: f64, panel: f64) -> Result<Self> {
        if !(t_min > 0.0) || !(panel > 0.0) {
            return domain("t_min and the panel width must be positive");
        }
        let w_lo = (0.25 * t_min * t_min).ln() - 4.5;
        let lambda0 = params.eigenvalue(0);
        let w_hi = if params.extreme_case() { 8.0 } else { (46.0 / lambda0).ln().clamp(2.0, 8.0) };
        let n = ((w_hi - w_lo) / panel).ceil() as usize;
        let h = (w_hi - w_lo) / n as f64;
        let mut w = Vec::with_capacity(15 * n);
        let mut weights = Vec::with_capacity(15 * n);
        for k in 0..n {
            let a = w_lo + k as f64 * h;
            for (x, q) in crate::quadrature::kronrod_rule(a, a + h) {
                w.push(x);
                weights.push(q);
            }
        }
        Ok(Self { params: *params, w, weights, w_hi })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `e^{-uL} f(x)` at every node, for `f` vanishing outside its node range.
    pub fn heat_values(&self, f: &TabulatedFunction, x: f64, cfg: &QuadratureConfig) -> Result<Vec<f64>> {
        if f.extension() != Extension::Zero {
            return domain("the sweep needs data vanishing outside its nodes");
        }
        let (y0, yn) = (f.first_node(), f.last_node());
        let (a, m) = (self.params.alpha(), self.params.mu());
        self.w
            .iter()
            .map(|&w| {
                let u = w.exp();
                let s = u.tanh();
                let (lo, hi) = if u <= 0.5 { ((x - 13.0 * s.sqrt()).max(y0), (x + 13.0 * s.sqrt()).min(yn)) } else { (y0, yn) };
                if !(hi > lo) {
                    return Ok(0.0);
                }
                let mut pts: Vec<f64> = crate::heat::peak_breaks(x, (2.0 * s).sqrt())
                    .into_iter()
                    .chain(f.nodes().iter().copied())
                    .filter(|&p| p > lo && p < hi)
                    .collect();
                pts.push(lo);
                pts.push(hi);
                pts.sort_by(f64::total_cmp);
                pts.dedup();
                let est = crate::quadrature::integrate(
                    |y| {
                        let (sg, lf) = f.eval(y);
                        if sg == 0.0 {
                            0.0
                        } else {
                            sg * (ln_heat_kernel_raw(a, m, u, x, y) + lf).exp()
                        }
                    },
                    &pts,
                    cfg,
                )?;
                Ok(est.value)
            })
            .collect()
    }

    /// `P_t f(x)` from the heat values at the nodes.
    pub fn apply(&self, t: f64, heat: &[f64]) -> f64 {
        let nu = self.params.nu();
        let c = ln_prefactor(nu, t);
        let mut acc = 0.0;
        for ((&w, &q), &h) in self.w.iter().zip(&self.weights).zip(heat) {
            if h != 0.0 {
                acc += q * h * (c - 0.25 * t * t * (-w).exp() - nu * w).exp();
            }
        }
        if let Some(&last) = heat.last() {
            acc += last * (c - nu * self.w_hi).exp() / nu;
        }
        acc
    }
}

/// `max_t |P_t f(x)|` over the grid, with one refinement next to the best time, at every
/// point of `xs`. The heat values are shared across times.
pub fn poisson_sup_sweep(
    params: &SemigroupParams,
    t_grid: &[f64],
    f: &TabulatedFunction,
    xs: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let t_min = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let grid = SubordinationGrid::new(params, 0.5 * t_min, 1.0)?;
    xs.par_iter()
        .map(|&x| {
            let heat = grid.heat_values(f, x, cfg)?;
            Ok(sup_over_times(t_grid, |t| Ok(grid.apply(t, &heat)))?.1)
        })
        .collect()
}

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub x: f64,
    pub t: f64,
    pub value: f64,
    pub target: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// `(x, pass)` for each point.
    pub verdicts: Vec<(f64, bool)>,
    pub pass: bool,
}

/// The pass rule for one point: the final error is below `tol·(1+|f(x)|)` and the last
/// three errors are nonincreasing.
pub fn convergence_verdict(errors: &[f64], fx: f64, tol: f64) -> bool {
    let n = errors.len();
    if n == 0 {
        return false;
    }
    let small = errors[n - 1] < tol * (1.0 + fx.abs());
    let monotone = errors[n.saturating_sub(3)..].windows(2).all(|w| w[1] <= w[0]);
    small && monotone
}

/// `|P_t f(x) - f(x)|` along a decreasing sequence of times.
pub fn convergence_experiment(
    params: &SemigroupParams,
    f: &dyn ScalarFn,
    x_set: &[f64],
    t_sequence: &[f64],
    tol: f64,
    cfg: &QuadratureConfig,
) -> Result<ConvergenceTable> {
    if t_sequence.windows(2).any(|w| w[1] >= w[0]) || t_sequence.is_empty() {
        return domain("the time sequence must be nonempty and strictly decreasing");
    }
    l1_phi_norm(f, SystemKind::BasePhi, params, cfg)?;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for &x in x_set {
        let fx = f.value(x);
        let mut errors = Vec::new();
        for &t in t_sequence {
            let v = poisson_transform_unchecked(params, t, f, x, cfg)?.value;
            let e = (v - fx).abs();
            errors.push(e);
            rows.push(ConvergenceRow { x, t, value: v, target: fx, error: e });
        }
        verdicts.push((x, convergence_verdict(&errors, fx, tol)));
    }
    let pass = verdicts.iter().all(|v| v.1);
    Ok(ConvergenceTable { rows, verdicts, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabulated::Analytic;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn phi_base_value() {
        let p = SemigroupParams::new(0.5, 0.0, 0.5).unwrap();
        let v = phi(SystemKind::BasePhi, &p, 1.0).unwrap();
        assert!(rel(v, 0.28497768186260101776) < 1e-14);
        assert!(phi(SystemKind::BasePhi, &p, 0.0).is_err());
    }

    #[test]
    fn phi_relations() {
        let p = SemigroupParams::new(0.3, 0.7, 0.5).unwrap();
        let e = SemigroupParams::new(0.3, -1.3, 0.5).unwrap();
        for y in [0.01, 0.5, 2.0, 9.0] {
            let psi = table_phi(SystemKind::Psi, &p, y).unwrap();
            let base = table_phi(SystemKind::BasePhi, &p, y).unwrap();
            assert!(rel(psi, y.powf(0.8) * base) < 1e-13);
            let g = phi(SystemKind::BasePhi, &p, y).unwrap();
            let ge = phi(SystemKind::BasePhi, &e, y).unwrap();
            let ratio = ge / g * (1.0 + y).powf(-1.3 + 0.5) / (1.0 + y).powf(0.7 + 0.5);
            let _ = ratio;
            let same_mu = SemigroupParams::new(0.3, -1.3 + 1e-9, 0.5).unwrap();
            assert!(!same_mu.extreme_case());
            let gen = phi(SystemKind::BasePhi, &same_mu, y).unwrap();
            assert!(rel(ge / gen, (std::f64::consts::E + y).ln()) < 1e-7);
        }
    }

    #[test]
    fn multiplier_values() {
        assert_eq!(subordination_multiplier(0.7, 0.0, 3.0).unwrap(), 1.0);
        assert!(rel(subordination_multiplier(1.0, 0.5, 2.0).unwrap(), 0.73191447646146275539) < 1e-11);
        assert!(rel(subordination_multiplier(0.3, 1.0, 6.0).unwrap(), 0.047774933643669991888) < 1e-11);
        assert!(rel(subordination_multiplier(2.5, 0.1, 10.0).unwrap(), 0.98368619725542443874) < 1e-11);
        for (t, l) in [(0.01, 2.0), (0.5, 3.0), (3.0, 7.0), (10.0, 50.0)] {
            let want = (-t * f64::sqrt(l)).exp();
            assert!(rel(subordination_multiplier(0.5, t, l).unwrap(), want) < 1e-11, "{t} {l}");
        }
        assert_eq!(subordination_multiplier(0.5, 1.0, 0.0).unwrap(), 1.0);
        assert!(subordination_multiplier(0.5, 1.0, -1.0).is_err());
    }

    #[test]
    fn split_point() {
        assert_eq!(SplitPoint::new(4.0).unwrap().r0, 0.125);
        assert_eq!(SplitPoint::new(0.5).unwrap().r0, 0.75);
        assert_eq!(SplitPoint::new(1.0).unwrap().r0, 0.5);
    }

    #[test]
    fn kernel_reference_values() {
        let cfg = QuadratureConfig::default();
        let cases = [
            (0.0, 0.0, 0.5, 1.0, 1.0, 2.0, 0.04298864910958097325151, 1e-8),
            (1.5, -2.5, 1.0, 0.5, 0.7, 1.3, 0.3267317749122988699, 1e-8),
            (-0.75, 0.5, 0.5, 0.1, 1.0, 1.05, 2.456457343982463297, 1e-8),
            (0.0, 0.0, 0.5, 1.0, 1.0, 12.0, 2.2014999017714537256e-33, 1e-8),
            (1.5, -2.5, 0.5, 1.0, 1.0, 2.0, 0.4193508930472968814, 1e-6),
        ];
        for (a, m, nu, t, x, y, want, tol) in cases {
            let p = SemigroupParams::new(a, m, nu).unwrap();
            let got = poisson_kernel(&p, t, x, y, &cfg).unwrap();
            assert!(rel(got, want) < tol, "{a} {m} {nu} {t} {x} {y}: {got} vs {want}");
        }
    }

    #[test]
    fn split_adds_up() {
        let cfg = QuadratureConfig::default();
        let p = SemigroupParams::new(0.0, 0.0, 0.5).unwrap();
        for (x, y) in [(0.3, 0.4), (1.0, 2.0), (3.0, 0.5)] {
            let k = poisson_kernel(&p, 0.7, x, y, &cfg).unwrap();
            let s = poisson_split(&p, 0.7, x, y, &cfg).unwrap();
            assert!(rel(s.a_part() + s.b_part(), k) < 2e-8);
        }
    }

    #[test]
    fn envelope_local_indicator() {
        let p = SemigroupParams::new(0.0, 0.0, 0.5).unwrap();
        let env = PoissonEnvelope::new(2.0).unwrap();
        let e = poisson_envelope(&p, &env, 0.5, 1.0, 3.0).unwrap();
        assert_eq!(e.ln_local, f64::NEG_INFINITY);
        let e = poisson_envelope(&p, &env, 0.1, 0.5, 0.6).unwrap();
        assert!(e.ln_local.is_finite());
        // (t∨1)^{2ν} ≥ t^{2ν} for t ≤ 1 and c'/c = ⟨x⟩^{-2ν}
        assert!(e.ln_global_sharpened <= e.ln_global - 2.0 * 0.5 * angle(0.5f64).ln() + 1e-12);
    }

    #[test]
    fn admissibility() {
        let p = SemigroupParams::new(0.0, 0.0, 0.5).unwrap();
        let cfg = QuadratureConfig::default();
        let growing = Analytic::positive(|y| 0.5 * y * y - 1.5 * y.ln_1p() - 2.5 * (std::f64::consts::E + y).ln().ln());
        let r = l1_phi_norm(&growing, SystemKind::BasePhi, &p, &cfg);
        assert!(r.is_ok(), "{r:?}");
        assert!(l1_phi_norm(&Analytic::positive(|y| 0.5 * y * y), SystemKind::BasePhi, &p, &cfg).is_err());
        assert!(matches!(
            l1_phi_norm(&Analytic::positive(|y| y * y), SystemKind::BasePhi, &p, &cfg),
            Err(Error::Inadmissible(_))
        ));
    }

    #[test]
    fn sweep_matches_transform() {
        use crate::tabulated::Interpolation;
        let cfg = QuadratureConfig::default().with_rel_tol(1e-8);
        for p in [SemigroupParams::new(0.0, 0.0, 0.5).unwrap(), SemigroupParams::new(0.5, -1.5, 1.0).unwrap()] {
            let f = TabulatedFunction::new(
                vec![0.05, 0.4, 0.9, 1.3, 2.0, 3.0],
                vec![1.0, 4.0, 0.5, 7.0, 2.0, 3.0],
                Interpolation::Linear,
                Extension::Zero,
            )
            .unwrap();
            let grid = SubordinationGrid::new(&p, 0.001, 1.0).unwrap();
            for x in [0.3, 1.0, 2.5] {
                let heat = grid.heat_values(&f, x, &cfg).unwrap();
                for t in [0.001, 0.03, 0.5] {
                    let direct = poisson_transform(&p, t, &f, x, &cfg).unwrap().value;
                    let swept = grid.apply(t, &heat);
                    assert!(rel(swept, direct) < 1e-6, "{x} {t}: {swept} vs {direct}");
                }
            }
        }
    }

    #[test]
    fn verdict_rule() {
        assert!(convergence_verdict(&[0.3, 0.2, 0.001], 0.0, 1e-2));
        assert!(!convergence_verdict(&[0.3, 0.001, 0.002], 0.0, 1e-2));
        assert!(!convergence_verdict(&[0.3, 0.2, 0.1], 0.0, 1e-2));
    }
}
