//! The five Laguerre systems and the maps between them: multipliers `a(y)` and the
//! squaring isometry `Af(x) = √(2x) f(x²)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::poisson::{ln_poisson_kernel, ln_table_phi, poisson_transform};
use crate::quadrature::QuadratureConfig;
use crate::report::{BoundReport, BoundRow};
use crate::special::{eigenfunctions, laguerre_log_normalized, SemigroupParams};
use crate::tabulated::{Interpolation, ScalarFn, TabulatedFunction};
use crate::weights::{ln_local_maximal_windowed, local_radii};

/// One of the Laguerre systems, identified by its eigenfunctions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SystemKind {
    /// `φ_n`, operator `L` on `L²(dy)`.
    BasePhi,
    /// `ψ_n = y^{-α-1/2} φ_n`, operator `Λ` on `L²(y^{2α+1} dy)`.
    Psi,
    /// `𝔏_n = A^{-1} φ_n`, on `L²(dy)`.
    FrakL,
    /// `ℓ_n = y^{-α/2} 𝔏_n`, on `L²(y^α dy)`.
    SmallEll,
    /// `L_n^α = y^{-α/2} e^{y/2} 𝔏_n`, on `L²(y^α e^{-y} dy)`.
    LaguerrePoly,
}

impl SystemKind {
    pub const ALL: [SystemKind; 5] =
        [SystemKind::BasePhi, SystemKind::Psi, SystemKind::FrakL, SystemKind::SmallEll, SystemKind::LaguerrePoly];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::BasePhi => "base_phi",
            SystemKind::Psi => "psi",
            SystemKind::FrakL => "frak_l",
            SystemKind::SmallEll => "small_ell",
            SystemKind::LaguerrePoly => "laguerre_poly",
        }
    }

    /// The system this one is obtained from by a single map.
    pub fn parent(self) -> Option<SystemKind> {
        match self {
            SystemKind::BasePhi => None,
            SystemKind::Psi | SystemKind::FrakL => Some(SystemKind::BasePhi),
            SystemKind::SmallEll | SystemKind::LaguerrePoly => Some(SystemKind::FrakL),
        }
    }

    pub fn uses_square_map(self) -> bool {
        matches!(self, SystemKind::FrakL | SystemKind::SmallEll | SystemKind::LaguerrePoly)
    }

    /// `ln a(y)` of the multiplier relating the system to its parent (zero for the
    /// base system and for the square map itself).
    pub fn ln_multiplier_a(self, alpha: f64, y: f64) -> f64 {
        match self {
            SystemKind::BasePhi | SystemKind::FrakL => 0.0,
            SystemKind::Psi => -(alpha + 0.5) * y.ln(),
            SystemKind::SmallEll => -0.5 * alpha * y.ln(),
            SystemKind::LaguerrePoly => -0.5 * alpha * y.ln() + 0.5 * y,
        }
    }

    pub fn multiplier_a(self, alpha: f64, y: f64) -> f64 {
        self.ln_multiplier_a(alpha, y).exp()
    }

    /// `ln` of the density of the reference measure with respect to `dy`.
    pub fn ln_reference_density(self, alpha: f64, y: f64) -> f64 {
        match self {
            SystemKind::BasePhi | SystemKind::FrakL => 0.0,
            SystemKind::Psi => (2.0 * alpha + 1.0) * y.ln(),
            SystemKind::SmallEll => alpha * y.ln(),
            SystemKind::LaguerrePoly => alpha * y.ln() - y,
        }
    }

    /// Eigenvalue of the `n`-th eigenfunction.
    pub fn eigenvalue(self, params: &SemigroupParams, n: usize) -> f64 {
        if self.uses_square_map() {
            0.25 * params.eigenvalue(n)
        } else {
            params.eigenvalue(n)
        }
    }

    /// Eigenfunctions `0..=n_max` at `y`, from their closed forms in terms of the
    /// normalized Laguerre polynomials.
    pub fn eigenfunctions(self, alpha: f64, n_max: usize, y: f64) -> Result<Vec<f64>> {
        if !(y > 0.0) || !y.is_finite() {
            return domain(format!("eigenfunctions are evaluated at y > 0 only, got {y}"));
        }
        if !(alpha > -1.0) {
            return domain(format!("alpha must exceed -1, got {alpha}"));
        }
        let (arg, base) = match self {
            SystemKind::BasePhi => (y * y, 0.5 * std::f64::consts::LN_2 + (alpha + 0.5) * y.ln() - 0.5 * y * y),
            SystemKind::Psi => (y * y, 0.5 * std::f64::consts::LN_2 - 0.5 * y * y),
            SystemKind::FrakL => (y, 0.5 * alpha * y.ln() - 0.5 * y),
            SystemKind::SmallEll => (y, -0.5 * y),
            SystemKind::LaguerrePoly => (y, 0.0),
        };
        Ok(laguerre_log_normalized(alpha, n_max, arg)
            .into_iter()
            .map(|(s, l)| if s == 0.0 { 0.0 } else { s * (base + l).exp() })
            .collect())
    }

    /// Eigenfunctions obtained by pushing `φ_n` through the map chain.
    pub fn eigenfunctions_via_maps(self, alpha: f64, n_max: usize, y: f64) -> Result<Vec<f64>> {
        if !(y > 0.0) || !y.is_finite() {
            return domain(format!("eigenfunctions are evaluated at y > 0 only, got {y}"));
        }
        let phi = if self.uses_square_map() {
            eigenfunctions(alpha, n_max, y.sqrt())?
                .into_iter()
                .map(|v| inverse_square_point(y, v))
                .collect::<Vec<_>>()
        } else {
            eigenfunctions(alpha, n_max, y)?
        };
        let a = self.multiplier_a(alpha, y);
        Ok(phi.into_iter().map(|v| a * v).collect())
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown system {s:?}")))
    }
}

/// `(A^{-1} g)(y) = (4y)^{-1/4} g(√y)` given the value `g(√y)`.
#[inline]
fn inverse_square_point(y: f64, g_at_sqrt: f64) -> f64 {
    (4.0 * y).powf(-0.25) * g_at_sqrt
}

/// `Af(x) = √(2x) f(x²)`, tabulated on the nodes `√y_i` with the same rules.
pub fn square_map(f: &TabulatedFunction) -> Result<TabulatedFunction> {
    let nodes: Vec<f64> = f.nodes().iter().map(|y| y.sqrt()).collect();
    let values: Vec<f64> = nodes.iter().zip(f.node_values()).map(|(x, v)| (2.0 * x).sqrt() * v).collect();
    rebuild(f, nodes, values, |e| 2.0 * e + 0.5)
}

/// `A^{-1}g(y) = (4y)^{-1/4} g(√y)`, tabulated on the nodes `x_i²`.
pub fn inverse_square_map(g: &TabulatedFunction) -> Result<TabulatedFunction> {
    let nodes: Vec<f64> = g.nodes().iter().map(|x| x * x).collect();
    let values: Vec<f64> = nodes.iter().zip(g.node_values()).map(|(y, v)| inverse_square_point(*y, v)).collect();
    rebuild(g, nodes, values, |e| 0.5 * (e - 0.5))
}

fn rebuild(f: &TabulatedFunction, nodes: Vec<f64>, values: Vec<f64>, tail: impl Fn(f64) -> f64) -> Result<TabulatedFunction> {
    use crate::tabulated::Extension;
    let ext = match f.extension() {
        Extension::Zero => Extension::Zero,
        Extension::PowerTail(e) => Extension::PowerTail(tail(e)),
    };
    match f.interpolation() {
        Interpolation::Linear => TabulatedFunction::new(nodes, values, Interpolation::Linear, ext),
        Interpolation::LinearInLog => {
            TabulatedFunction::from_ln(nodes, values.iter().map(|v| v.ln()).collect(), ext)
        }
    }
}

/// `Af` for any function, evaluated lazily.
pub struct SquareMapped<'a>(pub &'a dyn ScalarFn);

impl ScalarFn for SquareMapped<'_> {
    fn eval(&self, x: f64) -> (f64, f64) {
        let (s, l) = self.0.eval(x * x);
        (s, l + 0.5 * (2.0 * x).ln())
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints().into_iter().map(f64::sqrt).collect()
    }

    fn support_end(&self) -> Option<f64> {
        self.0.support_end().map(f64::sqrt)
    }
}

/// `a^{-1} f` for the multiplier of a system, evaluated lazily.
pub struct PulledBack<'a> {
    pub f: &'a dyn ScalarFn,
    pub system: SystemKind,
    pub alpha: f64,
}

impl ScalarFn for PulledBack<'_> {
    fn eval(&self, y: f64) -> (f64, f64) {
        let (s, l) = self.f.eval(y);
        (s, l - self.system.ln_multiplier_a(self.alpha, y))
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.f.breakpoints()
    }

    fn support_end(&self) -> Option<f64> {
        self.f.support_end()
    }
}

/// `ln P_t^{sys}(x, y)`, the kernel with respect to the system's reference measure.
pub fn ln_system_poisson_kernel(
    system: SystemKind,
    params: &SemigroupParams,
    t: f64,
    x: f64,
    y: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let a = params.alpha();
    match system {
        SystemKind::BasePhi => Ok(ln_poisson_kernel(params, t, x, y, cfg)?.ln_value),
        SystemKind::Psi => Ok(system.ln_multiplier_a(a, x)
            + system.ln_multiplier_a(a, y)
            + ln_poisson_kernel(params, t, x, y, cfg)?.ln_value),
        SystemKind::FrakL => {
            Ok(-0.25 * (16.0 * x * y).ln() + ln_poisson_kernel(params, 0.5 * t, x.sqrt(), y.sqrt(), cfg)?.ln_value)
        }
        SystemKind::SmallEll | SystemKind::LaguerrePoly => Ok(system.ln_multiplier_a(a, x)
            + system.ln_multiplier_a(a, y)
            + ln_system_poisson_kernel(SystemKind::FrakL, params, t, x, y, cfg)?),
    }
}

/// `P_t^{sys} f(x) = ∫ P_t^{sys}(x, y) f(y) dm(y)`, evaluated by pulling `f` back to the
/// base system and applying the base Poisson integral.
pub fn transfer_poisson(
    system: SystemKind,
    params: &SemigroupParams,
    t: f64,
    f: &dyn ScalarFn,
    x: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let a = params.alpha();
    match system {
        SystemKind::BasePhi => Ok(poisson_transform(params, t, f, x, cfg)?.value),
        SystemKind::Psi => {
            let g = PulledBack { f, system, alpha: a };
            Ok(system.multiplier_a(a, x) * poisson_transform(params, t, &g, x, cfg)?.value)
        }
        SystemKind::FrakL => {
            let g = SquareMapped(f);
            Ok((4.0 * x).powf(-0.25) * poisson_transform(params, 0.5 * t, &g, x.sqrt(), cfg)?.value)
        }
        SystemKind::SmallEll | SystemKind::LaguerrePoly => {
            let g = PulledBack { f, system, alpha: a };
            Ok(system.multiplier_a(a, x) * transfer_poisson(SystemKind::FrakL, params, t, &g, x, cfg)?)
        }
    }
}

/// Compares the system's table `Φ` with the image of its parent's table `Φ` under the
/// transference map; passes when the ratio is constant to `1e-8` over the grid.
pub fn phi_consistency(system: SystemKind, params: &SemigroupParams, y_grid: &[f64]) -> Result<BoundReport> {
    let parent = match system.parent() {
        Some(p) => p,
        None => {
            let mut r = BoundReport::new("phi_consistency", &["y"]);
            for &y in y_grid {
                r.push(BoundRow::new(vec![y], 1.0, 1.0, true));
            }
            r.fitted.insert("ratio_spread".into(), 0.0);
            r.pass = true;
            return Ok(r);
        }
    };
    let a = params.alpha();
    let mut report = BoundReport::new("phi_consistency", &["y"]);
    let mut ratios = Vec::with_capacity(y_grid.len());
    for &y in y_grid {
        if !(y > 0.0) {
            return domain(format!("grid points must be positive, got {y}"));
        }
        let own = ln_table_phi(system, params, y);
        let image = if system.uses_square_map() && !parent.uses_square_map() {
            -0.25 * (4.0 * y).ln() + ln_table_phi(parent, params, y.sqrt())
        } else {
            -system.ln_multiplier_a(a, y) + ln_table_phi(parent, params, y)
        };
        let ratio = (own - image).exp();
        ratios.push(ratio);
        report.push(BoundRow::new(vec![y], own.exp(), image.exp(), true).with_ratio(ratio));
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let spread = hi / lo - 1.0;
    report.fitted.insert("ratio_min".into(), lo);
    report.fitted.insert("ratio_max".into(), hi);
    report.fitted.insert("ratio_spread".into(), spread);
    report.pass = spread <= 1e-8;
    for row in &mut report.rows {
        row.pass = report.pass;
    }
    Ok(report)
}

/// Both sides of the change-of-variables bound for the local maximal function under the
/// square map: `M_loc(g(·²))(√x)` against `M_loc^{M²}(g)(x)` with the window `(x/4, M²x)`.
///
/// Returns `(lhs, rhs)`.
pub fn local_maximal_transport_check(g: &TabulatedFunction, big_m: f64, x: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) || !(big_m > 1.0) {
        return domain("x must be positive and M > 1");
    }
    let composed = compose_square(g)?;
    let sx = x.sqrt();
    let lhs = ln_local_maximal_windowed(&composed, 0.5 * sx, big_m * sx, sx, &local_radii(&composed, sx, 0.5 * sx, big_m * sx))?;
    let rhs = ln_local_maximal_windowed(g, 0.25 * x, big_m * big_m * x, x, &local_radii(g, x, 0.25 * x, big_m * big_m * x))?;
    Ok((lhs.exp(), rhs.exp()))
}

/// `y ↦ g(y²)` tabulated on the nodes `√y_i`, refined so that linear pieces of `g` stay
/// resolved.
fn compose_square(g: &TabulatedFunction) -> Result<TabulatedFunction> {
    let mut nodes = Vec::new();
    let src = g.nodes();
    for w in src.windows(2) {
        let (a, b) = (w[0].sqrt(), w[1].sqrt());
        for k in 0..8 {
            nodes.push(a + (b - a) * k as f64 / 8.0);
        }
    }
    nodes.push(src[src.len() - 1].sqrt());
    match g.interpolation() {
        Interpolation::Linear => TabulatedFunction::sample(nodes, |y| g.value(y * y), Interpolation::Linear, g.extension()),
        Interpolation::LinearInLog => TabulatedFunction::sample_ln(nodes, |y| g.ln_abs(y * y), g.extension()),
    }
}
