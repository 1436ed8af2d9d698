//! Local maximal operator, weight classes and explicit weight constructions.
//!
//! Weights are `TabulatedFunction`s interpolated linearly in `(ln y, ln w)` and extended
//! by the power law of their last cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::heat::ln_phi_heat;
use crate::poisson::ln_phi_raw;
use crate::quadrature::{integrate, integrate_half_line, integrate_ln, QuadratureConfig};
use crate::special::{angle, log_add, SemigroupParams};
use crate::tabulated::{log_nodes, Extension, Interpolation, ScalarFn, TabulatedFunction};
use crate::transference::SystemKind;

/// Log-sums of `|f|` over runs of cells, answered in `O(log n)` without cancellation.
struct CellSums {
    size: usize,
    tree: Vec<f64>,
}

impl CellSums {
    fn new(cells: &[f64]) -> Self {
        let size = cells.len().next_power_of_two().max(1);
        let mut tree = vec![f64::NEG_INFINITY; 2 * size];
        tree[size..size + cells.len()].copy_from_slice(cells);
        for i in (1..size).rev() {
            tree[i] = log_add(tree[2 * i], tree[2 * i + 1]);
        }
        Self { size, tree }
    }

    /// `ln Σ_{i ∈ [lo, hi)} e^{cells[i]}`.
    fn range(&self, lo: usize, hi: usize) -> f64 {
        let (mut l, mut r) = (lo + self.size, hi + self.size);
        let mut acc = f64::NEG_INFINITY;
        while l < r {
            if l & 1 == 1 {
                acc = log_add(acc, self.tree[l]);
                l += 1;
            }
            if r & 1 == 1 {
                r -= 1;
                acc = log_add(acc, self.tree[r]);
            }
            l >>= 1;
            r >>= 1;
        }
        acc
    }
}

/// Exact window integrals of `|f|` for a tabulated `f`.
pub struct WindowIntegrals<'a> {
    f: &'a TabulatedFunction,
    sums: CellSums,
}

impl<'a> WindowIntegrals<'a> {
    pub fn new(f: &'a TabulatedFunction) -> Self {
        let nodes = f.nodes();
        let cells: Vec<f64> = nodes.windows(2).map(|w| f.ln_integral_abs(w[0], w[1])).collect();
        Self { f, sums: CellSums::new(&cells) }
    }

    fn cell_of(&self, y: f64) -> usize {
        let nodes = self.f.nodes();
        nodes.partition_point(|&n| n <= y).saturating_sub(1).min(nodes.len() - 2)
    }

    /// `ln ∫_a^b |f|`.
    pub fn ln_integral(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        if !(b > a) {
            return f64::NEG_INFINITY;
        }
        let nodes = self.f.nodes();
        let (y0, yn) = (nodes[0], nodes[nodes.len() - 1]);
        let mut acc = f64::NEG_INFINITY;
        if a < y0 {
            acc = log_add(acc, self.f.ln_integral_abs(a, b.min(y0)));
        }
        if b > yn {
            acc = log_add(acc, self.f.ln_integral_abs(a.max(yn), b));
        }
        let (lo, hi) = (a.max(y0), b.min(yn));
        if hi > lo {
            let (i, j) = (self.cell_of(lo), self.cell_of(hi));
            if i == j {
                acc = log_add(acc, self.f.ln_integral_abs(lo, hi));
            } else {
                acc = log_add(acc, self.f.ln_integral_abs(lo, nodes[i + 1]));
                acc = log_add(acc, self.sums.range(i + 1, j));
                acc = log_add(acc, self.f.ln_integral_abs(nodes[j], hi));
            }
        }
        acc
    }
}

const RADII_PER_DECADE: usize = 32;

/// Candidate radii for the maximal average at `x` over the window `(lo, hi)`: distances to
/// every node and to the window ends, plus a geometric grid from the local node spacing
/// up to `1.1` times the largest distance to a window end.
pub fn local_radii(f: &TabulatedFunction, x: f64, lo: f64, hi: f64) -> Vec<f64> {
    let nodes = f.nodes();
    let r_max = 1.1 * (x - lo).abs().max((hi - x).abs());
    let mut radii: Vec<f64> = nodes
        .iter()
        .map(|&n| (n - x).abs())
        .chain([(x - lo).abs(), (hi - x).abs()])
        .filter(|&r| r > 0.0 && r <= r_max)
        .collect();
    let i = nodes.partition_point(|&n| n <= x).clamp(1, nodes.len() - 1);
    let spacing = (nodes[i] - nodes[i - 1]).min(x).max(1e-12);
    let r_min = 0.01 * spacing;
    if r_max > r_min {
        let decades = (r_max / r_min).log10();
        let n = ((decades * RADII_PER_DECADE as f64).ceil() as usize).max(2);
        radii.extend(log_nodes(r_min, r_max, n));
    }
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    radii
}

fn ln_average(wi: &WindowIntegrals, lo: f64, hi: f64, x: f64, r: f64) -> f64 {
    let a = (x - r).max(0.0);
    let b = x + r;
    wi.ln_integral(a.max(lo), b.min(hi)) - (b - a).ln()
}

fn ln_maximal_with(wi: &WindowIntegrals, f: &TabulatedFunction, lo: f64, hi: f64, x: f64, radii: &[f64]) -> Result<f64> {
    if radii.is_empty() {
        return domain("the radius grid is empty");
    }
    let mut best = if lo < x && x < hi { f.ln_abs(x) } else { f64::NEG_INFINITY };
    for &r in radii {
        if r > 0.0 {
            best = best.max(ln_average(wi, lo, hi, x, r));
        }
    }
    Ok(best)
}

/// `ln sup_r |I(x,r)|^{-1} ∫_{I(x,r)} |f| χ_{(lo,hi)}` over the given radii and the
/// `r → 0` limit, with `I(x,r) = (x-r, x+r) ∩ (0,∞)`.
pub fn ln_local_maximal_windowed(f: &TabulatedFunction, lo: f64, hi: f64, x: f64, radii: &[f64]) -> Result<f64> {
    let wi = WindowIntegrals::new(f);
    ln_maximal_with(&wi, f, lo, hi, x, radii)
}

/// `M_loc f(x)` with the truncation `x/2 < y < Mx`. Without a radius grid the candidates
/// of `local_radii` are used.
pub fn local_maximal(f: &TabulatedFunction, big_m: f64, x: f64, r_grid: Option<&[f64]>) -> Result<f64> {
    check_m(big_m)?;
    if !(x > 0.0) {
        return domain(format!("x must be positive, got {x}"));
    }
    let (lo, hi) = (0.5 * x, big_m * x);
    let radii = match r_grid {
        Some(r) => r.to_vec(),
        None => local_radii(f, x, lo, hi),
    };
    Ok(ln_local_maximal_windowed(f, lo, hi, x, &radii)?.exp())
}

/// `ln M_loc f` at every point of `xs`.
pub fn ln_local_maximal_at(f: &TabulatedFunction, big_m: f64, xs: &[f64]) -> Result<Vec<f64>> {
    check_m(big_m)?;
    let wi = WindowIntegrals::new(f);
    xs.par_iter()
        .map(|&x| {
            let (lo, hi) = (0.5 * x, big_m * x);
            ln_maximal_with(&wi, f, lo, hi, x, &local_radii(f, x, lo, hi))
        })
        .collect()
}

fn check_m(big_m: f64) -> Result<()> {
    if !(big_m > 1.0) || !big_m.is_finite() {
        return domain(format!("M must exceed 1, got {big_m}"));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return domain(format!("p must lie in (1, ∞), got {p}"));
    }
    Ok(())
}

fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// `ρ_ε(x) = min{x^ε, x^{-ε}}`.
pub fn rho_eps(eps: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return domain(format!("rho_eps needs x > 0, got {x}"));
    }
    Ok(ln_rho(eps, x.ln()).exp())
}

fn ln_rho(eps: f64, ln_x: f64) -> f64 {
    -eps * ln_x.abs()
}

/// A tabulated positive function from log values, extended by the power law of its last cell.
pub fn weight_from_ln(nodes: Vec<f64>, ln_values: Vec<f64>) -> Result<TabulatedFunction> {
    let n = nodes.len();
    if n < 2 {
        return domain("a weight needs at least two nodes");
    }
    let e = (ln_values[n - 1] - ln_values[n - 2]) / (nodes[n - 1] / nodes[n - 2]).ln();
    let ext = if e.is_finite() { Extension::PowerTail(e) } else { Extension::Zero };
    TabulatedFunction::from_ln(nodes, ln_values, ext)
}

/// Samples `ln w` on the nodes as a weight.
pub fn weight_sample<F: Fn(f64) -> f64>(nodes: &[f64], ln_w: F) -> Result<TabulatedFunction> {
    weight_from_ln(nodes.to_vec(), nodes.iter().map(|&y| ln_w(y)).collect())
}

/// Default weight nodes: 400 log-spaced points over `[1e-4, Y_max]` with `Y_max = 30`
/// for the gaussian systems and `200` for the linear-exponential ones.
pub fn default_weight_nodes(system: SystemKind) -> Vec<f64> {
    log_nodes(1e-4, default_y_max(system), 400)
}

pub fn default_y_max(system: SystemKind) -> f64 {
    match system {
        SystemKind::BasePhi | SystemKind::Psi => 30.0,
        _ => 200.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightClassSpec {
    /// `∫ w^{-p'/p} Φ^{p'} < ∞`.
    DpPhi { p: f64, system: SystemKind },
    /// `w^{-p'/p}` integrable on compact subsets of the node range.
    DpLoc { p: f64 },
    /// `∫_0^1 W^{-p'/p} ⟨y⟩^{βp'} < ∞`.
    D0 { p: f64, beta: f64 },
    /// `∫_1^∞ W^{-p'/p} e^{-a y² p'} < ∞`.
    DExp { p: f64, a: f64 },
    /// `∫ w^{-p'/p} φ_T^{p'} < ∞`, with `φ_T` the heat decay profile.
    DpHeat { p: f64, big_t: f64 },
}

impl WeightClassSpec {
    pub fn p(&self) -> f64 {
        match *self {
            Self::DpPhi { p, .. }
            | Self::DpLoc { p }
            | Self::D0 { p, .. }
            | Self::DExp { p, .. }
            | Self::DpHeat { p, .. } => p,
        }
    }

    fn validate(&self) -> Result<()> {
        check_p(self.p())?;
        match *self {
            Self::D0 { beta, .. } if !(beta > -1.0) => domain(format!("beta must exceed -1, got {beta}")),
            Self::DExp { a, .. } if !(a > 0.0) => domain(format!("a must be positive, got {a}")),
            Self::DpHeat { big_t, .. } if !(big_t > 0.0) => domain(format!("T must be positive, got {big_t}")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    /// The defining integral to the power `1/p'`, when finite.
    pub norm: Option<f64>,
    pub reason: Option<String>,
}

/// Decides membership of `w` in a weight class by evaluating the defining integral. A
/// divergent integral is a negative answer rather than an error.
pub fn class_membership(
    w: &dyn ScalarFn,
    spec: WeightClassSpec,
    params: &SemigroupParams,
    cfg: &QuadratureConfig,
) -> Result<Membership> {
    spec.validate()?;
    let p = spec.p();
    let pp = conjugate(p);
    let s = pp / p;
    let ln_dual = |y: f64| -> f64 {
        let (sg, l) = w.eval(y);
        if sg <= 0.0 {
            f64::INFINITY
        } else {
            -s * l
        }
    };
    let mut breaks = w.breakpoints();
    let result = match spec {
        WeightClassSpec::DpPhi { system, .. } => {
            integrate_half_line(|y| (ln_dual(y) + pp * ln_phi_raw(system, params, y)).exp(), &breaks, cfg)
        }
        WeightClassSpec::DpHeat { big_t, .. } => {
            integrate_half_line(|y| (ln_dual(y) + pp * ln_phi_heat(params, big_t, y)).exp(), &breaks, cfg)
        }
        WeightClassSpec::DpLoc { .. } => {
            let pts = log_nodes(cfg.y_min, cfg.y_max, 64);
            integrate(|y| ln_dual(y).exp(), &pts, cfg)
        }
        WeightClassSpec::D0 { beta, .. } => {
            breaks.push(1.0);
            integrate_half_line(|y| if y <= 1.0 { (ln_dual(y) + beta * pp * y.ln()).exp() } else { 0.0 }, &breaks, cfg)
        }
        WeightClassSpec::DExp { a, .. } => {
            breaks.push(1.0);
            integrate_half_line(|y| if y >= 1.0 { (ln_dual(y) - a * y * y * pp).exp() } else { 0.0 }, &breaks, cfg)
        }
    };
    Ok(match result {
        Ok(est) if est.value.is_finite() => Membership { member: true, norm: Some(est.value.powf(1.0 / pp)), reason: None },
        Ok(est) => Membership { member: false, norm: None, reason: Some(format!("integral is {}", est.value)) },
        Err(e) => Membership { member: false, norm: None, reason: Some(e.to_string()) },
    })
}

/// The Carleson–Jones weights built from `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CJWeights {
    pub p: f64,
    pub eps: f64,
    pub big_m: f64,
    /// `V = [M_loc(W^{-p'/p})]^{-p/p'}`.
    pub v: TabulatedFunction,
    /// `V_ε = V ρ_ε(V)`.
    pub v_eps: TabulatedFunction,
}

/// `W^{-p'/p}` as a tabulated function on `W`'s nodes.
fn dual_power(big_w: &TabulatedFunction, p: f64) -> Result<TabulatedFunction> {
    let ln_w = big_w.node_ln_values();
    if ln_w.iter().any(|l| !l.is_finite()) {
        return Err(Error::Inadmissible("W must be positive and finite at every node".into()));
    }
    let k = -1.0 / (p - 1.0);
    let ext = match big_w.extension() {
        Extension::PowerTail(e) => Extension::PowerTail(k * e),
        Extension::Zero => Extension::Zero,
    };
    TabulatedFunction::from_ln(big_w.nodes().to_vec(), ln_w.iter().map(|l| k * l).collect(), ext)
}

pub fn carleson_jones(big_w: &TabulatedFunction, p: f64, eps: f64, big_m: f64) -> Result<CJWeights> {
    check_p(p)?;
    check_m(big_m)?;
    if !(eps > 0.0) {
        return domain(format!("eps must be positive, got {eps}"));
    }
    let g = dual_power(big_w, p)?;
    let nodes = big_w.nodes().to_vec();
    let ln_mg = ln_local_maximal_at(&g, big_m, &nodes)?;
    if ln_mg.iter().any(|l| !l.is_finite()) {
        return Err(Error::Inadmissible("W^{-p'/p} is not locally integrable".into()));
    }
    let ln_v: Vec<f64> = ln_mg.iter().map(|l| -(p - 1.0) * l).collect();
    let ln_ve: Vec<f64> = ln_v.iter().map(|&l| l + ln_rho(eps, l)).collect();
    Ok(CJWeights {
        p,
        eps,
        big_m,
        v: weight_from_ln(nodes.clone(), ln_v)?,
        v_eps: weight_from_ln(nodes, ln_ve)?,
    })
}

/// How a system's weights depend on `x`: exponent of the exponential factor and the
/// window of the maximal operator.
#[derive(Debug, Clone, Copy)]
struct SystemWeightShape {
    /// `true` for `e^{c x²}`, `false` for `e^{c x}`.
    quadratic: bool,
    /// Coefficient `c` with `W = w e^{c p x^k}`.
    c: f64,
    /// Power of `1+x` in `v_{1,ε}` per unit `pν`.
    nu_power: f64,
    /// `M` or `M²`.
    squared_window: bool,
}

impl SystemWeightShape {
    fn of(system: SystemKind) -> Self {
        match system {
            SystemKind::BasePhi | SystemKind::Psi => Self { quadratic: true, c: 0.5, nu_power: 2.0, squared_window: false },
            SystemKind::FrakL => Self { quadratic: false, c: 0.5, nu_power: 1.0, squared_window: true },
            SystemKind::SmallEll | SystemKind::LaguerrePoly => {
                Self { quadratic: false, c: 1.0, nu_power: 1.0, squared_window: true }
            }
        }
    }

    fn ln_exp(&self, x: f64) -> f64 {
        if self.quadratic {
            self.c * x * x
        } else {
            self.c * x
        }
    }

    fn window(&self, big_m: f64) -> f64 {
        if self.squared_window {
            big_m * big_m
        } else {
            big_m
        }
    }
}

/// Lower bound on `N` in `v_2` for each system.
pub fn v2_threshold(system: SystemKind, params: &SemigroupParams, p: f64) -> f64 {
    let mu_half = (params.mu() + 0.5).abs();
    match system {
        SystemKind::BasePhi | SystemKind::Psi => 1.0 + p * mu_half,
        SystemKind::FrakL => 1.0 + 0.5 * p * (mu_half - 0.5),
        SystemKind::SmallEll | SystemKind::LaguerrePoly => 1.0 + p * (params.m() + (params.alpha() + 0.5).abs()),
    }
}

/// `ln v_2(x) = k ln⟨x⟩ - 2 ln log(e/⟨x⟩) - p c x^j - N ln(1+x)`.
pub fn ln_weight_v2(system: SystemKind, params: &SemigroupParams, p: f64, n_exponent: f64, x: f64) -> f64 {
    let a = params.alpha();
    let k = match system {
        SystemKind::BasePhi => (a + 1.5) * p - 1.0,
        SystemKind::Psi => (2.0 * a + 2.0) * p - 1.0,
        SystemKind::FrakL => (0.5 * a + 1.0) * p - 1.0,
        SystemKind::SmallEll | SystemKind::LaguerrePoly => (a + 1.0) * p - 1.0,
    };
    let shape = SystemWeightShape::of(system);
    let ax = angle(x);
    k * ax.ln() - 2.0 * (1.0 - ax.ln()).ln() - p * shape.ln_exp(x) - n_exponent * x.ln_1p()
}

pub fn weight_v2(system: SystemKind, params: &SemigroupParams, p: f64, n_exponent: f64, nodes: &[f64]) -> Result<TabulatedFunction> {
    check_p(p)?;
    let th = v2_threshold(system, params, p);
    if !(n_exponent > th) {
        return domain(format!("N must exceed {th}, got {n_exponent}"));
    }
    weight_sample(nodes, |x| ln_weight_v2(system, params, p, n_exponent, x))
}

/// `ln v_2(x) = ((α+3/2)p - 1) ln⟨x⟩ - 2 ln log(e/⟨x⟩) - p ln(1+x)`, the heat variant.
/// With `c(x) = ⟨x⟩^{-(α+3/2)}`, `∫ c^p v_2 = ∫ dx / (⟨x⟩ log(e/⟨x⟩)² (1+x)^p)` is finite.
pub fn ln_weight_v2_heat(params: &SemigroupParams, p: f64, x: f64) -> f64 {
    let ax = angle(x);
    ((params.alpha() + 1.5) * p - 1.0) * ax.ln() - 2.0 * (1.0 - ax.ln()).ln() - p * x.ln_1p()
}

pub fn weight_v2_heat(params: &SemigroupParams, p: f64, nodes: &[f64]) -> Result<TabulatedFunction> {
    check_p(p)?;
    weight_sample(nodes, |x| ln_weight_v2_heat(params, p, x))
}

/// `W = w e^{p c x^j}` for the system.
pub fn lifted_weight(w: &TabulatedFunction, system: SystemKind, p: f64) -> Result<TabulatedFunction> {
    let shape = SystemWeightShape::of(system);
    let ln: Vec<f64> = w.nodes().iter().zip(w.node_ln_values()).map(|(&x, l)| l + p * shape.ln_exp(x)).collect();
    weight_from_ln(w.nodes().to_vec(), ln)
}

/// `v_{1,ε} = e^{-p c x^j} (1+x)^{-kpν} 𝒱 ρ_ε(𝒱)` where `𝒱` is the Carleson–Jones `V` of
/// `W = w e^{p c x^j}`. Requires `w ∈ D_p(Φ)`.
pub fn weight_v1eps(
    w: &TabulatedFunction,
    system: SystemKind,
    params: &SemigroupParams,
    p: f64,
    eps: f64,
    big_m: f64,
    cfg: &QuadratureConfig,
) -> Result<TabulatedFunction> {
    let m = class_membership(w, WeightClassSpec::DpPhi { p, system }, params, cfg)?;
    if !m.member {
        return Err(Error::Inadmissible(format!("w is not in D_p(Phi): {}", m.reason.unwrap_or_default())));
    }
    weight_v1eps_unchecked(w, system, params, p, eps, big_m)
}

pub(crate) fn weight_v1eps_unchecked(
    w: &TabulatedFunction,
    system: SystemKind,
    params: &SemigroupParams,
    p: f64,
    eps: f64,
    big_m: f64,
) -> Result<TabulatedFunction> {
    let shape = SystemWeightShape::of(system);
    let big_w = lifted_weight(w, system, p)?;
    let cj = carleson_jones(&big_w, p, eps, shape.window(big_m))?;
    let nu = params.nu();
    let ln: Vec<f64> = cj
        .v_eps
        .nodes()
        .iter()
        .zip(cj.v_eps.node_ln_values())
        .map(|(&x, l)| l - p * shape.ln_exp(x) - shape.nu_power * p * nu * x.ln_1p())
        .collect();
    weight_from_ln(w.nodes().to_vec(), ln)
}

/// Pointwise minimum of two weights on a common node set.
pub fn weight_v_combined(v1: &TabulatedFunction, v2: &TabulatedFunction) -> Result<TabulatedFunction> {
    if v1.nodes() != v2.nodes() {
        return Err(Error::NodeMismatch(format!("{} vs {} nodes", v1.nodes().len(), v2.nodes().len())));
    }
    let ln: Vec<f64> = v1.node_ln_values().iter().zip(v2.node_ln_values()).map(|(a, b)| a.min(b)).collect();
    weight_from_ln(v1.nodes().to_vec(), ln)
}

/// Exponents of the alternative weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiWExponents {
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
}

impl PhiWExponents {
    /// `N_0 = ⌈2 + p(|μ+1/2| + α + 3/2)⌉`, `N_1 = N_2 = 4`.
    pub fn defaults(params: &SemigroupParams, p: f64) -> Self {
        let n0 = (2.0 + p * ((params.mu() + 0.5).abs() + params.alpha() + 1.5)).ceil();
        Self { n0, n1: 4.0, n2: 4.0 }
    }
}

/// `v^{Φ,w}_ε = min{Φ^p G Υ_ε, ⟨x⟩^{p-1} log(e/⟨x⟩)^{-2} Φ^p (1+x)^{-N_0}}` with
/// `G = [M_loc(w^{-p'/p} Φ^{p'})]^{-p/p'}` and `Υ_ε = ⟨x⟩^{εN_1} (1+x)^{-N_2} ρ_ε(G)`.
pub fn weight_v_phi_w(
    w: &TabulatedFunction,
    system: SystemKind,
    params: &SemigroupParams,
    p: f64,
    eps: f64,
    big_m: f64,
    exps: PhiWExponents,
    cfg: &QuadratureConfig,
) -> Result<TabulatedFunction> {
    let m = class_membership(w, WeightClassSpec::DpPhi { p, system }, params, cfg)?;
    if !m.member {
        return Err(Error::Inadmissible(format!("w is not in D_p(Phi): {}", m.reason.unwrap_or_default())));
    }
    let pp = conjugate(p);
    let nodes = w.nodes().to_vec();
    let ln_phi: Vec<f64> = nodes.iter().map(|&x| ln_phi_raw(system, params, x)).collect();
    let ln_h: Vec<f64> = w.node_ln_values().iter().zip(&ln_phi).map(|(l, f)| -(pp / p) * l + pp * f).collect();
    let h = weight_from_ln(nodes.clone(), ln_h)?;
    let window = SystemWeightShape::of(system).window(big_m);
    let ln_mh = ln_local_maximal_at(&h, window, &nodes)?;
    let ln: Vec<f64> = nodes
        .iter()
        .zip(&ln_phi)
        .zip(&ln_mh)
        .map(|((&x, &lf), &lm)| {
            let g = -(p - 1.0) * lm;
            let ax = angle(x).ln();
            let upsilon = eps * exps.n1 * ax - exps.n2 * x.ln_1p() + ln_rho(eps, g);
            let first = p * lf + g + upsilon;
            let second = (p - 1.0) * ax - 2.0 * (1.0 - ax).ln() + p * lf - exps.n0 * x.ln_1p();
            first.min(second)
        })
        .collect();
    weight_from_ln(nodes, ln)
}

/// `ln (∫ |f|^p weight)^{1/p}` over `(0, ∞)`, with the extensions of both functions
/// beyond the merged node range integrated in closed form.
pub fn ln_lp_norm(f: &TabulatedFunction, weight: &TabulatedFunction, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return domain(format!("p must lie in [1, ∞), got {p}"));
    }
    let mut pts: Vec<f64> = f.nodes().iter().chain(weight.nodes()).copied().collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let (y0, yn) = (pts[0], pts[pts.len() - 1]);
    let ln_g = |y: f64| p * f.ln_abs(y) + weight.ln_abs(y);
    let cfg = QuadratureConfig::default().with_rel_tol(1e-10);
    let mut acc = integrate_ln(ln_g, &pts, &cfg)?.ln_value;
    // constant below the first node
    acc = log_add(acc, ln_g(0.5 * y0) + y0.ln());
    let tail_exp = |t: &TabulatedFunction| match t.extension() {
        Extension::PowerTail(e) => Some(e),
        Extension::Zero => None,
    };
    let ln_end = ln_g(yn);
    if let (Some(ef), Some(ew)) = (tail_exp(f), tail_exp(weight)) {
        let beyond_f = yn >= f.last_node();
        let beyond_w = yn >= weight.last_node();
        if beyond_f && beyond_w && ln_end.is_finite() {
            let e = p * ef + ew;
            if e >= -1.0 {
                return Err(Error::Inadmissible(format!("the tail of |f|^p w decays like y^{e}")));
            }
            acc = log_add(acc, ln_end + yn.ln() - (-(e + 1.0)).ln());
        }
    }
    Ok(acc / p)
}

pub fn lp_norm(f: &TabulatedFunction, weight: &TabulatedFunction, p: f64) -> Result<f64> {
    ln_lp_norm(f, weight, p).map(f64::exp)
}

/// `W ≡ 1` on the nodes.
pub fn unit_weight(nodes: &[f64]) -> Result<TabulatedFunction> {
    TabulatedFunction::from_ln(nodes.to_vec(), vec![0.0; nodes.len()], Extension::PowerTail(0.0))
}

/// The interpolation used for every weight.
pub const WEIGHT_INTERPOLATION: Interpolation = Interpolation::LinearInLog;
