//! Seeded random data and the sweeps that fit and stress-test the constants of the
//! kernel bounds and weighted inequalities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heat::{heat_maximal, ln_heat_bound_envelope, ln_heat_kernel, time_grid, HeatBoundEnvelope};
use crate::poisson::{l1_phi_norm, ln_phi_raw, ln_poisson_kernel, poisson_envelope, poisson_sup_sweep, PoissonEnvelope};
use crate::quadrature::QuadratureConfig;
use crate::report::{relative_change, BoundReport, BoundRow, STABILITY_LIMIT};
use crate::special::SemigroupParams;
use crate::tabulated::{log_nodes, Analytic, Extension, Interpolation, TabulatedFunction};
use crate::transference::SystemKind;
use crate::weights::{
    carleson_jones, class_membership, ln_local_maximal_at, ln_lp_norm, weight_sample, weight_v1eps_unchecked, weight_v2,
    weight_v2_heat, weight_v_combined, WeightClassSpec,
};

/// Random piecewise-linear functions with 10 to 40 knots on `[y_min, y_max]` and values
/// in `[0, 10]`. Function `i` depends only on `(seed, i)`, so a larger ensemble contains
/// every smaller one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub seed: u64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Ensemble {
    pub fn new(seed: u64, y_max: f64) -> Self {
        Self { seed, y_min: 0.01, y_max }
    }

    pub fn function(&self, index: usize) -> TabulatedFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let knots = rng.gen_range(10..=40usize);
        let mut nodes: Vec<f64> = (0..knots - 2).map(|_| rng.gen_range(self.y_min..self.y_max)).collect();
        nodes.push(self.y_min);
        nodes.push(self.y_max);
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let values = nodes.iter().map(|_| rng.gen_range(0.0..10.0)).collect();
        TabulatedFunction::new(nodes, values, Interpolation::Linear, Extension::Zero).expect("sorted distinct nodes")
    }

    pub fn take(&self, n: usize) -> Vec<TabulatedFunction> {
        (0..n).map(|i| self.function(i)).collect()
    }
}

/// A constant fitted on a base run and on a run with doubled grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableConstant {
    pub base: f64,
    pub refined: f64,
    pub delta: f64,
    pub pass: bool,
}

impl StableConstant {
    pub fn new(base: f64, refined: f64) -> Self {
        let delta = relative_change(base, refined);
        let pass = base.is_finite() && refined.is_finite() && base > 0.0 && delta < STABILITY_LIMIT;
        Self { base, refined, delta, pass }
    }

    fn record(&self, report: &mut BoundReport, key: &str) {
        report.fitted.insert(key.to_string(), self.base);
        report.fitted.insert(format!("{key}_refined"), self.refined);
        report.stability.insert(key.to_string(), self.delta);
    }
}

fn max_finite(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

/// Maximal ratio of a kernel to its envelope over `x × y × t`, in logs.
fn ln_ratio_sweep<F>(xs: &[f64], ys: &[f64], ts: &[f64], ln_ratio: F) -> Result<Vec<(f64, f64, f64, f64)>>
where
    F: Fn(f64, f64, f64) -> Result<f64> + Sync,
{
    let triples: Vec<(f64, f64, f64)> =
        ts.iter().flat_map(|&t| xs.iter().flat_map(move |&x| ys.iter().map(move |&y| (t, x, y)))).collect();
    triples.par_iter().map(|&(t, x, y)| Ok((t, x, y, ln_ratio(t, x, y)?))).collect()
}

/// Grid for the envelope sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSweep {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub times: Vec<f64>,
}

impl EnvelopeSweep {
    fn grid(&self, factor: usize) -> Vec<f64> {
        log_nodes(self.lo, self.hi, (self.points - 1) * factor + 1)
    }
}

fn envelope_report<F>(name: &str, sweep: &EnvelopeSweep, ln_ratio: F) -> Result<BoundReport>
where
    F: Fn(f64, f64, f64) -> Result<f64> + Sync,
{
    let mut report = BoundReport::new(name, &["t", "x", "y"]);
    let base = ln_ratio_sweep(&sweep.grid(1), &sweep.grid(1), &sweep.times, &ln_ratio)?;
    let fine = ln_ratio_sweep(&sweep.grid(2), &sweep.grid(2), &sweep.times, &ln_ratio)?;
    let c = StableConstant::new(max_finite(base.iter().map(|r| r.3)).exp(), max_finite(fine.iter().map(|r| r.3)).exp());
    for &(t, x, y, l) in &base {
        report.push(BoundRow::new(vec![t, x, y], f64::NAN, f64::NAN, l.is_finite()).with_ratio(l.exp()));
    }
    report.sort_rows();
    c.record(&mut report, "C");
    report.config.insert("points".into(), sweep.points.to_string());
    report.config.insert("range".into(), format!("[{}, {}]", sweep.lo, sweep.hi));
    report.pass = c.pass && report.rows.iter().all(|r| r.pass);
    Ok(report)
}

/// `P_t(x,y) ≤ C ×` envelope: fits `C` on the sweep and on the doubled grid.
pub fn poisson_envelope_sweep(
    params: &SemigroupParams,
    env: &PoissonEnvelope,
    sweep: &EnvelopeSweep,
    cfg: &QuadratureConfig,
) -> Result<BoundReport> {
    let mut r = envelope_report("poisson_envelope", sweep, |t, x, y| {
        let k = ln_poisson_kernel(params, t, x, y, cfg)?.ln_value;
        Ok(k - poisson_envelope(params, env, t, x, y)?.ln_standard())
    })?;
    r.config.insert("M".into(), env.big_m.to_string());
    Ok(r)
}

/// Heat kernel against its two-region envelope with `(M/(M-1))³ = γ`.
pub fn heat_envelope_sweep(params: &SemigroupParams, env: &HeatBoundEnvelope, sweep: &EnvelopeSweep) -> Result<BoundReport> {
    let mut r = envelope_report("heat_envelope", sweep, |t, x, y| {
        let k = ln_heat_kernel(params, t, x, y)?;
        Ok(k - ln_heat_bound_envelope(params, env, t, x, y)?.0)
    })?;
    r.config.insert("gamma".into(), env.gamma.to_string());
    r.config.insert("M".into(), env.big_m.to_string());
    Ok(r)
}

/// Settings of the two-weight maximal experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximalExperiment {
    pub p: f64,
    pub eps: f64,
    pub big_m: f64,
    pub nodes: usize,
    pub functions: usize,
    /// Right end of the random data; the weight nodes cover `[1e-3, 2 y_max]`.
    pub y_max: f64,
    pub seed: u64,
}

impl Default for MaximalExperiment {
    fn default() -> Self {
        Self { p: 2.0, eps: 0.1, big_m: 4.0, nodes: 200, functions: 30, y_max: 10.0, seed: 20240611 }
    }
}

fn ln_ratio_maximal(
    f: &TabulatedFunction,
    nodes: &[f64],
    big_w: &TabulatedFunction,
    v_eps: &TabulatedFunction,
    e: &MaximalExperiment,
) -> Result<f64> {
    let mf = TabulatedFunction::from_ln(nodes.to_vec(), ln_local_maximal_at(f, e.big_m, nodes)?, Extension::Zero)?;
    Ok(ln_lp_norm(&mf, v_eps, e.p)? - ln_lp_norm(f, big_w, e.p)?)
}

fn maximal_run(ln_big_w: &(dyn Fn(f64) -> f64 + Sync), e: &MaximalExperiment, factor: usize) -> Result<Vec<f64>> {
    let nodes = log_nodes(1e-3, 2.0 * e.y_max, e.nodes * factor);
    let big_w = weight_sample(&nodes, ln_big_w)?;
    let cj = carleson_jones(&big_w, e.p, e.eps, e.big_m)?;
    let fs = Ensemble::new(e.seed, e.y_max).take(e.functions * factor);
    fs.par_iter().map(|f| ln_ratio_maximal(f, &nodes, &big_w, &cj.v_eps, e)).collect()
}

/// `‖M_loc f‖_{L^p(V_ε)} / ‖f‖_{L^p(W)}` over the ensemble; the supremum is refitted with
/// doubled nodes. The refined run also covers twice as many functions, whose supremum is
/// reported as `C_ensemble_doubled`.
pub fn maximal_two_weight_experiment(name: &str, ln_big_w: &(dyn Fn(f64) -> f64 + Sync), e: &MaximalExperiment) -> Result<BoundReport> {
    let base = maximal_run(ln_big_w, e, 1)?;
    let fine = maximal_run(ln_big_w, e, 2)?;
    let n = e.functions;
    let c = StableConstant::new(max_finite(base.iter().copied()).exp(), max_finite(fine[..n].iter().copied()).exp());
    let mut report = BoundReport::new(name, &["function"]);
    for (i, l) in base.iter().enumerate() {
        report.push(BoundRow::new(vec![i as f64], f64::NAN, f64::NAN, l.is_finite()).with_ratio(l.exp()));
    }
    c.record(&mut report, "C");
    report.fitted.insert("C_ensemble_doubled".into(), max_finite(fine.iter().copied()).exp());
    echo_maximal(&mut report, e);
    report.pass = c.pass;
    Ok(report)
}

fn echo_maximal(report: &mut BoundReport, e: &MaximalExperiment) {
    for (k, v) in [("p", e.p), ("eps", e.eps), ("M", e.big_m), ("y_max", e.y_max)] {
        report.config.insert(k.into(), v.to_string());
    }
    report.config.insert("nodes".into(), e.nodes.to_string());
    report.config.insert("functions".into(), e.functions.to_string());
    report.config.insert("seed".into(), e.seed.to_string());
}

/// Exponents at which `V_ε` is tested: `q_0 = p + ε(p/p')|1+βp'|/(1+β) + slack` for the
/// class near 0 and `q_∞ = p(1+ε)M²a/b + slack` for the class at infinity.
pub fn propagated_exponents(p: f64, eps: f64, big_m: f64, beta: f64, a: f64, b: f64, slack: f64) -> (f64, f64) {
    let pp = p / (p - 1.0);
    let q0 = p + eps * (p / pp) * (1.0 + beta * pp).abs() / (1.0 + beta) + slack;
    let q_inf = p * (1.0 + eps) * big_m * big_m * a / b + slack;
    (q0, q_inf)
}

/// Checks that `W ∈ D^0_p(β) ∩ D^exp_p(a)` carries over to `V_ε ∈ D^0_{q_0}(β) ∩ D^exp_{q_∞}(b)`.
pub fn propagation_check(
    ln_big_w: &(dyn Fn(f64) -> f64 + Sync),
    p: f64,
    eps: f64,
    big_m: f64,
    beta: f64,
    a: f64,
    b: f64,
    nodes: &[f64],
    params: &SemigroupParams,
    cfg: &QuadratureConfig,
) -> Result<BoundReport> {
    let big_w = weight_sample(nodes, ln_big_w)?;
    let w_fn = Analytic::positive(ln_big_w_owned(ln_big_w, nodes));
    let w0 = class_membership(&w_fn, WeightClassSpec::D0 { p, beta }, params, cfg)?;
    let wexp = class_membership(&w_fn, WeightClassSpec::DExp { p, a }, params, cfg)?;
    let cj = carleson_jones(&big_w, p, eps, big_m)?;
    let (q0, q_inf) = propagated_exponents(p, eps, big_m, beta, a, b, 0.1);
    let v0 = class_membership(&cj.v_eps, WeightClassSpec::D0 { p: q0, beta }, params, cfg)?;
    let vexp = class_membership(&cj.v_eps, WeightClassSpec::DExp { p: q_inf, a: b }, params, cfg)?;
    let mut report = BoundReport::new("propagation", &["q"]);
    report.push(BoundRow::new(vec![q0], v0.norm.unwrap_or(f64::INFINITY), w0.norm.unwrap_or(f64::INFINITY), v0.member));
    report.push(BoundRow::new(vec![q_inf], vexp.norm.unwrap_or(f64::INFINITY), wexp.norm.unwrap_or(f64::INFINITY), vexp.member));
    report.fitted.insert("q0".into(), q0);
    report.fitted.insert("q_inf".into(), q_inf);
    for (k, v) in [("p", p), ("eps", eps), ("M", big_m), ("beta", beta), ("a", a), ("b", b)] {
        report.config.insert(k.into(), v.to_string());
    }
    report.config.insert("W_in_classes".into(), (w0.member && wexp.member).to_string());
    report.pass = w0.member && wexp.member && v0.member && vexp.member;
    Ok(report)
}

/// Samples the closure into an owned function for `Analytic`.
fn ln_big_w_owned(f: &(dyn Fn(f64) -> f64 + Sync), nodes: &[f64]) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
    let fine = log_nodes(nodes[0].min(1e-6), nodes[nodes.len() - 1].max(1e3), 4000);
    let values: Vec<f64> = fine.iter().map(|&y| f(y)).collect();
    let tab = crate::weights::weight_from_ln(fine, values).expect("positive weight");
    move |y| crate::tabulated::ScalarFn::ln_abs(&tab, y)
}

/// Settings of the weighted Poisson maximal experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineExperiment {
    pub params: SemigroupParams,
    pub p: f64,
    pub eps: f64,
    pub big_m: f64,
    pub t0: f64,
    pub t_decades: f64,
    pub t_per_decade: usize,
    /// `N` in `v_2`.
    pub n_exponent: f64,
    /// Points where `P*f` is evaluated, over `[1e-3, x_max]`.
    pub x_points: usize,
    pub x_max: f64,
    /// Nodes carrying the weights.
    pub weight_nodes: usize,
    pub functions: usize,
    pub y_max: f64,
    pub seed: u64,
    /// Exponent of the class `D_q(Φ)` that `v` is tested in.
    pub q: f64,
}

impl Default for PipelineExperiment {
    fn default() -> Self {
        Self {
            params: SemigroupParams::new(0.0, 0.0, 0.5).expect("valid"),
            p: 2.0,
            eps: 0.1,
            big_m: 4.0,
            t0: 0.5,
            t_decades: 3.0,
            t_per_decade: 64,
            n_exponent: 3.0,
            x_points: 80,
            x_max: 6.0,
            weight_nodes: 400,
            functions: 30,
            y_max: 3.0,
            seed: 20240611,
            q: 2.5,
        }
    }
}

/// Output of the pipeline: one report per weight `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub reports: Vec<BoundReport>,
}

/// `ln P*_{t0} f` on `xs` for every function.
fn ln_maximal_values(e: &PipelineExperiment, fs: &[TabulatedFunction], xs: &[f64], per_decade: usize, cfg: &QuadratureConfig) -> Result<Vec<Vec<f64>>> {
    let grid = time_grid(e.t0, e.t_decades, (per_decade as f64 / 1.0) as usize);
    fs.iter()
        .map(|f| Ok(poisson_sup_sweep(&e.params, &grid, f, xs, cfg)?.into_iter().map(f64::ln).collect()))
        .collect()
}

struct PipelineRun {
    ratios: Vec<Vec<f64>>,
    memberships: Vec<(bool, bool)>,
}

fn pipeline_run(ln_ws: &[&(dyn Fn(f64) -> f64 + Sync)], e: &PipelineExperiment, factor: usize, cfg: &QuadratureConfig) -> Result<PipelineRun> {
    let xs = log_nodes(1e-3, e.x_max, e.x_points * factor);
    let wn = log_nodes(1e-3, e.x_max, e.weight_nodes * factor);
    let fs = Ensemble::new(e.seed, e.y_max).take(e.functions * factor);
    let values = ln_maximal_values(e, &fs, &xs, e.t_per_decade * factor, cfg)?;
    let mut ratios = Vec::new();
    let mut memberships = Vec::new();
    for ln_w in ln_ws {
        let w_fn = Analytic::positive(ln_big_w_owned(*ln_w, &wn));
        let w_ok = class_membership(&w_fn, WeightClassSpec::DpPhi { p: e.p, system: SystemKind::BasePhi }, &e.params, cfg)?.member;
        let w = weight_sample(&wn, ln_w)?;
        let v1 = weight_v1eps_unchecked(&w, SystemKind::BasePhi, &e.params, e.p, e.eps, e.big_m)?;
        let v2 = weight_v2(SystemKind::BasePhi, &e.params, e.p, e.n_exponent, &wn)?;
        let v = weight_v_combined(&v1, &v2)?;
        let v_ok = class_membership(&v, WeightClassSpec::DpPhi { p: e.q, system: SystemKind::BasePhi }, &e.params, cfg)?.member;
        let r: Vec<f64> = fs
            .par_iter()
            .zip(&values)
            .map(|(f, lv)| {
                let pf = TabulatedFunction::from_ln(xs.clone(), lv.clone(), Extension::Zero)?;
                Ok(ln_lp_norm(&pf, &v, e.p)? - ln_lp_norm(f, &w, e.p)?)
            })
            .collect::<Result<_>>()?;
        ratios.push(r);
        memberships.push((w_ok, v_ok));
    }
    Ok(PipelineRun { ratios, memberships })
}

/// `‖P*_{t0} f‖_{L^p(v)} / ‖f‖_{L^p(w)}` with `v = min{v_{1,ε}, v_2}` built from each `w`.
pub fn poisson_weight_pipeline(
    names: &[&str],
    ln_ws: &[&(dyn Fn(f64) -> f64 + Sync)],
    e: &PipelineExperiment,
    cfg: &QuadratureConfig,
) -> Result<PipelineOutcome> {
    if names.len() != ln_ws.len() {
        return Err(Error::Domain("one name per weight".into()));
    }
    let base = pipeline_run(ln_ws, e, 1, cfg)?;
    let fine = pipeline_run(ln_ws, e, 2, cfg)?;
    let mut reports = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let c = StableConstant::new(
            max_finite(base.ratios[k].iter().copied()).exp(),
            max_finite(fine.ratios[k][..e.functions].iter().copied()).exp(),
        );
        let mut report = BoundReport::new(name, &["function"]);
        for (i, l) in base.ratios[k].iter().enumerate() {
            report.push(BoundRow::new(vec![i as f64], f64::NAN, f64::NAN, l.is_finite()).with_ratio(l.exp()));
        }
        c.record(&mut report, "C");
        report.fitted.insert("C_ensemble_doubled".into(), max_finite(fine.ratios[k].iter().copied()).exp());
        let (w_ok, v_ok) = base.memberships[k];
        report.fitted.insert("w_in_Dp".into(), f64::from(u8::from(w_ok)));
        report.fitted.insert("v_in_Dq".into(), f64::from(u8::from(v_ok)));
        for (key, v) in [("p", e.p), ("eps", e.eps), ("M", e.big_m), ("t0", e.t0), ("N", e.n_exponent), ("q", e.q), ("y_max", e.y_max)] {
            report.config.insert(key.into(), v.to_string());
        }
        report.config.insert("seed".into(), e.seed.to_string());
        report.config.insert("functions".into(), e.functions.to_string());
        report.pass = c.pass && w_ok && v_ok;
        reports.push(report);
    }
    Ok(PipelineOutcome { reports })
}

/// `P*_{t0} f(x) ≤ C [C_1(x) M_loc(f e^{-y²/2})(x) + C_2(x) ‖f‖_{L¹(Φ)}]` over random data.
pub fn poisson_maximal_control(
    params: &SemigroupParams,
    env: &PoissonEnvelope,
    t0: f64,
    xs: &[f64],
    functions: usize,
    seed: u64,
    y_max: f64,
    cfg: &QuadratureConfig,
) -> Result<BoundReport> {
    let grid = time_grid(t0, 3.0, 16);
    let fs = Ensemble::new(seed, y_max).take(functions);
    let mut report = BoundReport::new("poisson_maximal_control", &["function", "x"]);
    let mut rows = Vec::new();
    for (i, f) in fs.iter().enumerate() {
        let sup = poisson_sup_sweep(params, &grid, f, xs, cfg)?;
        let damped = f.map_ln(|y, l| l - 0.5 * y * y)?;
        let ln_m = ln_local_maximal_at(&damped, env.big_m, xs)?;
        let l1 = l1_phi_norm(f, SystemKind::BasePhi, params, cfg)?;
        for (j, &x) in xs.iter().enumerate() {
            let bound = crate::special::log_add(env.ln_c1(params, x) + ln_m[j], env.ln_c2(params, x) + l1.ln());
            rows.push(BoundRow::new(vec![i as f64, x], sup[j], bound.exp(), true).with_ratio((sup[j].ln() - bound).exp()));
        }
    }
    for r in rows {
        report.push(r);
    }
    report.fitted.insert("C".into(), report.max_ratio());
    report.pass = report.max_ratio().is_finite();
    Ok(report)
}

/// Settings of the weighted heat maximal experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatPipelineExperiment {
    pub params: SemigroupParams,
    pub p: f64,
    pub eps: f64,
    /// `T > t0`, fixing the class `D_p(φ_T)`.
    pub big_t: f64,
    pub t0: f64,
    pub t_decades: f64,
    pub t_per_decade: usize,
    pub x_points: usize,
    pub x_max: f64,
    pub weight_nodes: usize,
    pub functions: usize,
    pub y_max: f64,
    pub seed: u64,
    pub q: f64,
}

impl Default for HeatPipelineExperiment {
    fn default() -> Self {
        Self {
            params: SemigroupParams::new(0.0, 0.0, 0.5).expect("valid"),
            p: 2.0,
            eps: 0.1,
            big_t: 1.0,
            t0: 0.25,
            t_decades: 3.0,
            t_per_decade: 16,
            x_points: 40,
            x_max: 6.0,
            weight_nodes: 400,
            functions: 30,
            y_max: 3.0,
            seed: 20240611,
            q: 2.5,
        }
    }
}

impl HeatPipelineExperiment {
    /// `M` from `(M/(M-1))³ = tanh 2T / tanh 2t0`.
    pub fn envelope(&self) -> Result<HeatBoundEnvelope> {
        if !(self.t0 > 0.0 && self.big_t > self.t0) {
            return Err(Error::Domain(format!("need 0 < t0 < T, got t0 = {}, T = {}", self.t0, self.big_t)));
        }
        HeatBoundEnvelope::new((2.0 * self.big_t).tanh() / (2.0 * self.t0).tanh())
    }
}

struct HeatRun {
    ratios: Vec<f64>,
    v_ok: bool,
}

fn heat_pipeline_run(ln_w: &(dyn Fn(f64) -> f64 + Sync), e: &HeatPipelineExperiment, factor: usize, cfg: &QuadratureConfig) -> Result<HeatRun> {
    let big_m = e.envelope()?.big_m;
    let xs = log_nodes(1e-3, e.x_max, e.x_points * factor);
    let wn = log_nodes(1e-3, e.x_max, e.weight_nodes * factor);
    let grid = time_grid(e.t0, e.t_decades, e.t_per_decade * factor);
    let w = weight_sample(&wn, ln_w)?;
    let v1 = carleson_jones(&w, e.p, e.eps, big_m)?.v_eps;
    let v2 = weight_v2_heat(&e.params, e.p, &wn)?;
    let v = weight_v_combined(&v1, &v2)?;
    let v_ok = class_membership(&v, WeightClassSpec::DpHeat { p: e.q, big_t: e.big_t }, &e.params, cfg)?.member;
    let fs = Ensemble::new(e.seed, e.y_max).take(e.functions * factor);
    let ratios = fs
        .par_iter()
        .map(|f| {
            let ln_h = xs
                .iter()
                .map(|&x| heat_maximal(&e.params, e.t0, f, x, &grid, cfg).map(f64::ln))
                .collect::<Result<Vec<f64>>>()?;
            let hf = TabulatedFunction::from_ln(xs.clone(), ln_h, Extension::Zero)?;
            Ok(ln_lp_norm(&hf, &v, e.p)? - ln_lp_norm(f, &w, e.p)?)
        })
        .collect::<Result<_>>()?;
    Ok(HeatRun { ratios, v_ok })
}

/// `‖h*_{t0} f‖_{L^p(v)} / ‖f‖_{L^p(w)}` with `v = min{V_ε, v_2}` built from `w`, where
/// `V_ε` uses the window `M` tied to `t0` and `T`.
pub fn heat_weight_pipeline(
    name: &str,
    ln_w: &(dyn Fn(f64) -> f64 + Sync),
    e: &HeatPipelineExperiment,
    cfg: &QuadratureConfig,
) -> Result<BoundReport> {
    let env = e.envelope()?;
    let wn = log_nodes(1e-3, e.x_max, e.weight_nodes);
    let w_fn = Analytic::positive(ln_big_w_owned(ln_w, &wn));
    let w_ok = class_membership(&w_fn, WeightClassSpec::DpHeat { p: e.p, big_t: e.big_t }, &e.params, cfg)?.member;
    if !w_ok {
        return Err(Error::Inadmissible("w is not in D_p(phi_T)".into()));
    }
    let base = heat_pipeline_run(ln_w, e, 1, cfg)?;
    let fine = heat_pipeline_run(ln_w, e, 2, cfg)?;
    let c = StableConstant::new(
        max_finite(base.ratios.iter().copied()).exp(),
        max_finite(fine.ratios[..e.functions].iter().copied()).exp(),
    );
    let mut report = BoundReport::new(name, &["function"]);
    for (i, l) in base.ratios.iter().enumerate() {
        report.push(BoundRow::new(vec![i as f64], f64::NAN, f64::NAN, l.is_finite()).with_ratio(l.exp()));
    }
    c.record(&mut report, "C");
    report.fitted.insert("C_ensemble_doubled".into(), max_finite(fine.ratios.iter().copied()).exp());
    report.fitted.insert("M".into(), env.big_m);
    report.fitted.insert("gamma".into(), env.gamma);
    report.fitted.insert("v_in_Dq".into(), f64::from(u8::from(base.v_ok)));
    for (key, v) in [("p", e.p), ("eps", e.eps), ("T", e.big_t), ("t0", e.t0), ("q", e.q), ("y_max", e.y_max)] {
        report.config.insert(key.into(), v.to_string());
    }
    report.config.insert("seed".into(), e.seed.to_string());
    report.config.insert("functions".into(), e.functions.to_string());
    report.pass = c.pass && base.v_ok;
    Ok(report)
}

/// Runs the heat pipeline for each `t0` and records the largest one whose constant is
/// stable and whose `v` lies in `D_q(φ_T)`. That value is where the sweep stopped
/// succeeding, not a sharp threshold.
pub fn heat_t0_sweep(
    name: &str,
    ln_w: &(dyn Fn(f64) -> f64 + Sync),
    e: &HeatPipelineExperiment,
    t0s: &[f64],
    cfg: &QuadratureConfig,
) -> Result<BoundReport> {
    let mut report = BoundReport::new(name, &["t0"]);
    let mut largest = f64::NAN;
    for &t0 in t0s {
        let r = heat_weight_pipeline(name, ln_w, &HeatPipelineExperiment { t0, ..*e }, cfg)?;
        let (c, refined) = (r.fitted["C"], r.fitted["C_refined"]);
        report.push(BoundRow::new(vec![t0], c, refined, r.pass).with_ratio(r.stability["C"]));
        if r.pass && !(largest >= t0) {
            largest = t0;
        }
    }
    report.sort_rows();
    report.fitted.insert("largest_stable_t0".into(), largest);
    report.config.insert("T".into(), e.big_t.to_string());
    report.pass = largest.is_finite();
    Ok(report)
}

/// `ln Φ` of the base system, convenient for building admissible data.
pub fn ln_base_phi(params: &SemigroupParams, y: f64) -> f64 {
    ln_phi_raw(SystemKind::BasePhi, params, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensemble_is_nested_and_bounded() {
        let small = Ensemble::new(7, 5.0).take(3);
        let large = Ensemble::new(7, 5.0).take(6);
        assert_eq!(small[..], large[..3]);
        for f in &large {
            assert!(f.nodes().len() >= 2 && f.nodes().len() <= 40);
            assert_eq!(f.first_node(), 0.01);
            assert_eq!(f.last_node(), 5.0);
            assert!(f.node_values().iter().all(|v| (0.0..10.0).contains(v)));
        }
        assert_ne!(Ensemble::new(8, 5.0).function(0), large[0]);
    }

    #[test]
    fn stability_rule() {
        assert!(StableConstant::new(2.0, 2.05).pass);
        assert!(!StableConstant::new(2.0, 2.2).pass);
        assert!(!StableConstant::new(f64::INFINITY, 2.2).pass);
    }

    #[test]
    fn exponents() {
        let (q0, qi) = propagated_exponents(2.0, 0.5, 2.0, 0.5, 1.0, 2.0, 0.1);
        assert!((q0 - (2.0 + 0.5 * 1.0 * 2.0 / 1.5 + 0.1)).abs() < 1e-14);
        assert!((qi - (2.0 * 1.5 * 4.0 * 0.5 + 0.1)).abs() < 1e-14);
    }
}
