use std::collections::BTreeMap;
use std::sync::Arc;

use laguerre_kernels::error::Error;
use laguerre_kernels::experiments::{
    heat_t0_sweep, maximal_two_weight_experiment, poisson_weight_pipeline, HeatPipelineExperiment, MaximalExperiment,
    PipelineExperiment,
};
use laguerre_kernels::heat::{heat_kernel, heat_kernel_series, heat_transform};
use laguerre_kernels::poisson::{
    convergence_experiment, ln_phi, ln_poisson_kernel, poisson_split, subordination_multiplier,
};
use laguerre_kernels::quadrature::QuadratureConfig;
use laguerre_kernels::special::{ln_phi0, SemigroupParams};
use laguerre_kernels::tabulated::{log_nodes, Analytic, ScalarFn};
use laguerre_kernels::transference::{ln_system_poisson_kernel, phi_consistency, SystemKind};
use laguerre_kernels::weights::{
    carleson_jones, class_membership, lifted_weight, v2_threshold, weight_sample, weight_v1eps, weight_v2, weight_v_combined,
    weight_v_phi_w, PhiWExponents, WeightClassSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{json_report, Csv};

/// Why a command did not produce a passing report.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numeric(String),
    Inadmissible(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Inadmissible(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numeric(m) | Failure::Inadmissible(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Inadmissible(_) => Failure::Inadmissible(e.to_string()),
            Error::Domain(_) | Error::Parse(_) => Failure::Config(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

/// Attaches the inputs of the row being computed to a library error.
fn at_row<T>(r: laguerre_kernels::Result<T>, row: &str) -> Result<T, Failure> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Numeric(m) => Failure::Numeric(format!("{m} at {row}")),
        other => other,
    })
}

/// Rendered report and the pass verdict.
pub struct Report {
    pub text: String,
    pub pass: bool,
}

fn quad(cfg: &ExperimentConfig) -> Result<QuadratureConfig, Failure> {
    Ok(QuadratureConfig::default().with_rel_tol(cfg.get("rel_tol")?))
}

fn grid(cfg: &ExperimentConfig) -> Result<Vec<f64>, Failure> {
    let n: usize = cfg.get("grid_points")?;
    let (lo, hi): (f64, f64) = (cfg.get("grid_lo")?, cfg.get("grid_hi")?);
    if n == 0 || !(lo > 0.0) || (n > 1 && !(hi > lo)) {
        return Err(Failure::Config("grid needs grid_points >= 1 and 0 < grid_lo < grid_hi".into()));
    }
    Ok(if n == 1 { vec![lo] } else { log_nodes(lo, hi, n) })
}

fn series_terms(n_max: usize, t: f64) -> usize {
    if n_max > 0 {
        n_max
    } else {
        (36.0 / (4.0 * t)).ceil() as usize + 10
    }
}

/// Heat kernel against its series, Poisson kernel with its two parts, and `P/Φ`.
pub fn kernel(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let p = cfg.params()?;
    let q = quad(cfg)?;
    let ys = grid(cfg)?;
    let n_max: usize = cfg.get("n_max")?;
    let mut csv = Csv::new(&["t", "x", "y", "heat", "heat_series", "poisson", "B", "A", "phi", "ratio", "pass"]);
    let mut pass = true;
    let mut times = cfg.list("times")?;
    times.sort_by(f64::total_cmp);
    for &t in &times {
        for &x in &ys {
            for &y in &ys {
                let row = format!("t={t}, x={x}, y={y}");
                let h = at_row(heat_kernel(&p, t, x, y), &row)?;
                let s = at_row(heat_kernel_series(&p, t, x, y, series_terms(n_max, t)), &row)?;
                let split = at_row(poisson_split(&p, t, x, y, &q), &row)?;
                let lp = at_row(ln_poisson_kernel(&p, t, x, y, &q), &row)?.ln_value;
                let lf = at_row(ln_phi(SystemKind::BasePhi, &p, y), &row)?;
                let ratio = (lp - lf).exp();
                let ok = (s.value - h).abs() <= (1e-9 * h).max(s.tail_bound + s.rounding_bound)
                    && ratio.is_finite()
                    && ratio > 0.0;
                pass &= ok;
                csv.push(vec![
                    t.into(),
                    x.into(),
                    y.into(),
                    h.into(),
                    s.value.into(),
                    lp.exp().into(),
                    split.b_part().into(),
                    split.a_part().into(),
                    lf.exp().into(),
                    ratio.into(),
                    ok.into(),
                ]);
            }
        }
    }
    Ok(Report { text: csv.render(cfg.echo()), pass })
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn datum(name: &str, p: &SemigroupParams) -> Result<Analytic, Failure> {
    let (a, m, nu) = (p.alpha(), p.mu(), p.nu());
    Ok(match name {
        "ground" => Analytic::positive(move |y| ln_phi0(a, y)),
        "indicator" => Analytic::signed(|y| logistic((y - 0.25) / 0.05) * logistic((3.0 - y) / 0.05)),
        "growing" => Analytic::positive(move |y| {
            0.5 * y * y - (m + 1.5) * y.ln_1p() - (2.0 + nu) * (std::f64::consts::E + y).ln().ln()
        }),
        "exp_square" => Analytic::positive(|y| y * y),
        other => return Err(Failure::Config(format!("unknown datum {other:?}"))),
    })
}

/// `|P_t f(x) - f(x)|` along `t_seq`, with the heat semigroup alongside.
pub fn converge(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let p = cfg.params()?;
    let q = quad(cfg)?;
    let f = datum(&cfg.get::<String>("datum")?, &p)?;
    let mut xs = cfg.list("xs")?;
    xs.sort_by(f64::total_cmp);
    let ts = cfg.list("t_seq")?;
    let table = convergence_experiment(&p, &f, &xs, &ts, cfg.get("tol")?, &q)?;
    let verdicts: BTreeMap<u64, bool> = table.verdicts.iter().map(|(x, ok)| (x.to_bits(), *ok)).collect();
    let mut csv = Csv::new(&["x", "t", "value", "target", "error", "heat_value", "heat_error", "pass"]);
    for r in &table.rows {
        let hv = heat_transform(&p, r.t, &f, r.x, &q).map(|e| e.value).unwrap_or(f64::NAN);
        csv.push(vec![
            r.x.into(),
            r.t.into(),
            r.value.into(),
            r.target.into(),
            r.error.into(),
            hv.into(),
            (hv - r.target).abs().into(),
            verdicts[&r.x.to_bits()].into(),
        ]);
    }
    Ok(Report { text: csv.render(cfg.echo()), pass: table.pass })
}

type LnWeight = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

fn ln_weight(name: &str, p: f64) -> Result<LnWeight, Failure> {
    Ok(match name {
        "gaussian" => Arc::new(move |y| 0.5 * p * y * y),
        "gaussian_poly" => Arc::new(move |y| p * y.ln_1p() + 0.5 * p * y * y),
        "unit" => Arc::new(|_| 0.0),
        "collapsed" => Arc::new(move |y| -0.5 * p * y * y),
        "decaying" => Arc::new(move |y| -p * y * y),
        other => return Err(Failure::Config(format!("unknown weight {other:?}"))),
    })
}

fn membership(f: &dyn ScalarFn, spec: WeightClassSpec, p: &SemigroupParams, q: &QuadratureConfig) -> Result<Value, Failure> {
    let m = class_membership(f, spec, p, q)?;
    Ok(json!({ "member": m.member, "norm": m.norm, "reason": m.reason }))
}

/// Weight constructions, class memberships and the boundedness sweeps.
pub fn weights(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let params = cfg.params()?;
    let q = quad(cfg)?;
    let system = cfg.system()?;
    let (p, qq, eps, big_m): (f64, f64, f64, f64) = (cfg.get("p")?, cfg.get("q")?, cfg.get("eps")?, cfg.get("big_m")?);
    let x_max: f64 = cfg.get("x_max")?;
    let nodes = log_nodes(1e-3, x_max, cfg.get("weight_nodes")?);
    let name: String = cfg.get("weight")?;
    let ln_w = ln_weight(&name, p)?;
    let exact = {
        let f = ln_w.clone();
        Analytic::positive(move |y| f(y))
    };
    let admissible = class_membership(&exact, WeightClassSpec::DpPhi { p, system }, &params, &q)?;
    if !admissible.member {
        return Err(Failure::Inadmissible(format!("w is not in D_p(Phi): {}", admissible.reason.unwrap_or_default())));
    }
    let w = weight_sample(&nodes, &*ln_w)?;
    let big_w = lifted_weight(&w, system, p)?;
    let cj = carleson_jones(&big_w, p, eps, big_m)?;
    let v1 = weight_v1eps(&w, system, &params, p, eps, big_m, &q)?;
    let n_exponent = match cfg.echo()["n_exponent"].as_str() {
        "auto" => v2_threshold(system, &params, p).floor() + 1.0,
        _ => cfg.get("n_exponent")?,
    };
    let v2 = weight_v2(system, &params, p, n_exponent, &nodes)?;
    let v = weight_v_combined(&v1, &v2)?;
    let vphi = weight_v_phi_w(&w, system, &params, p, eps, big_m, PhiWExponents::defaults(&params, p), &q)?;

    let mut memb = Map::new();
    memb.insert("w_in_Dp".into(), membership(&exact, WeightClassSpec::DpPhi { p, system }, &params, &q)?);
    memb.insert("v_in_Dq".into(), membership(&v, WeightClassSpec::DpPhi { p: qq, system }, &params, &q)?);
    memb.insert("v_phi_w_in_Dq".into(), membership(&vphi, WeightClassSpec::DpPhi { p: qq, system }, &params, &q)?);
    let mut pass = memb.values().all(|m| m["member"] == Value::Bool(true));

    let rows: Vec<Value> = nodes
        .iter()
        .map(|&y| {
            json!({
                "y": y, "w": w.value(y), "W": big_w.value(y), "V": cj.v.value(y), "V_eps": cj.v_eps.value(y),
                "v1": v1.value(y), "v2": v2.value(y), "v": v.value(y), "v_phi_w": vphi.value(y),
            })
        })
        .collect();

    let mut fitted = BTreeMap::new();
    let mut stability = BTreeMap::new();
    let mut heat_rows = Vec::new();
    if cfg.get::<bool>("sweep")? {
        if system != SystemKind::BasePhi {
            return Err(Failure::Config("the boundedness sweeps run for system=base_phi only; set sweep=false".into()));
        }
        let seed: u64 = cfg.get("seed")?;
        let functions: usize = cfg.get("functions")?;
        let lifted = big_w.clone();
        let ln_big_w = move |y: f64| lifted.ln_abs(y);
        let me = MaximalExperiment { p, eps, big_m, functions, seed, ..Default::default() };
        let r = maximal_two_weight_experiment("carleson_jones", &ln_big_w, &me)?;
        pass &= r.pass;
        fitted.insert("C_maximal".to_string(), r.fitted["C"]);
        stability.insert("C_maximal".to_string(), r.stability["C"]);
        let e = PipelineExperiment {
            params,
            p,
            eps,
            big_m,
            t0: cfg.get("t0")?,
            t_decades: cfg.get("t_decades")?,
            t_per_decade: cfg.get("t_per_decade")?,
            n_exponent,
            x_points: cfg.get("x_points")?,
            x_max,
            weight_nodes: cfg.get("weight_nodes")?,
            functions,
            y_max: cfg.get("y_max")?,
            seed,
            q: qq,
        };
        let out = poisson_weight_pipeline(&[&name], &[&*ln_w], &e, &q)?;
        let r = &out.reports[0];
        pass &= r.pass;
        fitted.insert("C_poisson_maximal".to_string(), r.fitted["C"]);
        fitted.insert("C_poisson_maximal_ensemble_doubled".to_string(), r.fitted["C_ensemble_doubled"]);
        stability.insert("C_poisson_maximal".to_string(), r.stability["C"]);
        if params.mu() == 0.0 {
            let he = HeatPipelineExperiment {
                params,
                p,
                eps,
                big_t: cfg.get("big_t")?,
                t0: e.t0,
                t_decades: e.t_decades,
                t_per_decade: cfg.get("heat_t_per_decade")?,
                x_points: cfg.get("heat_x_points")?,
                x_max,
                weight_nodes: e.weight_nodes,
                functions,
                y_max: e.y_max,
                seed,
                q: qq,
            };
            let sweep = heat_t0_sweep(&name, &*ln_w, &he, &cfg.list("heat_t0s")?, &q)?;
            pass &= sweep.pass;
            fitted.insert("largest_stable_t0".to_string(), sweep.fitted["largest_stable_t0"]);
            heat_rows = sweep
                .rows
                .iter()
                .map(|r| json!({ "t0": r.inputs[0], "C": r.computed, "C_refined": r.reference, "stability": r.ratio, "pass": r.pass }))
                .collect();
        }
    }
    let mut extra = Map::new();
    extra.insert("membership".into(), Value::Object(memb));
    extra.insert("stability".into(), json!(stability));
    extra.insert("heat_t0_sweep".into(), Value::Array(heat_rows));
    Ok(Report { text: json_report(cfg.echo(), rows, fitted, extra, pass), pass })
}

/// `Σ F_t(λ_n) ψ_n(x) ψ_n(y)` in the system's own eigenbasis.
fn spectral_poisson(system: SystemKind, p: &SemigroupParams, t: f64, x: f64, y: f64, n_max: usize) -> laguerre_kernels::Result<f64> {
    let ex = system.eigenfunctions(p.alpha(), n_max, x)?;
    let ey = system.eigenfunctions(p.alpha(), n_max, y)?;
    let mut s = 0.0;
    for n in 0..=n_max {
        s += subordination_multiplier(p.nu(), t, system.eigenvalue(p, n))? * ex[n] * ey[n];
    }
    Ok(s)
}

/// Kernel relations, eigenfunction transport and `Φ` consistency for each system.
pub fn transfer(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let params = cfg.params()?;
    let q = quad(cfg)?;
    let systems = cfg.systems()?;
    let samples: usize = cfg.get("samples")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.get("seed")?);
    let triples: Vec<(f64, f64, f64)> =
        (0..samples).map(|_| (rng.gen_range(0.75..2.0), rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0))).collect();
    let a = params.alpha();
    let mut csv = Csv::new(&["check", "system", "t", "x", "y", "computed", "reference", "delta", "pass"]);
    let mut pass = true;
    let mut push = |csv: &mut Csv, check: &str, k: SystemKind, txy: (f64, f64, f64), c: f64, r: f64, delta: f64, tol: f64| {
        let ok = delta <= tol;
        pass &= ok;
        csv.push(vec![check.into(), k.name().into(), txy.0.into(), txy.1.into(), txy.2.into(), c.into(), r.into(), delta.into(), ok.into()]);
    };
    for &k in &systems {
        for &(t, x, y) in &triples {
            let row = format!("system={k}, t={t}, x={x}, y={y}");
            let direct = at_row(ln_system_poisson_kernel(k, &params, t, x, y, &q), &row)?;
            // the relation to the base kernel, written out
            let base = |t: f64, x: f64, y: f64| at_row(ln_poisson_kernel(&params, t, x, y, &q), &row).map(|e| e.ln_value);
            let related = match k {
                SystemKind::BasePhi => base(t, x, y)?,
                SystemKind::Psi => k.ln_multiplier_a(a, x) + k.ln_multiplier_a(a, y) + base(t, x, y)?,
                SystemKind::FrakL => -0.25 * (16.0 * x * y).ln() + base(0.5 * t, x.sqrt(), y.sqrt())?,
                SystemKind::SmallEll | SystemKind::LaguerrePoly => {
                    k.ln_multiplier_a(a, x) + k.ln_multiplier_a(a, y) - 0.25 * (16.0 * x * y).ln()
                        + base(0.5 * t, x.sqrt(), y.sqrt())?
                }
            };
            let d = (direct - related).exp_m1().abs();
            push(&mut csv, "relation", k, (t, x, y), direct.exp(), related.exp(), d, 1e-6);
            let series = at_row(spectral_poisson(k, &params, t, x, y, 4000), &row)?;
            push(&mut csv, "spectral", k, (t, x, y), direct.exp(), series, (direct.exp() / series - 1.0).abs(), 1e-6);
        }
        for y in [0.05, 0.7, 3.0, 11.0] {
            let d = k.eigenfunctions(a, 12, y)?;
            let c = k.eigenfunctions_via_maps(a, 12, y)?;
            for (n, (u, v)) in d.iter().zip(&c).enumerate() {
                let delta = (u - v).abs() / u.abs().max(1e-300);
                push(&mut csv, "eigen", k, (f64::NAN, n as f64, y), *u, *v, delta, 1e-10);
            }
        }
        let r = phi_consistency(k, &params, &log_nodes(1e-3, 40.0, 60))?;
        let r0 = r.rows[0].ratio;
        for row in &r.rows {
            push(&mut csv, "phi", k, (f64::NAN, f64::NAN, row.inputs[0]), row.computed, row.reference, (row.ratio / r0 - 1.0).abs(), 1e-8);
        }
    }
    Ok(Report { text: csv.render(cfg.echo()), pass })
}
