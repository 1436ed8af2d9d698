use laguerre_kernels::experiments::{heat_t0_sweep, heat_weight_pipeline, HeatPipelineExperiment};
use laguerre_kernels::heat::ln_phi_heat;
use laguerre_kernels::quadrature::{integrate, integrate_half_line, QuadratureConfig};
use laguerre_kernels::special::SemigroupParams;
use laguerre_kernels::tabulated::{log_nodes, Analytic};
use laguerre_kernels::weights::{class_membership, ln_weight_v2_heat, weight_v2_heat, WeightClassSpec};

fn base() -> SemigroupParams {
    SemigroupParams::new(0.0, 0.0, 0.5).unwrap()
}

#[test]
fn heat_v2_arithmetic() {
    // ⟨1⟩ = 1 and log(e/1) = 1, leaving (1+x)^{-2}
    assert!((ln_weight_v2_heat(&base(), 2.0, 1.0).exp() - 0.25).abs() < 1e-15);
    // x = 1/e: ⟨x⟩^{2} / (4 (1 + 1/e)^2)
    let x = (-1.0f64).exp();
    let expected = x * x / (4.0 * (1.0 + x) * (1.0 + x));
    assert!((ln_weight_v2_heat(&base(), 2.0, x).exp() / expected - 1.0).abs() < 1e-14);
}

#[test]
fn heat_profile_values() {
    let p = SemigroupParams::new(1.5, 0.0, 0.5).unwrap();
    assert!((ln_phi_heat(&p, 1.0, 0.25) - (2.0 * 0.25f64.ln() - 0.0625 / (2.0 * 2.0f64.tanh()))).abs() < 1e-14);
}

#[test]
fn c_to_the_p_is_v2_integrable() {
    // on (0, 1] substitute x = e^{-v}, so log(e/x) = 1 + v and dx = x dv
    let p = base();
    let cfg = QuadratureConfig::default();
    let c = |x: f64| -1.5 * x.min(1.0).ln();
    // beyond v = 700 the integrand is 1/(1+v)² to double precision
    let near = integrate(|v| (2.0 * c((-v).exp()) + ln_weight_v2_heat(&p, 2.0, (-v).exp()) - v).exp(), &[0.0, 1.0, 10.0, 100.0, 700.0], &cfg)
        .unwrap()
        .value
        + 1.0 / 701.0;
    let far = integrate_half_line(|x| if x < 1.0 { 0.0 } else { (2.0 * c(x) + ln_weight_v2_heat(&p, 2.0, x)).exp() }, &[1.0], &cfg)
        .unwrap()
        .value;
    // 1/4 ≤ (1+x)^{-2} ≤ 1 on (0, 1] against ∫ dv/(1+v)² = 1, and ∫_1^∞ (1+x)^{-2} = 1/2
    assert!((0.25..=1.0).contains(&near), "{near}");
    assert!((far - 0.5).abs() < 1e-8, "{far}");
}

#[test]
fn heat_class_membership() {
    let p = base();
    let cfg = QuadratureConfig::default();
    let unit = Analytic::positive(|_| 0.0);
    assert!(class_membership(&unit, WeightClassSpec::DpHeat { p: 2.0, big_t: 1.0 }, &p, &cfg).unwrap().member);
    let steep = Analytic::positive(|y| -y * y);
    assert!(!class_membership(&steep, WeightClassSpec::DpHeat { p: 4.0 / 3.0, big_t: 1.0 }, &p, &cfg).unwrap().member);
    let v2 = weight_v2_heat(&p, 2.0, &log_nodes(1e-4, 30.0, 300)).unwrap();
    assert!(class_membership(&v2, WeightClassSpec::DpHeat { p: 2.5, big_t: 1.0 }, &p, &cfg).unwrap().member);
    assert!(class_membership(&unit, WeightClassSpec::DpHeat { p: 2.0, big_t: 0.0 }, &p, &cfg).is_err());
}

fn small() -> HeatPipelineExperiment {
    HeatPipelineExperiment { functions: 4, t_per_decade: 8, t_decades: 2.0, ..Default::default() }
}

#[test]
fn window_follows_time_ratio() {
    let e = small();
    let env = e.envelope().unwrap();
    let m = env.big_m;
    let gamma = 2.0f64.tanh() / 0.5f64.tanh();
    assert!(((m / (m - 1.0)).powi(3) / gamma - 1.0).abs() < 1e-12);
    assert!(HeatPipelineExperiment { t0: 1.0, ..e }.envelope().is_err());
}

#[test]
fn gaussian_weight_pipeline_is_stable() {
    let cfg = QuadratureConfig::default();
    let r = heat_weight_pipeline("gaussian", &|y: f64| y * y, &small(), &cfg).unwrap();
    assert!(r.pass, "{:?} {:?}", r.fitted, r.stability);
    assert!(r.fitted["C"] > 0.0 && r.fitted["C"].is_finite());
}

#[test]
fn inadmissible_weight_is_rejected() {
    let cfg = QuadratureConfig::default();
    let r = heat_weight_pipeline("steep", &|y: f64| -2.0 * y * y, &small(), &cfg);
    assert!(matches!(r, Err(laguerre_kernels::error::Error::Inadmissible(_))));
}

#[test]
fn t0_sweep_reports_largest_passing_time() {
    let cfg = QuadratureConfig::default();
    let r = heat_t0_sweep("gaussian", &|y: f64| y * y, &HeatPipelineExperiment { functions: 2, ..small() }, &[0.1, 0.25], &cfg).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert!(r.rows[0].inputs[0] < r.rows[1].inputs[0]);
    let expected = r.rows.iter().filter(|row| row.pass).map(|row| row.inputs[0]).fold(f64::NAN, f64::max);
    let got = r.fitted["largest_stable_t0"];
    assert!(got == expected || (got.is_nan() && expected.is_nan()));
}
