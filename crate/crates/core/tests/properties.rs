use laguerre_kernels::experiments::Ensemble;
use laguerre_kernels::heat::{heat_kernel, ln_heat_kernel_with, HeatForm};
use laguerre_kernels::poisson::{ln_poisson_kernel, subordination_multiplier};
use laguerre_kernels::quadrature::QuadratureConfig;
use laguerre_kernels::special::SemigroupParams;
use laguerre_kernels::tabulated::{log_nodes, Extension, Interpolation, ScalarFn, TabulatedFunction};
use laguerre_kernels::transference::SystemKind;
use laguerre_kernels::weights::{
    carleson_jones, local_maximal, lp_norm, rho_eps, unit_weight, weight_sample, weight_v_combined,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = SemigroupParams> {
    (-0.9f64..3.0, 0.0f64..3.0, 0.1f64..2.0).prop_map(|(a, d, n)| SemigroupParams::new(a, d - (a + 1.0), n).unwrap())
}

fn positive() -> impl Strategy<Value = f64> {
    (-3.0f64..1.5).prop_map(|e| 10f64.powf(e))
}

fn table() -> impl Strategy<Value = TabulatedFunction> {
    prop::collection::vec((0.01f64..10.0, 0.0f64..5.0), 3..20).prop_map(|mut pts| {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-6);
        let (nodes, values): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        TabulatedFunction::new(nodes, values, Interpolation::Linear, Extension::Zero).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heat_kernel_symmetric_positive(p in params(), t in positive(), x in positive(), y in positive()) {
        let a = heat_kernel(&p, t, x, y).unwrap();
        let b = heat_kernel(&p, t, y, x).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn heat_forms_agree(p in params(), t in 0.05f64..3.0, x in 0.05f64..5.0, y in 0.05f64..5.0) {
        let s = ln_heat_kernel_with(&p, HeatForm::SForm, t, x, y).unwrap();
        let r = ln_heat_kernel_with(&p, HeatForm::RForm, t, x, y).unwrap();
        prop_assert!((s - r).abs() <= 1e-9 * s.abs().max(1.0), "{} vs {}", s, r);
    }

    #[test]
    fn multiplier_in_unit_interval_and_decreasing(nu in 0.1f64..3.0, t in 0.01f64..5.0, l in 0.0f64..50.0, dl in 0.01f64..10.0) {
        let a = subordination_multiplier(nu, t, l).unwrap();
        let b = subordination_multiplier(nu, t, l + dl).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!(b <= a * (1.0 + 1e-12));
    }

    #[test]
    fn rho_bounded_and_inversion_symmetric(eps in 0.01f64..2.0, x in positive()) {
        let r = rho_eps(eps, x).unwrap();
        prop_assert!(r > 0.0 && r <= 1.0);
        prop_assert!((r - rho_eps(eps, 1.0 / x).unwrap()).abs() <= 1e-14 * r.max(1e-300) + 1e-300);
    }

    #[test]
    fn maximal_dominates_function(f in table(), m in 1.5f64..6.0, x in 0.05f64..9.0) {
        let mf = local_maximal(&f, m, x, None).unwrap();
        prop_assert!(mf >= f.value(x) * (1.0 - 1e-9));
    }

    #[test]
    fn lp_norm_homogeneous(f in table(), c in 0.1f64..10.0, p in 1.0f64..4.0) {
        let w = unit_weight(&log_nodes(1e-3, 20.0, 50)).unwrap();
        let values = f.node_values().iter().map(|v| c * v).collect();
        let g = TabulatedFunction::new(f.nodes().to_vec(), values, Interpolation::Linear, Extension::Zero).unwrap();
        let a = lp_norm(&f, &w, p).unwrap();
        let b = lp_norm(&g, &w, p).unwrap();
        prop_assert!((b - c * a).abs() <= 1e-8 * c * a);
    }

    #[test]
    fn csv_round_trip(f in table()) {
        let g = TabulatedFunction::from_csv(&f.to_csv()).unwrap();
        prop_assert_eq!(f, g);
    }

    #[test]
    fn eigenfunction_transport(alpha in -0.9f64..3.0, y in 0.01f64..15.0) {
        for k in SystemKind::ALL {
            let d = k.eigenfunctions(alpha, 6, y).unwrap();
            let c = k.eigenfunctions_via_maps(alpha, 6, y).unwrap();
            for (u, v) in d.iter().zip(&c) {
                prop_assert!((u - v).abs() <= 1e-10 * u.abs() + 1e-300);
            }
        }
    }

    #[test]
    fn ensemble_deterministic(seed in any::<u64>(), i in 0usize..100) {
        let e = Ensemble::new(seed, 5.0);
        prop_assert_eq!(e.function(i), e.function(i));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn poisson_kernel_symmetric(p in params(), t in 0.1f64..3.0, x in 0.05f64..4.0, y in 0.05f64..4.0) {
        let cfg = QuadratureConfig::default();
        let a = ln_poisson_kernel(&p, t, x, y, &cfg).unwrap().ln_value;
        let b = ln_poisson_kernel(&p, t, y, x, &cfg).unwrap().ln_value;
        prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
    }

    #[test]
    fn carleson_jones_sandwich(k in 0.0f64..3.0, s in -0.5f64..0.5, p in 1.5f64..4.0, eps in 0.05f64..1.0, m in 1.5f64..5.0) {
        let nodes = log_nodes(1e-3, 20.0, 120);
        let w = weight_sample(&nodes, |y| k * y.ln_1p() + s * y.ln()).unwrap();
        let cj = carleson_jones(&w, p, eps, m).unwrap();
        for &y in &nodes {
            let (v, ve, wy) = (cj.v.value(y), cj.v_eps.value(y), w.value(y));
            prop_assert!(ve <= v * (1.0 + 1e-12));
            prop_assert!(v <= wy * (1.0 + 1e-9), "V={} W={} at {}", v, wy, y);
        }
    }

    #[test]
    fn combined_weight_is_pointwise_min(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let nodes = log_nodes(1e-2, 10.0, 40);
        let v1 = weight_sample(&nodes, |y| a * y.ln()).unwrap();
        let v2 = weight_sample(&nodes, |y| b * y.ln_1p()).unwrap();
        let v = weight_v_combined(&v1, &v2).unwrap();
        for &y in &nodes {
            prop_assert!(v.value(y) <= v1.value(y).min(v2.value(y)) * (1.0 + 1e-12));
        }
    }
}
