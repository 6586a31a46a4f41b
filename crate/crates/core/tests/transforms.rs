//! S-transforms, Skorokhod integrals and both change-of-variable formulas
//! against independent oracles.

use convlevy::frac::{frac_int_minus, frac_int_plus, frac_parts_check, SampledFunction};
use convlevy::ito::{
    ito1_from_ito2_rearrangement_check, ito2_terms, s_of_g_of_m, terms_at, TestFunctionG,
};
use convlevy::kernels::VolterraKernel;
use convlevy::levy::{simulate_path, Jump, JumpMeasure, JumpPath};
use convlevy::mc::StreamKey;
use convlevy::skorokhod::{product_correction_correction, product_correction_correction_analytic, skorokhod_quadratic, wiener_type_equiv};
use convlevy::stransform::{
    ddt_s_of_m, s_of_m_analytic, stransform_reweight, stransform_shifted, wick_weight, EtaTest, Flavor, McSetup,
};
use proptest::prelude::*;
use statrs::function::gamma::gamma;

fn sym() -> JumpMeasure {
    JumpMeasure::discrete(&[(1.0, 0.5), (-1.0, 0.5)]).unwrap()
}

fn odd1() -> EtaTest {
    EtaTest::builtin(1.0, 0.5, Flavor::Odd).unwrap()
}

#[test]
fn odd_test_function_drift_of_the_levy_process() {
    // e^{-1} ∫₀¹ e^{-2s²} ds
    let ind = VolterraKernel::indicator(2.0).unwrap();
    let v = s_of_m_analytic(&ind, &sym(), 1.0, &odd1()).unwrap();
    assert!((v - 0.220_044_882_910_608_03).abs() < 1e-11, "{v}");
    let d = ddt_s_of_m(&ind, &sym(), 0.7, &odd1()).unwrap();
    assert!((d - (-1f64).exp() * (-2.0 * 0.49f64).exp()).abs() < 1e-12);
}

#[test]
fn even_test_function_is_invisible_to_symmetric_means() {
    let even = EtaTest::builtin(2.0, 1.0, Flavor::Even).unwrap();
    for k in [VolterraKernel::indicator(2.0).unwrap(), VolterraKernel::ornstein_uhlenbeck(0.5, 2.0).unwrap()] {
        assert!(s_of_m_analytic(&k, &sym(), 1.5, &even).unwrap().abs() < 1e-14);
        assert_eq!(s_of_m_analytic(&k, &sym(), 1.5, &EtaTest::zero()).unwrap(), 0.0);
    }
}

#[test]
fn wick_weight_of_empty_path() {
    let p = JumpPath::from_jumps((-6.0, 6.0), vec![], 0.0).unwrap();
    assert_eq!(wick_weight(&p, &EtaTest::zero(), &sym()).unwrap(), 1.0);
    // ∫∫ η dν dt = c e^{-1} ∫ e^{-t²} dt = e^{-1} √π
    let even = EtaTest::builtin(1.0, 1.0, Flavor::Even).unwrap();
    let w = wick_weight(&p, &even, &sym()).unwrap();
    let mass = (-1f64).exp() * std::f64::consts::PI.sqrt();
    assert!((w - (-mass).exp()).abs() < 1e-10, "{w}");
}

/// `Σ_k P(L(1) = k) e^{-k²/2}` for compound Poisson `±1` jumps, with the
/// rates tilted by `η`, frozen from a Bessel-series evaluation.
#[test]
fn gaussian_of_levy_matches_skellam_series() {
    let ind = VolterraKernel::indicator(2.0).unwrap();
    let g = TestFunctionG::gaussian();
    let cases = [
        (EtaTest::zero(), 0.731_666_518_282_107_78),
        (odd1(), 0.725_808_379_555_864_12),
        (EtaTest::builtin(0.5, 1.0, Flavor::Even).unwrap(), 0.707_861_963_744_071_33),
    ];
    for (eta, exact) in cases {
        let v = s_of_g_of_m(&ind, &sym(), 1.0, &eta, &g).unwrap();
        assert!((v - exact).abs() < 1e-9, "{}: {v} vs {exact}", eta.id());
    }
}

#[test]
fn reweight_and_shifted_routes_agree() {
    let k = VolterraKernel::ornstein_uhlenbeck(0.5, 2.0).unwrap();
    let eta = odd1();
    let setup = McSetup::for_kernel(&sym(), &k, 1.0, &[eta.clone()], StreamKey::new(3, 0), 40_000).unwrap();
    let m = |p: &JumpPath| convlevy::conv::conv_value(&k, p, 1.0);
    let a = stransform_reweight(&setup, &eta, m).unwrap();
    let b = stransform_shifted(&setup, &eta, m).unwrap();
    let exact = s_of_m_analytic(&k, &sym(), 1.0, &eta).unwrap();
    assert!(a.real().agrees_with(exact, 4.0), "{:?} vs {exact}", a.real());
    assert!(b.real().agrees_with(exact, 4.0), "{:?} vs {exact}", b.real());
}

#[test]
fn quadratic_skorokhod_on_indicator_is_classical_ito() {
    let ind = VolterraKernel::indicator(2.0).unwrap();
    let p = simulate_path(&sym(), (0.0, 2.0), StreamKey::new(4, 0), 11).unwrap();
    let direct: f64 = p.jumps_in(0.0, 2.0).map(|j| p.levy_left_limit(j.time) * j.size).sum();
    assert!((skorokhod_quadratic(&ind, &p, 2.0).unwrap() - direct).abs() < 1e-12);
}

#[test]
fn correction_term_vanishes_for_indicator() {
    let ind = VolterraKernel::indicator(2.0).unwrap();
    let p = simulate_path(&sym(), (0.0, 2.0), StreamKey::new(4, 1), 0).unwrap();
    assert_eq!(product_correction_correction(&ind, &p, 0.5, 1.5), 0.0);
}

#[test]
fn correction_term_for_linear_shot_noise() {
    // ∫₀¹ (1-s)((2-s)-(1-s)) ds · ∫y²ν = 1/2
    let lin = VolterraKernel::shot_noise(2.0, vec![0.0, 1.0]).unwrap();
    let v = product_correction_correction_analytic(&lin, &sym(), 1.0, 2.0, &EtaTest::zero()).unwrap();
    assert!((v - 0.5).abs() < 1e-12);
}

#[test]
fn fractional_integral_closed_forms() {
    let chi = SampledFunction::indicator(0.0, 1.0).unwrap();
    let d = 0.25;
    for x in [-0.5f64, 0.3, 0.9] {
        let exact = ((1.0 - x).max(0.0f64).powf(d) - (-x).max(0.0f64).powf(d)) / gamma(1.0 + d);
        assert!((frac_int_minus(&chi, d, x).unwrap() - exact).abs() < 1e-10);
    }
    let exact = (2f64.sqrt() - 1.0) / gamma(1.5);
    assert!((frac_int_plus(&chi, 0.5, 2.0).unwrap() - exact).abs() < 1e-10);
    assert_eq!(frac_int_minus(&SampledFunction::zero(), 0.3, 0.2).unwrap(), 0.0);
}

#[test]
fn fractional_parts_examples() {
    let chi = SampledFunction::indicator(0.0, 1.0).unwrap();
    let bump = SampledFunction::gaussian(0.5, 0.3).unwrap();
    assert!(frac_parts_check(&chi, &bump, 0.25).unwrap().residual < 1e-5);
    let tri = SampledFunction::triangle(-1.0, 1.0).unwrap();
    assert!(frac_parts_check(&tri, &tri, 0.4).unwrap().residual < 1e-5);
}

#[test]
fn wiener_pair_single_jump() {
    let k = VolterraKernel::fractional_truncated(0.25, -5.0).unwrap();
    let g = SampledFunction::gaussian(0.5, 0.3).unwrap();
    let p = JumpPath::from_jumps((-5.0, 4.0), vec![Jump { time: -0.4, size: 1.0 }], 0.0).unwrap();
    let pair = wiener_type_equiv(&g, &k, &p).unwrap();
    assert!((pair.lhs - pair.rhs).abs() < 1e-4, "{pair:?}");
    assert!(pair.lhs.abs() > 1e-3);
}

#[test]
fn wiener_pair_small_order_approaches_levy_increment() {
    let k = VolterraKernel::fractional_truncated(1e-3, -3.0).unwrap();
    let chi = SampledFunction::indicator(0.0, 1.0).unwrap();
    let p = simulate_path(&sym(), (-3.0, 1.0), StreamKey::new(8, 0), 2).unwrap();
    let pair = wiener_type_equiv(&chi, &k, &p).unwrap();
    let l1 = p.levy_value(1.0);
    assert!((pair.lhs - l1).abs() < 1e-2 && (pair.rhs - l1).abs() < 1e-2, "{pair:?} vs {l1}");
}

#[test]
fn indicator_has_no_memory_term() {
    let ind = VolterraKernel::indicator(2.0).unwrap();
    let g = TestFunctionG::gaussian();
    for eta in [EtaTest::zero(), odd1()] {
        let r = terms_at(&ind, &sym(), &g, &eta, 0.8, false).unwrap();
        assert_eq!(r.memory, 0.0);
    }
}

#[test]
fn second_formula_closes_for_shot_noise_and_ou() {
    let g = TestFunctionG::gaussian();
    let even = EtaTest::builtin(0.5, 1.0, Flavor::Even).unwrap();
    for k in [
        VolterraKernel::shot_noise(2.0, vec![1.0, -0.5]).unwrap(),
        VolterraKernel::ornstein_uhlenbeck(0.5, 2.0).unwrap(),
    ] {
        for eta in [EtaTest::zero(), even.clone(), odd1()] {
            let t = ito2_terms(&k, &sym(), &g, 2.0, &eta).unwrap();
            assert!((t.lhs - t.rhs()).abs() <= 1e-3 * t.lhs.abs().max(1e-6), "{} {}", k.name(), eta.id());
            if eta.is_zero() {
                assert_eq!(t.skorokhod_m_term, 0.0);
            }
        }
    }
}

#[test]
fn rearrangement_is_algebraic() {
    let g = TestFunctionG::gaussian();
    let ou = VolterraKernel::ornstein_uhlenbeck(0.5, 2.0).unwrap();
    let even = EtaTest::builtin(1.0, 1.0, Flavor::Even).unwrap();
    assert!(ito1_from_ito2_rearrangement_check(&ou, &sym(), &g, 2.0, &even, 1e-8).unwrap().pass);
    let shot = VolterraKernel::shot_noise(2.0, vec![1.0, -0.5]).unwrap();
    assert!(ito1_from_ito2_rearrangement_check(&shot, &sym(), &g, 2.0, &odd1(), 1e-8).unwrap().pass);
    let frac = VolterraKernel::fractional_truncated(0.25, -20.0).unwrap();
    assert!(ito1_from_ito2_rearrangement_check(&frac, &sym(), &g, 2.0, &odd1(), 1e-8).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn builtin_test_functions_stay_above_minus_one(
        c in -0.99f64..2.4, w in 0.1f64..3.0, x in -5.0f64..5.0, t in -3.0f64..3.0, odd in any::<bool>()
    ) {
        let flavor = if odd { Flavor::Odd } else { Flavor::Even };
        if let Ok(eta) = EtaTest::builtin(c, w, flavor) {
            prop_assert!(eta.eval(x, t) > -1.0);
        }
    }

    #[test]
    fn wick_weights_are_positive(seed in 0u64..500, c in 0.1f64..2.0) {
        let eta = EtaTest::builtin(c, 1.0, Flavor::Even).unwrap();
        let p = simulate_path(&sym(), (-6.0, 6.0), StreamKey::new(seed, 1), 0).unwrap();
        prop_assert!(wick_weight(&p, &eta, &sym()).unwrap() > 0.0);
    }

    #[test]
    fn fractional_reflection(x in -2.0f64..2.0, a in 0.05f64..0.45) {
        let g = SampledFunction::triangle(-0.5, 1.0).unwrap();
        let plus = frac_int_plus(&g.reflect(), a, x).unwrap();
        let minus = frac_int_minus(&g, a, -x).unwrap();
        prop_assert!((plus - minus).abs() < 1e-9);
    }
}
