use std::f64::consts::{PI, TAU};

use escapelab::geometry::{BallPoint, BoundaryPoint, ModelGeometry, C64};
use escapelab::quadrature::QuadratureSpec;
use escapelab::semiclassics::*;
use escapelab::symbols::{AngularProfile, ProductSymbol, RadialProfile};
use escapelab::Error;
use proptest::prelude::*;

const WINDOW: RadialProfile = RadialProfile::GaussianWindow { sigma: 0.3, width: 0.95, power: 4 };

fn flat_symbol() -> ProductSymbol {
    ProductSymbol::new(ModelGeometry::euclidean(), BallPoint::new(0.2, -0.1), 0.8, 4)
        .unwrap()
        .with_angular(AngularProfile::Fourier { amplitude: 0.3, harmonic: 2, phase: 0.4 })
        .unwrap()
        .with_radial(WINDOW)
        .unwrap()
}

/// `int a(m, lambda xi) dm` for a bump of power `p`: `pi r^2 / (p + 1)` times the fiber factors.
fn flat_exact(a: &ProductSymbol, xi: BoundaryPoint, lambda: f64) -> f64 {
    PI * a.radius * a.radius / (a.power as f64 + 1.0) * a.angular.eval(xi.angle()) * a.radial_profile(lambda) * a.amplitude
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ball_wave_solves_the_helmholtz_equation(
        r in 0.0f64..0.85, arg in 0.0f64..TAU, t in 0.0f64..TAU,
        lambda in 0.5f64..2.0, h in prop::sample::select(vec![0.2, 0.05, 0.01]),
    ) {
        let spec = PlaneWaveSpec::new(ModelGeometry::hyperbolic(), BoundaryPoint::from_angle(t), lambda, h).unwrap();
        let q = BallPoint(C64::from_polar(r, arg));
        if (q.0 - spec.xi.0).norm() > 0.05 {
            let res = pde_residual(&spec, q).unwrap();
            prop_assert!(res.residual <= 1e-4 * res.scale, "{res:?}");
        }
    }

    #[test]
    fn flat_wave_solves_the_helmholtz_equation(
        x in -20.0f64..20.0, y in -20.0f64..20.0, t in 0.0f64..TAU,
        lambda in 0.5f64..2.0, h in 0.01f64..0.5,
    ) {
        let spec = PlaneWaveSpec::new(ModelGeometry::euclidean(), BoundaryPoint::from_angle(t), lambda, h).unwrap();
        let res = pde_residual(&spec, BallPoint::new(x, y)).unwrap();
        prop_assert!(res.residual <= 1e-4 * res.scale, "{res:?}");
    }

    #[test]
    fn flat_wave_depends_on_lambda_over_h(
        x in -50.0f64..50.0, y in -50.0f64..50.0, t in 0.0f64..TAU,
        lambda in 0.5f64..1.0, h in 0.01f64..0.25,
    ) {
        let xi = BoundaryPoint::from_angle(t);
        let a = PlaneWaveSpec::new(ModelGeometry::euclidean(), xi, lambda, h).unwrap();
        let b = PlaneWaveSpec::new(ModelGeometry::euclidean(), xi, 2.0 * lambda, 2.0 * h).unwrap();
        let m = BallPoint::new(x, y);
        let d = (evaluate_wave(&a, m).unwrap() - evaluate_wave(&b, m).unwrap()).norm();
        prop_assert!(d <= 1e-12);
        prop_assert!((evaluate_wave(&a, m).unwrap().norm() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn ball_wave_modulus_is_the_half_busemann_weight(
        r in 0.0f64..0.95, arg in 0.0f64..TAU, t in 0.0f64..TAU, h in 0.01f64..0.5,
    ) {
        let xi = BoundaryPoint::from_angle(t);
        let q = BallPoint(C64::from_polar(r, arg));
        let spec = PlaneWaveSpec::new(ModelGeometry::hyperbolic(), xi, 1.0, h).unwrap();
        let e = evaluate_wave(&spec, q).unwrap();
        let phi = escapelab::geometry::busemann(xi, q).unwrap();
        prop_assert!((e.norm() / (0.5 * phi).exp() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn flat_left_quantization_is_exact_on_plane_waves() {
    let a = flat_symbol();
    let xi = BoundaryPoint::from_angle(0.6);
    let spec = PlaneWaveSpec::new(ModelGeometry::euclidean(), xi, 1.2, 0.05).unwrap();
    let quad = QuadratureSpec::tensor(6, 1e-8).unwrap();
    let me = matrix_element(&a, &spec, QuantizationConvention::Left, &quad).unwrap();
    let exact = flat_exact(&a, xi, 1.2);
    assert!((me.value - exact).norm() <= 1e-6 * exact, "{:?} vs {exact}", me.value);
    // a >= 0: the element is a nonnegative real number
    assert!(me.value.re >= 0.0 && me.value.im.abs() <= 1e-12);
    assert!(me.points_per_wavelength >= MIN_POINTS_PER_WAVELENGTH);
}

#[test]
fn weyl_elements_are_real_for_real_symbols() {
    let geom = ModelGeometry::hyperbolic();
    let a = ProductSymbol::new(geom, BallPoint::new(0.1, 0.2), 0.5, 4).unwrap().with_radial(WINDOW).unwrap();
    let spec = PlaneWaveSpec::new(geom, BoundaryPoint::from_angle(-0.4), 1.0, 0.05).unwrap();
    let quad = QuadratureSpec::tensor(6, 1e-6).unwrap();
    let me = matrix_element(&a, &spec, QuantizationConvention::Weyl, &quad).unwrap();
    assert!(me.value.im.abs() <= quad.tolerance * (1.0 + me.value.norm()) + me.error, "{me:?}");
}

#[test]
fn matrix_elements_need_a_smooth_fiber_window() {
    let spec = PlaneWaveSpec::new(ModelGeometry::euclidean(), BoundaryPoint::from_angle(0.0), 1.0, 0.1).unwrap();
    let quad = QuadratureSpec::tensor(6, 1e-6).unwrap();
    let a = flat_symbol().with_radial(RadialProfile::Window { width: 0.5, power: 3 }).unwrap();
    let e = matrix_element(&a, &spec, QuantizationConvention::Left, &quad).unwrap_err();
    assert!(matches!(e, Error::Unsupported(_)));
    let hyp = ProductSymbol::new(ModelGeometry::hyperbolic(), BallPoint::origin(), 0.5, 4).unwrap().with_radial(WINDOW).unwrap();
    let e = matrix_element(&hyp, &spec, QuantizationConvention::Left, &quad).unwrap_err();
    assert!(matches!(e, Error::Config(_)));
}

#[test]
fn flat_study_is_exact_for_both_conventions() {
    let a = flat_symbol();
    let xi = BoundaryPoint::from_angle(0.6);
    let quad = QuadratureSpec::tensor(6, 1e-6).unwrap();
    let hs = [0.2, 0.1, 0.07, 0.05];
    let left = convergence_study(&a, &ModelGeometry::euclidean(), xi, &hs, QuantizationConvention::Left, &quad).unwrap();
    let exact = flat_exact(&a, xi, 1.0);
    for row in &left.rows {
        assert!((row.mu_xi_value - exact).abs() <= 1e-8 * exact);
        assert!(row.abs_error <= quad.tolerance * (1.0 + exact), "{row:?}");
    }
    assert!(left.exact && left.fitted_order.is_none());
    let weyl = convergence_study(&a, &ModelGeometry::euclidean(), xi, &hs, QuantizationConvention::Weyl, &quad).unwrap();
    assert!(weyl.exact || weyl.fitted_order.unwrap() >= 1.0, "{weyl:?}");
}

#[test]
fn study_requires_a_decreasing_h_list() {
    let a = flat_symbol();
    let xi = BoundaryPoint::from_angle(0.0);
    let quad = QuadratureSpec::tensor(6, 1e-6).unwrap();
    let geom = ModelGeometry::euclidean();
    for hs in [vec![0.1, 0.05, 0.025], vec![0.1, 0.05, 0.06, 0.01]] {
        let e = convergence_study(&a, &geom, xi, &hs, QuantizationConvention::Left, &quad).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }
}

fn trace_symbol() -> ProductSymbol {
    ProductSymbol::new(ModelGeometry::euclidean(), BallPoint::new(0.5, 0.3), 1.5, 6)
        .unwrap()
        .with_gaussian(0.5)
        .unwrap()
        .with_angular(AngularProfile::Fourier { amplitude: 0.3, harmonic: 2, phase: 0.4 })
        .unwrap()
        .with_radial(RadialProfile::Window { width: 0.5, power: 4 })
        .unwrap()
}

#[test]
fn leading_trace_term_matches_the_free_trace() {
    let a = trace_symbol();
    let quad = QuadratureSpec::tensor(8, 1e-10).unwrap();
    let w = weyl_leading_term(&a, 1.0, 0.1, 1, QuantizationConvention::Left, &quad).unwrap();
    let o = free_trace_oracle(&a, 1.0, 0.1, 1, &quad).unwrap();
    assert!((w.value - o.value).abs() <= 1e-8 * o.value.abs());
    let fine = weyl_leading_term(&a, 1.0, 0.1, 1, QuantizationConvention::Left, &quad.doubled()).unwrap();
    assert!((w.value - fine.value).abs() <= 1e-8 * fine.value.abs());
    // the convention does not enter the leading term
    let weyl = weyl_leading_term(&a, 1.0, 0.1, 1, QuantizationConvention::Weyl, &quad).unwrap();
    assert_eq!(weyl.value, w.value);
}

#[test]
fn leading_trace_term_scales_like_h_to_the_minus_two() {
    let quad = QuadratureSpec::tensor(6, 1e-10).unwrap();
    let flat = trace_symbol();
    let hyp = ProductSymbol::new(ModelGeometry::hyperbolic(), BallPoint::new(-0.2, 0.1), 0.7, 3)
        .unwrap()
        .with_radial(RadialProfile::Window { width: 0.4, power: 2 })
        .unwrap();
    for a in [&flat, &hyp] {
        let base = weyl_leading_term(a, 1.3, 0.1, 1, QuantizationConvention::Left, &quad).unwrap().scaled;
        for h in [0.3, 0.05, 0.01] {
            let v = weyl_leading_term(a, 1.3, h, 1, QuantizationConvention::Left, &quad).unwrap();
            assert!((v.scaled - base).abs() <= 1e-10 * base.abs());
        }
    }
}

#[test]
fn trace_inputs_are_validated() {
    let a = trace_symbol();
    let quad = QuadratureSpec::tensor(6, 1e-10).unwrap();
    assert!(matches!(weyl_leading_term(&a, 1.0, 0.1, 2, QuantizationConvention::Left, &quad), Err(Error::Unsupported(_))));
    assert!(matches!(weyl_leading_term(&a, -1.0, 0.1, 1, QuantizationConvention::Left, &quad), Err(Error::Config(_))));
    let hyp = ProductSymbol::new(ModelGeometry::hyperbolic(), BallPoint::origin(), 0.5, 3).unwrap();
    assert!(matches!(free_trace_oracle(&hyp, 1.0, 0.1, 1, &quad), Err(Error::Unsupported(_))));
}
