//! End-to-end acceptance run: one line per criterion, nonzero exit on any failure.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use escapelab::dynamics::*;
use escapelab::geometry::{busemann, BallPoint, BoundaryPoint, ModelGeometry, C64};
use escapelab::measures::*;
use escapelab::quadrature::QuadratureSpec;
use escapelab::schottky::{DeltaMethod, SchottkyGroup, DEFAULT_BUDGET};
use escapelab::semiclassics::*;
use escapelab::symbols::{AngularProfile, ProductSymbol, RadialProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed <= limit
}

fn cylinder() -> SchottkyGroup {
    SchottkyGroup::cyclic(2.0).unwrap()
}

fn a1() -> Outcome {
    let start = Instant::now();
    let g = cylinder();
    let s = g.estimate_delta(DeltaMethod::SeriesBisection, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    let o = g.estimate_delta(DeltaMethod::OrbitCountSlope, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    let el = start.elapsed();
    check(
        s.delta <= 0.02 && o.delta <= 0.02 && within(el, Duration::from_secs(10)),
        format!("series {:.4}, orbit count {:.4}, {:.1?}", s.delta, o.delta, el),
    )
}

fn cylinder_curve() -> TrappedMeasureCurve {
    let core = CompactCore::hyperbolic(&cylinder(), 0.5).unwrap();
    let times: Vec<f64> = (0..=16).map(|k| 0.5 * k as f64).collect();
    trapped_curve(&core, &times, 1_000_000, 11, TrapEvaluation::Stepwise).unwrap()
}

fn a2(curve: &TrappedMeasureCurve, el: Duration) -> Outcome {
    let fit = estimate_escape_rate(curve, [3.0, 8.0]).map_err(|e| e.to_string())?;
    check(
        (fit.q + 1.0).abs() <= 0.1 && within(el, Duration::from_secs(120)),
        format!("Q = {:.4} +- {:.4}, {:.1?}", fit.q, fit.stderr, el),
    )
}

fn a3() -> Outcome {
    let start = Instant::now();
    let g = SchottkyGroup::symmetric(0.5).unwrap();
    let d = g.estimate_delta(DeltaMethod::SeriesBisection, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    let core = CompactCore::hyperbolic(&g, 0.5).map_err(|e| e.to_string())?;
    let times: Vec<f64> = (4..=16).map(|k| 0.5 * k as f64).collect();
    let curve = trapped_curve(&core, &times, 400_000, 12, TrapEvaluation::Stepwise).map_err(|e| e.to_string())?;
    let fit = estimate_escape_rate(&curve, [2.0, 8.0]).map_err(|e| e.to_string())?;
    let el = start.elapsed();
    let gap = (fit.q - (d.delta - 1.0)).abs();
    let allowed = fit.stderr + d.stderr + 0.1;
    check(
        gap <= allowed && within(el, Duration::from_secs(600)),
        format!("Q = {:.4}, delta - 1 = {:.4}, gap {:.4} <= {:.4}, {:.1?}", fit.q, d.delta - 1.0, gap, allowed, el),
    )
}

fn a4() -> Outcome {
    let core = CompactCore::hyperbolic(&cylinder(), 0.5).unwrap();
    let hyp = estimate_lambda_max(&core, &[2.0, 4.0, 6.0, 8.0], 20_000, 13).map_err(|e| e.to_string())?;
    let flat_core = CompactCore::euclidean(100.0).unwrap();
    let flat = estimate_lambda_max(&flat_core, &[50.0, 100.0, 150.0], 20_000, 14).map_err(|e| e.to_string())?;
    check(
        (0.95..=1.05).contains(&hyp.lambda_max) && flat.lambda_max <= 0.05,
        format!("hyperbolic {:.4}, Euclidean {:.4}", hyp.lambda_max, flat.lambda_max),
    )
}

fn random_symbol(rng: &mut ChaCha8Rng) -> ProductSymbol {
    let c = C64::from_polar(rng.gen_range(0.0..0.2), rng.gen_range(0.0..TAU));
    let r = rng.gen_range(0.25..0.55);
    ProductSymbol::new(ModelGeometry::hyperbolic(), BallPoint(c), r, 3)
        .unwrap()
        .with_angular(AngularProfile::Bump { center: rng.gen_range(0.0..TAU), width: rng.gen_range(1.0..2.5), power: 2 })
        .unwrap()
}

fn random_xi(grp: &SchottkyGroup, rng: &mut ChaCha8Rng) -> BoundaryPoint {
    if grp.rank() == 0 {
        return BoundaryPoint::from_angle(rng.gen_range(0.0..TAU));
    }
    let arcs = grp.free_arcs();
    let arc = arcs[rng.gen_range(0..arcs.len())];
    BoundaryPoint::from_angle(arc.start + arc.length() * rng.gen_range(0.15..0.85))
}

/// Dual-oracle comparisons; the pushforward sequences feed the monotonicity check.
fn a5(sequences: &mut Vec<Vec<(f64, f64)>>) -> Outcome {
    let quad = QuadratureSpec::adaptive(12, 1e-9).unwrap();
    let geom = ModelGeometry::hyperbolic();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst = 0.0f64;
    let mut runs = 0;
    for grp in [SchottkyGroup::trivial(), cylinder()] {
        for _ in 0..5 {
            let a = random_symbol(&mut rng);
            let xi = random_xi(&grp, &mut rng);
            let push = mu_xi_pushforward(&geom, &grp, xi, &a, 40.0, 10, &quad).map_err(|e| e.to_string())?;
            let sum = mu_xi_group_sum(&grp, xi, &a, 10, &quad).map_err(|e| e.to_string())?;
            let rel = (push.value - sum.value).abs() / sum.value.abs().max(1e-300);
            if sum.value != 0.0 {
                worst = worst.max(rel);
            }
            sequences.push(push.sequence);
            runs += 1;
        }
    }
    check(worst <= 1e-3, format!("{runs} pairs, worst relative gap {worst:.2e}"))
}

fn a6() -> Outcome {
    let grp = SchottkyGroup::symmetric(0.5).unwrap();
    let words = grp.enumerate_words(4, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (_, g) = &words[rng.gen_range(0..words.len())];
        let xi = BoundaryPoint::from_angle(rng.gen_range(0.0..TAU));
        let m = BallPoint(C64::from_polar(rng.gen_range(0.0..0.9), rng.gen_range(0.0..TAU)));
        let lhs = busemann(xi, g.inverse().apply(m)).unwrap().exp();
        let rhs = busemann(g.boundary_action(xi), m).unwrap().exp() * g.boundary_derivative_norm(xi);
        worst = worst.max((lhs - rhs).abs() / lhs.abs());
    }
    check(worst <= 1e-10, format!("1000 triples, worst relative residual {worst:.2e}"))
}

fn a7() -> Outcome {
    let geom = ModelGeometry::hyperbolic();
    let quad = QuadratureSpec::adaptive(12, 1e-9).unwrap();
    let cases = [
        (
            SchottkyGroup::trivial(),
            ProductSymbol::new(geom, BallPoint::new(0.1, -0.2), 0.6, 3).unwrap(),
            BoundaryTest::ArcFourier { amplitude: 0.5, harmonic: 2 },
        ),
        (cylinder(), ProductSymbol::new(geom, BallPoint::new(0.0, 0.1), 0.5, 3).unwrap(), BoundaryTest::Constant { value: 1.0 }),
        (
            cylinder(),
            ProductSymbol::new(geom, BallPoint::new(0.05, -0.1), 0.5, 3)
                .unwrap()
                .with_angular(AngularProfile::Bump { center: 1.0, width: 2.0, power: 2 })
                .unwrap(),
            BoundaryTest::ArcFourier { amplitude: 0.4, harmonic: 1 },
        ),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (k, (grp, a, f)) in cases.iter().enumerate() {
        let d = check_disintegration(&geom, grp, a, f, &quad, 10, 200_000, 17 + k as u64).map_err(|e| e.to_string())?;
        let pass = d.gap <= 3.0 * d.sigma + d.lhs_error;
        ok &= pass;
        lines.push(format!("{:.4}/{:.4}+-{:.4}", d.lhs, d.rhs, d.sigma));
    }
    check(ok, format!("LHS/RHS: {}", lines.join(", ")))
}

fn a8(sequences: &[Vec<(f64, f64)>]) -> Outcome {
    let mut worst = 0.0f64;
    for s in sequences {
        for w in s.windows(2) {
            worst = worst.max(w[0].1 - w[1].1);
        }
    }
    check(worst <= 0.0, format!("{} sequences, largest decrease {worst:.2e}", sequences.len()))
}

const WINDOW: RadialProfile = RadialProfile::GaussianWindow { sigma: 0.3, width: 0.95, power: 4 };

fn a9() -> Outcome {
    let a = ProductSymbol::new(ModelGeometry::euclidean(), BallPoint::new(0.2, -0.1), 0.8, 4)
        .unwrap()
        .with_angular(AngularProfile::Fourier { amplitude: 0.3, harmonic: 2, phase: 0.4 })
        .unwrap()
        .with_radial(WINDOW)
        .unwrap();
    let xi = BoundaryPoint::from_angle(0.6);
    let lambda = 1.2;
    let spec = PlaneWaveSpec::new(ModelGeometry::euclidean(), xi, lambda, 0.05).unwrap();
    let quad = QuadratureSpec::tensor(6, 1e-8).unwrap();
    let me = matrix_element(&a, &spec, QuantizationConvention::Left, &quad).map_err(|e| e.to_string())?;
    let exact = std::f64::consts::PI * 0.64 / 5.0 * a.angular.eval(0.6) * a.radial_profile(lambda);
    let rel = (me.value - exact).norm() / exact;
    check(rel <= 1e-6, format!("relative error {rel:.2e}"))
}

fn a10() -> Outcome {
    let start = Instant::now();
    let geom = ModelGeometry::hyperbolic();
    let a = ProductSymbol::new(geom, BallPoint::new(0.1, 0.2), 0.5, 4).unwrap().with_radial(WINDOW).unwrap();
    let quad = QuadratureSpec::tensor(6, 1e-8).unwrap();
    let study = convergence_study(
        &a,
        &geom,
        BoundaryPoint::from_angle(-0.4),
        &[0.1, 0.05, 0.025, 0.0125],
        QuantizationConvention::Left,
        &quad,
    )
    .map_err(|e| e.to_string())?;
    let el = start.elapsed();
    let order = study.fitted_order.unwrap_or(f64::INFINITY);
    let errs: Vec<String> = study.rows.iter().map(|r| format!("{:.2e}", r.abs_error)).collect();
    check(
        (order - 1.0).abs() <= 0.5 && within(el, Duration::from_secs(600)),
        format!("order {order:.3}, errors [{}], {el:.1?}", errs.join(", ")),
    )
}

fn a11() -> Outcome {
    let a = ProductSymbol::new(ModelGeometry::euclidean(), BallPoint::new(0.5, 0.3), 1.5, 6)
        .unwrap()
        .with_gaussian(0.5)
        .unwrap()
        .with_radial(RadialProfile::Window { width: 0.5, power: 4 })
        .unwrap();
    let quad = QuadratureSpec::tensor(8, 1e-10).unwrap();
    let conv = QuantizationConvention::Left;
    let w = weyl_leading_term(&a, 1.0, 0.1, 1, conv, &quad).map_err(|e| e.to_string())?;
    let o = free_trace_oracle(&a, 1.0, 0.1, 1, &quad).map_err(|e| e.to_string())?;
    let rel = (w.value - o.value).abs() / o.value.abs();
    let mut scaling = 0.0f64;
    for h in [0.2, 0.05, 0.01] {
        let v = weyl_leading_term(&a, 1.0, h, 1, conv, &quad).map_err(|e| e.to_string())?;
        scaling = scaling.max((v.scaled - w.scaled).abs() / w.scaled.abs());
    }
    check(rel <= 1e-8 && scaling <= 1e-10, format!("oracle gap {rel:.2e}, scaling drift {scaling:.2e}"))
}

fn a12() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let h: f64 = rng.gen_range(0.001..0.5);
        let lambda: f64 = rng.gen_range(0.3..3.0);
        let p: f64 = rng.gen_range(-2.0..-0.05);
        let c = rng.gen_range(0.5..5.0);
        let t_end = h.ln().abs() / lambda;
        let times: Vec<f64> = (0..=200).map(|k| t_end * k as f64 / 200.0).collect();
        let values: Vec<f64> = times.iter().map(|t| c * (p * t).exp()).collect();
        let curve = TrappedMeasureCurve::from_values(times, values).unwrap();
        let r = interpolated_remainder(h, lambda, &curve).map_err(|e| e.to_string())?;
        let exact = c * h.max(h.powf(-p / lambda));
        worst = worst.max((r - exact).abs() / exact);
    }
    check(worst <= 1e-6, format!("20 triples, worst relative error {worst:.2e}"))
}

fn a13(curve: &TrappedMeasureCurve) -> Outcome {
    let hs = [0.1, 0.03, 0.01, 0.003, 0.001];
    let (c, ratios) = lower_bound_constant(curve, &hs, 1.1, 1).map_err(|e| e.to_string())?;
    let holds = hs.iter().all(|&h| curve.value_at(ehrenfest_time(h, 1.1).unwrap()).unwrap() >= c * h.sqrt());
    let rs: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    check(c > 0.0 && holds, format!("c = {c:.4}, ratios [{}]", rs.join(", ")))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("{name} PASS  {d}"),
            Err(d) => {
                failed += 1;
                println!("{name} FAIL  {d}");
            }
        }
    };
    report("A1", a1());
    let start = Instant::now();
    let curve = cylinder_curve();
    let el = start.elapsed();
    report("A2", a2(&curve, el));
    report("A3", a3());
    report("A4", a4());
    let mut sequences = Vec::new();
    report("A5", a5(&mut sequences));
    report("A6", a6());
    report("A7", a7());
    report("A8", a8(&sequences));
    report("A9", a9());
    report("A10", a10());
    report("A11", a11());
    report("A12", a12());
    report("A13", a13(&curve));
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
