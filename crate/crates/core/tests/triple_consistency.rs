//! `<y_a y_b>` on tiny graphs three ways: the Grassmann super-expectation,
//! the real horospherical quadrature, and the VRJP discounted occupation.

use hyperlab::grassmann::{h22_expectation_exact, Form};
use hyperlab::graph::WeightedGraph;
use hyperlab::oracle::OracleSpec;
use hyperlab::rng::{module, Lane};
use hyperlab::sigma_h22::{exact_expectation_h22, yy};
use hyperlab::vrjp::{estimate_discounted_functional, Functional, LocalTimes, Strategy};

fn vrjp_two_point(g: &WeightedGraph, a: usize, b: usize, h: f64, n: u64, case: u64) -> (f64, f64) {
    let f = Functional::indicator(b, g.n_vertices());
    let lane = Lane::new(2024, module::TEST, case);
    let est = estimate_discounted_functional(g, a, &LocalTimes::zeros(g.n_vertices()), h, &f, n, Strategy::interval(), &lane).unwrap();
    (est.estimate.value, est.estimate.stderr)
}

#[test]
fn single_vertex_three_ways() {
    let g = WeightedGraph::single_vertex(0.5).unwrap();
    let exact = h22_expectation_exact(&g, Form::Y(0) * Form::Y(0), None).unwrap().value;
    let real = exact_expectation_h22(&g, &yy(0, 0), &OracleSpec::default()).unwrap().value;
    let (v, se) = vrjp_two_point(&g, 0, 0, 0.5, 100, 1);
    assert!((exact - 2.0).abs() < 1e-8);
    assert!((exact - real).abs() < 1e-6, "{exact} vs {real}");
    assert!((v - 2.0).abs() < 1e-9 && se.abs() < 1e-12);
    let one = h22_expectation_exact(&g, Form::c(1.0), None).unwrap().value;
    let z = h22_expectation_exact(&g, Form::Z(0), None).unwrap().value;
    assert!((one - 1.0).abs() < 1e-8 && (z - 1.0).abs() < 1e-8);
}

#[test]
fn two_vertices_three_ways() {
    let h = 1.0;
    let g = WeightedGraph::two_vertex(1.0, h).unwrap();
    let mut total = 0.0;
    for b in 0..2 {
        let exact = h22_expectation_exact(&g, Form::Y(0) * Form::Y(b), None).unwrap();
        let real = exact_expectation_h22(&g, &yy(0, b), &OracleSpec::default()).unwrap();
        assert!((exact.value - real.value).abs() < 1e-6, "b = {b}: {exact:?} vs {real:?}");
        let (v, se) = vrjp_two_point(&g, 0, b, h, 200_000, 10 + b as u64);
        let z = (v - exact.value) / se;
        assert!(z.abs() < 3.0, "b = {b}: VRJP {v} +- {se} vs {}", exact.value);
        total += exact.value;
    }
    // sum rule: sum_b <y_a y_b> = 1/h
    assert!((total - 1.0 / h).abs() < 1e-7);
}

#[test]
fn local_time_functional_against_grassmann() {
    // int E_a[1{X_t = b0} e^{-<c, L_t>}] e^{-ht} dt = <y_a y_b0 e^{-sum_i c_i (z_i - 1)}>
    let g = WeightedGraph::two_vertex(1.0, 1.0).unwrap();
    let c = [1.0, 1.0];
    let weight = (-((Form::Z(0) - 1.0).scale(c[0]) + (Form::Z(1) - 1.0).scale(c[1]))).exp();
    let b0 = 1;
    let exact = h22_expectation_exact(&g, Form::Y(0) * Form::Y(b0) * weight, None).unwrap().value;
    let f = Functional::ExpLocalTime { target: b0, decay: c.to_vec() };
    let lane = Lane::new(2024, module::TEST, 20);
    let est = estimate_discounted_functional(&g, 0, &LocalTimes::zeros(2), 1.0, &f, 200_000, Strategy::interval(), &lane).unwrap();
    let z = (est.estimate.value - exact) / est.estimate.stderr;
    assert!(z.abs() < 3.0, "VRJP {:?} vs Grassmann {exact}", est.estimate);
}
