//! The exact t-field sampler against quadrature and against the t-chain.

use hyperlab::graph::{build_torus, TorusSpec, WeightedGraph};
use hyperlab::oracle::OracleSpec;
use hyperlab::rng::{module, Lane};
use hyperlab::sigma_h22::{exact_expectation_h22, sample_h22, ExactH22Sampler, McmcParams};
use hyperlab::stats::Running;

fn lane(case: u64) -> Lane {
    Lane::new(2024, module::TEST, case)
}

#[test]
fn single_vertex_law() {
    // e^t ~ IG(1, h): mean 1, variance 1/h.
    let h = 0.7;
    let g = WeightedGraph::single_vertex(h).unwrap();
    let sampler = ExactH22Sampler::new(&g).unwrap();
    let mut rng = lane(1).stream(0);
    let (mut x, mut y2) = (Running::new(), Running::new());
    for _ in 0..200_000 {
        let d = sampler.draw(&mut rng).unwrap();
        x.push(d.t[0].exp());
        y2.push(d.sample_y(&mut rng)[0].powi(2));
    }
    assert!((x.mean - 1.0).abs() < 4.0 * x.stderr());
    assert!((x.variance() - 1.0 / h).abs() < 0.05 / h);
    assert!((y2.mean - 1.0 / h).abs() < 4.0 * y2.stderr(), "{} +- {}", y2.mean, y2.stderr());
}

#[test]
fn two_vertices_against_quadrature() {
    let g = WeightedGraph::new(2, &[(0, 1, 1.3)], vec![0.8, 0.4]).unwrap();
    let sampler = ExactH22Sampler::new(&g).unwrap();
    let mut rng = lane(2).stream(0);
    let n = 200_000;
    let mut acc = [Running::new(), Running::new(), Running::new(), Running::new()];
    for _ in 0..n {
        let d = sampler.draw(&mut rng).unwrap();
        let y = d.sample_y(&mut rng);
        acc[0].push(d.t[0].exp());
        acc[1].push(d.t[1].exp());
        acc[2].push((d.t[0] + d.t[1]).exp());
        acc[3].push(y[0] * y[1]);
    }
    let spec = OracleSpec::default();
    let e01 = exact_expectation_h22(&g, &|t, _s| (t[0] + t[1]).exp(), &spec).unwrap().value;
    let yy = exact_expectation_h22(&g, &|t, s| (t[0] + t[1]).exp() * s[0] * s[1], &spec).unwrap().value;
    for (k, (acc, exact)) in acc.iter().zip([1.0, 1.0, e01, yy]).enumerate() {
        let z = (acc.mean - exact) / acc.stderr();
        assert!(z.abs() < 4.0, "observable {k}: {} +- {} vs {exact}", acc.mean, acc.stderr());
    }
}

#[test]
fn torus_against_chain() {
    let spec = TorusSpec::nearest_neighbour(2, 4, 1.0, 0.5);
    let g = build_torus(&spec).unwrap();
    let sampler = ExactH22Sampler::new(&g).unwrap();
    let mut rng = lane(3).stream(0);
    let (mut t0, mut e2) = (Running::new(), Running::new());
    for _ in 0..40_000 {
        let d = sampler.draw(&mut rng).unwrap();
        t0.push(d.t[0]);
        e2.push((2.0 * d.t[5]).exp());
    }
    let params = McmcParams { burn_in_sweeps: 2_000, samples: 20_000, thin: 5, ..Default::default() };
    let chain = sample_h22(&g, &params, false, &mut lane(4).stream(0)).unwrap();
    let ct: Vec<f64> = chain.t_samples.iter().map(|t| t[0]).collect();
    let ce: Vec<f64> = chain.t_samples.iter().map(|t| (2.0 * t[5]).exp()).collect();
    for (name, exact, series) in [("t_0", &t0, ct), ("e^{2 t_5}", &e2, ce)] {
        let bm = hyperlab::stats::batch_means(&series, 50).unwrap();
        let z = (exact.mean - bm.mean) / exact.stderr().hypot(bm.stderr);
        assert!(z.abs() < 4.0, "{name}: exact {} +- {} chain {} +- {}", exact.mean, exact.stderr(), bm.mean, bm.stderr);
    }
}
