use hyperlab::grassmann::form::eval_dual;
use hyperlab::grassmann::{
    apply_q, eval_at, horo_superintegral, localisation_check, superintegrate, verify_berezinian,
    verify_susy_horo_identities, Analytic, Form, Gen, SuperQuadSpec, Supernumber,
};
use hyperlab::Error;
use proptest::prelude::*;

type Sn = Supernumber<f64>;

fn lcg_points(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            (0..2 * m)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((s >> 11) as f64 / (1u64 << 53) as f64) * 6.0 - 3.0
                })
                .collect()
        })
        .collect()
}

fn small_int_supernumber(m: usize) -> impl Strategy<Value = Sn> {
    proptest::collection::vec(-3i32..=3, 1 << (2 * m)).prop_map(move |c| {
        let mut out = Sn::zero(m);
        for (mask, v) in c.into_iter().enumerate() {
            out.set_coeff(mask as u32, v as f64);
        }
        out
    })
}

fn triple(m: usize) -> impl Strategy<Value = (Sn, Sn, Sn)> {
    (small_int_supernumber(m), small_int_supernumber(m), small_int_supernumber(m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    // Integer coefficients keep every product exact.
    #[test]
    fn algebra_laws((a, b, c) in (1usize..=3).prop_flat_map(triple)) {
        prop_assert_eq!((&a * &b) * &c, &a * &(&b * &c));
        prop_assert_eq!(&a * &(&b + &c), &a * &b + &a * &c);
        prop_assert_eq!(&(&a + &b) * &c, &a * &c + &b * &c);
    }

    #[test]
    fn graded_commutativity(mask_a in 0u32..64, mask_b in 0u32..64, m in 1usize..=3) {
        let lim = 1u32 << (2 * m);
        let (ma, mb) = (mask_a % lim, mask_b % lim);
        let a = Sn::monomial(m, ma, 1.0);
        let b = Sn::monomial(m, mb, 1.0);
        let sign = if ma.count_ones() % 2 == 1 && mb.count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        prop_assert_eq!(&a * &b, (&b * &a).scale(sign));
    }
}

#[test]
fn spec_product_examples() {
    let m = 1;
    let (xi, eta) = (Sn::xi(m, 0), Sn::eta(m, 0));
    assert_eq!(&xi * &eta, -(&eta * &xi));
    assert_eq!(&xi * &xi, Sn::zero(m));
    let one = Sn::one(m);
    assert_eq!((&one + &(&xi * &eta)) * (&one - &(&xi * &eta)), one);
    assert!(Sn::one(1).try_mul(&Sn::one(2)).is_err());
    // the top monomial is eta_1 xi_1 ... eta_m xi_m
    let top = Sn::eta(2, 0) * Sn::xi(2, 0) * Sn::eta(2, 1) * Sn::xi(2, 1);
    assert_eq!(top.top(), 1.0);
}

#[test]
fn analytic_examples() {
    let one = Sn::one(1);
    let xe = Sn::xi(1, 0) * Sn::eta(1, 0);
    assert_eq!((&one + &xe.scale(2.0)).sqrt().unwrap(), &one + &xe);
    assert_eq!(xe.exp().unwrap(), &one + &xe);
    let u = &one + &xe;
    assert_eq!(u.recip().unwrap() * u, one);
    assert!(Sn::xi(1, 0).apply(&Analytic::Cosh).is_err());
}

#[test]
fn unit_norm_and_tau_at_random_points() {
    for p in lcg_points(2, 100, 11) {
        for i in 0..2 {
            let uu = eval_at(&Form::Inner(i, i), &p).unwrap();
            let scale = 1.0 + p.iter().map(|v| v * v).sum::<f64>();
            assert!(uu.max_abs_diff(&Sn::constant(2, -1.0)) < 1e-13 * scale, "{uu} at {p:?}");
        }
        let tau = eval_at(&Form::Tau(0, 1), &p).unwrap();
        let inner_plus_zz = eval_at(&(Form::Inner(0, 1) + Form::Z(0) * Form::Z(1)), &p).unwrap();
        assert!(tau.max_abs_diff(&inner_plus_zz) < 1e-12);
        let by_hand = Sn::constant(2, p[0] * p[2] + p[1] * p[3]) + Sn::xi(2, 0) * Sn::eta(2, 1) - Sn::eta(2, 0) * Sn::xi(2, 1);
        assert!(tau.max_abs_diff(&by_hand) < 1e-14);
    }
}

#[test]
fn q_annihilates_tau_and_z() {
    let zero = Sn::zero(2);
    for p in lcg_points(2, 100, 12) {
        for f in [Form::Tau(0, 0), Form::Tau(0, 1), Form::Tau(1, 1), Form::Z(0), Form::Z(1), (-Form::Inner(0, 1)).exp()] {
            let q = apply_q(&f, &p).unwrap();
            let scale = eval_at(&f, &p).unwrap().coeffs().iter().fold(1.0f64, |a, c| a.max(c.abs()));
            assert!(q.max_abs_diff(&zero) < 1e-12 * scale, "Q({f}) = {q} at {p:?}");
        }
    }
    assert_eq!(apply_q(&Form::X(0), &[0.2, 0.3]).unwrap(), Sn::xi(1, 0));
}

fn even_battery() -> Vec<Form> {
    vec![
        Form::X(0) * Form::Y(1),
        (-Form::Tau(0, 1)).exp() + Form::X(1),
        Form::Xi(0) * Form::Eta(1) + Form::Y(0) * Form::Y(0),
        Form::Z(1).recip() * Form::X(0),
    ]
}

fn odd_battery() -> Vec<Form> {
    vec![Form::Xi(0) * Form::X(1), Form::Eta(1) * Form::Z(0) + Form::Xi(1).scale(0.5), Form::Eta(0) * Form::Xi(1) * Form::Xi(0)]
}

#[test]
fn q_is_an_anti_derivation() {
    let evens = even_battery();
    let odds = odd_battery();
    let mut forms: Vec<(Form, bool)> = evens.into_iter().map(|f| (f, false)).collect();
    forms.extend(odds.into_iter().map(|f| (f, true)));
    for p in lcg_points(2, 20, 13) {
        for (f, f_odd) in &forms {
            for (g, _) in &forms {
                let lhs = apply_q(&(f.clone() * g.clone()), &p).unwrap();
                let qf = apply_q(f, &p).unwrap();
                let qg = apply_q(g, &p).unwrap();
                let fv = eval_at(f, &p).unwrap();
                let gv = eval_at(g, &p).unwrap();
                let sign = if *f_odd { -1.0 } else { 1.0 };
                let rhs = qf * gv + (fv * qg).scale(sign);
                let scale = rhs.coeffs().iter().chain(lhs.coeffs()).fold(1.0f64, |a, c| a.max(c.abs()));
                assert!(lhs.max_abs_diff(&rhs) < 1e-12 * scale, "Q({f} {g}) at {p:?}");
            }
        }
    }
    // the even parts really are even
    assert!(eval_dual(&even_battery()[2], &[0.1, 0.2, 0.3, 0.4]).unwrap().is_even());
    assert_eq!(Sn::xi(1, 0).left_derivative(Gen::Xi(0)), Sn::one(1));
}

#[test]
fn superintegral_examples() {
    let spec = SuperQuadSpec::default();
    let gauss = (-(Form::X(0) * Form::X(0) + Form::Y(0) * Form::Y(0)).scale(0.5)).exp();
    let f = gauss.clone() * Form::Eta(0) * Form::Xi(0);
    assert!((superintegrate(&f, 1, &spec).unwrap().value - 1.0).abs() < 1e-8);
    assert_eq!(superintegrate(&gauss, 1, &spec).unwrap().value, 0.0);
    let r = localisation_check(&(-Form::Tau(0, 0)).exp(), 1, &spec).unwrap();
    assert!(r.pass && (r.integral.value - 1.0).abs() < 1e-8, "{r:?}");
}

#[test]
fn localisation_of_functions_of_z_with_zero_field() {
    // int e^{-H_{beta,0}} g(z) prod 1/z_i = g(1, 1)
    let g = (-((Form::Z(0) - 1.0) * (Form::Z(0) - 1.0)) - (Form::Z(1) - 1.0) * (Form::Z(1) - 1.0)).exp();
    for beta in [0.5, 1.5] {
        let action = (-Form::Inner(0, 1) - 1.0).scale(beta);
        let f = g.clone() * (-action).exp() * Form::Z(0).recip() * Form::Z(1).recip();
        let spec = SuperQuadSpec { radial_max: 3.5, ..SuperQuadSpec::default() };
        let r = localisation_check(&f, 2, &spec).unwrap();
        assert!(r.pass, "beta = {beta}: {r:?}");
        assert!((r.body_at_origin - 1.0).abs() < 1e-15);
    }
}

#[test]
fn localisation_of_a_compact_bump() {
    // bump(tau_11) is supported in r^2 < center + width.
    let spec = SuperQuadSpec { max_level: 6, ..SuperQuadSpec::default() };
    for (center, width) in [(0.5, 1.0), (0.3, 0.8), (2.0, 1.0)] {
        let f = Form::Tau(0, 0).apply(Analytic::Bump { center, width });
        let spec = SuperQuadSpec { radial_max: (center + width).sqrt().asinh(), ..spec.clone() };
        let r = localisation_check(&f, 1, &spec).unwrap();
        let direct = Analytic::Bump { center, width }.eval(0.0).unwrap();
        assert!((r.body_at_origin - direct).abs() < 1e-15);
        assert!(r.pass, "bump({center}, {width}): {r:?}");
    }
}

#[test]
fn localisation_refuses_non_supersymmetric_forms() {
    let f = (-Form::Tau(0, 0)).exp() * Form::Y(0);
    match localisation_check(&f, 1, &SuperQuadSpec::default()) {
        Err(Error::NotSupersymmetric { residual, point }) => {
            assert!(residual > 1e-3);
            assert_eq!(point.len(), 2);
        }
        other => panic!("expected refusal, got {other:?}"),
    }
}

#[test]
fn slowly_decaying_integrand_is_reported() {
    let f = (-(Form::X(0) * Form::X(0) + Form::Y(0) * Form::Y(0)).scale(1e-3)).exp() * Form::Eta(0) * Form::Xi(0);
    assert!(matches!(superintegrate(&f, 1, &SuperQuadSpec::default()), Err(Error::Quadrature(_))));
}

#[test]
fn horospherical_identities_and_berezinian() {
    let mut pts: Vec<(Vec<f64>, Vec<f64>)> = lcg_points(2, 25, 14).into_iter().map(|p| (vec![p[0], p[1]], vec![p[2], p[3]])).collect();
    pts.push((vec![0.0, 0.0], vec![0.0, 0.0]));
    let r = verify_susy_horo_identities(&pts).unwrap();
    assert!(r.pass, "max error {}", r.max_error);

    let grid: Vec<(f64, f64)> = lcg_points(1, 20, 15).into_iter().map(|p| (p[0], p[1])).chain([(0.0, 0.0), (1.0, 0.0)]).collect();
    let b = verify_berezinian(&grid).unwrap();
    assert!(b.pass, "max error {}", b.max_error);
    let at_one = b.points.iter().find(|p| p.t == 1.0 && p.s == 0.0).unwrap();
    assert!((at_one.ratio[0] - (-1.0f64).exp()).abs() < 1e-15);
    assert!(at_one.ratio[1..].iter().all(|c| c.abs() < 1e-15));
}

#[test]
fn ambient_and_horospherical_superintegrals_agree() {
    let gauss = (-(Form::X(0) * Form::X(0) + Form::Y(0) * Form::Y(0)).scale(0.5)).exp();
    for f in [
        gauss.clone() * (Form::c(1.0) + Form::Y(0) * Form::Y(0)) * Form::Eta(0) * Form::Xi(0),
        gauss.clone() * (Form::X(0).scale(0.4) + Form::Z(0)),
        (-(Form::Z(0) - 1.0).scale(4.0)).exp() * Form::Z(0).recip() * Form::Y(0) * Form::Y(0),
    ] {
        let ambient = superintegrate(&f, 1, &SuperQuadSpec::for_field(1.0)).unwrap().value;
        let horo_box = 9.0;
        let horo = horo_superintegral(&f, horo_box, 1e-9).unwrap().value;
        assert!((ambient - horo).abs() < 1e-7, "{f}: {ambient} vs {horo}");
    }
}
