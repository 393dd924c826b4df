use heatblow::diagnostics::{
    decompose, in_shrinking_set, profile_error, ModeDecomposition, ShrinkingSetParams,
};
use heatblow::params::{phi1_radial, phi2_radial};
use heatblow::rhs::{f1f2, potentials_at, quadratic_b_at};
use heatblow::solver::SimilarityState;
use heatblow::{make_params, Field64, Grid64};
use num_complex::Complex64;
use proptest::prelude::*;

const S: f64 = 4.0;

fn ssp() -> ShrinkingSetParams {
    ShrinkingSetParams::default()
}

fn grid1() -> Grid64 {
    Grid64::new(1, 2.0 * ssp().k * S.sqrt() + 2.0, 1025).unwrap()
}

fn poly_field(g: Grid64, q0: f64, q1: f64, q2: f64, bump: f64) -> Field64 {
    let d = ModeDecomposition {
        q0,
        q1: vec![q1],
        q2: vec![vec![q2]],
        q_minus_weighted_norm: 0.0,
        q_e_norm: 0.0,
    };
    g.sample(|y| d.polynomial(y) + bump * (-(y[0] - 1.0).powi(2)).exp())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_is_linear(
        a in -3.0f64..3.0, b in -3.0f64..3.0,
        c in prop::array::uniform4(-1.0f64..1.0), e in prop::array::uniform4(-1.0f64..1.0),
    ) {
        let g = grid1();
        let f = poly_field(g, c[0], c[1], c[2], c[3]);
        let h = poly_field(g, e[0], e[1], e[2], e[3]);
        let comb = f.zip_map(&h, |x, y| a * x + b * y);
        let (df, dh, dc) = (decompose(&f, S, &ssp()).unwrap(), decompose(&h, S, &ssp()).unwrap(), decompose(&comb, S, &ssp()).unwrap());
        let tol = 1e-12 * (1.0 + a.abs() + b.abs());
        prop_assert!((dc.q0 - (a * df.q0 + b * dh.q0)).abs() < tol);
        prop_assert!((dc.q1[0] - (a * df.q1[0] + b * dh.q1[0])).abs() < tol);
        prop_assert!((dc.q2[0][0] - (a * df.q2[0][0] + b * dh.q2[0][0])).abs() < tol);
    }

    #[test]
    fn low_modes_are_recovered(q0 in -1.0f64..1.0, q1 in -1.0f64..1.0, q2 in -1.0f64..1.0) {
        let g = grid1();
        let d = decompose(&poly_field(g, q0, q1, q2, 0.0), S, &ssp()).unwrap();
        prop_assert!((d.q0 - q0).abs() < 1e-8, "{} vs {}", d.q0, q0);
        prop_assert!((d.q1[0] - q1).abs() < 1e-8);
        prop_assert!((d.q2[0][0] - q2).abs() < 1e-8);
    }

    #[test]
    fn shrinking_toward_zero_keeps_membership(
        c in prop::array::uniform4(-1e-3f64..1e-3), e in prop::array::uniform4(-1e-4f64..1e-4), lambda in 0.0f64..1.0,
    ) {
        let g = grid1();
        let d1 = decompose(&poly_field(g, c[0], c[1], c[2], c[3]), S, &ssp()).unwrap();
        let d2 = decompose(&poly_field(g, e[0], e[1], e[2], e[3]), S, &ssp()).unwrap();
        let full = in_shrinking_set(&d1, &d2, &ssp(), S);
        let small = in_shrinking_set(&d1.scaled(lambda), &d2.scaled(lambda), &ssp(), S);
        for (m, n) in full.margins.iter().zip(&small.margins) {
            prop_assert!(n.margin >= m.margin - 1e-15, "{}: {} < {}", m.name, n.margin, m.margin);
        }
        prop_assert!(!full.inside || small.inside);
    }

    #[test]
    fn profile_state_error_is_the_correction(p in 2u32..=9, n in 1usize..=2, s in 5.0f64..200.0) {
        let params = make_params::<f64>(p, n).unwrap();
        let pts = if n == 1 { 257 } else { 33 };
        let g = Grid64::new(n, 3.0 * s.sqrt(), pts).unwrap();
        let state = SimilarityState::new(
            s,
            g.sample(|y| phi1_radial(y.iter().map(|v| v * v).sum(), s, &params)),
            g.sample(|y| phi2_radial(y.iter().map(|v| v * v).sum(), s, &params)),
        ).unwrap();
        let (e1, e2) = profile_error(&state, &params);
        let (nf, pf) = (n as f64, f64::from(p));
        let k = params.kappa;
        prop_assert!((e1 * s - nf * k / (2.0 * pf)).abs() < 1e-12);
        prop_assert!((e2 * s - 2.0 * nf * k / (pf - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn potentials_are_the_jacobian(p in 2u32..=9, r in 0.1f64..2.0, th in -1.0f64..1.0) {
        let z = Complex64::from_polar(r, th);
        let v = potentials_at(z.re, z.im, p);
        let dz = z.powu(p - 1) * f64::from(p);
        let base = f64::from(p) * z.re.powi(p as i32 - 1);
        let tol = 1e-11 * (1.0 + dz.norm());
        prop_assert!((base + v.v11 - dz.re).abs() < tol);
        prop_assert!((v.v12 + dz.im).abs() < tol);
        prop_assert!((v.v21 - dz.im).abs() < tol);
        prop_assert!((base + v.v22 - dz.re).abs() < tol);
    }

    #[test]
    fn power_and_remainder_match_complex_arithmetic(
        p in 2u32..=9, a in -1.5f64..1.5, b in -1.5f64..1.5, c in -0.5f64..0.5, d in -0.5f64..0.5,
    ) {
        let z = Complex64::new(a, b);
        let q = Complex64::new(c, d);
        let (re, im) = f1f2(a, b, p);
        let want = z.powu(p);
        let scale = 1.0 + want.norm();
        prop_assert!((re - want.re).abs() < 1e-12 * scale && (im - want.im).abs() < 1e-12 * scale);
        let rem = (z + q).powu(p) - z.powu(p) - z.powu(p - 1) * q * f64::from(p);
        let (r1, r2) = quadratic_b_at(c, d, a, b, p);
        let scale = 1.0 + (z + q).norm().powi(p as i32);
        prop_assert!((r1 - rem.re).abs() < 1e-11 * scale && (r2 - rem.im).abs() < 1e-11 * scale);
    }
}
