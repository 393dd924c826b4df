use heatblow::hermite::{apply_l, hermite, hermite_multi, project, weighted_integral, MultiIndex};
use heatblow::Grid64;

fn factorial(k: u64) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// h_m(y) = Σ_k (−1)^k m! / (k!(m−2k)!) y^{m−2k}
fn explicit_h(m: usize, y: f64) -> f64 {
    (0..=m / 2)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * factorial(m as u64) / (factorial(k as u64) * factorial((m - 2 * k) as u64))
                * y.powi((m - 2 * k) as i32)
        })
        .sum()
}

#[test]
fn recurrence_matches_explicit_sum() {
    for m in 0..=10 {
        for i in 0..=40 {
            let y = -4.0 + 0.2 * i as f64;
            let (a, b) = (hermite(m, y).unwrap(), explicit_h(m, y));
            assert!(
                (a - b).abs() <= 1e-10 * (1.0 + b.abs()),
                "m={m} y={y}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn orthogonality_in_weighted_space() {
    let g = Grid64::new(1, 40.0, 8001).unwrap();
    for i in 0..=10 {
        let hi = g.sample(|y| hermite(i, y[0]).unwrap());
        for j in 0..=10 {
            let v = weighted_integral(&hi, |y| hermite(j, y[0]).unwrap());
            let norm = |k: usize| factorial(k as u64) * 2f64.powi(k as i32);
            let want = if i == j { norm(i) } else { 0.0 };
            let scale = (norm(i) * norm(j)).sqrt();
            assert!((v - want).abs() < 1e-7 * scale, "({i},{j}): {v} vs {want}");
        }
    }
}

#[test]
fn projection_recovers_two_dimensional_products() {
    let g = Grid64::new(2, 24.0, 241).unwrap();
    let beta = MultiIndex::new(vec![2, 1]);
    let f = g.sample(|y| 3.0 * hermite_multi(&beta, y).unwrap() - 0.5 * hermite(3, y[0]).unwrap());
    assert!((project(&f, &beta).unwrap() - 3.0).abs() < 1e-8);
    assert!((project(&f, &MultiIndex::new(vec![3, 0])).unwrap() + 0.5).abs() < 1e-8);
    assert!(project(&f, &MultiIndex::new(vec![1, 1])).unwrap().abs() < 1e-8);
}

#[test]
fn eigenvalues_of_l_on_hermite_polynomials() {
    let g = Grid64::new(1, 12.0, 2401).unwrap();
    let h = g.spacing();
    for m in 0..=6 {
        let f = g.sample(|y| hermite(m, y[0]).unwrap());
        let lf = apply_l(&f);
        let num = weighted_integral(&lf, |y| hermite(m, y[0]).unwrap());
        let den = weighted_integral(&f, |y| hermite(m, y[0]).unwrap());
        let err = (num / den - (1.0 - m as f64 / 2.0)).abs();
        assert!(err < 10.0 * h * h, "m={m}: {err:e} vs {:e}", 10.0 * h * h);
    }
}
