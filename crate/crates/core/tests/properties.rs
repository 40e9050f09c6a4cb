use hymlab_core::calculus::{fs_metric, twisted_metric};
use hymlab_core::endo::{duality_pairing, eigen_cluster, f_w, gauge_invariance_check, lp_norm, random_endo, random_unitary, CLUSTER_TOL};
use hymlab_core::geodesic::b_coefficients;
use hymlab_core::lemmas::alpha_sum_witness;
use hymlab_core::{BaseGeometry, BundleSpec, CMatrix, EndoField, Filtration, MatrixField, MetricField};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn geom() -> BaseGeometry {
    BaseGeometry::new(16, 32).unwrap()
}

fn metric(g: &BaseGeometry, splitting: &[i64], seed: u64) -> MetricField {
    let b = BundleSpec::new(splitting.to_vec()).unwrap();
    twisted_metric(g, &b, &mut ChaCha8Rng::seed_from_u64(seed), 0.4).unwrap()
}

fn endo(g: &BaseGeometry, h0: &MetricField, seed: u64, amplitude: f64) -> EndoField {
    random_endo(g, h0, &mut ChaCha8Rng::seed_from_u64(seed), amplitude, 2, true).unwrap()
}

fn phi(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        0.5 + x / 6.0
    } else {
        (x.exp() - x - 1.0) / (x * x)
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn lp_norm_triangle_inequality(seed in any::<u64>(), p in 1.0f64..6.0) {
        let g = geom();
        let h0 = metric(&g, &[1, -1], seed);
        let a = endo(&g, &h0, seed ^ 1, 1.0);
        let b = endo(&g, &h0, seed ^ 2, 2.0);
        let sum = a.combine(1.0, &b, 1.0).unwrap();
        let lhs = lp_norm(&g, &h0, &sum, p).unwrap();
        let rhs = lp_norm(&g, &h0, &a, p).unwrap() + lp_norm(&g, &h0, &b, p).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn pairing_is_real_nonnegative_and_bilinear(seed in any::<u64>(), s in -2.0f64..2.0, t in -2.0f64..2.0) {
        // The imaginary part is truncation error, about 1e-9 at 16x32.
        let g = BaseGeometry::new(24, 48).unwrap();
        let h0 = metric(&g, &[1, 0], seed);
        let w = endo(&g, &h0, seed ^ 1, 1.0);
        let v = endo(&g, &h0, seed ^ 2, 1.0);
        let u = endo(&g, &h0, seed ^ 3, 1.0);
        let ww = duality_pairing(&g, &h0, w.values(), w.values()).unwrap();
        prop_assert!(ww.im.abs() <= 1e-9 * ww.re.abs().max(1.0));
        prop_assert!(ww.re >= -1e-12);

        let combo = w.values().scale(s).add(&v.values().scale(t)).unwrap();
        let lhs = duality_pairing(&g, &h0, &combo, u.values()).unwrap();
        let rhs = duality_pairing(&g, &h0, w.values(), u.values()).unwrap() * s
            + duality_pairing(&g, &h0, v.values(), u.values()).unwrap() * t;
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
    }

    #[test]
    fn density_scales_along_rays(seed in any::<u64>()) {
        let g = geom();
        let h0 = metric(&g, &[2, -1], seed);
        let w = endo(&g, &h0, seed ^ 1, 1.0);
        let sd = eigen_cluster(&g, &h0, &w, CLUSTER_TOL).unwrap();
        let rho = g.kahler_density();
        for t in [0.5, 1.0, 2.0] {
            let scaled = f_w(&g, &h0, &w.scale(t)).unwrap();
            for n in 0..g.n_nodes() {
                let eta = sd.eta.at(n);
                let lam = &sd.eigenvalues[n];
                let mut expected = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        expected += t * t * eta[(k, l)].norm_sqr() * phi(t * (lam[k] - lam[l]));
                    }
                }
                expected /= rho[n];
                prop_assert!((scaled[n] - expected).abs() <= 1e-8 * (1.0 + expected.abs()), "t = {t}, node {n}");
            }
        }
    }

    #[test]
    fn density_is_nonnegative(seed in any::<u64>(), amplitude in 0.1f64..4.0) {
        let g = geom();
        let h0 = metric(&g, &[1, 1, -1], seed);
        let w = endo(&g, &h0, seed ^ 1, amplitude);
        prop_assert!(f_w(&g, &h0, &w).unwrap().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn density_is_gauge_invariant(seed in any::<u64>()) {
        let g = geom();
        let h0 = metric(&g, &[0, 0], seed);
        let w = endo(&g, &h0, seed ^ 1, 1.5);
        let u = random_unitary(2, &mut ChaCha8Rng::seed_from_u64(seed ^ 2));
        let field = MatrixField::from_fn(&g, 2, |_| u.clone());
        prop_assert!(gauge_invariance_check(&g, &h0, &w, &field).unwrap() <= 1e-9);
    }

    #[test]
    fn second_fundamental_form_mass_is_gauge_invariant(seed in any::<u64>(), a in 0.0f64..6.3, b in 0.0f64..6.3) {
        let g = geom();
        let bundle = BundleSpec::new(vec![1, -1]).unwrap();
        let f = Filtration::new(&bundle, vec![vec![0, 1], vec![0]], vec![1.0, 0.0]).unwrap();
        let h0 = metric(&g, &[1, -1], seed);
        let mut u = CMatrix::zeros(2, 2);
        u[(0, 0)] = Complex64::from_polar(1.0, a);
        u[(1, 1)] = Complex64::from_polar(1.0, b);
        let before = b_coefficients(&g, &f, &h0).unwrap()[0][1];
        let after = b_coefficients(&g, &f, &h0.gauge(&u)).unwrap()[0][1];
        prop_assert!((before - after).abs() <= 1e-10 * before.abs().max(1.0));
    }

    #[test]
    fn witness_matches_enumeration(a in proptest::collection::vec(-4i32..=4, 1..6)) {
        let mut a: Vec<f64> = a.into_iter().map(f64::from).collect();
        a.push(-a.iter().sum::<f64>());
        let m = a.len();
        let lambdas: Vec<f64> = (0..m).rev().map(|k| k as f64).collect();
        let pairing: f64 = lambdas.iter().zip(&a).map(|(l, x)| l * x).sum();
        prop_assume!(pairing <= 0.0);
        let w = alpha_sum_witness(&lambdas, &a, false).unwrap();
        let expected = (1..m).find(|&i| a[i..].iter().sum::<f64>() >= 0.0);
        prop_assert!(w.found);
        prop_assert_eq!(w.index, expected);
    }
}

#[test]
fn block_unitary_gauge_preserves_second_fundamental_form() {
    let g = geom();
    let bundle = BundleSpec::new(vec![1, 1, -1]).unwrap();
    let f = Filtration::new(&bundle, vec![vec![0, 1, 2], vec![0, 1]], vec![1.0, 0.0]).unwrap();
    let h0 = metric(&g, &[1, 1, -1], 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let before = b_coefficients(&g, &f, &h0).unwrap()[0][1];
    for _ in 0..5 {
        let v = random_unitary(2, &mut rng);
        let mut u = CMatrix::identity(3, 3);
        u.view_mut((0, 0), (2, 2)).copy_from(&v);
        let after = b_coefficients(&g, &f, &h0.gauge(&u)).unwrap()[0][1];
        assert!((before - after).abs() <= 1e-10 * before.max(1.0), "{before} vs {after}");
    }
}

#[test]
fn witness_rejects_positive_pairing() {
    assert!(alpha_sum_witness(&[1.0, 0.0], &[1.0, -1.0], false).is_err());
    assert!(alpha_sum_witness(&[1.0, 0.0], &[0.0, 0.0], true).is_err());
    assert!(alpha_sum_witness(&[0.0, 1.0], &[-1.0, 1.0], false).is_err());
}

#[test]
fn constant_field_pairing_reduces_to_l2_term() {
    let g = geom();
    let b = BundleSpec::new(vec![0, 0]).unwrap();
    let h0 = fs_metric(&g, &b);
    let mut c = CMatrix::zeros(2, 2);
    c[(0, 0)] = Complex64::new(1.0, 0.0);
    c[(1, 1)] = Complex64::new(-1.0, 0.0);
    let w = EndoField::constant(&g, &h0, &c, true).unwrap();
    let p = duality_pairing(&g, &h0, w.values(), w.values()).unwrap();
    // Only the zeroth-order term survives: ∫ tr(w²) ω = 2.
    assert!((p - Complex64::new(2.0, 0.0)).norm() < 1e-10);
}
