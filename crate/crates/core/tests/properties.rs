use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use debranges::factorization::{factorize_exact, factorize_oscillation, normalize_at_i, truncate_factorized};
use debranges::functionals::ktilde;
use debranges::hamiltonian::PiecewiseHamiltonian;
use debranges::krein::{entropy_via_pstar, hermite_biehler, pstar_at, pstar_from_theta, theta_tilde};
use debranges::mat2::{expm_tracefree, mobius, random_sl2, Mat2C, Mat2R, C64};
use debranges::models::{example3, random_det1_fc};
use debranges::solver::{entropy_closed_form, weyl_fc};

fn instance(seed: u64) -> PiecewiseHamiltonian {
    random_det1_fc(&mut ChaCha8Rng::seed_from_u64(seed), 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weyl_conjugation_law(seed in 0u64..10_000, re in -3.0f64..3.0, im in 0.1f64..3.0) {
        let h = instance(seed);
        let a = random_sl2(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed), 0.5);
        let z = C64::new(re, im);
        let m = weyl_fc(&h, z).unwrap().m;
        let ma = weyl_fc(&h.conjugate_sl2(&a).unwrap(), z).unwrap().m;
        // m_A = (a22 m + a12) / (a21 m + a11)
        let law = Mat2R::new(a.a22, a.a12, a.a21, a.a11).to_complex();
        let want = mobius(&law, m).unwrap();
        prop_assert!((ma - want).norm() <= 1e-9 * (1.0 + want.norm()));
    }

    #[test]
    fn ktilde_is_conjugation_invariant(seed in 0u64..10_000) {
        let h = instance(seed);
        let a = random_sl2(&mut ChaCha8Rng::seed_from_u64(seed + 1), 0.5);
        let k = ktilde(&h).unwrap().total;
        let ka = ktilde(&h.conjugate_sl2(&a).unwrap()).unwrap().total;
        prop_assert!((k - ka).abs() <= 1e-9 * (1.0 + k));
    }

    #[test]
    fn tracefree_exponential_inverts(a in -4.0f64..4.0, b in -4.0f64..4.0, c in -4.0f64..4.0, d in -4.0f64..4.0) {
        let m = Mat2C::new(C64::new(a, b), C64::new(c, d), C64::new(d, -a), C64::new(-a, -b));
        let (e, back) = (expm_tracefree(m).unwrap(), expm_tracefree(m.scale(C64::new(-1.0, 0.0))).unwrap());
        // Cancellation in the product scales with the sizes of both factors.
        let scale = (e.max_abs() * back.max_abs()).max(1.0);
        prop_assert!((e * back).max_diff(&Mat2C::IDENTITY) <= 1e-12 * scale);
        prop_assert!((e.det() - 1.0).norm() <= 1e-12 * scale);
    }

    #[test]
    fn hamiltonian_json_is_bit_exact(seed in 0u64..10_000) {
        let h = instance(seed);
        let s = serde_json::to_string(&h).unwrap();
        let back: PiecewiseHamiltonian = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(&back, &h);
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), s);
    }

    #[test]
    fn krein_paths_agree(seed in 0u64..10_000, re in -5.0f64..5.0, im in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pieces = debranges::models::random_example3_pieces(&mut rng, 4, 1.0);
        let (h, _) = example3(&pieces).unwrap();
        let f = factorize_exact(&h).unwrap();
        let z = C64::new(re, im);
        let r = 0.5 * h.ell();
        let s = pstar_at(&f, z, r).unwrap();
        let want = pstar_from_theta(&theta_tilde(&f, r, z).unwrap(), z, s.xi, s.u);
        prop_assert!((s.pstar - want).norm() <= 1e-8 * (1.0 + want.norm()));
        if im > 0.0 {
            let (big, small) = hermite_biehler(&f, z, r).unwrap();
            prop_assert!(small <= big * (1.0 + 1e-10));
        }
    }
}

#[test]
fn entropy_through_krein_on_oscillation_factorization() {
    for seed in 0..5 {
        let h = instance(seed);
        let f = factorize_oscillation(&h).unwrap();
        let ell = f.support();
        let (_, nf) = normalize_at_i(&truncate_factorized(&f, ell).unwrap()).unwrap();
        let k = entropy_closed_form(nf.hamiltonian()).unwrap();
        let via = entropy_via_pstar(&nf).unwrap();
        assert!((k - via).abs() < 1e-7, "seed {seed}: {k} vs {via}");
    }
}
