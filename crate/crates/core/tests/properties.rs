use nls_lens::initial_data::apply_chirp;
use nls_lens::lens::scattering_state;
use nls_lens::nlsf::{decode, encode};
use nls_lens::rng::{draw, CounterRng};
use nls_lens::spectral::{free_propagate, make_grid, Field, GridSpec, C64};
use nls_lens::weighted::{select_params, x_norm};
use proptest::prelude::*;

fn bumps(grid: &GridSpec, seed: u64) -> Field {
    let mut rng = CounterRng::new(seed, 0);
    let b: Vec<(C64, f64, f64)> = (0..3)
        .map(|_| (C64::new(rng.normal(), rng.normal()), rng.uniform(1.0, 2.0), rng.uniform(-5.0, 5.0)))
        .collect();
    Field::from_fn(*grid, |x| b.iter().map(|(a, w, c)| a * (-((x[0] - c) / w).powi(2)).exp()).sum())
}

fn noise(grid: &GridSpec, seed: u64) -> Field {
    let mut rng = CounterRng::new(seed, 1);
    let vals = (0..grid.len()).map(|_| C64::new(rng.normal(), rng.normal())).collect();
    Field::from_values(*grid, vals).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn free_flow_is_unitary(seed in any::<u64>(), t in -5.0f64..5.0) {
        let g = make_grid(1, 128, 10.0).unwrap();
        let u = noise(&g, seed);
        let rel = (free_propagate(&u, t).l2_norm() / u.l2_norm() - 1.0).abs();
        prop_assert!(rel < 1e-12, "{rel:e}");
    }

    #[test]
    fn free_flow_group_law(seed in any::<u64>(), s in -3.0f64..3.0, t in -3.0f64..3.0) {
        let g = make_grid(2, 32, 8.0).unwrap();
        let u = noise(&g, seed);
        let two_steps = free_propagate(&free_propagate(&u, s), t);
        let err = two_steps.relative_l2_error(&free_propagate(&u, s + t)).unwrap();
        prop_assert!(err < 1e-11, "{err:e}");
    }

    #[test]
    fn x_norm_homogeneous_and_subadditive(seed in any::<u64>(), re in -3.0f64..3.0, im in -3.0f64..3.0) {
        prop_assume!(re.hypot(im) > 1e-3);
        let p = select_params(1, 2.5).unwrap();
        let g = make_grid(1, 256, 24.0).unwrap();
        let (u, v) = (bumps(&g, seed), bumps(&g, seed.wrapping_add(1)));
        let c = C64::new(re, im);
        let nu = x_norm(&u, &p).unwrap().total;
        let scaled = x_norm(&u.scale(c), &p).unwrap().total;
        prop_assert!((scaled / (c.norm() * nu) - 1.0).abs() < 1e-12);
        let nv = x_norm(&v, &p).unwrap().total;
        let sum = x_norm(&u.add(&v).unwrap(), &p).unwrap().total;
        prop_assert!(sum <= (nu + nv) * (1.0 + 1e-14));
    }

    #[test]
    fn scattering_map_preserves_mass(seed in any::<u64>(), b in 0.1f64..10.0) {
        let g = make_grid(1, 256, 20.0).unwrap();
        let v = bumps(&g, seed);
        let u_plus = scattering_state(&v, b).unwrap();
        prop_assert!((u_plus.l2_norm() / v.l2_norm() - 1.0).abs() < 1e-12);
        let back = apply_chirp(&u_plus, -b);
        prop_assert!((back.l2_norm() / v.l2_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nlsf_round_trip_is_exact(seed in any::<u64>(), dim in 1usize..=3) {
        let g = make_grid(dim, 8, 3.5).unwrap();
        let u = noise(&g, seed);
        let back = decode(&encode(&u)).unwrap();
        prop_assert_eq!(back.grid(), u.grid());
        for (a, b) in back.values().iter().zip(u.values()) {
            prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
            prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn rng_is_a_pure_function_of_its_counter(seed in any::<u64>(), stream in any::<u64>(), skip in 0u64..64) {
        let mut a = CounterRng::new(seed, stream);
        let mut b = CounterRng::new(seed, stream);
        for _ in 0..skip {
            a.next_u64();
        }
        let x = a.next_u64();
        prop_assert_eq!(x, draw(seed, stream, skip));
        let ys: Vec<u64> = (0..=skip).map(|_| b.next_u64()).collect();
        prop_assert_eq!(ys[skip as usize], x);
    }
}
