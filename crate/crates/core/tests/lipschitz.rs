use deep_euler::mlp::MlpParams;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `|N(u) - N(v)|_inf` may exceed `L |u - v|_inf` only by the rounding in
/// evaluating both outputs.
fn within_bound(p: &MlpParams, u: &[f64], v: &[f64]) -> bool {
    let (nu, nv) = (p.forward(u).unwrap(), p.forward(v).unwrap());
    let rounding = 1e-13 * (1.0 + inf_norm(&nu) + inf_norm(&nv));
    inf_dist(&nu, &nv) <= p.lipschitz_bound() * inf_dist(u, v) * (1.0 + 1e-12) + rounding
}

/// Largest observed `|N(u) - N(v)|_inf / |u - v|_inf` over `pairs` random
/// pairs, checking every pair against the bound on the way.
fn empirical_ratio(p: &MlpParams, pairs: usize, rng: &mut ChaCha8Rng) -> f64 {
    let n = p.input_dim();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        // half the pairs are close together, where local slopes dominate
        let spread = if rng.random_bool(0.5) { 1e-3 } else { 3.0 };
        let v: Vec<f64> = u.iter().map(|x| x + rng.random_range(-spread..spread)).collect();
        let d = inf_dist(&u, &v);
        if d > 0.0 {
            assert!(within_bound(p, &u, &v), "pair {u:?} {v:?}");
            let r = inf_dist(&p.forward(&u).unwrap(), &p.forward(&v).unwrap()) / d;
            worst = worst.max(r);
        }
    }
    worst
}

#[test]
fn bound_holds_on_random_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for seed in 0..20 {
        let depth = rng.random_range(2..=5);
        let widths: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=12)).collect();
        let p = MlpParams::init(&widths, seed).unwrap();
        let ratio = empirical_ratio(&p, 10_000, &mut rng);
        let bound = p.lipschitz_bound();
        assert!(ratio <= bound * (1.0 + 1e-6), "net {seed} {widths:?}: {ratio} > {bound}");
    }
}

#[test]
fn clipping_caps_the_bound() {
    for seed in 0..20 {
        let mut p = MlpParams::init(&[4, 16, 16, 16, 2], seed).unwrap();
        p.clip_weights(1.2).unwrap();
        assert!(p.lipschitz_bound() <= 1.2f64.powi(4) * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bound_dominates_any_pair(
        widths in prop::collection::vec(1usize..8, 2..5),
        seed in any::<u64>(),
        u in prop::collection::vec(-5.0f64..5.0, 8),
        delta in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let p = MlpParams::init(&widths, seed).unwrap();
        let n = widths[0];
        let v: Vec<f64> = u[..n].iter().zip(&delta).map(|(a, d)| a + d).collect();
        prop_assume!(inf_dist(&u[..n], &v) > 0.0);
        prop_assert!(within_bound(&p, &u[..n], &v));
    }
}
