#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use ziegler_core::{FollowerLever, FullState, Params, ReducedState};

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn random_params(r: &mut impl Rng) -> Params {
    Params {
        m1: r.random_range(0.2..3.0),
        m2: r.random_range(0.2..3.0),
        m3: r.random_range(0.2..3.0),
        l1: r.random_range(0.3..2.0),
        l2: r.random_range(0.3..2.0),
        l3: r.random_range(0.3..2.0),
        k1: r.random_range(0.0..5.0),
        k2: r.random_range(0.0..5.0),
        force: r.random_range(-4.0..4.0),
        follower_lever: if r.random_bool(0.5) { FollowerLever::L1 } else { FollowerLever::L2 },
    }
}

pub fn random_state(r: &mut impl Rng, angle: f64, speed: f64) -> FullState {
    FullState::new(
        r.random_range(-angle..angle),
        r.random_range(-angle..angle),
        r.random_range(-speed..speed),
        r.random_range(-speed..speed),
    )
}

pub fn random_reduced(r: &mut impl Rng, angle: f64, speed: f64) -> ReducedState {
    ReducedState::new(
        r.random_range(-angle..angle),
        r.random_range(-speed..speed),
        r.random_range(-speed..speed),
    )
}

/// `m1 = m3 = 1`, unit lengths: the balanced configuration.
pub fn balanced() -> Params {
    Params {
        m1: 1.0,
        m2: 1.0,
        m3: 1.0,
        ..Params::reference()
    }
}

/// Reference masses and lengths with a free pivot.
pub fn free_pivot(k1: f64, force: f64) -> Params {
    Params::reference().with_springs(k1, 0.0).with_force(force)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
