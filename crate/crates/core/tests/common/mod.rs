#![allow(dead_code)]

use netgame_core::model::{Instance, ThetaParams};
use netgame_core::network::{erdos_renyi, Covariates, SimilarityKernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mild parameters with the positivity sign profile.
pub fn mild_theta(rng: &mut impl Rng, a_n: f64) -> ThetaParams {
    ThetaParams {
        theta0: rng.gen_range(-2.5..0.5),
        theta1: rng.gen_range(0.05..1.0),
        theta2: vec![rng.gen_range(-0.5..0.5)],
        theta3: vec![rng.gen_range(0.0..0.8)],
        theta4: rng.gen_range(0.05..1.0),
        theta5: rng.gen_range(0.0..1.0),
        theta6: rng.gen_range(0.0..1.0),
        a_n,
    }
}

/// Random network with uniform covariates and the inverse-distance kernel.
pub fn random_instance(n: usize, density: f64, theta: ThetaParams, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = erdos_renyi(n, density, rng.gen()).unwrap();
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    Instance::new(net, Covariates::scalar(&x).unwrap(), SimilarityKernel::InverseDistance, theta).unwrap()
}

/// Random instance with mild random parameters, `A_N = 1/N`.
pub fn mild_instance(n: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let theta = mild_theta(&mut rng, 1.0 / n as f64);
    let density = rng.gen_range(0.2..0.8);
    random_instance(n, density, theta, seed)
}
