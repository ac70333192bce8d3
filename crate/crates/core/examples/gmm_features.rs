//! Mixture fitting on a bimodal sample, then the full 63·k feature vector for one tumour.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use radiomics::cnn::{forward, generate_test_weights};
use radiomics::gmm::{build_feature_vector, em_fit_traced};
use radiomics::synthetic::{sphere_input64, TextureFamily};

fn main() -> radiomics::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let samples: Vec<f64> = (0..20_000)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            if i % 2 == 0 { z } else { 10.0 + z }
        })
        .collect();
    let (fit, trace) = em_fit_traced(&samples, 2, 0)?;
    println!("EM: {} iterations, ll {:.3} -> {:.3}", fit.iterations, trace[0], fit.log_likelihood);
    for c in &fit.components {
        println!("  mu={:.4} var={:.4} w={:.4}", c.mu, c.sigma2, c.omega);
    }

    let (input, mask) = sphere_input64(18.0, TextureFamily::Coarse, 9)?;
    let acts = forward(&input, &mask, &generate_test_weights(42))?;
    for k in [1, 2, 3] {
        let fv = build_feature_vector(&acts, k, 7)?;
        println!("k={k}: {} features, first {:?}", fv.len(), &fv.names[..3]);
    }
    let fv = build_feature_vector(&acts, 2, 7)?;
    for (name, v) in fv.names.iter().zip(&fv.values).take(6) {
        println!("  {name} = {v:.4}");
    }
    Ok(())
}
