//! Forward pass of the two-block 3D network and a look at the 21 activation maps.

use radiomics::cnn::{forward, generate_test_weights, parse_weights, weights_to_bytes};
use radiomics::synthetic::{sphere_input64, TextureFamily};

fn main() -> radiomics::Result<()> {
    // Seeded stand-in weights; real deployments load a weights file with `load_weights`.
    let weights = generate_test_weights(42);
    let bytes = weights_to_bytes(&weights)?;
    let weights = parse_weights(&bytes)?;
    println!("weights: {} bytes, {} conv parameters", bytes.len(), weights.n_conv_params());

    let (input, mask) = sphere_input64(20.0, TextureFamily::Fine, 3)?;
    let acts = forward(&input, &mask, &weights)?;
    println!("{} maps", acts.len());
    for (i, (map, m)) in acts.iter().enumerate() {
        let (lo, hi) = map.min_max();
        let in_roi: Vec<f64> = map.data().iter().zip(m.voxels()).filter(|p| *p.1 == 1).map(|p| *p.0).collect();
        let mean = in_roi.iter().sum::<f64>() / in_roi.len() as f64;
        println!("map {i:2} {:?} roi={:6} range=[{lo:8.3}, {hi:8.3}] roi mean={mean:8.3}", map.dims(), in_roi.len());
    }
    Ok(())
}
