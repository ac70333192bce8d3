//! Volume I/O and the preprocessing chain that turns an anisotropic MRI volume into a 64³ network input.

use radiomics::synthetic::{ellipsoid_mask, textured_volume, TextureFamily};
use radiomics::volume::{
    extract_cnn_input, load_mask, load_volume, resample_isotropic, resample_mask_isotropic, save_mask, save_volume,
    standardize_intensity, Modality,
};

fn main() -> radiomics::Result<()> {
    let dims = [48, 40, 20];
    let spacing = [0.9, 0.9, 2.0];
    let mask = ellipsoid_mask(dims, spacing, [14.0, 9.0, 8.0]);
    let vol = textured_volume(dims, spacing, &mask, TextureFamily::Coarse, Modality::T2WI, 1)?;

    let dir = std::env::temp_dir().join("radiomics_preprocess_example");
    save_volume(&vol, dir.join("t2"))?;
    save_mask(&mask, spacing, dir.join("mask"))?;
    let vol = load_volume(dir.join("t2.vol.json"))?;
    let (mask, mask_spacing) = load_mask(dir.join("mask.vol.json"))?;
    println!("loaded {:?} @ {:?} mm, ROI {} voxels", vol.dims(), vol.spacing(), mask.count());

    let iso = resample_isotropic(&vol, 1.0)?;
    let iso_mask = resample_mask_isotropic(&mask, mask_spacing, 1.0)?;
    println!("1 mm grid: {:?}, ROI {} voxels", iso.dims(), iso_mask.count());

    let std = standardize_intensity(&iso);
    let (lo, hi) = std.min_max();
    println!("standardized range [{lo}, {hi}]");

    let input = extract_cnn_input(&std, &iso_mask)?;
    let (bb_lo, bb_hi) = input.mask.bounding_box().expect("ROI survives the crop");
    println!("network input {:?}, ROI {} voxels, bbox {bb_lo:?}..={bb_hi:?}", input.volume.dims(), input.mask.count());
    Ok(())
}
