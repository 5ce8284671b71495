//! MSE (sRGB and CIELAB), SSIM and MS-SSIM between two images.
//!
//! `cargo run --release --example pixel_baselines -- [a.png b.png]`

use vizsim::baselines::{ms_ssim, mse, ssim, GrayImage, MsSsimConfig, MseSpace, SsimConfig};
use vizsim::preprocess::{read_image, resize};
use vizsim::stimuli::{render_glyph, Glyph};

fn main() -> vizsim::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (a, b) = match args.as_slice() {
        [a, b, ..] => (
            resize(&read_image(a.as_ref())?, 224)?,
            resize(&read_image(b.as_ref())?, 224)?,
        ),
        _ => (
            render_glyph(Glyph::Circle, 60.0, [31, 119, 180], 224),
            render_glyph(Glyph::Circle, 66.0, [31, 119, 180], 224),
        ),
    };
    let (ga, gb) = (GrayImage::luma(&a)?, GrayImage::luma(&b)?);
    println!("mse srgb {:.6}", mse(&a, &b, MseSpace::Srgb)?);
    println!("mse lab  {:.6}", mse(&a, &b, MseSpace::Lab)?);
    println!("ssim     {:.6}", ssim(&ga, &gb, &SsimConfig::default())?);
    for k in 1..=5 {
        println!(
            "ms-ssim K={k} {:.6}",
            ms_ssim(&ga, &gb, &MsSsimConfig::with_scales(k))?
        );
    }
    Ok(())
}
