//! Haar nondecimated transform of a short window and the inner-product
//! matrix that relates the raw periodogram to the spectrum.
//!
//! ```text
//! cargo run --example haar_ndwt
//! ```

use wavecoh::wavelet::{discrete_wavelet, inner_product_matrix, ndwt, WaveletFilter};

fn main() -> wavecoh::Result<()> {
    let haar = WaveletFilter::haar();
    let x: Vec<f64> = (0..16).map(|t| (t as f64 * 0.7).sin() + if t == 9 { 2.0 } else { 0.0 }).collect();
    let pyramid = ndwt(&x, &haar)?;

    println!("window: {x:.3?}");
    for scale in 1..=pyramid.levels() {
        println!("d_{scale}: {:.3?}", pyramid.detail(scale));
    }
    println!("c_J: {:.3?}", pyramid.smooth(pyramid.levels()));

    println!("\nscale-2 Haar wavelet: {:?}", discrete_wavelet(2, &haar)?);

    let a = inner_product_matrix(4, &haar)?;
    println!("\nA (J = 4), condition number {:.1}:", a.condition());
    for j in 1..=4 {
        let row: Vec<f64> = (1..=4).map(|l| a.entry(j, l)).collect();
        println!("  {row:.4?}");
    }
    Ok(())
}
