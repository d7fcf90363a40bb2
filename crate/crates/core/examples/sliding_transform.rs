//! Slides a Haar pyramid along a stream one sample at a time and checks
//! that it stays equal to a fresh batch transform of each window.
//!
//! ```text
//! cargo run --release --example sliding_transform -- 256 5000
//! ```

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use wavecoh::online::{updated_coefficient_count, SlidingTransform};
use wavecoh::simgen::stream_rng;
use wavecoh::wavelet::{ndwt, WaveletFilter};

fn main() -> wavecoh::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let w = args.first().copied().unwrap_or(256);
    let slides = args.get(1).copied().unwrap_or(5000);

    let mut rng = stream_rng(1, 0);
    let first: Vec<f64> = (0..w).map(|_| rng.sample(StandardNormal)).collect();
    let mut tr = SlidingTransform::new(&first)?;
    println!(
        "w = {w}, J = {}, {} coefficients rewritten per slide (a full transform writes {})",
        tr.levels(),
        updated_coefficient_count(tr.levels()),
        tr.levels() * w
    );

    let clock = Instant::now();
    for _ in 0..slides {
        tr.slide(rng.sample(StandardNormal))?;
    }
    let per_slide = clock.elapsed().as_secs_f64() / slides as f64;

    let batch = ndwt(&tr.window(), &WaveletFilter::haar())?;
    println!("{slides} slides at {:.2} us each", per_slide * 1e6);
    println!("max difference from batch transform: {:.2e}", tr.pyramid().max_abs_diff(&batch));
    Ok(())
}
