//! Online classification time per point for growing stream lengths.
//!
//! ```text
//! cargo run --release --example runtime_scaling -- 5
//! ```

use wavecoh::classifier::ClassifierConfig;
use wavecoh::evalkit::bench_scaling;

fn main() -> wavecoh::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let table = bench_scaling(&[1024, 2048, 4096, 8192], reps, &ClassifierConfig::new(256), 1)?;
    print!("{}", table.table());
    if let (Some(a), Some(b)) = (table.per_point(1024), table.per_point(8192)) {
        println!("per-point cost ratio 8192 / 1024: {:.2}", b / a);
    }
    Ok(())
}
