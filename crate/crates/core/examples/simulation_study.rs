//! Replicated train-and-classify study on a simulated switching stream.
//!
//! ```text
//! cargo run --release --example simulation_study -- mvn3 3 25
//! cargo run --release --example simulation_study -- var3 1 25 --proportion 0.3 --bandwidth 48 --raw
//! ```
//!
//! Options: `--proportion P`, `--bandwidth M`, `--scale-cap J`, `--raw`
//! (skip the inner-product correction), `--truncated` (truncated
//! smoothing at window edges), `--no-projection`.

use wavecoh::classifier::ClassifierConfig;
use wavecoh::evalkit::run_study;
use wavecoh::simgen::{ClassProcess, Scenario};
use wavecoh::spectra::EdgeRule;

fn main() -> wavecoh::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let positional: Vec<&str> = args.iter().map(String::as_str).take_while(|a| !a.starts_with("--")).collect();
    let preset = positional.first().copied().unwrap_or("mvn3");
    let scenario_id: u8 = positional.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let reps: usize = positional.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let option =
        |name: &str| args.iter().position(|a| a == name).and_then(|i| args.get(i + 1)).and_then(|v| v.parse().ok());
    let flag = |name: &str| args.iter().any(|a| a == name);

    let mut cfg = ClassifierConfig::new(256);
    if let Some(p) = option("--proportion") {
        cfg = cfg.with_proportion(p);
    }
    if let Some(m) = option("--bandwidth") {
        cfg = cfg.with_bandwidth(m as usize);
    }
    if let Some(cap) = option("--scale-cap") {
        cfg = cfg.with_scale_cap(cap as usize);
    }
    let mut smoother = cfg.smoother();
    smoother.bias_correction = !flag("--raw");
    smoother.positive_definite = !flag("--no-projection");
    if flag("--truncated") {
        smoother.edge = EdgeRule::Truncated;
    }
    cfg = cfg.with_smoother(smoother);

    let mut report = run_study(&ClassProcess::preset(preset)?, &Scenario::preset(scenario_id)?, reps, &cfg, 2024);
    report.preset = Some(preset.to_string());
    report.scenario = Some(scenario_id);
    print!("{}", report.table());
    Ok(())
}
