//! Trains on the standard ten-signal training set and classifies one
//! switching stream online.
//!
//! ```text
//! cargo run --release --example train_and_classify -- vma3 2
//! ```

use wavecoh::classifier::{
    classify_online, count_class_changes, train_with_summary, ClassifierConfig, DEFAULT_MIN_DURATION,
};
use wavecoh::evalkit::{true_positive_rate, v_measure};
use wavecoh::simgen::{generate, make_training_set, ClassProcess, Scenario};

fn main() -> wavecoh::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let preset = args.first().map_or("mvn3", String::as_str);
    let scenario_id = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let seed = 11;

    let process = ClassProcess::preset(preset)?;
    let cfg = ClassifierConfig::new(256);
    let (model, summary) = train_with_summary(&make_training_set(&process, 256, seed)?, &cfg)?;
    println!("selected indices (scale, p, q):");
    for e in model.index_set().entries() {
        println!("  {} {} {}", e.scale, e.p + 1, e.q + 1);
    }
    println!("training samples per class: {:?}", summary.counts);
    for w in &summary.warnings {
        println!("warning: {w}");
    }

    let scenario = Scenario::preset(scenario_id)?;
    let test = generate(&process, &scenario, seed)?;
    let probs = classify_online(test.series(), &model)?;
    println!(
        "\n{preset}, scenario {scenario_id}: {} true changes, {} detected, V = {:.3}, TPR = {:.3}",
        scenario.n_changes(),
        count_class_changes(probs.labels(), DEFAULT_MIN_DURATION),
        v_measure(test.labels(), probs.labels())?,
        true_positive_rate(test.labels(), probs.labels())?
    );

    // one character per 16 points: true class above, predicted below
    let strip = |labels: &[usize]| labels.iter().step_by(16).map(|l| char::from(b'0' + *l as u8)).collect::<String>();
    println!("truth     {}", strip(test.labels()));
    println!("predicted {}", strip(probs.labels()));
    Ok(())
}
