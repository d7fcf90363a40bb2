//! File-based workflow: write a training set and a test stream as CSV,
//! read them back, train, save the model as JSON, reload it and write the
//! probability series.
//!
//! ```text
//! cargo run --release --example csv_pipeline -- /tmp/wavecoh-demo
//! ```

use std::path::PathBuf;

use wavecoh::classifier::{classify_online, train, ClassModel, ClassifierConfig};
use wavecoh::data::{read_labelled, read_series, write_labelled_file};
use wavecoh::simgen::{generate, make_training_set, ClassProcess, Scenario};

fn main() -> wavecoh::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "wavecoh-demo".into()));
    std::fs::create_dir_all(&dir)?;
    let process = ClassProcess::var3();

    let mut train_paths = Vec::new();
    for (i, signal) in make_training_set(&process, 256, 5)?.iter().enumerate() {
        let path = dir.join(format!("train_{:02}.csv", i + 1));
        write_labelled_file(signal, &path)?;
        train_paths.push(path);
    }
    let test_path = dir.join("test.csv");
    write_labelled_file(&generate(&process, &Scenario::preset(1)?, 5)?, &test_path)?;

    let training = train_paths.iter().map(|p| read_labelled(p, Some(3))).collect::<Result<Vec<_>, _>>()?;
    let model_path = dir.join("model.json");
    train(&training, &ClassifierConfig::new(256))?.write_json(&model_path)?;

    let model = ClassModel::read_json(&model_path)?;
    let stream = read_series(&test_path)?;
    let probs = classify_online(&stream, &model)?;
    let out = dir.join("probabilities.csv");
    probs.write_csv_file(&out)?;
    println!("wrote {} rows to {}", probs.len(), out.display());
    Ok(())
}
