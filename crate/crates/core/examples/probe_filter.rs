use signet_core::filter_cnn::{train_filter, LabeledRegionSet, TrainOptions};
use signet_core::synth;
use std::time::Instant;

fn main() {
    let images = synth::filter_training_set(42, 5, 5);
    let data = LabeledRegionSet { train: images, val: vec![] };
    let opts = TrainOptions {
        epochs: 200,
        seed: 7,
        augment: false,
        stop_at_train_accuracy: Some(0.95),
        ..TrainOptions::default()
    };
    let t = Instant::now();
    let (_, history) = train_filter(&data, &opts).unwrap();
    let last = history.last().unwrap();
    println!(
        "epochs run: {} ({}s), loss {:.4} -> {:.4}, acc {:.2} -> {:.2}",
        last.epoch,
        t.elapsed().as_secs_f64(),
        history[0].loss,
        last.loss,
        history[0].train_accuracy,
        last.train_accuracy
    );
    for h in history.iter().take(8) {
        println!("  epoch {:3}: loss {:.4} acc {:.2}", h.epoch, h.loss, h.train_accuracy);
    }
}
