use signet_core::clean_gan::{train_cleaner, CleanTrainingSet, CleanerDescriptor, CleanerTrainOptions};
use signet_core::synth;
use std::time::Instant;

fn main() {
    let (raw, clean, paired) = synth::cleaner_training_set(42, 8, 6);
    let data = CleanTrainingSet { unpaired_x: raw, unpaired_y: clean, paired };
    let opts = CleanerTrainOptions {
        epochs: 20,
        seed: 7,
        descriptor: CleanerDescriptor::toy(),
        ..CleanerTrainOptions::default()
    };
    let t = Instant::now();
    let (model, history) = train_cleaner(&data, &opts).unwrap();
    println!("trained {} epochs in {:.1}s", history.len(), t.elapsed().as_secs_f64());
    for h in &history {
        println!(
            "  epoch {:2}: cycle {:.1} adv {:.3} d {:.3} pair {:.4}",
            h.epoch, h.cycle_metric, h.generator_adv_loss, h.discriminator_loss, h.paired_l1
        );
    }
    // behavioural probe: stamped signature -> cleaned closer to original?
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let original = synth::signature_canvas(123456, 0);
    let mut stamped = original.clone();
    synth::rect_stamp(&mut stamped, 40, 70, 180, 120, 0.5);
    let _ = &mut rng;
    let cleaned = signet_core::clean_gan::clean_pixels(&model, &stamped).unwrap();
    let l1 = |a: &ndarray::Array2<f32>, b: &ndarray::Array2<f32>| -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (f64::from(*x) - f64::from(*y)).abs()).sum()
    };
    println!("L1(stamped, original) = {:.1}", l1(&stamped, &original));
    println!("L1(cleaned, original) = {:.1}", l1(&cleaned, &original));
    let white = ndarray::Array2::from_elem((256, 256), 1.0f32);
    let cw = signet_core::clean_gan::clean_pixels(&model, &white).unwrap();
    println!("mean(clean(white)) = {:.3}", cw.iter().map(|v| *v as f64).sum::<f64>() / cw.len() as f64);
}
