//! Runs the desk preset for several seeds and prints raw, baseline,
//! neighbor-trained and fused EERs.
//!
//! cargo run --release --example desk_benchmark -- [noise] [start_lr] [end_lr] [k] [batch]

use nsae::eval::{compute_eer, fuse_scores, FusionConfig, Normalization, FUSION_BASELINE_NSAE_TOPK};
use nsae::net::LrSchedule;
use nsae::neighbors::SelectionMode;
use nsae::pipeline::{run_baseline, run_nsae, ExperimentConfig, Workbench};

fn main() -> nsae::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("number")).collect();
    let mut cfg = ExperimentConfig::desk(42);
    if let Some(&noise) = args.first() {
        cfg.synth.session_noise = noise;
    }
    if args.len() >= 3 {
        cfg.train.schedule = LrSchedule::LogDecay { start: args[1], end: args[2] };
    }
    if let Some(&k) = args.get(3) {
        cfg.selection = SelectionMode::TopK(k as usize);
    }
    if let Some(&b) = args.get(4) {
        cfg.train.batch_size = b as usize;
    }
    let (w1, w2) = FUSION_BASELINE_NSAE_TOPK;
    let fusion = FusionConfig::new(w1, w2, Normalization::MinMax)?;
    println!("seed\traw\tbaseline\tnsae\tfused");
    for seed in [42, 1, 2, 3, 4, 5] {
        let cfg = cfg.clone().with_seed(seed);
        let bench = Workbench::new(&cfg)?;
        let (_, raw) = bench.raw_eval()?;
        match (run_baseline(&bench, &cfg), run_nsae(&bench, &cfg)) {
            (Ok(b), Ok(n)) => {
                let fused = compute_eer(&fuse_scores(&b.scores, &n.scores, &fusion)?, &bench.trials)?;
                println!(
                    "{seed}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                    raw.eer, b.eval.eer, n.eval.eer, fused.eer
                );
            }
            (b, n) => println!("{seed}\t{:.4}\t{:?}\t{:?}", raw.eer, b.err(), n.err()),
        }
    }
    Ok(())
}
