//! Long fixed-rate run of one width and seed of a config (default: the first).
//!
//! `cargo run --release --example late_time -- configs/instability.json [width_index] [seed]`

use wideconv::experiments::{late_time, load_dataset};
use wideconv::ExperimentConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cfg = ExperimentConfig::load(args[1].as_ref()).expect("config");
    let data = load_dataset(cfg.dataset.as_ref().expect("dataset")).expect("data");
    let pick = |i: usize| args.get(i).map_or(0, |s| s.parse().expect("index"));
    let r = late_time(&cfg, &data, pick(2), pick(3)).expect("run");
    println!(
        "lr {} reached {:?} instability {:?} after convergence {:?} diverged {}",
        r.lr, r.reached, r.instability, r.late_instability, r.diverged
    );
    for (s, l) in r.losses.iter().step_by(10) {
        let d = r.drifts.iter().find(|d| d.0 == *s).map_or(f64::NAN, |d| d.1);
        println!("{s:>6} loss {l:.4e} drift {d:.4e}");
    }
}
