//! Largest eigenvalue of the initial train kernel per width of a config.

use wideconv::experiments::{load_dataset, network_seed};
use wideconv::ExperimentConfig;
use wideconv_core::nn::{build_network, ntk_gram};
use wideconv_core::train::lambda_max;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cfg = ExperimentConfig::load(args[1].as_ref()).expect("config");
    let data = load_dataset(cfg.dataset.as_ref().expect("dataset")).expect("data");
    let spec = cfg.architecture.clone().expect("architecture");
    let widths: Vec<usize> = args[2..].iter().map(|s| s.parse().expect("width")).collect();
    for n in if widths.is_empty() { cfg.widths.clone() } else { widths } {
        let st = build_network(&spec.with_width(n), network_seed(cfg.root_seed, n, 0)).expect("network");
        let k = ntk_gram(&st, data.train.inputs()).expect("kernel");
        let l = lambda_max(&k).expect("lambda");
        println!("n {n:>5} lambda_max {l:.4e} trace {:.4e} stability_lr {:.4e}", k.trace(), 0.25 / l);
    }
}
