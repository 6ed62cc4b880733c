use helireg::heli::HeliParams;
use helireg::net::MlpParams;
use helireg::train::{train, Optimizer, ResidualNorm, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let hp = HeliParams::default();
    let init = MlpParams::load(std::path::Path::new(&args[1])).unwrap();
    let cfg = TrainConfig {
        radii: (0..=12).map(|i| 0.5 * i as f64).collect(),
        omega_set: vec![0.25, 0.5, 0.75, 1.0],
        lr_init: args[3].parse().unwrap(),
        lr_final: args[4].parse().unwrap(),
        epochs: args[5].parse().unwrap(),
        lambda: 0.1,
        batch_size: args[6].parse().unwrap(),
        seed: 1,
        target_samples: 500,
        optimizer: Optimizer::Adam,
        residual_norm: ResidualNorm::Squared,
    };
    let result = train(&cfg, init, &hp).unwrap();
    for h in result.history.iter().step_by((cfg.epochs / 10).max(1)) {
        println!("epoch {}: lr {:.2e} abs-total {:.6}", h.epoch, h.lr, h.total);
    }
    println!("final: {:.6}", result.history.last().unwrap().total);
    result.params.save(std::path::Path::new(&args[2])).unwrap();
}
