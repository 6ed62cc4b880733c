//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities. The desk-scale model is trained once and shared
//! across criteria.

use std::sync::OnceLock;

use helireg::autodiff::{second_directional, HyperDual, Real};
use helireg::heli::{rk4_step_array, rotation_matrix, rotor_wrench, ControlInputs, HeliParams};
use helireg::net::{MlpParams, Normalization, DEFAULT_LAYER_DIMS};
use helireg::regeq::{exo_rhs, exo_solution, k_of_w, pde_residuals, steady_maps, ExoState, CB_LIMIT};
use helireg::sim::{error_stats, grid_experiment, simulate, write_grid_csv, Gains, SimOptions};
use helireg::train::{
    loss_gradient, loss_gradient_with, residual_landscape, sample_grid, train, LandscapeSpec,
    ResidualNorm, SamplePoint, TrainConfig,
};

/// Published trim condition, recovered by the trained operator at w = 0.
const TRIM: [f64; 3] = [0.044, 0.018, 0.0061];

/// Desk-scale training configuration used by the acceptance suite: full
/// radius range, four frequencies including 1.0, well above the 50-epoch
/// floor. The deep learning-rate floor matters: with absolute-value
/// residual losses the attainable residual tracks the final learning rate.
/// Roughly twenty minutes of single-threaded CPU.
fn desk_config() -> TrainConfig {
    TrainConfig {
        radii: (0..=12).map(|i| 0.5 * i as f64).collect(),
        omega_set: vec![0.25, 0.5, 0.75, 1.0],
        lr_init: 1e-3,
        lr_final: 1e-9,
        epochs: 500,
        lambda: 0.1,
        batch_size: 32,
        seed: 0,
        target_samples: 500,
        optimizer: helireg::train::Optimizer::Adam,
        residual_norm: ResidualNorm::Squared,
    }
}

struct Artifacts {
    hp: HeliParams,
    cfg: TrainConfig,
    params: MlpParams,
    history: Vec<helireg::train::EpochStats>,
}

fn artifacts() -> &'static Artifacts {
    static CELL: OnceLock<Artifacts> = OnceLock::new();
    CELL.get_or_init(|| {
        let hp = HeliParams::default();
        let cfg = desk_config();
        let omega_scale = cfg.omega_set.iter().cloned().fold(0.0_f64, f64::max);
        let w_scale = cfg.radii.iter().cloned().fold(0.0_f64, f64::max);
        let init = MlpParams::init_with(
            &DEFAULT_LAYER_DIMS,
            Normalization {
                w_scale,
                omega_scale,
            },
            cfg.seed,
        );
        let result = train(&cfg, init, &hp).expect("desk-scale training");
        Artifacts {
            hp,
            cfg,
            history: result.history,
            params: result.params,
        }
    })
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[test]
fn criterion_01_autodiff_matches_finite_differences() {
    let hp = HeliParams::default();
    // Reverse mode through the full training loss on the full architecture.
    let params = MlpParams::init(12);
    let batch: Vec<SamplePoint> = sample_grid(&TrainConfig {
        radii: vec![0.0, 2.0, 4.0],
        omega_set: vec![0.75],
        target_samples: 8,
        ..desk_config()
    });
    let flat = params.flatten();
    let dims = params.layer_dims().to_vec();
    let norm = params.normalization();
    let mut worst_rel = 0.0_f64;
    // Check both objective readings: the absolute-residual metric and the
    // squared surrogate the optimizer minimizes by default.
    for residual_norm in [ResidualNorm::Abs, ResidualNorm::Squared] {
        let (_, grad) = loss_gradient_with(&params, &batch, 0.1, residual_norm, &hp).unwrap();
        let eval = |flat: &[f64]| {
            let q = MlpParams::from_flat(&dims, norm, flat);
            let mut total = 0.0;
            for sp in &batch {
                let lb = q.lie_bundle(sp.w.w1, sp.w.w2, sp.omega);
                let r = pde_residuals(&lb, sp.w, sp.omega, &hp, 0.1);
                total += match residual_norm {
                    ResidualNorm::Abs => r.r1.abs() + r.r2.abs() + r.r3.abs() + 0.1 * r.bc,
                    ResidualNorm::Squared => {
                        r.r1 * r.r1 + r.r2 * r.r2 + r.r3 * r.r3 + 0.1 * r.bc * r.bc
                    }
                };
            }
            total / batch.len() as f64
        };
        let mut checked = 0;
        let mut idx = 17usize;
        while checked < 10 {
            // Deterministic pseudo-random walk over parameter indices,
            // keeping components whose gradient is large enough for the
            // h=1e-6 central difference to be numerically meaningful.
            idx = idx
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407)
                % flat.len();
            if grad[idx].abs() < 1e-3 {
                continue;
            }
            let h = 1e-6;
            let mut fp = flat.clone();
            fp[idx] += h;
            let mut fm = flat.clone();
            fm[idx] -= h;
            let fd = (eval(&fp) - eval(&fm)) / (2.0 * h);
            let rel = (grad[idx] - fd).abs() / grad[idx].abs().max(fd.abs());
            assert!(
                rel <= 1e-5,
                "parameter {idx} ({residual_norm:?}): reverse {} vs fd {} (rel {rel:.2e})",
                grad[idx],
                fd
            );
            worst_rel = worst_rel.max(rel);
            checked += 1;
        }
    }

    // Forward second-directional derivatives on a representative composite.
    let f = |x: &[HyperDual]| (x[0] * x[1]).sin() + (x[2] * x[2]).tanh() * x[0].mul_const(0.4);
    let x = [0.7, -0.4, 0.9];
    let v = [0.6, 1.1, -0.5];
    let (_, _, dd) = second_directional(f, &x, &v).unwrap();
    let g = |x: &[f64]| (x[0] * x[1]).sin() + (x[2] * x[2]).tanh() * (x[0] * 0.4);
    let h = 1e-4;
    let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
    let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
    let fd2 = (g(&xp) - 2.0 * g(&x) + g(&xm)) / (h * h);
    let rel2 = (dd - fd2).abs() / dd.abs().max(fd2.abs());
    assert!(rel2 <= 1e-4, "second directional {dd} vs fd {fd2}");

    // And on the network itself: the jet-propagated second Lie derivative
    // against a second-order difference along the exosystem trajectory.
    let p = MlpParams::init(5);
    let (w1, w2, omega) = (2.5, -1.0, 0.75);
    let lb = p.lie_bundle(w1, w2, omega);
    let at = |t: f64| {
        let w = exo_solution(ExoState { w1, w2 }, omega, t);
        p.forward(w.w1, w.w2, omega).to_array()
    };
    let (fp, f0, fm) = (at(h), at(0.0), at(-h));
    let mut worst_rel2 = rel2;
    for k in 0..3 {
        let fd = (fp[k] - 2.0 * f0[k] + fm[k]) / (h * h);
        let rel = (lb.l2[k] - fd).abs() / lb.l2[k].abs().max(fd.abs()).max(1e-6);
        assert!(rel <= 1e-4, "output {k}: l2 {} vs fd {}", lb.l2[k], fd);
        worst_rel2 = worst_rel2.max(rel);
    }

    println!(
        "criterion 01 PASS: 10 reverse-mode components rel<= {worst_rel:.2e} (bound 1e-5); \
         second-directional rel <= {worst_rel2:.2e} (bound 1e-4)"
    );
}

#[test]
fn criterion_02_model_consistency_oracle() {
    use rand::Rng;
    use rand::SeedableRng;
    let hp = HeliParams::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let w = ExoState {
            w1: rng.gen_range(-6.0..6.0),
            w2: rng.gen_range(-6.0..6.0),
        };
        let omega = rng.gen_range(0.05..1.25);
        let pi_phi = rng.gen_range(-0.3..0.3);
        let pi_theta = rng.gen_range(-0.3..0.3);
        let c_b = rng.gen_range(-0.3..0.3);
        let maps = steady_maps(pi_phi, pi_theta, c_b, w, omega, &hp).unwrap();
        let (f, _) = rotor_wrench(
            &ControlInputs {
                t_m: maps.c_tm,
                t_t: maps.c_tt.max(0.0),
                a: maps.c_a,
                b: maps.c_b,
            },
            &hp,
        )
        .unwrap();
        let r = rotation_matrix(&[0.0, pi_theta, pi_phi]);
        let fi = [
            r[0][0] * f[0] + r[0][1] * f[1] + r[0][2] * f[2],
            r[1][0] * f[0] + r[1][1] * f[1] + r[1][2] * f[2],
            r[2][0] * f[0] + r[2][1] * f[1] + r[2][2] * f[2],
        ];
        let k = k_of_w(w, omega, &hp);
        worst = worst
            .max(fi[0].abs())
            .max(fi[1].abs())
            .max((fi[2] + k).abs());
    }
    assert!(worst <= 1e-9, "worst balance residual {worst}");
    println!("criterion 02 PASS: worst force-balance residual {worst:.2e} N over 1000 samples (bound 1e-9)");
}

#[test]
fn criterion_03_trim_recovery() {
    let art = artifacts();
    assert!(art.cfg.epochs >= 50);
    assert!((art.cfg.radii.iter().cloned().fold(0.0_f64, f64::max) - 6.0).abs() < 1e-12);
    assert!(art.cfg.omega_set.contains(&1.0));
    let mut worst = 0.0_f64;
    for &omega in &art.cfg.omega_set {
        let out = art.params.forward(0.0, 0.0, omega).to_array();
        for k in 0..3 {
            worst = worst.max((out[k] - TRIM[k]).abs());
        }
    }
    assert!(worst <= 0.02, "worst trim deviation {worst}");
    println!(
        "criterion 03 PASS: trim deviation {worst:.2e} rad (bound 0.02), final training loss {:.3e}",
        art.history.last().unwrap().total
    );
}

#[test]
fn criterion_04_residual_landscape() {
    let art = artifacts();
    let spec = LandscapeSpec {
        w1_min: -6.0,
        w1_max: 6.0,
        n_w1: 61,
        w2_min: -6.0,
        w2_max: 6.0,
        n_w2: 61,
        omega: 1.0,
        lambda: art.cfg.lambda,
    };
    let rows = residual_landscape(&art.params, &spec, &art.hp);
    let mut disk: Vec<f64> = rows
        .iter()
        .filter(|r| (r.w1 * r.w1 + r.w2 * r.w2).sqrt() <= 6.0)
        .map(|r| r.loss)
        .collect();
    let n_disk = disk.len();
    let med = median(&mut disk);
    assert!(med <= 1e-2, "median disk residual {med}");

    // Boundary hinge identically zero on the disk: |c_b| <= CB_LIMIT.
    let mut worst_cb = 0.0_f64;
    for r in &rows {
        if (r.w1 * r.w1 + r.w2 * r.w2).sqrt() <= 6.0 {
            let cb = art.params.forward(r.w1, r.w2, spec.omega).c_b;
            worst_cb = worst_cb.max(cb.abs());
        }
    }
    assert!(worst_cb <= CB_LIMIT, "boundary violated: |c_b| up to {worst_cb}");

    // Training points cannot exceed the disk-wide maximum (subset bound).
    let max_disk = disk.iter().cloned().fold(0.0_f64, f64::max);
    let train_max = sample_grid(&art.cfg)
        .iter()
        .filter(|sp| sp.omega == spec.omega)
        .map(|sp| pde_residuals(
            &art.params.lie_bundle(sp.w.w1, sp.w.w2, sp.omega),
            sp.w,
            sp.omega,
            &art.hp,
            art.cfg.lambda,
        )
        .total)
        .fold(0.0_f64, f64::max);

    println!(
        "criterion 04 PASS: median residual {med:.3e} over {n_disk} disk points (bound 1e-2); \
         max |c_b| {worst_cb:.4} (bound {CB_LIMIT}); training max {train_max:.3e} <= disk max {max_disk:.3e}: {}",
        train_max <= max_disk
    );
}

#[test]
fn criterion_05_tracking_in_distribution() {
    let art = artifacts();
    let opts = SimOptions::default();
    let r = simulate(
        ExoState { w1: 5.0, w2: 0.0 },
        1.0,
        &opts,
        &art.params,
        &Gains::default(),
        &art.hp,
    )
    .unwrap();
    assert!(!r.diverged);
    assert!(r.mean_abs_ez <= 0.1, "mean |e_z| {}", r.mean_abs_ez);
    assert!(r.max_abs_ez <= 0.25, "max |e_z| {}", r.max_abs_ez);
    println!(
        "criterion 05 PASS: (5, 1) mean |e_z| {:.3e} m (bound 0.1), max {:.3e} m (bound 0.25), no divergence",
        r.mean_abs_ez, r.max_abs_ez
    );
}

#[test]
fn criterion_06_tracking_out_of_distribution() {
    let art = artifacts();
    // The configuration (2.25, 0.75) is not a training sample: 2.25 is off
    // every sampling circle.
    assert!(art.cfg.radii.iter().all(|&r| (r - 2.25).abs() > 1e-9));
    let opts = SimOptions::default();
    let r = simulate(
        ExoState { w1: 2.25, w2: 0.0 },
        0.75,
        &opts,
        &art.params,
        &Gains::default(),
        &art.hp,
    )
    .unwrap();
    assert!(!r.diverged);
    assert!(r.mean_abs_ez <= 0.1, "mean |e_z| {}", r.mean_abs_ez);
    assert!(r.max_abs_ez <= 0.25, "max |e_z| {}", r.max_abs_ez);
    println!(
        "criterion 06 PASS: (2.25, 0.75) mean |e_z| {:.3e} m (bound 0.1), max {:.3e} m (bound 0.25), no divergence",
        r.mean_abs_ez, r.max_abs_ez
    );
}

fn acceptance_grid() -> &'static Vec<helireg::sim::GridCell> {
    static CELL: OnceLock<Vec<helireg::sim::GridCell>> = OnceLock::new();
    CELL.get_or_init(|| {
        let art = artifacts();
        let w1s: Vec<f64> = (0..=5).map(|i| i as f64).collect();
        let omegas = vec![0.25, 0.5, 0.75, 1.0];
        grid_experiment(
            &w1s,
            &omegas,
            &SimOptions::default(),
            &art.params,
            &Gains::default(),
            &art.hp,
            &art.cfg.radii,
            &art.cfg.omega_set,
            1,
        )
    })
}

#[test]
fn criterion_07_grid_statistics() {
    let cells = acceptance_grid();
    let stats = error_stats(cells).unwrap();
    assert!(stats.median <= 5e-2, "median {}", stats.median);
    assert!(
        stats.median < stats.mean,
        "median {} not below mean {}",
        stats.median,
        stats.mean
    );
    println!(
        "criterion 07 PASS: grid median {:.3e} m (bound 5e-2), mean {:.3e} m, {} of {} cells diverged",
        stats.median, stats.mean, stats.n_diverged, stats.n_total
    );
}

#[test]
fn criterion_08_difficulty_monotonicity() {
    let cells = acceptance_grid();
    let quadrant_mean = |lo_w1: f64, hi_w1: f64, lo_om: f64, hi_om: f64| -> f64 {
        let vals: Vec<f64> = cells
            .iter()
            .filter(|c| {
                !c.diverged
                    && c.w1_0 >= lo_w1
                    && c.w1_0 <= hi_w1
                    && c.omega >= lo_om
                    && c.omega <= hi_om
            })
            .map(|c| c.mean_abs_ez)
            .collect();
        assert!(!vals.is_empty());
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    let bottom_left = quadrant_mean(0.0, 2.0, 0.25, 0.5);
    let top_right = quadrant_mean(3.0, 5.0, 0.75, 1.0);
    assert!(
        top_right >= bottom_left,
        "top-right {top_right} < bottom-left {bottom_left}"
    );
    let cell = |w1: f64, om: f64| {
        cells
            .iter()
            .find(|c| c.w1_0 == w1 && c.omega == om)
            .unwrap()
    };
    let hardest = cell(5.0, 1.0);
    let easiest = cell(0.0, 0.25);
    if !hardest.diverged && !easiest.diverged {
        assert!(hardest.mean_abs_ez >= easiest.mean_abs_ez);
    }
    println!(
        "criterion 08 PASS: top-right quadrant mean {top_right:.3e} m >= bottom-left {bottom_left:.3e} m"
    );
}

#[test]
fn criterion_09_integrator_validation() {
    let omega = 1.0;
    let w0 = ExoState { w1: 1.0, w2: 0.0 };
    let rhs = |_t: f64, w: &[f64; 2]| exo_rhs(ExoState { w1: w[0], w2: w[1] }, omega);
    let mut w = [w0.w1, w0.w2];
    let dt = 0.01;
    let mut t = 0.0;
    let mut max_err = 0.0_f64;
    for _ in 0..3000 {
        w = rk4_step_array(&w, t, dt, &rhs);
        t += dt;
        let exact = exo_solution(w0, omega, t);
        max_err = max_err
            .max((w[0] - exact.w1).abs())
            .max((w[1] - exact.w2).abs());
    }
    assert!(max_err <= 1e-6, "30 s max error {max_err}");

    let err_at = |dt: f64| {
        let mut w = [w0.w1, w0.w2];
        let steps = (10.0 / dt).round() as usize;
        let mut t = 0.0;
        for _ in 0..steps {
            w = rk4_step_array(&w, t, dt, &rhs);
            t += dt;
        }
        let exact = exo_solution(w0, omega, t);
        ((w[0] - exact.w1).powi(2) + (w[1] - exact.w2).powi(2)).sqrt()
    };
    let order = (err_at(0.1) / err_at(0.05)).log2();
    assert!(order >= 3.8, "observed order {order}");
    println!(
        "criterion 09 PASS: 30 s max error {max_err:.2e} (bound 1e-6), observed order {order:.2} (bound 3.8)"
    );
}

#[test]
fn criterion_10_determinism() {
    let hp = HeliParams::default();
    let cfg = TrainConfig {
        radii: vec![0.0, 1.0, 2.0],
        omega_set: vec![1.0],
        epochs: 3,
        batch_size: 8,
        target_samples: 20,
        ..desk_config()
    };
    let dir = std::env::temp_dir().join(format!("helireg-acc10-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    let run_once = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let init = MlpParams::init_with(&DEFAULT_LAYER_DIMS, Normalization::default(), cfg.seed);
        let result = train(&cfg, init, &hp).unwrap();
        let model_path = dir.join(format!("model-{tag}.json"));
        result.params.save(&model_path).unwrap();
        let cells = grid_experiment(
            &[0.0, 1.0],
            &[0.5, 1.0],
            &SimOptions {
                horizon: 2.0,
                ..Default::default()
            },
            &result.params,
            &Gains::default(),
            &hp,
            &cfg.radii,
            &cfg.omega_set,
            1,
        );
        let grid_path = dir.join(format!("grid-{tag}.csv"));
        write_grid_csv(&grid_path, &cells).unwrap();
        (
            std::fs::read(&model_path).unwrap(),
            std::fs::read(&grid_path).unwrap(),
        )
    };

    let (model_a, grid_a) = run_once("a");
    let (model_b, grid_b) = run_once("b");
    assert_eq!(model_a, model_b, "model files differ between identical runs");
    assert_eq!(grid_a, grid_b, "grid CSVs differ between identical runs");
    std::fs::remove_dir_all(&dir).ok();
    println!(
        "criterion 10 PASS: byte-identical model files ({} bytes) and grid CSVs ({} bytes)",
        model_a.len(),
        grid_a.len()
    );
}

/// Residuals of the trained operator stay small along whole exosystem
/// orbits, not only at the sampled phases: the learned zero-error manifold
/// is (approximately) invariant under the exosystem flow.
#[test]
fn trained_residuals_stay_small_along_orbits() {
    let art = artifacts();
    for &(r, omega) in &[(1.0, 1.0), (3.0, 0.5), (5.0, 1.0)] {
        let w0 = ExoState { w1: r, w2: 0.0 };
        let period = 2.0 * std::f64::consts::PI / omega;
        let mut max_res = 0.0_f64;
        for i in 0..200 {
            let w = exo_solution(w0, omega, period * i as f64 / 200.0);
            let lb = art.params.lie_bundle(w.w1, w.w2, omega);
            let res = pde_residuals(&lb, w, omega, &art.hp, art.cfg.lambda);
            max_res = max_res.max(res.total);
        }
        assert!(
            max_res <= 0.15,
            "residual reaches {max_res} along orbit (r={r}, omega={omega})"
        );
    }
    println!("trained-orbit residual check PASS");
}

/// Epoch-mean loss settles into a non-increasing trend after the first
/// quartile of training (mini-batch noise allowed at the 25% level).
#[test]
fn training_loss_trend_is_non_increasing_after_transient() {
    let art = artifacts();
    let history = &art.history;
    let n = history.len();
    let q = n / 4;
    assert!(history.last().unwrap().total <= history[q].total);
    let quarter_mean = |lo: usize, hi: usize| -> f64 {
        history[lo..hi].iter().map(|h| h.total).sum::<f64>() / (hi - lo) as f64
    };
    let second = quarter_mean(q, n / 2);
    let last = quarter_mean(3 * n / 4, n);
    assert!(last <= second, "late-quarter mean {last} above second-quarter {second}");
    for win in history[q..].windows(2) {
        assert!(
            win[1].total <= win[0].total * 1.25,
            "epoch {} jumped from {} to {}",
            win[1].epoch,
            win[0].total,
            win[1].total
        );
    }
    println!("loss-trend check PASS");
}

/// Hover case: with no exogenous motion the tracking error stays at the
/// millimeter level for the whole horizon.
#[test]
fn trained_hover_error_stays_below_1mm() {
    let art = artifacts();
    let r = simulate(
        ExoState::default(),
        0.5,
        &SimOptions::default(),
        &art.params,
        &Gains::default(),
        &art.hp,
    )
    .unwrap();
    assert!(!r.diverged);
    assert!(r.max_abs_ez <= 1e-3, "hover max |e_z| {}", r.max_abs_ez);
    assert!(r.mean_abs_ez <= 1e-3);

    // The zero-amplitude grid row is uniformly small as well.
    for c in acceptance_grid().iter().filter(|c| c.w1_0 == 0.0) {
        assert!(!c.diverged && c.mean_abs_ez <= 1e-3, "cell ({}, {})", c.w1_0, c.omega);
    }
    println!("hover check PASS: max |e_z| {:.2e} m", r.max_abs_ez);
}

/// The tracking error stays about two orders of magnitude below the
/// reference amplitude (5% bound at desk scale).
#[test]
fn trained_tracking_error_well_below_reference() {
    let art = artifacts();
    for &(w1, omega) in &[(1.0, 0.5), (3.0, 0.75), (4.0, 1.0)] {
        let r = simulate(
            ExoState { w1, w2: 0.0 },
            omega,
            &SimOptions::default(),
            &art.params,
            &Gains::default(),
            &art.hp,
        )
        .unwrap();
        assert!(!r.diverged);
        assert!(
            r.max_abs_ez <= 0.05 * w1,
            "({w1}, {omega}): max |e_z| {} above 5% of amplitude",
            r.max_abs_ez
        );
    }
    println!("amplitude-relative tracking check PASS");
}
