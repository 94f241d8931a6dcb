use std::io::Write;

use isofisher::meanfield::ActivationSpec;
use isofisher::rmtsim::OrthogonalNet;
use isofisher::trainlab::{
    dataset_from_idx, decade_grid, load_idx, loss_gradient, lr_depth_sweep, online_gd_step, synth_dataset,
    synth_split, train_run, IdxTensor, TrainConfig, DEFAULT_DIVERGENCE_FACTOR, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
    LOSS_CLAMP,
};
use nalgebra::DVector;
use proptest::prelude::*;

const DI: ActivationSpec = ActivationSpec::HardTanh { s: 0.353_553_390_593_273_8, g: 1.0013 };

fn config(depth: usize, width: usize, eta: f64) -> TrainConfig {
    TrainConfig {
        depth,
        width,
        activation: DI,
        sigma: 1.0,
        eta,
        epochs: 1,
        seed: 11,
        divergence_factor: DEFAULT_DIVERGENCE_FACTOR,
    }
}

fn loss_of(net: &OrthogonalNet, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (net.output(x).unwrap() - y).norm_squared() / (2.0 * net.width() as f64)
}

/// Relative error of backprop against central differences, skipping
/// coordinates whose perturbation changes the activation pattern.
#[allow(clippy::needless_range_loop)]
fn gradient_error(net: &OrthogonalNet, x: &DVector<f64>, y: &DVector<f64>) -> (f64, usize) {
    let h = 1e-5;
    let (_, grads) = loss_gradient(net, x, y).unwrap();
    let pattern = |n: &OrthogonalNet| n.forward_trace(x).unwrap().d;
    let base = pattern(net);
    let (mut diff, mut norm, mut skipped) = (0.0, 0.0, 0);
    for l in 0..net.depth() {
        for idx in 0..net.weights()[l].len() {
            let mut plus = net.clone();
            plus.weights_mut()[l][idx] += h;
            let mut minus = net.clone();
            minus.weights_mut()[l][idx] -= h;
            if pattern(&plus) != base || pattern(&minus) != base {
                skipped += 1;
                continue;
            }
            let numeric = (loss_of(&plus, x, y) - loss_of(&minus, x, y)) / (2.0 * h);
            diff += (numeric - grads[l][idx]).powi(2);
            norm += grads[l][idx].powi(2);
        }
    }
    ((diff / norm).sqrt(), skipped)
}

#[test]
fn gradient_matches_central_differences() {
    let data = synth_dataset(8, 4, 3, 5).unwrap();
    for spec in [
        DI,
        ActivationSpec::HardTanh { s: 1.0, g: 1.0 },
        ActivationSpec::ShiftedRelu { a: 1.3, b: 0.2 },
        ActivationSpec::Linear { g: 0.9 },
    ] {
        for seed in 0..3 {
            let net = OrthogonalNet::constant(8, 3, 1.2, spec, seed).unwrap();
            for i in 0..data.len() {
                let (err, skipped) = gradient_error(&net, &data.inputs[i], &data.target(i));
                assert!(err < 1e-5, "{spec:?} seed {seed}: {err:e}");
                assert!(skipped < 3 * 64);
            }
        }
    }
}

#[test]
fn loss_identity() {
    let data = synth_dataset(16, 6, 4, 2).unwrap();
    let net = OrthogonalNet::constant(16, 4, 1.0, DI, 8).unwrap();
    for i in 0..data.len() {
        let (loss, _) = loss_gradient(&net, &data.inputs[i], &data.target(i)).unwrap();
        let f = net.forward_trace(&data.inputs[i]).unwrap().output().clone();
        let recomputed = (f - data.target(i)).norm_squared() / 32.0;
        assert!((loss - recomputed).abs() < 1e-12);
    }
}

#[test]
fn training_is_deterministic() {
    let (train, test) = synth_split(16, 40, 20, 4, 3).unwrap();
    let cfg = config(3, 16, 0.05);
    let a = train_run(&cfg, &train, &test).unwrap();
    let b = train_run(&cfg, &train, &test).unwrap();
    assert_eq!(a, b);

    // parallel sweep cells equal serial runs with the recorded seeds
    let sweep = lr_depth_sweep(&[2, 3], &[0.01, 0.1], &cfg, &train, &test).unwrap();
    for cell in &sweep.cells {
        let run = train_run(&TrainConfig { depth: cell.depth, eta: cell.eta, seed: cell.seed, ..cfg.clone() }, &train, &test).unwrap();
        assert!((run.train_loss - cell.train_loss).abs() < 1e-12);
        assert!((run.test_loss - cell.test_loss).abs() < 1e-12);
        assert_eq!(run.diverged, cell.diverged);
    }
}

#[test]
fn tiny_rate_is_stable() {
    let (train, test) = synth_split(16, 50, 10, 4, 4).unwrap();
    let r = train_run(&config(4, 16, 1e-6), &train, &test).unwrap();
    assert!(!r.diverged);
    assert_eq!(r.step_losses.len(), 50);
    assert!(r.step_losses.iter().all(|l| l.is_finite() && *l < 1.0));
}

#[test]
fn single_linear_layer_contracts_by_one_minus_eta_squared() {
    // L = 1, unit gain: f = W x and the update moves f by -η ‖x‖²/M (f - y) = -η (f - y)
    let data = synth_dataset(12, 3, 3, 9).unwrap();
    for eta in [0.1, 0.5, 1.5] {
        let mut net = OrthogonalNet::constant(12, 1, 1.0, ActivationSpec::Linear { g: 1.0 }, 1).unwrap();
        let (x, y) = (&data.inputs[0], data.target(0));
        let before = online_gd_step(&mut net, x, &y, eta).unwrap().loss;
        let after = loss_of(&net, x, &y);
        assert!((after - (1.0 - eta).powi(2) * before).abs() < 1e-12, "eta {eta}");
    }
}

#[test]
fn divergence_at_large_rate_and_completion_at_small() {
    let (train, test) = synth_split(64, 500, 100, 10, 7).unwrap();
    let ok = train_run(&config(8, 64, 1.0 / 8.0), &train, &test).unwrap();
    assert!(!ok.diverged);
    assert_eq!(ok.step_losses.len(), 500);
    assert!(ok.train_acc > 0.5);

    let bad = train_run(&config(8, 64, 10.0), &train, &test).unwrap();
    assert!(bad.diverged);
    assert!(bad.diverged_at.unwrap() < 500);
    assert_eq!(bad.train_loss, LOSS_CLAMP);
    assert_eq!(bad.test_loss, LOSS_CLAMP);
}

#[test]
fn divergence_is_monotone_in_rate() {
    let (train, test) = synth_split(32, 200, 0, 4, 12).unwrap();
    let etas = decade_grid(0.1, 30.0, 4).unwrap();
    let sweep = lr_depth_sweep(&[2, 4], &etas, &config(2, 32, 0.1), &train, &test).unwrap();
    for b in &sweep.boundary {
        assert!(b.monotone, "depth {}", b.depth);
        assert!(b.eta_star.is_some(), "depth {}: no bracket on this grid", b.depth);
    }
}

#[test]
fn idx_fixtures_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let images = IdxTensor { dims: vec![4, 2, 2], data: (0..16).map(|v| v * 10).collect() };
    let labels = IdxTensor { dims: vec![4], data: vec![2, 0, 1, 2] };
    let img_path = dir.path().join("images.idx");
    let lab_path = dir.path().join("labels.idx");
    std::fs::write(&img_path, images.to_bytes()).unwrap();
    std::fs::write(&lab_path, labels.to_bytes()).unwrap();

    let img = load_idx(&img_path, Some(IDX_IMAGES_MAGIC)).unwrap();
    assert_eq!(img.dims, vec![4, 2, 2]);
    let lab = load_idx(&lab_path, Some(IDX_LABELS_MAGIC)).unwrap();
    assert_eq!(lab.data, vec![2, 0, 1, 2]);
    assert!(load_idx(&lab_path, Some(IDX_IMAGES_MAGIC)).is_err());

    let d = dataset_from_idx(&img, &lab, 4, 0).unwrap();
    assert_eq!((d.len(), d.width(), d.classes), (4, 4, 3));

    let truncated = dir.path().join("short.idx");
    let mut f = std::fs::File::create(&truncated).unwrap();
    let bytes = images.to_bytes();
    f.write_all(&bytes[..bytes.len() - 3]).unwrap();
    drop(f);
    let err = load_idx(&truncated, None).unwrap_err().to_string();
    assert!(err.contains("byte 16") && err.contains("expected 16") && err.contains("found 13"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gradient_check_random_nets(seed in 0u64..500, s in 0.3f64..1.5, g in 0.7f64..1.5, depth in 1usize..4) {
        let data = synth_dataset(6, 2, 2, seed).unwrap();
        let net = OrthogonalNet::constant(6, depth, 1.0, ActivationSpec::HardTanh { s, g }, seed).unwrap();
        let (err, _) = gradient_error(&net, &data.inputs[0], &data.target(0));
        prop_assert!(err < 1e-5, "{err:e}");
    }
}
