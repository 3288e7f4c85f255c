mod common;

use common::{check_probe, layer_cases, random_matrix, rng, LstmProbe};
use lhiqn::nn::{InitPolicy, Lstm};
use ndarray::{s, Array2};

fn assert_layer(kind: &str, seed: u64) {
    let report = layer_cases(kind, 100, seed);
    assert!(report.checked > 100, "{kind}: only {} coordinates checked", report.checked);
    assert!(
        report.kinks * 20 < report.checked,
        "{kind}: too many kink-straddling coordinates ({})",
        report.kinks
    );
    assert!(report.max_rel <= 1e-4, "{kind}: max relative error {:.3e}", report.max_rel);
}

#[test]
fn dense_gradients() {
    assert_layer("dense", 1);
}

#[test]
fn conv_gradients() {
    assert_layer("conv", 2);
}

#[test]
fn lstm_gradients() {
    assert_layer("lstm", 3);
}

#[test]
fn embedding_gradients() {
    assert_layer("embedding", 4);
}

#[test]
fn merge_gradients() {
    assert_layer("merge", 5);
}

#[test]
fn whole_network_gradients() {
    assert_layer("network", 6);
}

#[test]
fn lstm_gradient_flows_across_steps() {
    let mut r = rng(11);
    let lstm = Lstm::<f64>::new(3, 4, InitPolicy::SmallUniform { scale: 0.8 }, &mut r);
    let mut probe = LstmProbe { lstm, steps: 2 };
    let x = random_matrix(2, 3, 1.0, &mut r);
    // Loss reads only the second step, so any first-step input gradient
    // must come through the recurrent connection.
    let mut grad = Array2::zeros((2, 4));
    grad.slice_mut(s![1, ..]).fill(1.0);
    probe.lstm.forward_sequence_train(&x, 2).unwrap();
    let gx = probe.lstm.backward_sequence(&grad).unwrap();
    assert!(gx.row(0).iter().any(|g| g.abs() > 1e-6));

    let h = 1e-6;
    for j in 0..3 {
        let mut xp = x.clone();
        xp[[0, j]] += h;
        let mut xm = x.clone();
        xm[[0, j]] -= h;
        let fp = probe.lstm.forward_sequence(&xp, 2).unwrap().row(1).sum();
        let fm = probe.lstm.forward_sequence(&xm, 2).unwrap().row(1).sum();
        let numeric = (fp - fm) / (2.0 * h);
        assert!(common::rel_err(gx[[0, j]], numeric) < 1e-5);
    }
}

#[test]
fn larger_recurrent_quantile_network() {
    let mut r = rng(21);
    let mut spec = lhiqn::nn::NetworkSpec::vector(6, 5, true, true, 8);
    spec.init = InitPolicy::SmallUniform { scale: 0.5 };
    let net = lhiqn::nn::Network::<f64>::new(spec, &mut r).unwrap();
    let taus = Array2::from_shape_fn((6, 3), |(i, k)| ((i * 3 + k) as f64 + 0.5) / 18.0);
    let mut probe = common::NetworkProbe {
        net,
        steps: 3,
        taus: Some(taus),
    };
    let x = random_matrix(6, 6, 1.0, &mut r);
    let report = check_probe(&mut probe, &x, 300, &mut r);
    assert!(report.max_rel <= 1e-4, "max relative error {:.3e}", report.max_rel);
}
