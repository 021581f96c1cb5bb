use uem_autodiff::{Tape, Tensor};
use uem_core::data::{default_wavelengths, ResponseCurve};
use uem_core::decoders::{
    decode, init_decoder, model_step, model_step_wem, res_unet_forward, unfold_init, zero_stage_projections,
    DecoderConfig, DecoderKind, UNetShape, Vars,
};
use uem_core::optics::{BoundOperator, OpticalOperator};
use uem_core::params::ParamStore;

fn softplus(x: f64) -> f64 {
    x.exp().ln_1p()
}

fn setup(stages: usize) -> (DecoderConfig, ResponseCurve, Tensor, ParamStore) {
    let cfg = DecoderConfig {
        kind: DecoderKind::Unfolding,
        stages,
        stage_depth: 2,
        ..DecoderConfig::default()
    };
    let wl: Vec<f64> = (0..4).map(|b| 500.0 + b as f64).collect();
    let weights = vec![0.9, 0.6, 0.1, 0.0, 0.1, 0.5, 0.8, 0.2, 0.0, 0.1, 0.3, 0.9];
    let resp = ResponseCurve::new(wl, weights, false).unwrap();
    let rgb = Tensor::from_fn([8, 8, 3], |i| ((i * 37) % 17) as f64 / 17.0);
    let store = init_decoder(3, &cfg, 4).unwrap();
    (cfg, resp, rgb, store)
}

fn unfold(cfg: &DecoderConfig, resp: &ResponseCurve, rgb: &Tensor, store: &ParamStore) -> Tensor {
    let mut tape = Tape::new();
    let op = BoundOperator::constants(&mut tape, &OpticalOperator::wem(resp.clone()), (8, 8)).unwrap();
    let vars = Vars::bind(&mut tape, store, &|_| false);
    let y = tape.constant(rgb.clone());
    let out = decode(&mut tape, cfg, &vars, y, &op).unwrap();
    tape.value(out).clone()
}

#[test]
fn one_stage_is_a_model_step_then_the_prior() {
    let (cfg, resp, rgb, store) = setup(1);
    let got = unfold(&cfg, &resp, &rgb, &store);

    let z0 = unfold_init(&rgb, &resp).unwrap();
    let alpha = softplus(store.require("decoder.unfold.s0.alpha").unwrap().item().unwrap());
    let eta = softplus(store.require("decoder.unfold.s0.eta").unwrap().item().unwrap());
    let i1 = model_step_wem(&z0, &z0, &rgb, &resp, alpha, eta).unwrap();
    let mut tape = Tape::new();
    let vars = Vars::bind(&mut tape, &store, &|_| false);
    let x = tape.constant(i1);
    let z1 = res_unet_forward(&mut tape, &vars, "decoder.unfold.s0.net", &UNetShape::stage(&cfg, 4), x).unwrap();
    assert!(got.max_abs_diff(tape.value(z1)).unwrap() <= 1e-12);
}

#[test]
fn identity_priors_leave_the_model_iterates() {
    let (cfg, resp, rgb, mut store) = setup(3);
    zero_stage_projections(&mut store);
    let got = unfold(&cfg, &resp, &rgb, &store);
    let z0 = unfold_init(&rgb, &resp).unwrap();
    let (mut i, mut z) = (z0.clone(), z0);
    for s in 0..3 {
        let a = softplus(store.require(&format!("decoder.unfold.s{s}.alpha")).unwrap().item().unwrap());
        let e = softplus(store.require(&format!("decoder.unfold.s{s}.eta")).unwrap().item().unwrap());
        i = model_step_wem(&i, &z, &rgb, &resp, a, e).unwrap();
        z = i.clone();
    }
    assert!(got.max_abs_diff(&z).unwrap() <= 1e-12);
}

#[test]
fn step_gradient_matches_differences() {
    // d/dα of a scalar readout of one model step, on the tape and by differences.
    let wl = default_wavelengths(3);
    let resp = ResponseCurve::new(wl, vec![0.01, 0.0, 0.002, 0.0, 0.01, 0.0, 0.003, 0.0, 0.01], false).unwrap();
    let i0 = Tensor::from_fn([4, 4, 3], |k| ((k * 7) % 5) as f64 / 5.0);
    let rgb = Tensor::from_fn([4, 4, 3], |k| ((k * 3) % 7) as f64 / 7.0);
    let run = |alpha: f64| -> (f64, f64) {
        let mut tape = Tape::new();
        let op = BoundOperator::constants(&mut tape, &OpticalOperator::wem(resp.clone()), (4, 4)).unwrap();
        let i = tape.constant(i0.clone());
        let y = tape.constant(rgb.clone());
        let a = tape.param(Tensor::scalar(alpha));
        let e = tape.constant(Tensor::scalar(0.3));
        let out = model_step(&mut tape, &op, i, i, y, a, e).unwrap();
        let sq = tape.square(out);
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap().get(a).unwrap().item().unwrap();
        (tape.value(loss).item().unwrap(), g)
    };
    let eps = 1e-6;
    let (_, ad) = run(0.05);
    let fd = (run(0.05 + eps).0 - run(0.05 - eps).0) / (2.0 * eps);
    assert!((ad - fd).abs() <= 1e-6 * fd.abs().max(1.0), "{ad} vs {fd}");
}
