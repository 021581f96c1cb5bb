use uem_autodiff::{central_difference, Tape, Tensor};
use uem_core::data::{default_wavelengths, synth_scene, ResponseCurve};
use uem_core::decoders::{DecoderConfig, DecoderKind};
use uem_core::optics::{
    encode_wem, height_to_psf, init_encoder, EncoderConfig, EncoderVariant, OpticalSetup, DOE_HEIGHTS, PSF_FREE,
    RESPONSE,
};
use uem_core::train::{LossKind, Model};

fn small_setup(bands: usize) -> OpticalSetup {
    OpticalSetup {
        grid_n: 64,
        pitch_um: 16.0,
        radial_samples: 8,
        psf_window: 5,
        block: 8,
        wavelengths_nm: (0..bands).map(|b| 500.0 + 10.0 * b as f64).collect(),
        ..OpticalSetup::default()
    }
}

fn encoder(variant: EncoderVariant, setup: OpticalSetup, hw: usize) -> EncoderConfig {
    let response = ResponseCurve::camera_like(&setup.wavelengths_nm).unwrap();
    EncoderConfig {
        variant,
        height: hw,
        width: hw,
        setup,
        response,
    }
}

#[test]
fn free_psf_init_spread() {
    // 9·9·124 draws.
    let setup = OpticalSetup {
        wavelengths_nm: default_wavelengths(124),
        ..OpticalSetup::default()
    };
    let k = setup.psf_window;
    let store = init_encoder(1, &encoder(EncoderVariant::PemI, setup, 8)).unwrap();
    let d = store.require(PSF_FREE).unwrap().data();
    assert!(d.len() >= 10_000);
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let want = 1.0 / (k * k) as f64;
    assert!((std - want).abs() <= 0.05 * want, "{std} vs {want}");
}

/// Central-difference check of every coordinate of `name` in a SimConv model.
fn pipeline_grad_error(variant: EncoderVariant, name: &str) -> f64 {
    let setup = small_setup(4);
    let decoder = DecoderConfig {
        kind: DecoderKind::SimConv,
        hidden: 6,
        ..DecoderConfig::default()
    };
    let model = Model::init(2, encoder(variant, setup, 6), decoder).unwrap();
    let cube = synth_scene(4, 6, 6, 4, 1.0).unwrap().to_tensor();
    let (_, grads) = model.gradients(&cube, None, LossKind::Mse, &[name.to_string()]).unwrap();
    let ad = grads.require(name).unwrap();
    let x = model.params.require(name).unwrap().clone();
    let f = |p: &Tensor| {
        let mut m = model.clone();
        m.params.insert(name, p.clone());
        Ok(m.gradients(&cube, None, LossKind::Mse, &[]).unwrap().0)
    };
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let fd = central_difference(f, &x, i, 1e-5).unwrap();
        worst = worst.max((ad.data()[i] - fd).abs() / fd.abs().max(1e-6));
    }
    worst
}

#[test]
fn height_profile_gradient_through_the_pipeline() {
    let e = pipeline_grad_error(EncoderVariant::PemP, DOE_HEIGHTS);
    assert!(e <= 1e-4, "{e}");
}

#[test]
fn response_gradient_through_the_pipeline() {
    let e = pipeline_grad_error(EncoderVariant::WemI, RESPONSE);
    assert!(e <= 1e-4, "{e}");
}

#[test]
fn psf_of_a_flat_doe_is_a_normalized_symmetric_pattern() {
    let setup = small_setup(2);
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::zeros([setup.radial_samples]));
    let psf = height_to_psf(&mut tape, p, &setup).unwrap();
    let v = tape.value(psf);
    let (k, l) = (setup.psf_window, 2);
    let at = |y: usize, x: usize, b: usize| v.data()[(y * k + x) * l + b];
    for b in 0..l {
        let sum: f64 = (0..k * k).map(|i| v.data()[i * l + b]).sum();
        assert!((sum - 1.0).abs() < 1e-12, "band {b} sums to {sum}");
        for y in 0..k {
            for x in 0..k {
                assert!(at(y, x, b) >= 0.0);
                let mirrors = [at(x, y, b), at(k - 1 - y, x, b), at(y, k - 1 - x, b)];
                for m in mirrors {
                    assert!((at(y, x, b) - m).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn response_integration_is_linear_in_both_arguments() {
    let wl = default_wavelengths(5);
    let a = synth_scene(1, 5, 4, 5, 1.0).unwrap().to_tensor();
    let b = synth_scene(2, 5, 4, 5, 1.0).unwrap().to_tensor();
    let r = ResponseCurve::camera_like(&wl).unwrap();
    let mut mix = a.clone();
    mix.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x = 2.0 * *x - 0.5 * y);
    let lhs = encode_wem(&mix, &r).unwrap();
    let mut rhs = encode_wem(&a, &r).unwrap().map(|v| 2.0 * v);
    rhs.axpy(-0.5, &encode_wem(&b, &r).unwrap()).unwrap();
    assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);

    let r2 = ResponseCurve::new(wl.clone(), r.weights().iter().map(|w| 3.0 * w).collect(), false).unwrap();
    let scaled = encode_wem(&a, &r2).unwrap();
    let base = encode_wem(&a, &r).unwrap().map(|v| 3.0 * v);
    assert!(scaled.max_abs_diff(&base).unwrap() <= 1e-12);
}
