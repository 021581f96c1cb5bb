use uem_core::data::{synth_scene, ResponseCurve, SpectralCube};
use uem_core::decoders::{DecoderConfig, DecoderKind};
use uem_core::optics::{EncoderConfig, EncoderVariant, OpticalSetup, MASK_IDEAL, PSF_FREE, RESPONSE};
use uem_core::params::ParamStore;
use uem_core::train::{
    select_response, train_full_uem, train_joint, train_with_response, LossKind, Model, TrainConfig, TrainReport,
};

fn cubes(seeds: std::ops::Range<u64>, size: usize, bands: usize) -> Vec<SpectralCube> {
    seeds.map(|s| synth_scene(s, size, size, bands, 1.5).unwrap()).collect()
}

fn small_optics() -> OpticalSetup {
    OpticalSetup {
        grid_n: 64,
        pitch_um: 16.0,
        radial_samples: 6,
        psf_window: 5,
        block: 8,
        ..OpticalSetup::default()
    }
}

fn cfg(variant: EncoderVariant, epochs: usize) -> TrainConfig {
    TrainConfig {
        encoder: variant,
        epochs,
        batch_size: 2,
        seed: 5,
        optics: small_optics(),
        decoder: DecoderConfig {
            hidden: 8,
            ..DecoderConfig::default()
        },
        ..TrainConfig::default()
    }
}

/// What training starts from, built independently of the trainer.
fn initial(c: &TrainConfig, train: &[SpectralCube]) -> ParamStore {
    let wl = train[0].wavelengths_nm().to_vec();
    let mut setup = c.optics.clone();
    setup.wavelengths_nm = wl.clone();
    let encoder = EncoderConfig {
        variant: c.encoder,
        height: train[0].height(),
        width: train[0].width(),
        setup,
        response: ResponseCurve::camera_like(&wl).unwrap(),
    };
    Model::init(c.seed, encoder, c.decoder).unwrap().params
}

fn params(r: &TrainReport) -> &ParamStore {
    &r.model.as_ref().unwrap().params
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let (train, val) = (cubes(0..3, 8, 4), cubes(3..5, 8, 4));
    for v in EncoderVariant::ALL {
        let c = TrainConfig {
            learning_rate: 0.0,
            ..cfg(v, 1)
        };
        let trained = train_joint(&c, &train, &val).unwrap();
        let init = initial(&c, &train);
        assert_eq!(trained.train_loss.len(), 1);
        assert_eq!(trained.val_metrics.len(), 1);
        assert!(trained.parameter_count > 0);
        for ((n, a), (_, b)) in params(&trained).iter().zip(init.iter()) {
            assert_eq!(a.data(), b.data(), "{v}: {n} moved");
        }
    }
}

#[test]
fn only_the_variant_parameters_move() {
    let (train, val) = (cubes(0..3, 8, 4), cubes(3..5, 8, 4));
    for v in EncoderVariant::ALL {
        let c = cfg(v, 1);
        let init = initial(&c, &train);
        let trained = train_joint(&c, &train, &val).unwrap();
        let learnable = v.trainable();
        for ((n, a), (_, b)) in params(&trained).iter().zip(init.iter()) {
            let should_move = n.starts_with("decoder.") || learnable.contains(&n);
            if should_move {
                assert_ne!(a.data(), b.data(), "{v}: {n} did not move");
            } else {
                assert_eq!(a.data(), b.data(), "{v}: frozen {n} moved");
            }
        }
    }
}

#[test]
fn same_seed_same_history() {
    let (train, val) = (cubes(0..4, 8, 4), cubes(4..6, 8, 4));
    let c = TrainConfig {
        noise_sigma: 0.02,
        ..cfg(EncoderVariant::PemP, 2)
    };
    let a = train_joint(&c, &train, &val).unwrap();
    let b = train_joint(&c, &train, &val).unwrap();
    assert_eq!(a.train_loss, b.train_loss);
    assert_eq!(a.val_metrics, b.val_metrics);
    let other = train_joint(&TrainConfig { seed: 6, ..c }, &train, &val).unwrap();
    assert_ne!(a.train_loss, other.train_loss);
}

#[test]
fn frozen_unit_terms_reproduce_the_response_only_cast() {
    let (train, val) = (cubes(0..4, 8, 4), cubes(4..6, 8, 4));
    let wem = train_joint(&cfg(EncoderVariant::WemI, 1), &train, &val).unwrap();
    let uem = train_full_uem(
        &TrainConfig {
            freeze: vec![MASK_IDEAL.into(), PSF_FREE.into()],
            ..cfg(EncoderVariant::UemI, 1)
        },
        &train,
        &val,
    )
    .unwrap();
    let (a, b) = (wem.train_loss[0], uem.train_loss[0]);
    assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} vs {b}");
}

#[test]
fn positive_cast_keeps_response_nonnegative() {
    let (train, val) = (cubes(0..4, 8, 4), cubes(4..6, 8, 4));
    let r = train_joint(
        &TrainConfig {
            learning_rate: 0.05,
            ..cfg(EncoderVariant::WemIPc, 3)
        },
        &train,
        &val,
    )
    .unwrap();
    assert!(params(&r).require(RESPONSE).unwrap().data().iter().all(|&v| v >= 0.0));
    // The unconstrained cast is free to go negative.
    let free = train_joint(&cfg(EncoderVariant::WemI, 1), &train, &val).unwrap();
    assert!(params(&free).require(RESPONSE).unwrap().data().iter().any(|&v| v < 0.0));
}

#[test]
fn patches_train_like_cubes() {
    let (train, val) = (cubes(0..2, 8, 4), cubes(2..3, 8, 4));
    let c = TrainConfig {
        patch_size: 4,
        patch_stride: 4,
        batch_size: 4,
        ..cfg(EncoderVariant::AemI, 1)
    };
    let r = train_joint(&c, &train, &val).unwrap();
    assert!(r.train_loss[0].is_finite());
}

#[test]
fn unfolding_decoder_trains() {
    let (train, val) = (cubes(0..2, 8, 4), cubes(2..3, 8, 4));
    let mut c = cfg(EncoderVariant::PemI, 2);
    c.decoder = DecoderConfig {
        kind: DecoderKind::Unfolding,
        stages: 2,
        stage_depth: 2,
        ..DecoderConfig::default()
    };
    c.loss = LossKind::Ergas;
    let r = train_joint(&c, &train, &val).unwrap();
    assert!(r.train_loss.iter().all(|l| l.is_finite()));
}

#[test]
fn zero_response_never_wins() {
    let (train, val) = (cubes(0..4, 8, 4), cubes(4..6, 8, 4));
    let wl = train[0].wavelengths_nm().to_vec();
    let camera = ResponseCurve::camera_like(&wl).unwrap();
    let zero = ResponseCurve::new(wl.clone(), vec![0.0; 3 * wl.len()], false).unwrap();
    let c = cfg(EncoderVariant::WemP, 5);
    for order in [vec![camera.clone(), zero.clone()], vec![zero.clone(), camera.clone()]] {
        let zero_at = order.iter().position(|r| r == &zero).unwrap();
        let sel = select_response(&order, &c, &train, &val).unwrap();
        assert_ne!(sel.best, zero_at);
        assert_eq!(sel.ranking.len(), 2);
        let again = select_response(&order, &c, &train, &val).unwrap();
        assert_eq!(sel.best, again.best);
    }
    let single = select_response(&[camera], &c, &train, &val).unwrap();
    assert_eq!(single.best, 0);
    assert!(select_response(&[], &c, &train, &val).is_err());
}

#[test]
fn fixed_response_must_match_the_band_grid() {
    let (train, val) = (cubes(0..2, 8, 4), cubes(2..3, 8, 4));
    let r = ResponseCurve::camera_like(&[450.0, 550.0, 650.0]).unwrap();
    assert!(train_with_response(&cfg(EncoderVariant::WemP, 1), &r, &train, &val).is_err());
}

#[test]
fn mismatched_band_counts_are_rejected() {
    let train = cubes(0..2, 8, 4);
    let val = cubes(2..3, 8, 5);
    assert!(train_joint(&cfg(EncoderVariant::WemP, 1), &train, &val).is_err());
    assert!(train_joint(&cfg(EncoderVariant::WemP, 1), &[], &val).is_err());
}

#[test]
fn loss_csv_has_one_row_per_epoch() {
    let (train, val) = (cubes(0..2, 8, 4), cubes(2..3, 8, 4));
    let r = train_joint(&cfg(EncoderVariant::AemP, 3), &train, &val).unwrap();
    let csv = r.loss_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,psnr,psnr_si,sam,ergas");
    assert_eq!(lines.len(), 4);
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(json["train_loss"].as_array().unwrap().len(), 3);
}

#[test]
fn full_model_improves_with_training() {
    let (train, val) = (cubes(0..8, 16, 4), cubes(8..12, 16, 4));
    let c = TrainConfig {
        batch_size: 4,
        learning_rate: 3e-3,
        ..cfg(EncoderVariant::UemI, 20)
    };
    let r = train_full_uem(&c, &train, &val).unwrap();
    let (first, last) = (r.val_metrics[0].psnr_db, r.final_metrics().psnr_db);
    assert!(last > first, "{first:.2} dB -> {last:.2} dB");
    assert!(r.train_loss.last() < r.train_loss.first());
}
