use criterion::{criterion_group, criterion_main, Criterion};
use uem_core::data::{synth_scene, ResponseCurve};
use uem_core::decoders::DecoderConfig;
use uem_core::exec::{par_map, seq_map};
use uem_core::optics::{EncoderConfig, EncoderVariant, OpticalSetup};
use uem_core::train::{LossKind, Model};

fn batch_gradients(c: &mut Criterion) {
    let setup = OpticalSetup {
        wavelengths_nm: uem_core::data::default_wavelengths(8),
        ..OpticalSetup::default()
    };
    let response = ResponseCurve::camera_like(&setup.wavelengths_nm).unwrap();
    let encoder = EncoderConfig {
        variant: EncoderVariant::AemI,
        height: 32,
        width: 32,
        setup,
        response,
    };
    let model = Model::init(0, encoder, DecoderConfig::default()).unwrap();
    let names = model.trainable_names(&[]);
    let batch: Vec<_> = (0..8).map(|s| synth_scene(s, 32, 32, 8, 1.5).unwrap().to_tensor()).collect();
    let grad = |_: usize, cube: &uem_autodiff::Tensor| model.gradients(cube, None, LossKind::Mae, &names).unwrap();

    let mut g = c.benchmark_group("batch_gradients_8x32x32x8");
    g.sample_size(10);
    g.bench_function("rayon", |b| b.iter(|| par_map(&batch, grad)));
    g.bench_function("sequential", |b| b.iter(|| seq_map(&batch, grad)));
    g.finish();
}

criterion_group!(benches, batch_gradients);
criterion_main!(benches);
