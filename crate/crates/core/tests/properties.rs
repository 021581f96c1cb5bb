use proptest::prelude::*;
use uem_autodiff::Tensor;
use uem_core::data::{read_scube, write_scube, ResponseCurve, SpectralCube};
use uem_core::metrics::{ergas, nn_baseline, psnr, sam};
use uem_core::optics::{dispersive_shear, MaskParams, OpticalOperator};
use uem_core::params::{read_checkpoint, write_checkpoint, ParamStore};

fn tensor(shape: Vec<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(lo..hi, n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..6, 1usize..6, 1usize..5)
}

fn response(l: usize) -> impl Strategy<Value = ResponseCurve> {
    prop::collection::vec(0.0f64..1.0, 3 * l).prop_map(move |w| {
        let wl = (0..l).map(|b| 450.0 + 20.0 * b as f64).collect();
        ResponseCurve::new(wl, w, false).unwrap()
    })
}

/// An operator of a random cast with its cube and measurement shapes.
fn operator() -> impl Strategy<Value = (OpticalOperator, usize, usize, usize)> {
    dims().prop_flat_map(|(h, w, l)| {
        let mask = prop_oneof![
            Just(None),
            tensor(vec![h, w], -1.0, 1.0).prop_map(|m| Some(MaskParams::Physical(m))),
            tensor(vec![h, w, l], 0.0, 1.0).prop_map(|m| Some(MaskParams::Ideal(m))),
        ];
        let psf = prop_oneof![Just(None), tensor(vec![3, 3, l], 0.0, 1.0).prop_map(Some)];
        (mask, psf, response(l)).prop_map(move |(mask, psf, response)| {
            (OpticalOperator { mask, psf, response }, h, w, l)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operators_are_linear_and_adjoint(
        (op, h, w, l) in operator(),
        seed in any::<u64>(),
        a in -2.0f64..2.0,
    ) {
        let gen = |salt: u64, c: usize| Tensor::from_fn([h, w, c], |i| {
            let v = (i as u64 + 1).wrapping_mul(seed ^ salt).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            (v >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        let (x, z, y) = (gen(1, l), gen(2, l), gen(3, 3));
        let mut mix = x.clone();
        mix.axpy(a, &z).unwrap();
        let mut sum = op.forward(&x).unwrap();
        sum.axpy(a, &op.forward(&z).unwrap()).unwrap();
        prop_assert!(op.forward(&mix).unwrap().max_abs_diff(&sum).unwrap() <= 1e-12);

        let lhs = op.forward(&x).unwrap().dot(&y).unwrap();
        let rhs = x.dot(&op.adjoint(&y).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn shear_is_linear(x in tensor(vec![5, 4, 3], -1.0, 1.0), y in tensor(vec![5, 4, 3], -1.0, 1.0), a in -3.0f64..3.0) {
        let mut mix = x.clone();
        mix.axpy(a, &y).unwrap();
        let mut sum = dispersive_shear(&x).unwrap();
        sum.axpy(a, &dispersive_shear(&y).unwrap()).unwrap();
        prop_assert!(dispersive_shear(&mix).unwrap().max_abs_diff(&sum).unwrap() <= 1e-12);
    }

    #[test]
    fn spectral_angle_ignores_scale(p in tensor(vec![3, 3, 4], 0.05, 1.0), g in tensor(vec![3, 3, 4], 0.05, 1.0), c in 0.1f64..10.0) {
        let a = sam(&p, &g).unwrap().rad;
        let b = sam(&p.map(|v| c * v), &g).unwrap().rad;
        prop_assert!((a - b).abs() <= 1e-7);
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&a));
    }

    #[test]
    fn psnr_is_symmetric_and_ergas_scale_free(p in tensor(vec![2, 3, 3], 0.05, 1.0), g in tensor(vec![2, 3, 3], 0.05, 1.0), c in 0.1f64..10.0) {
        prop_assert_eq!(psnr(&p, &g, 1.0).unwrap(), psnr(&g, &p, 1.0).unwrap());
        let e = ergas(&p, &g, 1.0).unwrap();
        let es = ergas(&p.map(|v| c * v), &g.map(|v| c * v), 1.0).unwrap();
        prop_assert!((e - es).abs() <= 1e-9 * e.max(1.0));
    }

    #[test]
    fn baseline_bands_are_rgb_channels(rgb in tensor(vec![2, 2, 3], 0.0, 1.0), r in response(5)) {
        let cube = nn_baseline(&rgb, &r).unwrap();
        for px in 0..4 {
            for b in 0..5 {
                let v = cube.data()[px * 5 + b];
                prop_assert!((0..3).any(|c| rgb.data()[px * 3 + c] == v));
            }
        }
    }

    #[test]
    fn scube_round_trip(values in prop::collection::vec(0.0f32..1.0, 2 * 3 * 4)) {
        let cube = SpectralCube::new(2, 3, vec![400.0, 500.0, 600.0, 700.0], values).unwrap();
        let bytes = write_scube(&cube);
        let back = read_scube(&bytes, Some(cube.wavelengths_nm().to_vec())).unwrap();
        prop_assert_eq!(&back, &cube);
        prop_assert_eq!(write_scube(&back), bytes);
    }

    #[test]
    fn checkpoint_round_trip(a in prop::collection::vec(any::<f64>(), 1..20), b in prop::collection::vec(-1e3f64..1e3, 6)) {
        let mut store = ParamStore::new();
        store.insert("z.first", Tensor::new([a.len()], a.clone()).unwrap());
        store.insert("a.second", Tensor::new([2, 3], b).unwrap());
        let meta = serde_json::json!({"k": 1});
        let (back, m) = read_checkpoint(&write_checkpoint(&store, &meta)).unwrap();
        prop_assert_eq!(m, meta);
        prop_assert_eq!(back.names(), store.names());
        for ((_, x), (_, y)) in back.iter().zip(store.iter()) {
            let xb: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(xb, yb);
            prop_assert_eq!(x.shape(), y.shape());
        }
    }
}
