use proptest::prelude::*;
use uem_autodiff::{ComplexTensor, Tape, Tensor};

fn grid(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 2 * n * n)
}

proptest! {
    #[test]
    fn parseval_holds_for_unitary_fft(data in grid(8)) {
        let x = Tensor::new([8, 8, 2], data).unwrap();
        let mut t = Tape::new();
        let v = t.constant(x.clone());
        let f = t.fft2(v).unwrap();
        let e_in = ComplexTensor::from_pairs(x).unwrap().energy();
        let e_out = ComplexTensor::from_pairs(t.value(f).clone()).unwrap().energy();
        prop_assert!((e_in - e_out).abs() <= 1e-9 * e_in.max(1e-300));
    }

    #[test]
    fn shear_is_undone_by_its_adjoint_on_surviving_rows(
        data in prop::collection::vec(-1.0f64..1.0, 8 * 5 * 3),
        step in 1isize..3,
    ) {
        // ⟨shear(x), y⟩ = ⟨x, shear⁻(y)⟩
        let x = Tensor::new([8, 5, 3], data.clone()).unwrap();
        let y = Tensor::new([8, 5, 3], data.iter().rev().copied().collect()).unwrap();
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let yv = t.constant(y.clone());
        let sx = t.shear(xv, step).unwrap();
        let sy = t.shear(yv, -step).unwrap();
        let lhs = t.value(sx).dot(&y).unwrap();
        let rhs = x.dot(t.value(sy)).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}
