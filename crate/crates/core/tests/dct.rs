use motion_attn::dct::{dct, dct_basis, idct, pad_replicate, truncate, DctCoeffs};
use motion_attn::numerics::Tensor;
use proptest::prelude::*;

fn row(v: &[f64]) -> Tensor {
    Tensor::matrix(1, v.len(), v.to_vec()).unwrap()
}

// Values computed with mpmath at 30 digits from the cosine sum definition.
#[test]
fn matches_high_precision_oracle() {
    let c = dct(&row(&[1.0, 2.0, 3.0, 4.0])).unwrap();
    let want = [5.0, -2.2304424973876632840, 0.0, -0.15851266778110721267];
    for (got, want) in c.coeffs().data().iter().zip(want) {
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }

    let c = dct(&row(&[0.5, -1.0, 2.0, 0.0, 3.0])).unwrap();
    let want = [
        2.0124611797498107268,
        -1.8755004219790486743,
        0.72136390112342761360,
        -0.32786913114291555167,
        2.4606166142160362462,
    ];
    for (got, want) in c.coeffs().data().iter().zip(want) {
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }
}

#[test]
fn basis_is_orthonormal() {
    for len in [1, 2, 7, 20, 64] {
        let d = dct_basis(len);
        let g = d.matmul(&d.transpose().unwrap()).unwrap();
        assert!(g.max_abs_diff(&Tensor::eye(len)) < 1e-12, "L = {len}");
    }
}

#[test]
fn truncated_reconstruction_of_smooth_row_is_close() {
    let x: Vec<f64> = (0..20).map(|t| (t as f64 * 0.1).sin()).collect();
    let c = dct(&row(&x)).unwrap();
    let err = |n| idct(&truncate(&c, n).unwrap()).max_abs_diff(&row(&x));
    assert!(err(10) < err(3));
    assert!(err(20) < 1e-12);
}

#[test]
fn replicate_padding_of_ramp() {
    let p = pad_replicate(&row(&[1.0, 2.0, 3.0]), 2).unwrap();
    assert_eq!(p.data(), &[1.0, 2.0, 3.0, 3.0, 3.0]);
}

fn rows_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..5, 1usize..40).prop_flat_map(|(k, l)| (Just(k), Just(l), prop::collection::vec(-100.0f64..100.0, k * l)))
}

proptest! {
    #[test]
    fn roundtrip((k, l, data) in rows_strategy()) {
        let x = Tensor::matrix(k, l, data).unwrap();
        let back = idct(&dct(&x).unwrap());
        prop_assert!(back.max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn energy_is_preserved((k, l, data) in rows_strategy()) {
        let x = Tensor::matrix(k, l, data).unwrap();
        let c = dct(&x).unwrap();
        let ex: f64 = x.data().iter().map(|v| v * v).sum();
        let ec: f64 = c.coeffs().data().iter().map(|v| v * v).sum();
        prop_assert!((ex - ec).abs() <= 1e-9 * ex.max(1.0));
    }

    #[test]
    fn linear((k, l, a) in rows_strategy(), s in -3.0f64..3.0, seed in 0u64..1000) {
        let x = Tensor::matrix(k, l, a).unwrap();
        let y = x.map(|v| (v * 0.37 + seed as f64).cos());
        let lhs = dct(&x.scale(s).add(&y).unwrap()).unwrap();
        let rhs = dct(&x).unwrap().coeffs().scale(s).add(dct(&y).unwrap().coeffs()).unwrap();
        prop_assert!(lhs.coeffs().max_abs_diff(&rhs) < 1e-9);
    }

    #[test]
    fn decoding_is_inverse_from_coefficients((k, l, data) in rows_strategy()) {
        let c = DctCoeffs::new(Tensor::matrix(k, l, data).unwrap()).unwrap();
        let again = dct(&idct(&c)).unwrap();
        prop_assert!(again.coeffs().max_abs_diff(c.coeffs()) < 1e-9);
    }
}
