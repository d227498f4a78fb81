use nslab::nn::gradcheck::{gradient_suite, numeric_grad, relative_error, FD_TOLERANCE};
use nslab::nn::layers::conv2d_backward;
use nslab::Tensor4;

#[test]
fn every_layer_kind_matches_finite_differences() {
    let reports = gradient_suite(20, 17).unwrap();
    assert_eq!(reports.len(), 9);
    for r in &reports {
        assert_eq!(r.cases, 20);
        assert!(r.max_error < FD_TOLERANCE, "{}: relative error {:e}", r.kind, r.max_error);
    }
}

#[test]
fn other_seeds_pass_too() {
    for seed in [1, 2] {
        for r in gradient_suite(5, seed).unwrap() {
            assert!(r.passed(), "seed {seed} {}: {:e}", r.kind, r.max_error);
        }
    }
}

#[test]
fn checker_catches_a_wrong_gradient() {
    let x = Tensor4::from_vec([1, 1, 3, 3], (0..9).map(|i| i as f64 * 0.1).collect()).unwrap();
    let k = Tensor4::filled([1, 1, 3, 3], 0.5);
    let g = Tensor4::filled([1, 1, 3, 3], 1.0);
    let (_, dk, _) = conv2d_backward(&x, &k, &g, 1, 1).unwrap();
    let num = numeric_grad(k.data(), |v| {
        let k = Tensor4::from_vec([1, 1, 3, 3], v.to_vec()).unwrap();
        nslab::nn::conv2d_forward(&x, &k, &[0.0], 1, 1).unwrap().data().iter().sum()
    });
    assert!(relative_error(dk.data(), &num) < FD_TOLERANCE);
    let wrong: Vec<f64> = dk.data().iter().map(|v| v * 1.01).collect();
    assert!(relative_error(&wrong, &num) > FD_TOLERANCE);
}
