//! Finite-difference checks of every tape primitive.

use motion_attn::numerics::{finite_diff_check, seeded_rng, GradCheckOptions, Tape, Tensor, Var};
use rand::Rng;

fn random(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = seeded_rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Reduces `op`'s output with fixed random weights so every output entry
/// contributes a distinct slope, then checks all inputs.
fn check<F>(inputs: Vec<Tensor>, op: F)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let probe = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = op(&mut tape, &vars);
        random(tape.shape(out), -1.0, 1.0, 99)
    };
    let loss = |tape: &mut Tape, vars: &[Var]| {
        let out = op(tape, vars);
        let w = tape.constant(probe.clone());
        let p = tape.mul(out, w).unwrap();
        tape.sum(p)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let l = loss(&mut tape, &vars);
    let grads = tape.backward(l).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let f = |params: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|t| tape.constant(t.clone())).collect();
        let l = loss(&mut tape, &vars);
        tape.value(l).item()
    };
    let report = finite_diff_check(f, &inputs, &analytic, GradCheckOptions::default());
    assert!(report.passed(), "{:?}", report.failures);
    assert!(report.kinks.is_empty(), "unexpected kinks {:?}", report.kinks);
}

#[test]
fn matmul() {
    check(vec![random(&[3, 4], -1.0, 1.0, 1), random(&[4, 2], -1.0, 1.0, 2)], |t, v| {
        t.matmul(v[0], v[1]).unwrap()
    });
}

#[test]
fn transpose_and_reshape() {
    check(vec![random(&[3, 4], -1.0, 1.0, 3)], |t, v| {
        let x = t.transpose(v[0]).unwrap();
        t.reshape(x, &[2, 6]).unwrap()
    });
}

#[test]
fn elementwise_binary() {
    let a = random(&[2, 3], -1.0, 1.0, 4);
    let b = random(&[2, 3], 0.5, 2.0, 5);
    check(vec![a.clone(), b.clone()], |t, v| t.add(v[0], v[1]).unwrap());
    check(vec![a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]).unwrap());
    check(vec![a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]).unwrap());
    check(vec![a, b], |t, v| t.div(v[0], v[1]).unwrap());
}

#[test]
fn broadcasts() {
    check(vec![random(&[3, 4], -1.0, 1.0, 6), random(&[4], -1.0, 1.0, 7)], |t, v| {
        t.add_row_bias(v[0], v[1]).unwrap()
    });
    check(vec![random(&[3, 4], -1.0, 1.0, 8), random(&[3, 1], -1.0, 1.0, 9)], |t, v| {
        t.row_scale(v[0], v[1]).unwrap()
    });
}

#[test]
fn elementwise_unary() {
    // Values kept away from zero so ReLU and abs stay differentiable.
    let x = Tensor::matrix(2, 3, vec![-1.3, 0.4, 2.0, -0.2, 0.7, -2.5]).unwrap();
    check(vec![x.clone()], |t, v| t.scale(v[0], -2.5));
    check(vec![x.clone()], |t, v| t.relu(v[0]));
    check(vec![x.clone()], |t, v| t.tanh(v[0]));
    check(vec![x], |t, v| t.abs(v[0]));
    check(vec![random(&[2, 3], 0.5, 3.0, 10)], |t, v| t.sqrt(v[0]).unwrap());
}

#[test]
fn conv1d() {
    check(vec![random(&[3, 9], -1.0, 1.0, 11), random(&[4, 3, 3], -1.0, 1.0, 12)], |t, v| {
        t.conv1d(v[0], v[1]).unwrap()
    });
    // Kernel spanning the whole input.
    check(vec![random(&[2, 5], -1.0, 1.0, 13), random(&[3, 2, 5], -1.0, 1.0, 14)], |t, v| {
        t.conv1d(v[0], v[1]).unwrap()
    });
}

#[test]
fn structural() {
    let a = random(&[2, 3], -1.0, 1.0, 15);
    let b = random(&[2, 2], -1.0, 1.0, 16);
    let c = random(&[1, 3], -1.0, 1.0, 17);
    check(vec![a.clone(), b], |t, v| t.concat_cols(&[v[0], v[1]]).unwrap());
    check(vec![a.clone(), c], |t, v| t.concat_rows(&[v[0], v[1]]).unwrap());
    check(vec![a.clone()], |t, v| t.slice_cols(v[0], 1, 3).unwrap());
    check(vec![a.clone()], |t, v| t.slice_rows(v[0], 1, 2).unwrap());
    // Repeated indices accumulate.
    check(vec![a], |t, v| t.select_rows(v[0], &[1, 0, 1]).unwrap());
}

#[test]
fn reductions() {
    let x = random(&[3, 4], -1.0, 1.0, 18);
    check(vec![x.clone()], |t, v| t.sum(v[0]));
    check(vec![x.clone()], |t, v| t.mean(v[0]));
    check(vec![x], |t, v| t.row_norm(v[0]).unwrap());
}

#[test]
fn normalisations() {
    check(vec![random(&[1, 6], 0.1, 2.0, 19)], |t, v| t.normalize_sum(v[0], 1e-12).unwrap());
    check(vec![random(&[3, 4], -2.0, 2.0, 20)], |t, v| t.softmax_rows(v[0]).unwrap());
}

#[test]
fn shared_input_accumulates() {
    // x used on both sides of a product and through a nonlinearity.
    check(vec![random(&[3, 3], -1.0, 1.0, 21)], |t, v| {
        let h = t.tanh(v[0]);
        let p = t.matmul(v[0], h).unwrap();
        t.mul(p, v[0]).unwrap()
    });
}

#[test]
fn fallback_has_zero_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(&[1, 4]));
    let a = tape.normalize_sum(x, 1e-12).unwrap();
    let w = tape.constant(Tensor::matrix(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let p = tape.mul(a, w).unwrap();
    let l = tape.sum(p);
    assert_eq!(tape.value(l).item(), 2.5);
    assert!(tape.backward(l).unwrap().wrt(x).data().iter().all(|&g| g == 0.0));
}
