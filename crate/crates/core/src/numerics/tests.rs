use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn triple_loop(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k) = a.dims2().unwrap();
    let n = b.dims2().unwrap().1;
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a.get2(i, p) * b.get2(p, j);
            }
        }
    }
    c
}

fn eval1(f: impl Fn(&mut Graph, Var) -> Var, x: Tensor) -> Tensor {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let v = g.constant(x);
    let out = f(&mut g, v);
    g.value(out).clone()
}

#[test]
fn matmul_identity_and_hand_cases() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let i2 = g.constant(Tensor::identity(2));
    let b = g.constant(Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap());
    let c = g.matmul(i2, b).unwrap();
    assert_eq!(g.value(c).data(), &[3.0, 4.0, 5.0, 6.0]);

    let a = g.constant(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
    let b = g.constant(Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap());
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).data(), &[11.0]);
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[4, 2], &mut rng);
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
    let c = g.matmul(va, vb).unwrap();
    for (x, y) in g.value(c).data().iter().zip(triple_loop(&a, &b)) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    let err = g.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("2×3"), "{err}");
}

#[test]
fn layer_norm_examples() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.constant(Tensor::full(&[2, 4], 3.5));
    let gamma = g.constant(Tensor::full(&[4], 1.0));
    let beta = g.constant(Tensor::zeros(&[4]));
    let y = g.layer_norm(x, gamma, beta, 1e-5).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));

    let x = g.constant(Tensor::new(vec![2], vec![1.0, 3.0]).unwrap());
    let gamma = g.constant(Tensor::full(&[2], 1.0));
    let beta = g.constant(Tensor::zeros(&[2]));
    let y = g.layer_norm(x, gamma, beta, 1e-14).unwrap();
    let d = g.value(y).data();
    assert!((d[0] + 1.0).abs() < 1e-12 && (d[1] - 1.0).abs() < 1e-12);

    let bad = g.constant(Tensor::zeros(&[3]));
    assert!(matches!(g.layer_norm(x, bad, beta, 1e-5), Err(Error::Shape(_))));
    assert!(matches!(g.layer_norm(x, gamma, beta, 0.0), Err(Error::Contract(_))));
}

#[test]
fn softmax_examples() {
    let y = eval1(|g, x| g.softmax(x), Tensor::zeros(&[3]));
    for v in y.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let y = eval1(|g, x| g.softmax(x), Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap());
    assert!((y.data()[0] - 1.0).abs() < 1e-12 && y.data()[1].abs() < 1e-12);
}

#[test]
fn gelu_examples() {
    assert_eq!(gelu_scalar(0.0), 0.0);
    assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-4);
}

#[test]
fn sum_of_squares_gradient_is_twice_value() {
    let mut store = ParamStore::new();
    let p = store
        .add("p", Tensor::new(vec![3], vec![0.5, -1.5, 2.0]).unwrap())
        .unwrap();
    let mut g = Graph::new(&store);
    let v = g.param(p);
    let loss = g.sum_squares(v);
    let grads = g.backward(loss).unwrap();
    drop(g);
    store.zero_grad();
    store.accumulate(&grads, 1.0);
    assert_eq!(store.get(p).grad.data(), &[1.0, -3.0, 4.0]);
    store.zero_grad();
    assert!(store.get(p).grad.data().iter().all(|&v| v == 0.0));
}

#[test]
fn frozen_and_unused_parameters_get_zero_gradient() {
    let mut store = ParamStore::new();
    let used = store.add("used", Tensor::full(&[2], 1.0)).unwrap();
    let frozen = store.add("frozen", Tensor::full(&[2], 2.0)).unwrap();
    let unused = store.add("unused", Tensor::full(&[2], 3.0)).unwrap();
    store.set_trainable(frozen, false);
    let mut g = Graph::new(&store);
    let (a, b) = (g.param(used), g.param(frozen));
    let prod = g.mul(a, b).unwrap();
    let loss = g.sum(prod);
    let grads = g.backward(loss).unwrap();
    drop(g);
    store.accumulate(&grads, 1.0);
    assert_eq!(store.get(used).grad.data(), &[2.0, 2.0]);
    assert_eq!(store.get(frozen).grad.data(), &[0.0, 0.0]);
    assert_eq!(store.get(unused).grad.data(), &[0.0, 0.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.input(Tensor::zeros(&[2, 2]));
    assert!(matches!(g.backward(x), Err(Error::Contract(_))));
}

#[test]
fn grad_check_of_sum_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[3, 5], &mut rng);
    let report = grad_check(|g, v| Ok(g.sum(v[0])), &[x]).unwrap();
    // The analytic side is exactly one; the central difference carries only
    // rounding noise of order ε·|f|/h.
    assert!(report.analytic[0].data().iter().all(|&v| v == 1.0));
    assert!(report.worst() < 1e-9, "{}", report.worst());
}

#[test]
fn grad_check_reports_zero_for_unused_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[4], &mut rng);
    let y = random(&[4], &mut rng);
    let report = grad_check(|g, v| Ok(g.sum_squares(v[0])), &[x, y]).unwrap();
    assert!(report.analytic[1].data().iter().all(|&v| v == 0.0));
    assert_eq!(report.max_rel_err[1], 0.0);
}

pub(crate) type PrimitiveCase = (&'static str, Vec<Vec<usize>>, fn(&mut Graph, &[Var]) -> crate::Result<Var>);

/// Every primitive, wrapped into a scalar through a random projection so that
/// no gradient is trivially uniform.
pub(crate) fn primitive_cases() -> Vec<PrimitiveCase> {
    fn project(g: &mut Graph, x: Var) -> crate::Result<Var> {
        let shape = g.value(x).shape().to_vec();
        let n: usize = shape.iter().product();
        let w: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 / 6.0 - 1.0).collect();
        let w = g.constant(Tensor::new(shape, w)?);
        let p = g.mul(x, w)?;
        Ok(g.sum(p))
    }
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], |g, v| {
            let y = g.matmul(v[0], v[1])?;
            project(g, y)
        }),
        ("matmul_nt", vec![vec![3, 4], vec![5, 4]], |g, v| {
            let y = g.matmul_nt(v[0], v[1])?;
            project(g, y)
        }),
        ("add_sub_mul", vec![vec![2, 3], vec![2, 3]], |g, v| {
            let a = g.add(v[0], v[1])?;
            let b = g.sub(a, v[1])?;
            let c = g.mul(b, v[1])?;
            project(g, c)
        }),
        ("add_bias", vec![vec![3, 4], vec![4]], |g, v| {
            let y = g.add_bias(v[0], v[1])?;
            project(g, y)
        }),
        ("scale", vec![vec![5]], |g, v| {
            let y = g.scale(v[0], -2.5);
            project(g, y)
        }),
        ("layer_norm", vec![vec![2, 8], vec![8], vec![8]], |g, v| {
            let y = g.layer_norm(v[0], v[1], v[2], 1e-5)?;
            project(g, y)
        }),
        ("softmax", vec![vec![3, 5]], |g, v| {
            let y = g.softmax(v[0]);
            project(g, y)
        }),
        ("gelu", vec![vec![2, 6]], |g, v| {
            let y = g.gelu(v[0]);
            project(g, y)
        }),
        ("slice_concat", vec![vec![3, 6]], |g, v| {
            let a = g.slice_cols(v[0], 0, 2)?;
            let b = g.slice_cols(v[0], 2, 4)?;
            let y = g.concat_cols(&[b, a, b])?;
            project(g, y)
        }),
        ("gather_rows", vec![vec![3, 4], vec![2, 4]], |g, v| {
            let y = g.gather_rows(&[v[0], v[1]], &[(1, 0), (0, 2), (0, 2), (1, 1)])?;
            project(g, y)
        }),
        ("mean_rows_reshape_transpose", vec![vec![4, 6]], |g, v| {
            let m = g.mean_rows(v[0])?;
            let r = g.reshape(m, &[2, 3])?;
            let t = g.transpose(r)?;
            project(g, t)
        }),
        ("sum_squares", vec![vec![7]], |g, v| Ok(g.sum_squares(v[0]))),
    ]
}

#[test]
fn every_primitive_matches_finite_differences() {
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        for (name, shapes, f) in primitive_cases() {
            let inputs: Vec<Tensor> = shapes.iter().map(|s| random(s, &mut rng)).collect();
            let report = grad_check(f, &inputs).unwrap();
            assert!(report.worst() < 1e-6, "{name} seed {seed}: {:?}", report.max_rel_err);
        }
    }
}

#[test]
fn adam_runs_are_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut store = ParamStore::new();
        let w = store.add("w", random(&[4, 3], &mut rng)).unwrap();
        let x = random(&[5, 4], &mut rng);
        let mut state = OptimizerState::new(&store);
        for _ in 0..10 {
            store.zero_grad();
            let mut g = Graph::new(&store);
            let xv = g.constant(x.clone());
            let wv = g.param(w);
            let y = g.matmul(xv, wv).unwrap();
            let y = g.gelu(y);
            let loss = g.sum_squares(y);
            let grads = g.backward(loss).unwrap();
            drop(g);
            store.accumulate(&grads, 1.0);
            adam_step(&mut store, &mut state, &AdamConfig::default()).unwrap();
        }
        store.get(w).value.clone()
    };
    let (a, b) = (run(), run());
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(values in prop::collection::vec(-1e3f64..1e3, 1..16)) {
        let n = values.len();
        let y = eval1(|g, x| g.softmax(x), Tensor::new(vec![n], values).unwrap());
        prop_assert!(y.data().iter().all(|&v| v >= 0.0));
        prop_assert!((y.sum() - 1.0).abs() < 1e-12);
    }
}
