use nuwave::rng::Rng;
use nuwave::tensor::kernels::{self, ConvDims};
use nuwave::tensor::{Backend, Graph, Tensor, Var};
use proptest::prelude::*;

type Op = dyn Fn(&mut Graph<f64>, &[Var]) -> Var;

/// Checks d/dx sum(w * f(x)) against central differences for every input entry.
fn check(inputs: Vec<Tensor<f64>>, f: &Op, tol: f64) {
    let eval = |xs: &[Tensor<f64>]| -> (f64, Vec<Tensor<f64>>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.param(t)).collect();
        let out = f(&mut g, &vars);
        let shape = g.value(&out).shape().to_vec();
        let n: usize = shape.iter().product();
        let weights: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 4.0).collect();
        let w = g.input(Tensor::new(shape, weights).unwrap());
        let prod = g.mul(&out, &w).unwrap();
        let loss = g.sum(&prod).unwrap();
        let v = g.value(&loss).item().unwrap();
        (v, g.grad(&loss, &vars).unwrap())
    };
    let (_, grads) = eval(&inputs);
    let h = 1e-6;
    for (a, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let mut plus = inputs.clone();
            plus[a].data_mut()[i] += h;
            let mut minus = inputs.clone();
            minus[a].data_mut()[i] -= h;
            let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
            let an = grads[a].data()[i];
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1.0);
            assert!(err < tol, "input {a}[{i}]: analytic {an}, numeric {fd}");
        }
    }
}

fn randn(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    rng.randn(shape)
}

#[test]
fn conv1d_all_inputs() {
    let mut rng = Rng::new(1);
    for d in [1, 2, 5] {
        let x = randn(&mut rng, &[3, 11]);
        let w = randn(&mut rng, &[4, 3, 3]);
        let b = randn(&mut rng, &[4]);
        check(vec![x, w, b], &move |g, v| g.conv1d(&v[0], &v[1], &v[2], d).unwrap(), 1e-7);
    }
}

#[test]
fn linear_all_inputs() {
    let mut rng = Rng::new(2);
    let x = randn(&mut rng, &[5]);
    let w = randn(&mut rng, &[3, 5]);
    let b = randn(&mut rng, &[3]);
    check(vec![x, w, b], &|g, v| g.linear(&v[0], &v[1], &v[2]).unwrap(), 1e-7);
}

#[test]
fn elementwise_binary() {
    let mut rng = Rng::new(3);
    let a = randn(&mut rng, &[2, 6]);
    let b = randn(&mut rng, &[2, 6]);
    check(vec![a.clone(), b.clone()], &|g, v| g.add(&v[0], &v[1]).unwrap(), 1e-7);
    check(vec![a.clone(), b.clone()], &|g, v| g.sub(&v[0], &v[1]).unwrap(), 1e-7);
    check(vec![a, b], &|g, v| g.mul(&v[0], &v[1]).unwrap(), 1e-7);
}

#[test]
fn elementwise_unary() {
    let mut rng = Rng::new(4);
    let a = randn(&mut rng, &[2, 7]);
    check(vec![a.clone()], &|g, v| g.tanh(&v[0]).unwrap(), 1e-7);
    check(vec![a.clone()], &|g, v| g.sigmoid(&v[0]).unwrap(), 1e-7);
    check(vec![a.clone()], &|g, v| g.silu(&v[0]).unwrap(), 1e-7);
    check(vec![a.clone()], &|g, v| g.scale(&v[0], -0.7).unwrap(), 1e-7);
    // entries kept away from the kinks at 0 and at the floor
    let away = a.map(|x| if x.abs() < 0.05 { 0.3 } else { x });
    check(vec![away.clone()], &|g, v| g.abs(&v[0]).unwrap(), 1e-7);
    check(vec![away.clone()], &|g, v| g.clamp_min(&v[0], 0.0).unwrap(), 1e-7);
    let pos = a.map(|x| x.abs() + 0.5);
    check(vec![pos], &|g, v| g.log(&v[0]).unwrap(), 1e-7);
}

#[test]
fn reductions_and_shape_ops() {
    let mut rng = Rng::new(5);
    let a = randn(&mut rng, &[3, 4]);
    check(vec![a.clone()], &|g, v| g.sum(&v[0]).unwrap(), 1e-7);
    check(vec![a.clone()], &|g, v| g.mean(&v[0]).unwrap(), 1e-7);
    check(vec![a.clone()], &|g, v| g.narrow(&v[0], 1, 2).unwrap(), 1e-7);
    check(vec![a.clone()], &|g, v| g.reshape(&v[0], vec![12]).unwrap(), 1e-7);
    let bias = randn(&mut rng, &[3]);
    check(vec![a.clone(), bias], &|g, v| g.add_channel_bias(&v[0], &v[1]).unwrap(), 1e-7);
    for r in [2, 3] {
        check(vec![a.clone()], &move |g, v| g.interp(&v[0], r, 4 * r).unwrap(), 1e-7);
    }
}

#[test]
fn composed_gated_unit() {
    let mut rng = Rng::new(6);
    let x = randn(&mut rng, &[2, 9]);
    let w = randn(&mut rng, &[4, 2, 3]);
    let b = randn(&mut rng, &[4]);
    check(
        vec![x, w, b],
        &|g, v| {
            let z = g.conv1d(&v[0], &v[1], &v[2], 2).unwrap();
            let f = g.narrow(&z, 0, 2).unwrap();
            let f = g.tanh(&f).unwrap();
            let s = g.narrow(&z, 2, 2).unwrap();
            let s = g.sigmoid(&s).unwrap();
            let m = g.mul(&f, &s).unwrap();
            g.add(&m, &v[0]).unwrap()
        },
        1e-7,
    );
}

fn naive_conv(x: &[f64], w: &[f64], b: &[f64], d: ConvDims) -> Vec<f64> {
    let mut out = vec![0.0; d.out_channels * d.length];
    for o in 0..d.out_channels {
        for t in 0..d.length {
            let mut acc = b[o];
            for i in 0..d.in_channels {
                for k in 0..d.kernel {
                    let pos = t as isize + (k as isize - (d.kernel / 2) as isize) * d.dilation as isize;
                    if pos >= 0 && (pos as usize) < d.length {
                        acc += w[(o * d.in_channels + i) * d.kernel + k] * x[i * d.length + pos as usize];
                    }
                }
            }
            out[o * d.length + t] = acc;
        }
    }
    out
}

proptest! {
    #[test]
    fn conv1d_matches_naive_loop_bitwise(
        c_in in 1usize..4, c_out in 1usize..4, half in 0usize..3, length in 1usize..40, dilation in 1usize..9, seed in 0u64..1000
    ) {
        let kernel = 2 * half + 1;
        let mut rng = Rng::new(seed);
        let x: Vec<f64> = rng.normal_vec(c_in * length);
        let w: Vec<f64> = rng.normal_vec(c_out * c_in * kernel);
        let b: Vec<f64> = rng.normal_vec(c_out);
        let dims = ConvDims { in_channels: c_in, out_channels: c_out, kernel, length, dilation };
        prop_assert_eq!(kernels::conv1d(&x, &w, &b, dims), naive_conv(&x, &w, &b, dims));
    }
}
