use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_tensor(n: usize, c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..n * c * h * w)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Tensor::from_vec(n, c, h, w, data)
}

/// Direct nested-loop convolution used as an oracle.
fn naive_conv(conv: &Conv2d, x: &Tensor) -> Tensor {
    let (ho, wo) = conv.output_hw(x.h, x.w);
    let mut out = Tensor::zeros(x.n, conv.out_c, ho, wo);
    let k = conv.k;
    for n in 0..x.n {
        for co in 0..conv.out_c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = conv
                        .bias
                        .as_ref()
                        .map(|b| b.value[co] as f64)
                        .unwrap_or(0.0);
                    for ci in 0..conv.in_c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * conv.stride + ky * conv.dilation) as isize
                                    - conv.pad as isize;
                                let ix = (ox * conv.stride + kx * conv.dilation) as isize
                                    - conv.pad as isize;
                                if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                    continue;
                                }
                                let wv =
                                    conv.weight.value[((co * conv.in_c + ci) * k + ky) * k + kx];
                                acc += wv as f64 * x.at(n, ci, iy as usize, ix as usize) as f64;
                            }
                        }
                    }
                    out.data[((n * conv.out_c + co) * ho + oy) * wo + ox] = acc as f32;
                }
            }
        }
    }
    out
}

#[test]
fn conv_matches_direct_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for &(k, stride, pad, dil) in &[
        (3, 1, 1, 1),
        (3, 2, 1, 1),
        (3, 1, 2, 2),
        (3, 1, 6, 6),
        (1, 1, 0, 1),
        (1, 2, 0, 1),
        (5, 2, 2, 1),
    ] {
        let mut conv = Conv2d::new(3, 4, k, stride, pad, dil, true, &mut rng);
        for b in conv.bias.as_mut().unwrap().value.iter_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
        let x = random_tensor(2, 3, 9, 11, &mut rng);
        let y = conv.forward(&x);
        let oracle = naive_conv(&conv, &x);
        assert_eq!(y.shape(), oracle.shape());
        for (a, b) in y.data.iter().zip(&oracle.data) {
            assert!((a - b).abs() < 1e-5, "k{k} s{stride} d{dil}: {a} vs {b}");
        }
    }
}

/// Checks analytic gradients of `sum(r * f(x))` against central differences.
fn check_grad(
    mut f: impl FnMut(&Tensor, bool) -> Tensor,
    mut back: impl FnMut(&Tensor) -> Tensor,
    x: &Tensor,
    rng: &mut ChaCha8Rng,
) {
    let y = f(x, true);
    let r = random_tensor(y.n, y.c, y.h, y.w, rng);
    let dx = back(&r);
    let h = 1e-2f32;
    let max_g = dx.data.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    for idx in (0..x.data.len()).step_by(7) {
        let mut xp = x.clone();
        xp.data[idx] += h;
        let mut xm = x.clone();
        xm.data[idx] -= h;
        let lp: f64 = f(&xp, false)
            .data
            .iter()
            .zip(&r.data)
            .map(|(a, b)| (*a as f64) * (*b as f64))
            .sum();
        let lm: f64 = f(&xm, false)
            .data
            .iter()
            .zip(&r.data)
            .map(|(a, b)| (*a as f64) * (*b as f64))
            .sum();
        let fd = ((lp - lm) / (2.0 * h as f64)) as f32;
        assert!(
            (fd - dx.data[idx]).abs() <= 1e-2 * max_g.max(1e-3),
            "idx {idx}: fd {fd} vs {}",
            dx.data[idx]
        );
    }
}

#[test]
fn conv_input_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &(k, stride, pad, dil) in &[(3, 1, 1, 1), (3, 2, 1, 1), (3, 1, 2, 2), (1, 1, 0, 1)] {
        let conv = Conv2d::new(2, 3, k, stride, pad, dil, true, &mut rng);
        let x = random_tensor(2, 2, 7, 6, &mut rng);
        let mut c1 = conv.clone();
        let c2 = conv.clone();
        let shared = std::cell::RefCell::new(&mut c1);
        check_grad(
            |x, _| c2.forward(x),
            |r| {
                let mut c = shared.borrow_mut();
                c.forward_train(&x);
                c.backward(r, true).unwrap()
            },
            &x,
            &mut rng,
        );
    }
}

#[test]
fn conv_weight_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut conv = Conv2d::new(2, 3, 3, 2, 2, 2, true, &mut rng);
    let x = random_tensor(2, 2, 8, 7, &mut rng);
    let y = conv.forward_train(&x);
    let r = random_tensor(y.n, y.c, y.h, y.w, &mut rng);
    conv.backward(&r, false);
    let loss = |c: &mut Conv2d| -> f64 {
        c.forward(&x)
            .data
            .iter()
            .zip(&r.data)
            .map(|(a, b)| (*a as f64) * (*b as f64))
            .sum()
    };
    let h = 1e-2;
    for idx in 0..conv.weight.value.len() {
        let mut cp = conv.clone();
        cp.weight.value[idx] += h;
        let mut cm = conv.clone();
        cm.weight.value[idx] -= h;
        let fd = (loss(&mut cp) - loss(&mut cm)) / (2.0 * h as f64);
        assert!((fd - conv.weight.grad[idx] as f64).abs() < 2e-3, "w{idx}");
    }
    for idx in 0..3 {
        let mut cp = conv.clone();
        cp.bias.as_mut().unwrap().value[idx] += h;
        let mut cm = conv.clone();
        cm.bias.as_mut().unwrap().value[idx] -= h;
        let fd = (loss(&mut cp) - loss(&mut cm)) / (2.0 * h as f64);
        assert!((fd - conv.bias.as_ref().unwrap().grad[idx] as f64).abs() < 2e-3);
    }
}

#[test]
fn block_input_gradient_with_batchnorm() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // ReLU kinks make central differences unreliable at this step size
    for act in [Activation::Mish, Activation::Identity] {
        let block = ConvBlock::new(2, 3, 3, 1, 1, true, act, &mut rng);
        let x = random_tensor(3, 2, 5, 5, &mut rng);
        let mut b1 = block.clone();
        // batch statistics depend on the whole batch, so difference in training mode
        let b2 = std::cell::RefCell::new(block.clone());
        check_grad(
            |x, _| b2.borrow_mut().forward_train(x),
            |r| {
                b1.forward_train(&x);
                b1.backward(r, true).unwrap()
            },
            &x,
            &mut rng,
        );
    }
}

#[test]
fn nearest_and_pool_adjoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_tensor(1, 2, 3, 4, &mut rng);
    let y = random_tensor(1, 2, 6, 8, &mut rng);
    let lhs: f32 = upsample_nearest2(&x)
        .data
        .iter()
        .zip(&y.data)
        .map(|(a, b)| a * b)
        .sum();
    let rhs: f32 = x
        .data
        .iter()
        .zip(&upsample_nearest2_backward(&y).data)
        .map(|(a, b)| a * b)
        .sum();
    assert!((lhs - rhs).abs() < 1e-4);
    let g = random_tensor(1, 2, 1, 1, &mut rng);
    let lhs: f32 = global_avg_pool(&x)
        .data
        .iter()
        .zip(&g.data)
        .map(|(a, b)| a * b)
        .sum();
    let rhs: f32 = x
        .data
        .iter()
        .zip(&global_avg_pool_backward(&g, 3, 4).data)
        .map(|(a, b)| a * b)
        .sum();
    assert!((lhs - rhs).abs() < 1e-5);
}

#[test]
fn concat_split_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = random_tensor(2, 2, 3, 3, &mut rng);
    let b = random_tensor(2, 3, 3, 3, &mut rng);
    let c = concat_channels(&[&a, &b]);
    let parts = split_channels(&c, &[2, 3]);
    assert_eq!(parts[0], a);
    assert_eq!(parts[1], b);
}

#[test]
fn weight_blob_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut block = ConvBlock::new(2, 3, 3, 1, 1, true, Activation::Relu, &mut rng);
    block.bn.as_mut().unwrap().running_mean[1] = 0.25;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    save_weights(&mut block, &path).unwrap();
    let mut other = ConvBlock::new(
        2,
        3,
        3,
        1,
        1,
        true,
        Activation::Relu,
        &mut ChaCha8Rng::seed_from_u64(99),
    );
    load_weights(&mut other, &path).unwrap();
    assert_eq!(other.state_vec(), block.state_vec());
    let mut wrong = ConvBlock::new(2, 4, 3, 1, 1, true, Activation::Relu, &mut rng);
    assert!(load_weights(&mut wrong, &path).is_err());
}

#[test]
fn adam_decreases_quadratic() {
    struct Quad(Param);
    impl Module for Quad {
        fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
            f(&mut self.0);
        }
    }
    let mut q = Quad(Param::filled(3, 5.0));
    let mut opt = Adam::new(0.1, 0.0);
    for _ in 0..300 {
        for k in 0..3 {
            q.0.grad[k] = 2.0 * q.0.value[k];
        }
        opt.step(&mut q, 1.0);
    }
    assert!(q.0.value.iter().all(|v| v.abs() < 0.1));
}
