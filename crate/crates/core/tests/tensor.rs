use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempsal::autodiff::{Tape, Var};
use tempsal::tensor::{concat_channels, conv2d_forward, resize_forward, Tensor, TensorError};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn naive_conv(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize) -> Vec<f64> {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let o = k.shape()[0];
    let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
    let mut out = vec![0.0; n * o * oh * ow];
    for bi in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[oc];
                    for ic in 0..c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * stride + ky) as isize - 1;
                                let ix = (ox * stride + kx) as isize - 1;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x.data()[((bi * c + ic) * h + iy as usize) * w + ix as usize];
                                acc += xv * k.data()[((oc * c + ic) * 3 + ky) * 3 + kx];
                            }
                        }
                    }
                    out[((bi * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (shape, o, stride) in [([1, 1, 4, 4], 1, 1), ([2, 3, 5, 6], 4, 1), ([1, 2, 8, 8], 3, 2), ([1, 2, 7, 5], 2, 2)] {
        let x = random(&shape, &mut rng);
        let k = random(&[o, shape[1], 3, 3], &mut rng);
        let b = random(&[o], &mut rng);
        let y = conv2d_forward(&x, &k, &b, stride).unwrap();
        let want = naive_conv(&x, &k, &b, stride);
        let diff = y.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{shape:?}: {diff}");
    }
}

#[test]
fn conv_special_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[1, 2, 5, 5], &mut rng);
    let b = Tensor::new(vec![2], vec![0.5, -1.5]).unwrap();
    let y = conv2d_forward(&x, &Tensor::zeros(&[2, 2, 3, 3]), &b, 1).unwrap();
    assert!(y.data()[..25].iter().all(|&v| v == 0.5));
    assert!(y.data()[25..].iter().all(|&v| v == -1.5));

    let x = random(&[1, 1, 6, 4], &mut rng);
    let mut id = vec![0.0; 9];
    id[4] = 1.0;
    let y = conv2d_forward(&x, &Tensor::new(vec![1, 1, 3, 3], id).unwrap(), &Tensor::zeros(&[1]), 1).unwrap();
    assert_eq!(y, x);
}

#[test]
fn conv_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&[1, 2, 6, 6], &mut rng);
    let b = random(&[1, 2, 6, 6], &mut rng);
    let k = random(&[3, 2, 3, 3], &mut rng);
    let zero = Tensor::zeros(&[3]);
    let lhs = conv2d_forward(&a.scale(2.0).add(&b.scale(-0.5)).unwrap(), &k, &zero, 1).unwrap();
    let rhs = conv2d_forward(&a, &k, &zero, 1)
        .unwrap()
        .scale(2.0)
        .add(&conv2d_forward(&b, &k, &zero, 1).unwrap().scale(-0.5))
        .unwrap();
    assert!(lhs.max_abs_diff(&rhs) < 1e-10);
}

fn half_pixel_sample(src: &[f64], h: usize, w: usize, oh: usize, ow: usize, oy: usize, ox: usize) -> f64 {
    let coord = |o: usize, out: usize, inp: usize| ((o as f64 + 0.5) * inp as f64 / out as f64 - 0.5).max(0.0);
    let (sy, sx) = (coord(oy, oh, h), coord(ox, ow, w));
    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
    let at = |y: usize, x: usize| src[y * w + x];
    (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1))
}

#[test]
fn upsampling_matches_per_pixel_formula() {
    let ramp = Tensor::new(vec![1, 1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let mut tape = Tape::new();
    let v = tape.constant(ramp.clone());
    let up = tape.upsample_bilinear(v, 2).unwrap();
    let got = tape.value(up);
    assert_eq!(got.shape(), &[1, 1, 4, 4]);
    for oy in 0..4 {
        for ox in 0..4 {
            let want = half_pixel_sample(ramp.data(), 2, 2, 4, 4, oy, ox);
            assert!((got.data()[oy * 4 + ox] - want).abs() < 1e-15);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[1, 1, 5, 3], &mut rng);
    let r = resize_forward(&x, 7, 11).unwrap();
    for oy in 0..7 {
        for ox in 0..11 {
            let want = half_pixel_sample(x.data(), 5, 3, 7, 11, oy, ox);
            assert!((r.data()[oy * 11 + ox] - want).abs() < 1e-14);
        }
    }
}

#[test]
fn upsampling_preserves_constants() {
    for factor in [1, 2, 3, 5] {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::full(&[1, 2, 3, 4], 0.7));
        let up = tape.upsample_bilinear(v, factor).unwrap();
        assert!(tape.value(up).data().iter().all(|&x| (x - 0.7).abs() < 1e-15));
    }
}

#[test]
fn concat_split_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random(&[2, 1, 3, 3], &mut rng);
    let b = random(&[2, 3, 3, 3], &mut rng);
    let c = concat_channels(&[&a, &b]).unwrap();
    let parts = c.split_channels(&[1, 3]).unwrap();
    assert_eq!(parts, vec![a, b]);
    assert!(matches!(c.split_channels(&[1, 1]), Err(TensorError::Shape { .. })));
}

#[test]
fn relu_values() {
    let mut tape = Tape::new();
    let v = tape.constant(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
    let r = tape.relu(v).unwrap();
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
}

/// Central differences over every input entry of a scalar function of one tape variable.
fn check(name: &str, x: &Tensor, f: impl Fn(&mut Tape, Var) -> Var) {
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let out = f(&mut tape, v);
    let g = tape.backward(out).unwrap().get_or_zeros(&tape, v);
    let h = 1e-6;
    for i in 0..x.numel() {
        let at = |d: f64| {
            let mut data = x.data().to_vec();
            data[i] += d;
            let mut t = Tape::new();
            let v = t.leaf(Tensor::new(x.shape().to_vec(), data).unwrap());
            let o = f(&mut t, v);
            t.value(o).item()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let a = g.data()[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        assert!(rel < 1e-5, "{name}[{i}]: analytic {a} numeric {fd}");
    }
}

#[test]
fn every_primitive_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[2, 3, 4, 4], &mut rng);
    let weights = random(&[2, 3, 4, 4], &mut rng);
    let k = random(&[2, 3, 3, 3], &mut rng);
    let kb = random(&[2], &mut rng);
    let other = random(&[2, 3, 4, 4], &mut rng);
    let target = Tensor::new(vec![2, 3, 4, 4], (0..96).map(|_| rng.random_range(0.1..1.0)).collect()).unwrap();
    let positive = x.map(|v| v.abs() + 0.1);
    let w = weights.clone();
    let loss = move |t: &mut Tape, y: Var| t.weighted_sum(y, w.clone()).unwrap();

    check("conv", &x, |t, v| {
        let (kk, bb) = (t.constant(k.clone()), t.constant(kb.clone()));
        let y = t.conv2d(v, kk, bb).unwrap();
        t.sum(y).unwrap()
    });
    check("conv kernel", &k, |t, v| {
        let (xx, bb) = (t.constant(x.clone()), t.constant(kb.clone()));
        let y = t.conv2d_strided(xx, v, bb, 2).unwrap();
        let y = t.sigmoid(y).unwrap();
        t.sum(y).unwrap()
    });
    check("conv bias", &kb, |t, v| {
        let (xx, kk) = (t.constant(x.clone()), t.constant(k.clone()));
        let y = t.conv2d(xx, kk, v).unwrap();
        let y = t.sigmoid(y).unwrap();
        t.sum(y).unwrap()
    });
    check("relu", &x, |t, v| {
        let y = t.relu(v).unwrap();
        loss(t, y)
    });
    check("sigmoid", &x, |t, v| {
        let y = t.sigmoid(v).unwrap();
        loss(t, y)
    });
    check("add/sub/scale", &x, |t, v| {
        let o = t.constant(other.clone());
        let a = t.add(v, o).unwrap();
        let s = t.sub(a, v).unwrap();
        let s = t.add(s, v).unwrap();
        let y = t.scale(s, -2.5).unwrap();
        loss(t, y)
    });
    check("concat/narrow", &x, |t, v| {
        let o = t.constant(other.clone());
        let c = t.concat_channels(&[o, v, v]).unwrap();
        let n = t.narrow_channels(c, 2, 3).unwrap();
        let s = t.sigmoid(n).unwrap();
        loss(t, s)
    });
    check("upsample", &x, |t, v| {
        let u = t.upsample_bilinear(v, 2).unwrap();
        let s = t.sigmoid(u).unwrap();
        t.sum(s).unwrap()
    });
    check("resize", &x, |t, v| {
        let u = t.resize_bilinear(v, 3, 7).unwrap();
        let s = t.sigmoid(u).unwrap();
        t.sum(s).unwrap()
    });
    check("channel mean", &x, |t, v| {
        let m = t.channel_mean(v).unwrap();
        let s = t.sigmoid(m).unwrap();
        t.sum(s).unwrap()
    });
    check("mean", &x, |t, v| {
        let s = t.sigmoid(v).unwrap();
        t.mean(s).unwrap()
    });
    check("std", &x, |t, v| t.std(v).unwrap());
    check("minmax", &x, |t, v| {
        let m = t.minmax_normalize(v).unwrap();
        loss(t, m)
    });
    check("pearson", &x, |t, v| {
        let p = t.pearson_per_map(v, &target).unwrap();
        t.sum(p).unwrap()
    });
    check("kl", &positive, |t, v| {
        let p = t.kl_per_map(v, &target, 1e-7).unwrap();
        t.sum(p).unwrap()
    });
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&[1, 2, 8, 8], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let mut tape = Tape::new();
        let (xv, kv, bv) = (tape.leaf(x), tape.leaf(k), tape.constant(Tensor::zeros(&[3])));
        let y = tape.conv2d_strided(xv, kv, bv, 2).unwrap();
        let y = tape.upsample_bilinear(y, 2).unwrap();
        let l = tape.std(y).unwrap();
        let g = tape.backward(l).unwrap();
        (tape.value(l).item(), g.get(kv).unwrap().clone(), g.get(xv).unwrap().clone())
    };
    assert_eq!(run(), run());
}

#[test]
fn non_finite_values_are_rejected() {
    let mut tape = Tape::new();
    let v = tape.constant(Tensor::full(&[2], 1e308));
    assert!(matches!(tape.scale(v, 10.0), Err(TensorError::NonFinite(_))));
    assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
}
