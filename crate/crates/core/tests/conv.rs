use convmatch::tensor::ops::{conv1d_same, conv2d_same};
use convmatch::tensor::Tensor;
use proptest::prelude::*;

fn tensor(shape: &'static [usize]) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-1.0f64..1.0, n).prop_map(move |d| Tensor::new(shape, d).unwrap())
}

fn close(a: &Tensor<f64>, b: &Tensor<f64>) -> bool {
    a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= 1e-12)
}

fn combine(a: f64, x: &Tensor<f64>, b: f64, y: &Tensor<f64>) -> Tensor<f64> {
    let data = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
    Tensor::new(x.shape(), data).unwrap()
}

/// Direct same-padded sum with the kernel centred at `(k - 1) / 2`.
fn naive_conv2d(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (h, w, ci) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kh, kw, co) = (k.shape()[0], k.shape()[1], k.shape()[3]);
    let mut out = vec![0.0; h * w * co];
    for i in 0..h {
        for j in 0..w {
            for o in 0..co {
                let mut s = b.data()[o];
                for a in 0..kh {
                    for c in 0..kw {
                        let (r, q) = (i as isize + a as isize - ((kh - 1) / 2) as isize, j as isize + c as isize - ((kw - 1) / 2) as isize);
                        if r < 0 || q < 0 || r >= h as isize || q >= w as isize {
                            continue;
                        }
                        for m in 0..ci {
                            s += x.data()[(r as usize * w + q as usize) * ci + m]
                                * k.data()[((a * kw + c) * ci + m) * co + o];
                        }
                    }
                }
                out[(i * w + j) * co + o] = s;
            }
        }
    }
    Tensor::new(&[h, w, co], out).unwrap()
}

proptest! {
    #[test]
    fn conv2d_is_linear_in_its_input(
        x in tensor(&[3, 5, 2]),
        y in tensor(&[3, 5, 2]),
        k in tensor(&[3, 3, 2, 2]),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let zero = Tensor::zeros(&[2]);
        let lhs = conv2d_same(&combine(a, &x, b, &y), &k, &zero).unwrap();
        let rhs = combine(a, &conv2d_same(&x, &k, &zero).unwrap(), b, &conv2d_same(&y, &k, &zero).unwrap());
        prop_assert!(close(&lhs, &rhs));
    }

    #[test]
    fn conv1d_is_linear_in_its_kernel(
        x in tensor(&[6, 3]),
        k in tensor(&[3, 3, 2]),
        j in tensor(&[3, 3, 2]),
        a in -2.0f64..2.0,
    ) {
        let zero = Tensor::zeros(&[2]);
        let lhs = conv1d_same(&x, &combine(a, &k, 1.0, &j), &zero).unwrap();
        let rhs = combine(a, &conv1d_same(&x, &k, &zero).unwrap(), 1.0, &conv1d_same(&x, &j, &zero).unwrap());
        prop_assert!(close(&lhs, &rhs));
    }

    #[test]
    fn conv2d_matches_the_direct_sum(
        x in tensor(&[4, 5, 2]),
        k in tensor(&[3, 1, 2, 3]),
        b in tensor(&[3]),
    ) {
        prop_assert!(close(&conv2d_same(&x, &k, &b).unwrap(), &naive_conv2d(&x, &k, &b)));
    }
}
