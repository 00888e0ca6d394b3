//! Instance normalization, activations, pooling, and channel concatenation.

use ndarray::{s, Array2, Array4, Axis};
use rand_chacha::ChaCha8Rng;

use super::{Param, Real};

/// Per-sample, per-channel normalization over the spatial dimensions with a
/// learnable affine. The batch-size-1 regime of this training loop makes it
/// equivalent to batch norm with batch statistics at train and test time.
#[derive(Debug, Clone)]
pub struct InstanceNorm2d<F> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    eps: f64,
}

/// Values retained for the backward pass.
pub struct NormCache<F> {
    xhat: Array4<F>,
    inv_std: Array2<F>,
}

impl<F: Real> InstanceNorm2d<F> {
    pub fn new(channels: usize, _rng: &mut ChaCha8Rng) -> Self {
        InstanceNorm2d {
            gamma: Param::new(ndarray::ArrayD::ones(vec![channels])),
            beta: Param::new(ndarray::ArrayD::zeros(vec![channels])),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Array4<F>) -> (Array4<F>, NormCache<F>) {
        let (n, c, h, w) = x.dim();
        let m = F::of((h * w) as f64);
        let eps = F::of(self.eps);
        let mut xhat = Array4::zeros((n, c, h, w));
        let mut inv_std = Array2::zeros((n, c));
        for b in 0..n {
            for ch in 0..c {
                let plane = x.slice(s![b, ch, .., ..]);
                let mean = plane.sum() / m;
                let var = plane.fold(F::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / m;
                let istd = F::one() / (var + eps).sqrt();
                inv_std[[b, ch]] = istd;
                let mut out = xhat.slice_mut(s![b, ch, .., ..]);
                out.assign(&plane);
                out.mapv_inplace(|v| (v - mean) * istd);
            }
        }
        let y = self.scale(&xhat);
        (y, NormCache { xhat, inv_std })
    }

    /// Forward without keeping the cache.
    pub fn forward_eval(&self, x: &Array4<F>) -> Array4<F> {
        self.forward(x).0
    }

    fn scale(&self, xhat: &Array4<F>) -> Array4<F> {
        let c = xhat.dim().1;
        let mut y = xhat.clone();
        for ch in 0..c {
            let g = self.gamma.value[[ch]];
            let b = self.beta.value[[ch]];
            y.slice_mut(s![.., ch, .., ..]).mapv_inplace(|v| v * g + b);
        }
        y
    }

    pub fn backward(&mut self, cache: &NormCache<F>, dy: &Array4<F>) -> Array4<F> {
        let (n, c, h, w) = dy.dim();
        let m = F::of((h * w) as f64);
        let mut dx = Array4::zeros((n, c, h, w));
        for ch in 0..c {
            let g = self.gamma.value[[ch]];
            let mut dgamma = F::zero();
            let mut dbeta = F::zero();
            for b in 0..n {
                let dy_p = dy.slice(s![b, ch, .., ..]);
                let xhat_p = cache.xhat.slice(s![b, ch, .., ..]);
                let istd = cache.inv_std[[b, ch]];
                let sum_dy = dy_p.sum();
                let sum_dy_xhat = (&dy_p * &xhat_p).sum();
                dgamma = dgamma + sum_dy_xhat;
                dbeta = dbeta + sum_dy;
                let mut dx_p = dx.slice_mut(s![b, ch, .., ..]);
                // dx = istd/m * (m*g*dy - g*sum(dy) - xhat*g*sum(dy*xhat))
                ndarray::Zip::from(&mut dx_p)
                    .and(&dy_p)
                    .and(&xhat_p)
                    .for_each(|d, &dyv, &xh| {
                        *d = istd / m * (m * g * dyv - g * sum_dy - xh * g * sum_dy_xhat);
                    });
            }
            self.gamma.grad[[ch]] = self.gamma.grad[[ch]] + dgamma;
            self.beta.grad[[ch]] = self.beta.grad[[ch]] + dbeta;
        }
        dx
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        vec![&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

pub fn leaky_relu<F: Real>(x: &Array4<F>, slope: f64) -> Array4<F> {
    let a = F::of(slope);
    x.mapv(|v| if v > F::zero() { v } else { v * a })
}

pub fn leaky_relu_backward<F: Real>(x: &Array4<F>, dy: &Array4<F>, slope: f64) -> Array4<F> {
    let a = F::of(slope);
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(x).for_each(|d, &v| {
        if v <= F::zero() {
            *d = *d * a;
        }
    });
    dx
}

pub fn tanh_forward<F: Real>(x: &Array4<F>) -> Array4<F> {
    x.mapv(|v| v.tanh())
}

/// Backward through tanh given the forward *output*.
pub fn tanh_backward<F: Real>(y: &Array4<F>, dy: &Array4<F>) -> Array4<F> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|d, &yv| {
        *d = *d * (F::one() - yv * yv);
    });
    dx
}

/// 2x2 max pooling with stride 2. Returns the pooled tensor and the winning
/// quadrant index per output element.
pub fn maxpool2<F: Real>(x: &Array4<F>) -> (Array4<F>, Array4<u8>) {
    let (n, c, h, w) = x.dim();
    assert!(h % 2 == 0 && w % 2 == 0, "maxpool2 needs even spatial dims");
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Array4::zeros((n, c, ho, wo));
    let mut idx = Array4::zeros((n, c, ho, wo));
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = x[[b, ch, oy * 2, ox * 2]];
                    let mut best_q = 0u8;
                    for q in 1..4u8 {
                        let (dy, dx) = ((q / 2) as usize, (q % 2) as usize);
                        let v = x[[b, ch, oy * 2 + dy, ox * 2 + dx]];
                        if v > best {
                            best = v;
                            best_q = q;
                        }
                    }
                    y[[b, ch, oy, ox]] = best;
                    idx[[b, ch, oy, ox]] = best_q;
                }
            }
        }
    }
    (y, idx)
}

pub fn maxpool2_backward<F: Real>(dy: &Array4<F>, idx: &Array4<u8>) -> Array4<F> {
    let (n, c, ho, wo) = dy.dim();
    let mut dx = Array4::zeros((n, c, ho * 2, wo * 2));
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let q = idx[[b, ch, oy, ox]];
                    let (qy, qx) = ((q / 2) as usize, (q % 2) as usize);
                    dx[[b, ch, oy * 2 + qy, ox * 2 + qx]] = dy[[b, ch, oy, ox]];
                }
            }
        }
    }
    dx
}

/// Concatenate along the channel axis.
pub fn concat_channels<F: Real>(parts: &[&Array4<F>]) -> Array4<F> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("matching spatial dims")
}

/// Split a channel-axis gradient back into per-input gradients.
pub fn split_channels<F: Real>(d: &Array4<F>, sizes: &[usize]) -> Vec<Array4<F>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &size in sizes {
        out.push(d.slice(s![.., start..start + size, .., ..]).to_owned());
        start += size;
    }
    assert_eq!(start, d.dim().1, "split sizes must cover all channels");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;
    use rand::{Rng, SeedableRng};

    fn random4(shape: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) -> Array4<f64> {
        Array4::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
    }

    fn fd_grad(target: &mut ArrayD<f64>, mut loss: impl FnMut(&ArrayD<f64>) -> f64) -> ArrayD<f64> {
        let h = 1e-5;
        let mut grad = ArrayD::zeros(target.raw_dim());
        for idx in 0..target.len() {
            let orig = target.as_slice_mut().unwrap()[idx];
            target.as_slice_mut().unwrap()[idx] = orig + h;
            let up = loss(target);
            target.as_slice_mut().unwrap()[idx] = orig - h;
            let down = loss(target);
            target.as_slice_mut().unwrap()[idx] = orig;
            grad.as_slice_mut().unwrap()[idx] = (up - down) / (2.0 * h);
        }
        grad
    }

    fn assert_close(analytic: &ArrayD<f64>, numeric: &ArrayD<f64>, tol: f64) {
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            let denom = a.abs().max(n.abs()).max(1e-6);
            assert!(((a - n) / denom).abs() < tol, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn instance_norm_normalizes_and_backprops() {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let mut norm = InstanceNorm2d::<f64>::new(3, &mut r);
        // Non-trivial affine so the gradient check covers it.
        norm.gamma.value[[1]] = 1.5;
        norm.beta.value[[2]] = -0.3;
        let x = random4((2, 3, 4, 4), &mut r);
        let (y, cache) = norm.forward(&x);
        // Per-plane mean ~0 and unit variance before the affine.
        let plane = cache.xhat.slice(s![0, 0, .., ..]);
        assert!(plane.sum().abs() < 1e-9);

        let proj = random4((2, 3, 4, 4), &mut r);
        let dx = norm.backward(&cache, &proj);
        let _ = y;

        let mut x_dyn = x.clone().into_dyn();
        let fd_dx = fd_grad(&mut x_dyn, |t| {
            let xt = t.view().into_dimensionality().unwrap().to_owned();
            (&norm.forward(&xt).0 * &proj).sum()
        });
        assert_close(&dx.into_dyn(), &fd_dx, 1e-5);

        let mut g_dyn = norm.gamma.value.clone();
        let fd_dgamma = fd_grad(&mut g_dyn, |t| {
            let mut probe = norm.clone();
            probe.gamma.value = t.clone();
            (&probe.forward(&x).0 * &proj).sum()
        });
        assert_close(&norm.gamma.grad, &fd_dgamma, 1e-5);

        let mut b_dyn = norm.beta.value.clone();
        let fd_dbeta = fd_grad(&mut b_dyn, |t| {
            let mut probe = norm.clone();
            probe.beta.value = t.clone();
            (&probe.forward(&x).0 * &proj).sum()
        });
        assert_close(&norm.beta.grad, &fd_dbeta, 1e-5);
    }

    #[test]
    fn activations_backprop() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let x = random4((1, 2, 3, 3), &mut r);
        let proj = random4((1, 2, 3, 3), &mut r);

        let dx = leaky_relu_backward(&x, &proj, 0.2);
        let mut x_dyn = x.clone().into_dyn();
        let fd = fd_grad(&mut x_dyn, |t| {
            let xt = t.view().into_dimensionality().unwrap().to_owned();
            (&leaky_relu(&xt, 0.2) * &proj).sum()
        });
        assert_close(&dx.into_dyn(), &fd, 1e-5);

        let y = tanh_forward(&x);
        let dx = tanh_backward(&y, &proj);
        let mut x_dyn = x.clone().into_dyn();
        let fd = fd_grad(&mut x_dyn, |t| {
            let xt = t.view().into_dimensionality().unwrap().to_owned();
            (&tanh_forward(&xt) * &proj).sum()
        });
        assert_close(&dx.into_dyn(), &fd, 1e-5);
    }

    #[test]
    fn maxpool_routes_gradients_to_the_argmax() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let x = random4((1, 2, 6, 6), &mut r);
        let (y, idx) = maxpool2(&x);
        assert_eq!(y.dim(), (1, 2, 3, 3));
        let proj = random4((1, 2, 3, 3), &mut r);
        let dx = maxpool2_backward(&proj, &idx);
        let mut x_dyn = x.clone().into_dyn();
        let fd = fd_grad(&mut x_dyn, |t| {
            let xt = t.view().into_dimensionality().unwrap().to_owned();
            (&maxpool2(&xt).0 * &proj).sum()
        });
        assert_close(&dx.into_dyn(), &fd, 1e-5);
    }

    #[test]
    fn concat_then_split_round_trips() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let a = random4((1, 2, 4, 4), &mut r);
        let b = random4((1, 3, 4, 4), &mut r);
        let cat = concat_channels(&[&a, &b]);
        assert_eq!(cat.dim(), (1, 5, 4, 4));
        let parts = split_channels(&cat, &[2, 3]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
