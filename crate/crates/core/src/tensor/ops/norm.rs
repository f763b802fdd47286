use crate::error::{Error, Result};
use crate::tensor::{Element, NdArray, Tensor};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Per-sample, per-channel standardization over the spatial extent followed
/// by a per-channel affine map.
pub fn instance_norm<E: Element>(x: &Tensor<E>, gamma: &Tensor<E>, beta: &Tensor<E>, eps: f64) -> Result<Tensor<E>> {
    let [n, c, h, w] = x.value().dims4("instance_norm")?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(
            "instance_norm",
            format!("affine shapes {:?}/{:?}, expected [{c}]", gamma.shape(), beta.shape()),
        ));
    }
    let m = h * w;
    if m == 0 {
        return Err(Error::shape("instance_norm", "empty spatial extent"));
    }
    let mf = E::from_usize(m).unwrap();
    let mut xhat = NdArray::zeros(x.shape().to_vec());
    let mut inv_std = vec![E::zero(); n * c];
    let mut out = NdArray::zeros(x.shape().to_vec());
    {
        let xv = x.value().data();
        let (gv, bv) = (gamma.value().data(), beta.value().data());
        for s in 0..n {
            for ch in 0..c {
                let k = s * c + ch;
                let plane = &xv[k * m..(k + 1) * m];
                // statistics accumulate in f64 so constant planes stay exactly constant
                let mean64 = plane.iter().map(|v| v.as_f64()).sum::<f64>() / m as f64;
                let var64 = plane.iter().map(|v| (v.as_f64() - mean64).powi(2)).sum::<f64>() / m as f64;
                let mean = E::from_f64_lossy(mean64);
                let is = E::from_f64_lossy(1.0 / (var64 + eps).sqrt());
                inv_std[k] = is;
                let xh = &mut xhat.data_mut()[k * m..(k + 1) * m];
                let o = &mut out.data_mut()[k * m..(k + 1) * m];
                for i in 0..m {
                    xh[i] = (plane[i] - mean) * is;
                    o[i] = gv[ch] * xh[i] + bv[ch];
                }
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        &[x, gamma, beta],
        Box::new(move |grad, parents, _| {
            let (x, gamma, beta) = (&parents[0], &parents[1], &parents[2]);
            let gd = grad.data();
            let xh = xhat.data();
            let gv = gamma.value().data();
            let mut dx = x.requires_grad().then(|| NdArray::zeros(x.shape().to_vec()));
            let mut dgamma = NdArray::zeros([c]);
            let mut dbeta = NdArray::zeros([c]);
            for s in 0..n {
                for ch in 0..c {
                    let k = s * c + ch;
                    let gp = &gd[k * m..(k + 1) * m];
                    let hp = &xh[k * m..(k + 1) * m];
                    let sum_g: E = gp.iter().copied().sum();
                    let sum_gh: E = gp.iter().zip(hp).map(|(&g, &h)| g * h).sum();
                    dgamma.data_mut()[ch] += sum_gh;
                    dbeta.data_mut()[ch] += sum_g;
                    if let Some(dx) = dx.as_mut() {
                        // dxhat = g·gamma; dx = inv_std/m · (m·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
                        let scale = gv[ch] * inv_std[k] / mf;
                        let d = &mut dx.data_mut()[k * m..(k + 1) * m];
                        for i in 0..m {
                            d[i] = scale * (mf * gp[i] - sum_g - hp[i] * sum_gh);
                        }
                    }
                }
            }
            vec![
                dx,
                gamma.requires_grad().then_some(dgamma),
                beta.requires_grad().then_some(dbeta),
            ]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = Tensor::constant(NdArray::<f32>::full([1, 2, 3, 3], 4.2));
        let gamma = Tensor::constant(NdArray::from_vec([2], vec![1.5, -2.0]).unwrap());
        let beta = Tensor::constant(NdArray::from_vec([2], vec![0.25, -0.75]).unwrap());
        let y = instance_norm(&x, &gamma, &beta, INSTANCE_NORM_EPS).unwrap();
        for (i, v) in y.value().data().iter().enumerate() {
            assert!(v.is_finite());
            let want = if i < 9 { 0.25 } else { -0.75 };
            assert_eq!(*v, want);
        }
    }

    #[test]
    fn unit_affine_standardizes() {
        let x = Tensor::constant(NdArray::from_vec([1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap());
        let y = instance_norm(
            &x,
            &Tensor::constant(NdArray::ones([1])),
            &Tensor::constant(NdArray::zeros([1])),
            INSTANCE_NORM_EPS,
        )
        .unwrap();
        let d = y.value().data();
        let mean: f64 = d.iter().sum::<f64>() / 4.0;
        let var: f64 = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        // variance 1.25 / (1.25 + eps)
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn affine_shape_is_checked() {
        let x = Tensor::constant(NdArray::<f32>::ones([1, 2, 2, 2]));
        let g = Tensor::constant(NdArray::<f32>::ones([3]));
        assert!(instance_norm(&x, &g, &g, INSTANCE_NORM_EPS).is_err());
    }
}
