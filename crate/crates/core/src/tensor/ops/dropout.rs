use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Element, NdArray, Tensor};

fn check_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("dropout probability {p} outside [0, 1)")));
    }
    Ok(())
}

fn apply_mask<E: Element>(x: &Tensor<E>, mask: NdArray<E>) -> Tensor<E> {
    let out = x.value().zip_map(&mask, |v, m| v * m);
    Tensor::from_op(out, &[x], Box::new(move |g, _, _| vec![Some(g.zip_map(&mask, |g, m| g * m))]))
}

/// Inverted dropout with an independent Bernoulli(1 − p) draw per element.
pub fn dropout_elementwise<E: Element, R: Rng + ?Sized>(
    x: &Tensor<E>,
    p: f64,
    training: bool,
    rng: &mut R,
) -> Result<Tensor<E>> {
    check_p(p)?;
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let keep = E::from_f64_lossy(1.0 / (1.0 - p));
    let mask: Vec<E> = (0..x.value().len())
        .map(|_| if rng.random::<f64>() >= p { keep } else { E::zero() })
        .collect();
    Ok(apply_mask(x, NdArray::from_vec(x.shape().to_vec(), mask)?))
}

/// Inverted dropout that drops whole `[h, w]` feature maps of a 4D tensor.
pub fn dropout_channel<E: Element, R: Rng + ?Sized>(
    x: &Tensor<E>,
    p: f64,
    training: bool,
    rng: &mut R,
) -> Result<Tensor<E>> {
    check_p(p)?;
    let [n, c, h, w] = x.value().dims4("dropout_channel")?;
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let keep = E::from_f64_lossy(1.0 / (1.0 - p));
    let mut mask = Vec::with_capacity(n * c * h * w);
    for _ in 0..n * c {
        let m = if rng.random::<f64>() >= p { keep } else { E::zero() };
        mask.extend(std::iter::repeat_n(m, h * w));
    }
    Ok(apply_mask(x, NdArray::from_vec(x.shape().to_vec(), mask)?))
}
