use crate::error::{Error, Result};
use crate::tensor::{Element, NdArray, Tensor};

fn same_shape<E: Element>(op: &'static str, a: &Tensor<E>, b: &Tensor<E>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn add<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    same_shape("add", a, b)?;
    let out = a.value().zip_map(b.value(), |x, y| x + y);
    Ok(Tensor::from_op(
        out,
        &[a, b],
        Box::new(|g, _, _| vec![Some(g.clone()), Some(g.clone())]),
    ))
}

pub fn mul<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    same_shape("mul", a, b)?;
    let out = a.value().zip_map(b.value(), |x, y| x * y);
    Ok(Tensor::from_op(
        out,
        &[a, b],
        Box::new(|g, parents, _| {
            let (a, b) = (&parents[0], &parents[1]);
            vec![
                a.requires_grad().then(|| g.zip_map(b.value(), |g, y| g * y)),
                b.requires_grad().then(|| g.zip_map(a.value(), |g, x| g * x)),
            ]
        }),
    ))
}

pub fn scale<E: Element>(a: &Tensor<E>, factor: E) -> Tensor<E> {
    Tensor::from_op(
        a.value().map(|x| x * factor),
        &[a],
        Box::new(move |g, _, _| vec![Some(g.map(|g| g * factor))]),
    )
}

/// Sum of all elements as a scalar.
pub fn sum<E: Element>(a: &Tensor<E>) -> Tensor<E> {
    let shape = a.shape().to_vec();
    Tensor::from_op(
        NdArray::scalar(a.value().sum()),
        &[a],
        Box::new(move |g, _, _| vec![Some(NdArray::full(shape.clone(), g.item()))]),
    )
}

pub fn mean<E: Element>(a: &Tensor<E>) -> Tensor<E> {
    let n = E::from_usize(a.value().len().max(1)).unwrap();
    scale(&sum(a), E::one() / n)
}

pub fn relu<E: Element>(a: &Tensor<E>) -> Tensor<E> {
    let zero = E::zero();
    Tensor::from_op(
        a.value().map(|x| if x > zero { x } else { zero }),
        &[a],
        Box::new(move |g, _, out| vec![Some(g.zip_map(out, |g, y| if y > zero { g } else { zero }))]),
    )
}

fn last_dim<E: Element>(op: &'static str, a: &Tensor<E>) -> Result<usize> {
    match a.shape().last() {
        Some(&k) if k > 0 => Ok(k),
        _ => Err(Error::shape(op, format!("needs a non-empty last dimension, got {:?}", a.shape()))),
    }
}

fn softmax_rows<E: Element>(x: &NdArray<E>, k: usize) -> NdArray<E> {
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(E::neg_infinity(), E::max);
        let mut total = E::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

pub fn softmax_lastdim<E: Element>(a: &Tensor<E>) -> Result<Tensor<E>> {
    let k = last_dim("softmax_lastdim", a)?;
    let out = softmax_rows(a.value(), k);
    Ok(Tensor::from_op(
        out,
        &[a],
        Box::new(move |g, _, s| {
            let mut dx = g.clone();
            for (drow, srow) in dx.data_mut().chunks_mut(k).zip(s.data().chunks(k)) {
                let dot: E = drow.iter().zip(srow).map(|(&g, &s)| g * s).sum();
                for (d, &s) in drow.iter_mut().zip(srow) {
                    *d = s * (*d - dot);
                }
            }
            vec![Some(dx)]
        }),
    ))
}

pub fn log_softmax_lastdim<E: Element>(a: &Tensor<E>) -> Result<Tensor<E>> {
    let k = last_dim("log_softmax_lastdim", a)?;
    let mut out = a.value().clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(E::neg_infinity(), E::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<E>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    Ok(Tensor::from_op(
        out,
        &[a],
        Box::new(move |g, _, logp| {
            let mut dx = g.clone();
            for (drow, lrow) in dx.data_mut().chunks_mut(k).zip(logp.data().chunks(k)) {
                let total: E = drow.iter().copied().sum();
                for (d, &l) in drow.iter_mut().zip(lrow) {
                    *d -= l.exp() * total;
                }
            }
            vec![Some(dx)]
        }),
    ))
}
