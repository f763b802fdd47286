use crate::error::{Error, Result};
use crate::tensor::{Element, NdArray, Tensor};

/// Max over the height axis: `[n, c, h, w] -> [n, c, 1, w]`. The gradient
/// flows to the first maximal row of every column.
pub fn adaptive_max_pool_vertical<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let [n, c, h, w] = x.value().dims4("adaptive_max_pool_vertical")?;
    if h == 0 {
        return Err(Error::shape("adaptive_max_pool_vertical", "height must be at least 1"));
    }
    let xv = x.value().data();
    let mut out = NdArray::zeros([n, c, 1, w]);
    let mut argmax = vec![0usize; n * c * w];
    for k in 0..n * c {
        let plane = &xv[k * h * w..(k + 1) * h * w];
        for col in 0..w {
            let mut best = 0;
            for row in 1..h {
                if plane[row * w + col] > plane[best * w + col] {
                    best = row;
                }
            }
            argmax[k * w + col] = best;
            out.data_mut()[k * w + col] = plane[best * w + col];
        }
    }
    Ok(Tensor::from_op(
        out,
        &[x],
        Box::new(move |g, parents, _| {
            let mut dx = NdArray::zeros(parents[0].shape().to_vec());
            let d = dx.data_mut();
            for (i, (&row, &gv)) in argmax.iter().zip(g.data()).enumerate() {
                let (k, col) = (i / w, i % w);
                d[k * h * w + row * w + col] += gv;
            }
            vec![Some(dx)]
        }),
    ))
}
