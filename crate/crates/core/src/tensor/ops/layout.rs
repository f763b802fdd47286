use crate::error::Result;
use crate::tensor::{Element, NdArray, Tensor};

fn permute_grid_to_flat<E: Element>(src: &[E], n: usize, c: usize, h: usize, w: usize) -> Vec<E> {
    let mut dst = vec![E::zero(); src.len()];
    let plane = h * w;
    for s in 0..n {
        for ch in 0..c {
            for pos in 0..plane {
                dst[(s * plane + pos) * c + ch] = src[(s * c + ch) * plane + pos];
            }
        }
    }
    dst
}

fn permute_flat_to_grid<E: Element>(src: &[E], n: usize, c: usize, h: usize, w: usize) -> Vec<E> {
    let mut dst = vec![E::zero(); src.len()];
    let plane = h * w;
    for s in 0..n {
        for pos in 0..plane {
            for ch in 0..c {
                dst[(s * c + ch) * plane + pos] = src[(s * plane + pos) * c + ch];
            }
        }
    }
    dst
}

/// Concatenates the rows of a `[n, c, h, w]` grid into `[n, h·w, c]`, top
/// row first and left to right within a row. Pure re-indexing.
pub fn collapse_rows<E: Element>(grid: &Tensor<E>) -> Result<Tensor<E>> {
    let [n, c, h, w] = grid.value().dims4("collapse_rows")?;
    let flat = NdArray::from_vec([n, h * w, c], permute_grid_to_flat(grid.value().data(), n, c, h, w))?;
    Ok(Tensor::from_op(
        flat,
        &[grid],
        Box::new(move |g, _, _| {
            let back = permute_flat_to_grid(g.data(), n, c, h, w);
            vec![Some(NdArray::from_vec([n, c, h, w], back).expect("same length"))]
        }),
    ))
}

/// Inverse of [`collapse_rows`] for a known grid height and width.
pub fn uncollapse_rows<E: Element>(flat: &NdArray<E>, h: usize, w: usize) -> Result<NdArray<E>> {
    let (n, t, c) = match flat.shape() {
        &[n, t, c] => (n, t, c),
        other => {
            return Err(crate::Error::shape("uncollapse_rows", format!("expected 3D, got {other:?}")));
        }
    };
    if t != h * w {
        return Err(crate::Error::shape("uncollapse_rows", format!("length {t} != {h}x{w}")));
    }
    NdArray::from_vec([n, c, h, w], permute_flat_to_grid(flat.data(), n, c, h, w))
}
