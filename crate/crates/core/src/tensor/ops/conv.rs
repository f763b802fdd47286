use crate::error::{Error, Result};
use crate::tensor::{gemm, Element, Layout, NdArray, Tensor};

/// Stride and zero padding of a 2D convolution, as `(vertical, horizontal)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2dSpec {
    pub const fn new(stride: (usize, usize), padding: (usize, usize)) -> Self {
        Self { stride, padding }
    }
}

/// `floor((extent + 2·pad − kernel) / stride) + 1`, or `None` when the
/// kernel does not fit the padded input.
pub fn conv_output_extent(extent: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || extent + 2 * pad < kernel {
        return None;
    }
    Some((extent + 2 * pad - kernel) / stride + 1)
}

#[derive(Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
}

impl Geometry {
    fn new(op: &'static str, x: [usize; 4], kh: usize, kw: usize, spec: Conv2dSpec) -> Result<Self> {
        let [_, cin, h, w] = x;
        let (sh, sw) = spec.stride;
        let (ph, pw) = spec.padding;
        let oh = conv_output_extent(h, kh, sh, ph);
        let ow = conv_output_extent(w, kw, sw, pw);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok(Self { cin, h, w, kh, kw, oh, ow, sh, sw, ph, pw }),
            _ => Err(Error::shape(
                op,
                format!("kernel {kh}x{kw} stride {sh}x{sw} pad {ph}x{pw} does not fit input {h}x{w}"),
            )),
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1 && self.ph == 0 && self.pw == 0
    }

    fn patch_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Valid output index range `[lo, hi)` for kernel offset `k` along one axis.
    fn valid(out: usize, input: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
        // need 0 <= o*stride + k - pad < input
        let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
        let hi = if input + pad > k { ((input + pad - k - 1) / stride + 1).min(out) } else { 0 };
        (lo.min(hi), hi)
    }
}

/// Expands one sample `[cin, h, w]` into patch rows `[cin·kh·kw, oh·ow]`.
fn im2col<E: Element>(x: &[E], g: &Geometry, col: &mut [E]) {
    let p = g.positions();
    let zero = E::zero();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let (oy_lo, oy_hi) = Geometry::valid(g.oh, g.h, ki, g.sh, g.ph);
            for kj in 0..g.kw {
                let (ox_lo, ox_hi) = Geometry::valid(g.ow, g.w, kj, g.sw, g.pw);
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * p..(row + 1) * p];
                if ox_lo >= ox_hi {
                    dst.fill(zero);
                    continue;
                }
                // only the padded border needs zeros
                dst[..oy_lo * g.ow].fill(zero);
                dst[oy_hi * g.ow..].fill(zero);
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.sh + ki - g.ph;
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    let drow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    drow[..ox_lo].fill(zero);
                    drow[ox_hi..].fill(zero);
                    if g.sw == 1 {
                        let ix0 = ox_lo + kj - g.pw;
                        drow[ox_lo..ox_hi].copy_from_slice(&src[ix0..ix0 + (ox_hi - ox_lo)]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            drow[ox] = src[ox * g.sw + kj - g.pw];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds patch rows back onto a `[cin, h, w]` gradient buffer.
fn col2im<E: Element>(col: &[E], g: &Geometry, dx: &mut [E]) {
    let p = g.positions();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let (oy_lo, oy_hi) = Geometry::valid(g.oh, g.h, ki, g.sh, g.ph);
            for kj in 0..g.kw {
                let (ox_lo, ox_hi) = Geometry::valid(g.ow, g.w, kj, g.sw, g.pw);
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &col[row * p..(row + 1) * p];
                if ox_lo >= ox_hi {
                    continue;
                }
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.sh + ki - g.ph;
                    let drow = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let srow = &src[oy * g.ow + ox_lo..oy * g.ow + ox_hi];
                    if g.sw == 1 {
                        let ix0 = ox_lo + kj - g.pw;
                        for (d, &v) in drow[ix0..ix0 + srow.len()].iter_mut().zip(srow) {
                            *d += v;
                        }
                    } else {
                        let ix0 = ox_lo * g.sw + kj - g.pw;
                        for (d, &v) in drow[ix0..].iter_mut().step_by(g.sw).zip(srow) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

fn check_bias<E: Element>(op: &'static str, bias: Option<&Tensor<E>>, cout: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape(op, format!("bias shape {:?}, expected [{cout}]", b.shape())));
        }
    }
    Ok(())
}

/// Dense 2D cross-correlation over `[n, cin, h, w]` with weights
/// `[cout, cin, kh, kw]`, lowered to one matrix product per sample.
pub fn conv2d<E: Element>(
    x: &Tensor<E>,
    weight: &Tensor<E>,
    bias: Option<&Tensor<E>>,
    spec: Conv2dSpec,
) -> Result<Tensor<E>> {
    let xd = x.value().dims4("conv2d")?;
    let [cout, wcin, kh, kw] = weight.value().dims4("conv2d")?;
    if wcin != xd[1] {
        return Err(Error::shape(
            "conv2d",
            format!("input has {} channels but weight expects {wcin}", xd[1]),
        ));
    }
    check_bias("conv2d", bias, cout)?;
    let g = Geometry::new("conv2d", xd, kh, kw, spec)?;
    let n = xd[0];
    let (r, p) = (g.patch_rows(), g.positions());
    let in_len = g.cin * g.h * g.w;

    let mut out = NdArray::zeros([n, cout, g.oh, g.ow]);
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![E::zero(); r * p] };
    let wdata = weight.value().data();
    for s in 0..n {
        let xs = &x.value().data()[s * in_len..(s + 1) * in_len];
        let patches: &[E] = if g.is_pointwise() {
            xs
        } else {
            im2col(xs, &g, &mut col);
            &col
        };
        let os = &mut out.data_mut()[s * cout * p..(s + 1) * cout * p];
        if let Some(b) = bias {
            for (co, &bv) in b.value().data().iter().enumerate() {
                os[co * p..(co + 1) * p].fill(bv);
            }
        }
        gemm(cout, r, p, wdata, Layout::Normal, patches, Layout::Normal, E::one(), os);
    }

    let parents: Vec<&Tensor<E>> = match bias {
        Some(b) => vec![x, weight, b],
        None => vec![x, weight],
    };
    Ok(Tensor::from_op(
        out,
        &parents,
        Box::new(move |grad, parents, _| {
            let (x, weight) = (&parents[0], &parents[1]);
            let gd = grad.data();
            let mut dx = x.requires_grad().then(|| NdArray::zeros(x.shape().to_vec()));
            let mut dw = weight.requires_grad().then(|| NdArray::zeros(weight.shape().to_vec()));
            let mut db = parents.get(2).filter(|b| b.requires_grad()).map(|_| NdArray::zeros([cout]));
            let mut col = if g.is_pointwise() { Vec::new() } else { vec![E::zero(); r * p] };
            let mut dcol = vec![E::zero(); if dx.is_some() { r * p } else { 0 }];
            for s in 0..n {
                let gs = &gd[s * cout * p..(s + 1) * cout * p];
                if let Some(db) = db.as_mut() {
                    for (co, acc) in db.data_mut().iter_mut().enumerate() {
                        *acc += gs[co * p..(co + 1) * p].iter().copied().sum::<E>();
                    }
                }
                if let Some(dw) = dw.as_mut() {
                    let xs = &x.value().data()[s * in_len..(s + 1) * in_len];
                    let patches: &[E] = if g.is_pointwise() {
                        xs
                    } else {
                        im2col(xs, &g, &mut col);
                        &col
                    };
                    gemm(cout, p, r, gs, Layout::Normal, patches, Layout::Transposed, E::one(), dw.data_mut());
                }
                if let Some(dx) = dx.as_mut() {
                    let dxs = &mut dx.data_mut()[s * in_len..(s + 1) * in_len];
                    if g.is_pointwise() {
                        gemm(r, cout, p, weight.value().data(), Layout::Transposed, gs, Layout::Normal, E::zero(), dxs);
                    } else {
                        gemm(r, cout, p, weight.value().data(), Layout::Transposed, gs, Layout::Normal, E::zero(), &mut dcol);
                        col2im(&dcol, &g, dxs);
                    }
                }
            }
            let mut grads = vec![dx, dw];
            if parents.len() == 3 {
                grads.push(db);
            }
            grads
        }),
    ))
}

/// Per-channel spatial convolution: weight `[c, 1, kh, kw]`, channel
/// multiplier 1.
pub fn depthwise_conv2d<E: Element>(
    x: &Tensor<E>,
    weight: &Tensor<E>,
    bias: Option<&Tensor<E>>,
    spec: Conv2dSpec,
) -> Result<Tensor<E>> {
    let xd = x.value().dims4("depthwise_conv2d")?;
    let [wc, mult, kh, kw] = weight.value().dims4("depthwise_conv2d")?;
    if wc != xd[1] || mult != 1 {
        return Err(Error::shape(
            "depthwise_conv2d",
            format!("input has {} channels, weight is {:?} (expected [{}, 1, kh, kw])", xd[1], weight.shape(), xd[1]),
        ));
    }
    check_bias("depthwise_conv2d", bias, wc)?;
    let g = Geometry::new("depthwise_conv2d", xd, kh, kw, spec)?;
    let n = xd[0];
    let c = g.cin;
    let (plane_in, plane_out) = (g.h * g.w, g.oh * g.ow);

    let mut out = NdArray::zeros([n, c, g.oh, g.ow]);
    {
        let xv = x.value().data();
        let wv = weight.value().data();
        let od = out.data_mut();
        for s in 0..n {
            for ch in 0..c {
                let src = &xv[(s * c + ch) * plane_in..(s * c + ch + 1) * plane_in];
                let dst = &mut od[(s * c + ch) * plane_out..(s * c + ch + 1) * plane_out];
                if let Some(b) = bias {
                    dst.fill(b.value().data()[ch]);
                }
                let kern = &wv[ch * kh * kw..(ch + 1) * kh * kw];
                for ki in 0..kh {
                    let (oy_lo, oy_hi) = Geometry::valid(g.oh, g.h, ki, g.sh, g.ph);
                    for kj in 0..kw {
                        let (ox_lo, ox_hi) = Geometry::valid(g.ow, g.w, kj, g.sw, g.pw);
                        let kv = kern[ki * kw + kj];
                        for oy in oy_lo..oy_hi {
                            let iy = oy * g.sh + ki - g.ph;
                            let srow = &src[iy * g.w..(iy + 1) * g.w];
                            let drow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                            for ox in ox_lo..ox_hi {
                                drow[ox] += kv * srow[ox * g.sw + kj - g.pw];
                            }
                        }
                    }
                }
            }
        }
    }

    let parents: Vec<&Tensor<E>> = match bias {
        Some(b) => vec![x, weight, b],
        None => vec![x, weight],
    };
    Ok(Tensor::from_op(
        out,
        &parents,
        Box::new(move |grad, parents, _| {
            let (x, weight) = (&parents[0], &parents[1]);
            let gd = grad.data();
            let xv = x.value().data();
            let wv = weight.value().data();
            let mut dx = x.requires_grad().then(|| NdArray::zeros(x.shape().to_vec()));
            let mut dw = weight.requires_grad().then(|| NdArray::zeros(weight.shape().to_vec()));
            let mut db = parents.get(2).filter(|b| b.requires_grad()).map(|_| NdArray::zeros([c]));
            for s in 0..n {
                for ch in 0..c {
                    let base_in = (s * c + ch) * plane_in;
                    let gplane = &gd[(s * c + ch) * plane_out..(s * c + ch + 1) * plane_out];
                    if let Some(db) = db.as_mut() {
                        db.data_mut()[ch] += gplane.iter().copied().sum::<E>();
                    }
                    for ki in 0..kh {
                        let (oy_lo, oy_hi) = Geometry::valid(g.oh, g.h, ki, g.sh, g.ph);
                        for kj in 0..kw {
                            let (ox_lo, ox_hi) = Geometry::valid(g.ow, g.w, kj, g.sw, g.pw);
                            let widx = ch * kh * kw + ki * kw + kj;
                            let kv = wv[widx];
                            let mut wacc = E::zero();
                            for oy in oy_lo..oy_hi {
                                let iy = oy * g.sh + ki - g.ph;
                                let grow = &gplane[oy * g.ow..(oy + 1) * g.ow];
                                let row_in = base_in + iy * g.w;
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * g.sw + kj - g.pw;
                                    wacc += grow[ox] * xv[row_in + ix];
                                }
                                if let Some(dx) = dx.as_mut() {
                                    let dxd = &mut dx.data_mut()[row_in..row_in + g.w];
                                    for ox in ox_lo..ox_hi {
                                        dxd[ox * g.sw + kj - g.pw] += kv * grow[ox];
                                    }
                                }
                            }
                            if let Some(dw) = dw.as_mut() {
                                dw.data_mut()[widx] += wacc;
                            }
                        }
                    }
                }
            }
            let mut grads = vec![dx, dw];
            if parents.len() == 3 {
                grads.push(db);
            }
            grads
        }),
    ))
}

/// Depthwise spatial convolution (no bias) followed by a biased 1×1
/// channel-mixing convolution. The stride applies to the depthwise part.
pub fn depthwise_separable_conv<E: Element>(
    x: &Tensor<E>,
    depthwise_weight: &Tensor<E>,
    pointwise_weight: &Tensor<E>,
    bias: Option<&Tensor<E>>,
    spec: Conv2dSpec,
) -> Result<Tensor<E>> {
    let [_, c, ..] = x.value().dims4("depthwise_separable_conv")?;
    let [_, pw_cin, pkh, pkw] = pointwise_weight.value().dims4("depthwise_separable_conv")?;
    if pw_cin != c || pkh != 1 || pkw != 1 {
        return Err(Error::shape(
            "depthwise_separable_conv",
            format!("pointwise weight {:?} incompatible with {c} channels", pointwise_weight.shape()),
        ));
    }
    let spatial = depthwise_conv2d(x, depthwise_weight, None, spec)?;
    conv2d(&spatial, pointwise_weight, bias, Conv2dSpec::new((1, 1), (0, 0)))
}
