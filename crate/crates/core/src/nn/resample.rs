use super::tensor::Tensor;

/// Source taps and weights for resizing one axis with half-pixel centers.
fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let f = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (f.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (f - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resize of every plane to `oh x ow` (half-pixel centers, no corner alignment).
pub fn upsample_bilinear(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    let ty = bilinear_taps(x.h, oh);
    let tx = bilinear_taps(x.w, ow);
    let mut out = Tensor::zeros(x.n, x.c, oh, ow);
    let (ip, op) = (x.plane(), oh * ow);
    for (src, dst) in x.data.chunks_exact(ip).zip(out.data.chunks_exact_mut(op)) {
        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
            let r0 = &src[y0 * x.w..(y0 + 1) * x.w];
            let r1 = &src[y1 * x.w..(y1 + 1) * x.w];
            let d = &mut dst[oy * ow..(oy + 1) * ow];
            for (v, &(x0, x1, wx)) in d.iter_mut().zip(&tx) {
                let top = r0[x0] + (r0[x1] - r0[x0]) * wx;
                let bot = r1[x0] + (r1[x1] - r1[x0]) * wx;
                *v = top + (bot - top) * wy;
            }
        }
    }
    out
}

/// Adjoint of [`upsample_bilinear`].
pub fn upsample_bilinear_backward(dy: &Tensor, ih: usize, iw: usize) -> Tensor {
    let ty = bilinear_taps(ih, dy.h);
    let tx = bilinear_taps(iw, dy.w);
    let mut dx = Tensor::zeros(dy.n, dy.c, ih, iw);
    let (ip, op) = (ih * iw, dy.plane());
    for (g, d) in dy.data.chunks_exact(op).zip(dx.data.chunks_exact_mut(ip)) {
        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                let v = g[oy * dy.w + ox];
                let a = v * (1.0 - wy);
                let b = v * wy;
                d[y0 * iw + x0] += a * (1.0 - wx);
                d[y0 * iw + x1] += a * wx;
                d[y1 * iw + x0] += b * (1.0 - wx);
                d[y1 * iw + x1] += b * wx;
            }
        }
    }
    dx
}

pub fn upsample_nearest2(x: &Tensor) -> Tensor {
    let (oh, ow) = (x.h * 2, x.w * 2);
    let mut out = Tensor::zeros(x.n, x.c, oh, ow);
    for (src, dst) in x
        .data
        .chunks_exact(x.plane())
        .zip(out.data.chunks_exact_mut(oh * ow))
    {
        for oy in 0..oh {
            for ox in 0..ow {
                dst[oy * ow + ox] = src[(oy / 2) * x.w + ox / 2];
            }
        }
    }
    out
}

pub fn upsample_nearest2_backward(dy: &Tensor) -> Tensor {
    let (ih, iw) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(dy.n, dy.c, ih, iw);
    for (g, d) in dy
        .data
        .chunks_exact(dy.plane())
        .zip(dx.data.chunks_exact_mut(ih * iw))
    {
        for oy in 0..dy.h {
            for ox in 0..dy.w {
                d[(oy / 2) * iw + ox / 2] += g[oy * dy.w + ox];
            }
        }
    }
    dx
}

/// Mean over each plane, giving `N x C x 1 x 1`.
pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let p = x.plane() as f32;
    let data = x
        .data
        .chunks_exact(x.plane())
        .map(|c| c.iter().sum::<f32>() / p)
        .collect();
    Tensor::from_vec(x.n, x.c, 1, 1, data)
}

pub fn global_avg_pool_backward(dy: &Tensor, h: usize, w: usize) -> Tensor {
    let p = (h * w) as f32;
    let mut dx = Tensor::zeros(dy.n, dy.c, h, w);
    for (d, &g) in dx.data.chunks_exact_mut(h * w).zip(&dy.data) {
        d.iter_mut().for_each(|v| *v = g / p);
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_same_size_is_identity() {
        let x = Tensor::from_vec(1, 1, 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(upsample_bilinear(&x, 2, 3), x);
    }

    #[test]
    fn bilinear_backward_is_adjoint() {
        // <up(x), y> == <x, up^T(y)>
        let x = Tensor::from_vec(
            1,
            2,
            3,
            2,
            (0..12).map(|v| (v as f32 * 0.37).sin()).collect(),
        );
        let y = Tensor::from_vec(
            1,
            2,
            7,
            5,
            (0..70).map(|v| (v as f32 * 0.11).cos()).collect(),
        );
        let up = upsample_bilinear(&x, 7, 5);
        let back = upsample_bilinear_backward(&y, 3, 2);
        let lhs: f32 = up.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let rhs: f32 = x.data.iter().zip(&back.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-4);
    }

    #[test]
    fn pool_of_constant() {
        let x = Tensor::from_vec(1, 1, 2, 2, vec![3.0; 4]);
        assert_eq!(global_avg_pool(&x).data, vec![3.0]);
    }
}
