/// Dense `N x C x H x W` f32 tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor buffer size");
        Self { n, c, h, w, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let l = self.sample_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f32] {
        let l = self.sample_len();
        &mut self.data[i * l..(i + 1) * l]
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Concatenates along channels.
pub fn concat_channels(parts: &[&Tensor]) -> Tensor {
    let first = parts[0];
    let c: usize = parts.iter().map(|p| p.c).sum();
    let mut out = Tensor::zeros(first.n, c, first.h, first.w);
    let plane = first.plane();
    for i in 0..first.n {
        let mut off = 0;
        let dst = out.sample_mut(i);
        for p in parts {
            assert_eq!((p.n, p.h, p.w), (first.n, first.h, first.w), "concat shape");
            let len = p.c * plane;
            dst[off..off + len].copy_from_slice(p.sample(i));
            off += len;
        }
    }
    out
}

/// Inverse of [`concat_channels`] for gradients.
pub fn split_channels(t: &Tensor, sizes: &[usize]) -> Vec<Tensor> {
    assert_eq!(sizes.iter().sum::<usize>(), t.c);
    let plane = t.plane();
    let mut outs: Vec<Tensor> = sizes
        .iter()
        .map(|&c| Tensor::zeros(t.n, c, t.h, t.w))
        .collect();
    for i in 0..t.n {
        let src = t.sample(i);
        let mut off = 0;
        for o in outs.iter_mut() {
            let len = o.c * plane;
            o.sample_mut(i).copy_from_slice(&src[off..off + len]);
            off += len;
        }
    }
    outs
}
