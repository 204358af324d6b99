//! Dense NCHW storage plus the pooling, resampling and sampling primitives
//! shared by every operator.

use std::fmt;

use rayon::prelude::*;

use crate::error::{shape_err, Error, Result};

/// Dimensions of a rank-4 tensor in (batch, channel, height, width) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn with_channels(self, c: usize) -> Self {
        Self { c, ..self }
    }

    pub fn with_spatial(self, h: usize, w: usize) -> Self {
        Self { h, w, ..self }
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.c == 0 || self.h == 0 || self.w == 0 {
            return shape_err(format!("all dims must be >= 1, got {self}"));
        }
        Ok(())
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Rank-4 feature map stored row-major with `w` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: Shape4,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: Shape4) -> Self {
        Self::full(shape, 0.0)
    }

    /// # Panics
    /// If any dimension is zero.
    pub fn full(shape: Shape4, value: f64) -> Self {
        assert!(shape.numel() > 0, "tensor dims must be >= 1, got {shape}");
        Self {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(shape: Shape4, data: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.numel() {
            return shape_err(format!(
                "data length {} does not match dims {shape} ({} elements)",
                data.len(),
                shape.numel()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: Shape4, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut i = 0;
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        t.data[i] = f(n, c, y, x);
                        i += 1;
                    }
                }
            }
        }
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(Shape4::new(1, 1, 1, 1), value)
    }

    #[inline]
    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let s = &self.shape;
        ((n * s.c + c) * s.h + y) * s.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.offset(n, c, y, x);
        self.data[i] = v;
    }

    /// The `h*w` plane of one (batch, channel) pair.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_shape(other.shape, "zip_map")?;
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.expect_shape(other.shape, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.expect_shape(other.shape, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.expect_shape(other.shape, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// `max|a - b| / max|other|`: deviation relative to the magnitude of the reference.
    pub fn max_rel_diff(&self, reference: &Self) -> Result<f64> {
        let diff = self.max_abs_diff(reference)?;
        if diff == 0.0 {
            return Ok(0.0);
        }
        Ok(diff / reference.max_abs().max(f64::MIN_POSITIVE))
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub(crate) fn expect_shape(&self, shape: Shape4, what: &str) -> Result<()> {
        if self.shape != shape {
            return shape_err(format!("{what}: expected dims {shape}, got {}", self.shape));
        }
        Ok(())
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(parts: &[&Tensor4]) -> Result<Tensor4> {
        let Some(first) = parts.first() else {
            return shape_err("concat_channels: no inputs");
        };
        let base = first.shape;
        let mut channels = 0;
        for p in parts {
            let s = p.shape;
            if s.n != base.n || s.h != base.h || s.w != base.w {
                return shape_err(format!(
                    "concat_channels: dims {s} incompatible with {base}"
                ));
            }
            channels += s.c;
        }
        let shape = base.with_channels(channels);
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..base.n {
            for p in parts {
                let block = p.shape.c * p.shape.plane();
                data.extend_from_slice(&p.data[n * block..(n + 1) * block]);
            }
        }
        Ok(Tensor4 { shape, data })
    }

    /// Channels `start..start+len` as a fresh tensor.
    pub fn channel_slice(&self, start: usize, len: usize) -> Result<Tensor4> {
        let s = self.shape;
        if len == 0 || start + len > s.c {
            return shape_err(format!(
                "channel_slice {start}..{} out of range for {s}",
                start + len
            ));
        }
        let shape = s.with_channels(len);
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..s.n {
            let from = self.offset(n, start, 0, 0);
            data.extend_from_slice(&self.data[from..from + len * s.plane()]);
        }
        Ok(Tensor4 { shape, data })
    }

    /// Split channels into `[0, at)` and `[at, c)`.
    pub fn split_channels(&self, at: usize) -> Result<(Tensor4, Tensor4)> {
        let c = self.shape.c;
        Ok((self.channel_slice(0, at)?, self.channel_slice(at, c - at)?))
    }
}

fn check_index(t: &Tensor4, n: usize, c: usize) -> Result<()> {
    let s = t.shape();
    if n >= s.n || c >= s.c {
        return Err(Error::Index(format!(
            "batch {n} / channel {c} out of range for dims {s}"
        )));
    }
    Ok(())
}

/// Corner indices and fractional parts of one bilinear lookup.
///
/// Corners outside the grid carry `None` and contribute zero.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BilinearTap {
    /// Plane offsets of (y0,x0), (y0,x1), (y1,x0), (y1,x1).
    pub corners: [Option<usize>; 4],
    pub fy: f64,
    pub fx: f64,
}

impl BilinearTap {
    pub fn new(h: usize, w: usize, y: f64, x: f64) -> Self {
        let y0f = y.floor();
        let x0f = x.floor();
        let fy = y - y0f;
        let fx = x - x0f;
        let inside = |yy: f64, xx: f64| -> Option<usize> {
            if yy >= 0.0 && xx >= 0.0 && yy < h as f64 && xx < w as f64 {
                Some(yy as usize * w + xx as usize)
            } else {
                None
            }
        };
        Self {
            corners: [
                inside(y0f, x0f),
                inside(y0f, x0f + 1.0),
                inside(y0f + 1.0, x0f),
                inside(y0f + 1.0, x0f + 1.0),
            ],
            fy,
            fx,
        }
    }

    #[inline]
    pub fn weights(&self) -> [f64; 4] {
        let (fy, fx) = (self.fy, self.fx);
        [(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx]
    }

    /// Derivatives of the four corner weights with respect to y.
    #[inline]
    pub fn dweights_dy(&self) -> [f64; 4] {
        let fx = self.fx;
        [-(1.0 - fx), -fx, 1.0 - fx, fx]
    }

    /// Derivatives of the four corner weights with respect to x.
    #[inline]
    pub fn dweights_dx(&self) -> [f64; 4] {
        let fy = self.fy;
        [-(1.0 - fy), 1.0 - fy, -fy, fy]
    }

    #[inline]
    pub fn sample(&self, plane: &[f64]) -> f64 {
        let wts = self.weights();
        let mut acc = 0.0;
        for k in 0..4 {
            if let Some(i) = self.corners[k] {
                acc += plane[i] * wts[k];
            }
        }
        acc
    }

    /// Value of `sum_k dweights[k] * plane[corner_k]`.
    #[inline]
    pub fn contract(&self, plane: &[f64], dweights: &[f64; 4]) -> f64 {
        let mut acc = 0.0;
        for k in 0..4 {
            if let Some(i) = self.corners[k] {
                acc += plane[i] * dweights[k];
            }
        }
        acc
    }
}

/// Bilinear interpolation at a fractional position with zero padding outside the grid.
pub fn bilinear_sample(feature: &Tensor4, batch: usize, channel: usize, y: f64, x: f64) -> Result<f64> {
    check_index(feature, batch, channel)?;
    if !y.is_finite() || !x.is_finite() {
        return Err(Error::Domain(format!("non-finite sample position ({y}, {x})")));
    }
    let s = feature.shape();
    let tap = BilinearTap::new(s.h, s.w, y, x);
    Ok(tap.sample(feature.plane(batch, channel)))
}

/// Mean over the spatial positions of each channel.
pub fn global_avg_pool(feature: &Tensor4) -> Tensor4 {
    let s = feature.shape();
    let denom = s.plane() as f64;
    Tensor4::from_fn(Shape4::new(s.n, s.c, 1, 1), |n, c, _, _| {
        feature.plane(n, c).iter().sum::<f64>() / denom
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelPool {
    Avg,
    Max,
}

/// Per-pixel reduction across channels.
pub fn channel_pool(feature: &Tensor4, mode: ChannelPool) -> Tensor4 {
    let s = feature.shape();
    Tensor4::from_fn(Shape4::new(s.n, 1, s.h, s.w), |n, _, y, x| {
        let vals = (0..s.c).map(|c| feature.at(n, c, y, x));
        match mode {
            ChannelPool::Avg => vals.sum::<f64>() / s.c as f64,
            ChannelPool::Max => vals.fold(f64::NEG_INFINITY, f64::max),
        }
    })
}

/// Channel index of the per-pixel maximum (first index wins ties).
pub(crate) fn channel_argmax(feature: &Tensor4) -> Vec<usize> {
    let s = feature.shape();
    let mut out = Vec::with_capacity(s.n * s.plane());
    for n in 0..s.n {
        for y in 0..s.h {
            for x in 0..s.w {
                let mut best = 0;
                let mut best_v = feature.at(n, 0, y, x);
                for c in 1..s.c {
                    let v = feature.at(n, c, y, x);
                    if v > best_v {
                        best = c;
                        best_v = v;
                    }
                }
                out.push(best);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMode {
    Nearest,
    Bilinear,
}

#[inline]
fn nearest_src(dst: usize, src_len: usize, dst_len: usize) -> usize {
    let scale = src_len as f64 / dst_len as f64;
    ((dst as f64 * scale).floor() as usize).min(src_len - 1)
}

/// Align-corners-false source coordinate, clamped to `[0, src_len-1]`.
/// Returns the lower index, the upper index and the fractional weight of the upper.
#[inline]
fn linear_src(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, src - lo as f64)
}

/// Spatial resample to `new_h x new_w`.
pub fn resize(feature: &Tensor4, new_h: usize, new_w: usize, mode: ResizeMode) -> Result<Tensor4> {
    if new_h == 0 || new_w == 0 {
        return shape_err(format!("resize target {new_h}x{new_w} must be >= 1"));
    }
    let s = feature.shape();
    let out_shape = s.with_spatial(new_h, new_w);
    let mut out = Tensor4::zeros(out_shape);
    let rows_y: Vec<_> = (0..new_h).map(|y| linear_src(y, s.h, new_h)).collect();
    let cols_x: Vec<_> = (0..new_w).map(|x| linear_src(x, s.w, new_w)).collect();
    out.data
        .par_chunks_mut(new_w)
        .enumerate()
        .for_each(|(row, dst)| {
            let y = row % new_h;
            let nc = row / new_h;
            let src = &feature.data[nc * s.plane()..(nc + 1) * s.plane()];
            match mode {
                ResizeMode::Nearest => {
                    let sy = nearest_src(y, s.h, new_h);
                    for (x, d) in dst.iter_mut().enumerate() {
                        *d = src[sy * s.w + nearest_src(x, s.w, new_w)];
                    }
                }
                ResizeMode::Bilinear => {
                    let (y0, y1, fy) = rows_y[y];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let (x0, x1, fx) = cols_x[x];
                        let top = src[y0 * s.w + x0] * (1.0 - fx) + src[y0 * s.w + x1] * fx;
                        let bot = src[y1 * s.w + x0] * (1.0 - fx) + src[y1 * s.w + x1] * fx;
                        *d = top * (1.0 - fy) + bot * fy;
                    }
                }
            }
        });
    Ok(out)
}

/// Adjoint of nearest-neighbour `resize`: sums each output gradient back onto its source pixel.
pub(crate) fn resize_nearest_backward(grad: &Tensor4, src_h: usize, src_w: usize) -> Tensor4 {
    let g = grad.shape();
    let mut out = Tensor4::zeros(g.with_spatial(src_h, src_w));
    for n in 0..g.n {
        for c in 0..g.c {
            let gp = grad.plane(n, c);
            let op = out.plane_mut(n, c);
            for y in 0..g.h {
                let sy = nearest_src(y, src_h, g.h);
                for x in 0..g.w {
                    op[sy * src_w + nearest_src(x, src_w, g.w)] += gp[y * g.w + x];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Tensor4 {
        Tensor4::from_vec(Shape4::new(1, 1, 2, 2), vec![1.0, 3.0, 5.0, 7.0]).unwrap()
    }

    #[test]
    fn bilinear_examples() {
        let t = grid();
        assert_eq!(bilinear_sample(&t, 0, 0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(bilinear_sample(&t, 0, 0, 0.0, 0.5).unwrap(), 2.0);
        assert_eq!(bilinear_sample(&t, 0, 0, -1.0, -1.0).unwrap(), 0.0);
        // half outside: only the in-grid corners contribute
        assert_eq!(bilinear_sample(&t, 0, 0, 1.0, 1.5).unwrap(), 3.5);
    }

    #[test]
    fn bilinear_rejects_bad_index() {
        let t = grid();
        assert!(matches!(bilinear_sample(&t, 1, 0, 0.0, 0.0), Err(Error::Index(_))));
        assert!(matches!(bilinear_sample(&t, 0, 1, 0.0, 0.0), Err(Error::Index(_))));
    }

    #[test]
    fn pooling_examples() {
        assert_eq!(global_avg_pool(&grid()).data(), &[4.0]);
        let c = Tensor4::full(Shape4::new(1, 1, 3, 3), 2.5);
        assert_eq!(global_avg_pool(&c).data(), &[2.5]);
        let two = Tensor4::from_vec(Shape4::new(1, 2, 1, 2), vec![0.0, 2.0, 10.0, 10.0]).unwrap();
        assert_eq!(global_avg_pool(&two).data(), &[1.0, 10.0]);

        let p = Tensor4::from_vec(Shape4::new(1, 2, 1, 1), vec![2.0, 4.0]).unwrap();
        assert_eq!(channel_pool(&p, ChannelPool::Avg).data(), &[3.0]);
        assert_eq!(channel_pool(&p, ChannelPool::Max).data(), &[4.0]);
        let one = Tensor4::scalar(5.0);
        assert_eq!(channel_pool(&one, ChannelPool::Avg).data(), &[5.0]);
        assert_eq!(channel_pool(&one, ChannelPool::Max).data(), &[5.0]);
    }

    #[test]
    fn resize_examples() {
        let t = Tensor4::from_vec(Shape4::new(1, 1, 1, 2), vec![1.0, 3.0]).unwrap();
        let near = resize(&t, 1, 4, ResizeMode::Nearest).unwrap();
        assert_eq!(near.data(), &[1.0, 1.0, 3.0, 3.0]);
        let bil = resize(&t, 1, 4, ResizeMode::Bilinear).unwrap();
        assert_eq!(bil.data(), &[1.0, 1.5, 2.5, 3.0]);
        assert!(resize(&t, 0, 4, ResizeMode::Nearest).is_err());
    }

    #[test]
    fn nearest_backward_is_adjoint() {
        let src = Tensor4::from_fn(Shape4::new(1, 2, 3, 2), |_, c, y, x| (c * 7 + y * 3 + x) as f64 * 0.3 - 1.0);
        let g = Tensor4::from_fn(Shape4::new(1, 2, 6, 4), |_, c, y, x| ((c + y * x) % 5) as f64 - 2.0);
        let up = resize(&src, 6, 4, ResizeMode::Nearest).unwrap();
        let lhs = up.dot(&g).unwrap();
        let rhs = src.dot(&resize_nearest_backward(&g, 3, 2)).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn concat_and_split() {
        let a = Tensor4::from_fn(Shape4::new(2, 1, 2, 2), |n, _, y, x| (n * 10 + y * 2 + x) as f64);
        let b = Tensor4::from_fn(Shape4::new(2, 2, 2, 2), |n, c, y, x| -((n * 100 + c * 10 + y * 2 + x) as f64));
        let cat = Tensor4::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), Shape4::new(2, 3, 2, 2));
        assert_eq!(cat.at(1, 0, 1, 1), a.at(1, 0, 1, 1));
        assert_eq!(cat.at(1, 2, 0, 1), b.at(1, 1, 0, 1));
        let (a2, b2) = cat.split_channels(1).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }

    #[test]
    fn from_vec_validates() {
        assert!(Tensor4::from_vec(Shape4::new(1, 1, 1, 2), vec![1.0]).is_err());
        assert!(Tensor4::from_vec(Shape4::new(1, 0, 1, 1), vec![]).is_err());
        assert!(matches!(
            Tensor4::from_vec(Shape4::new(1, 1, 1, 1), vec![f64::NAN]),
            Err(Error::Numeric(_))
        ));
    }

    fn small_field() -> impl Strategy<Value = Tensor4> {
        (1usize..5, 1usize..5).prop_flat_map(|(h, w)| {
            prop::collection::vec(-10.0f64..10.0, h * w)
                .prop_map(move |d| Tensor4::from_vec(Shape4::new(1, 1, h, w), d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn integer_positions_are_lookups(t in small_field()) {
            let s = t.shape();
            for y in 0..s.h {
                for x in 0..s.w {
                    prop_assert_eq!(bilinear_sample(&t, 0, 0, y as f64, x as f64).unwrap(), t.at(0, 0, y, x));
                }
            }
        }

        #[test]
        fn cell_center_is_corner_mean(t in small_field()) {
            let s = t.shape();
            for y in 0..s.h.saturating_sub(1) {
                for x in 0..s.w.saturating_sub(1) {
                    let mean = (t.at(0, 0, y, x) + t.at(0, 0, y, x + 1) + t.at(0, 0, y + 1, x) + t.at(0, 0, y + 1, x + 1)) / 4.0;
                    let v = bilinear_sample(&t, 0, 0, y as f64 + 0.5, x as f64 + 0.5).unwrap();
                    prop_assert!((v - mean).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn affine_field_reproduced(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
                                   y in 0.0f64..4.0, x in 0.0f64..6.0) {
            let t = Tensor4::from_fn(Shape4::new(1, 1, 5, 7), |_, _, yy, xx| a + b * xx as f64 + c * yy as f64);
            let v = bilinear_sample(&t, 0, 0, y, x).unwrap();
            prop_assert!((v - (a + b * x + c * y)).abs() < 1e-10);
        }

        #[test]
        fn avg_pool_is_linear(t in small_field(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let u = t.map(|v| v.sin() * 2.0);
            let combo = t.zip_map(&u, |p, q| alpha * p + beta * q).unwrap();
            let lhs = global_avg_pool(&combo).data()[0];
            let rhs = alpha * global_avg_pool(&t).data()[0] + beta * global_avg_pool(&u).data()[0];
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn resize_same_size_is_identity(t in small_field()) {
            let s = t.shape();
            for mode in [ResizeMode::Nearest, ResizeMode::Bilinear] {
                prop_assert_eq!(&resize(&t, s.h, s.w, mode).unwrap(), &t);
            }
        }
    }
}
