//! Slow scalar reimplementations used as references for the fast operators.
//!
//! Every routine here works pixel by pixel on plain buffers and shares no code
//! path with the operators it checks beyond `Tensor4` indexing.

use crate::conv::{ConvKernel, DmsfParams};
use crate::error::{shape_err, Result};
use crate::fusion::{DcsfParams, SeParams};
use crate::geometry::ScaleMap;
use crate::tensor::{Shape4, Tensor4};

/// One batch item as `[channel][y][x]`.
type Image = Vec<Vec<Vec<f64>>>;

fn image(t: &Tensor4, n: usize) -> Image {
    let s = t.shape();
    (0..s.c)
        .map(|c| (0..s.h).map(|y| (0..s.w).map(|x| t.at(n, c, y, x)).collect()).collect())
        .collect()
}

fn zeros(c: usize, h: usize, w: usize) -> Image {
    vec![vec![vec![0.0; w]; h]; c]
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Same-padded correlation at one output pixel, zero outside the grid.
fn conv_pixel(img: &Image, k: &ConvKernel, o: usize, y: usize, x: usize) -> f64 {
    let size = k.size();
    let r = (size / 2) as isize;
    let (h, w) = (img[0].len() as isize, img[0][0].len() as isize);
    let mut acc = k.bias_at(o);
    for (i, plane) in img.iter().enumerate() {
        for ky in 0..size {
            for kx in 0..size {
                let sy = y as isize + ky as isize - r;
                let sx = x as isize + kx as isize - r;
                if sy >= 0 && sy < h && sx >= 0 && sx < w {
                    acc += k.weight.at(o, i, ky, kx) * plane[sy as usize][sx as usize];
                }
            }
        }
    }
    acc
}

fn conv_image(img: &Image, k: &ConvKernel) -> Image {
    let (h, w) = (img[0].len(), img[0][0].len());
    let mut out = zeros(k.out_channels(), h, w);
    for (o, plane) in out.iter_mut().enumerate() {
        for (y, row) in plane.iter_mut().enumerate() {
            for (x, v) in row.iter_mut().enumerate() {
                *v = conv_pixel(img, k, o, y, x);
            }
        }
    }
    out
}

/// Multiple-scale fusion evaluated pixel by pixel: branch weights are formed
/// directly from the Gaussian distances without max subtraction.
pub fn dmsf_pixel_oracle(input: &Tensor4, params: &DmsfParams, scale: &ScaleMap) -> Result<Tensor4> {
    let s = input.shape();
    let out_c = params.branches[0].out_channels();
    let sizes = params.branch_sizes();
    let two_var = 2.0 * params.sigma * params.sigma;
    let mut out = Tensor4::zeros(s.with_channels(out_c));
    for n in 0..s.n {
        let img = image(input, n);
        for y in 0..s.h {
            for x in 0..s.w {
                let kd = scale.values().at(n, 0, y, x);
                let mut num = [0.0; 3];
                let mut den = 0.0;
                for b in 0..3 {
                    let g = (-(kd - sizes[b]) * (kd - sizes[b]) / two_var).exp();
                    num[b] = g.exp();
                    den += num[b];
                }
                for o in 0..out_c {
                    let mut v = 0.0;
                    for b in 0..3 {
                        v += num[b] / den * conv_pixel(&img, &params.branches[b], o, y, x);
                    }
                    out.set(n, o, y, x, v);
                }
            }
        }
    }
    Ok(out)
}

fn se_gate(img: &Image, se: &SeParams) -> Vec<f64> {
    let (h, w) = (img[0].len(), img[0][0].len());
    let area = (h * w) as f64;
    let pooled: Vec<f64> = img
        .iter()
        .map(|plane| plane.iter().flatten().sum::<f64>() / area)
        .collect();
    let hidden: Vec<f64> = (0..se.squeeze.out_channels())
        .map(|j| {
            let mut z = se.squeeze.bias_at(j);
            for (i, p) in pooled.iter().enumerate() {
                z += se.squeeze.weight.at(j, i, 0, 0) * p;
            }
            z.max(0.0)
        })
        .collect();
    (0..se.excite.out_channels())
        .map(|c| {
            let mut z = se.excite.bias_at(c);
            for (j, v) in hidden.iter().enumerate() {
                z += se.excite.weight.at(c, j, 0, 0) * v;
            }
            logistic(z)
        })
        .collect()
}

/// Squeeze-excitation gate, `n×C×1×1`.
pub fn se_oracle(feature: &Tensor4, se: &SeParams) -> Result<Tensor4> {
    let s = feature.shape();
    if se.squeeze.in_channels() != s.c {
        return shape_err(format!("SE expects {} channels, got {s}", se.squeeze.in_channels()));
    }
    let mut out = Tensor4::zeros(Shape4::new(s.n, s.c, 1, 1));
    for n in 0..s.n {
        for (c, g) in se_gate(&image(feature, n), se).into_iter().enumerate() {
            out.set(n, c, 0, 0, g);
        }
    }
    Ok(out)
}

/// Scale-aware fusion written out term by term.
pub fn dcsf_oracle(f_dcsc: &Tensor4, f_c: &Tensor4, scale: &ScaleMap, params: &DcsfParams) -> Result<Tensor4> {
    let s = f_dcsc.shape();
    if f_c.shape() != s || params.branch_channels() != s.c {
        return shape_err(format!("fusion oracle inputs {s} / {} do not fit params", f_c.shape()));
    }
    let (c, h, w) = (s.c, s.h, s.w);
    let mut out = Tensor4::zeros(s.with_channels(params.out_channels()));
    for n in 0..s.n {
        let a = image(f_dcsc, n);
        let b = image(f_c, n);
        let s_u: Vec<Vec<f64>> = (0..h)
            .map(|y| (0..w).map(|x| (scale.values().at(n, 0, y, x) - 3.0) / 3.0).collect())
            .collect();

        // U and [U, S_U]
        let mut u = a.clone();
        u.extend(b.iter().cloned());
        let mut u_s = u.clone();
        u_s.push(s_u.clone());

        let m_c = se_gate(&conv_image(&u_s, &params.inject_c), &params.se);

        let mut uv_s: Image = u
            .iter()
            .zip(&m_c)
            .map(|(plane, m)| plane.iter().map(|row| row.iter().map(|v| m * v).collect()).collect())
            .collect();
        uv_s.push(s_u);
        let f_prime = conv_image(&uv_s, &params.inject_s);

        let mut pooled = zeros(2, h, w);
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0.0;
                let mut max = f64::NEG_INFINITY;
                for plane in &f_prime {
                    sum += plane[y][x];
                    max = max.max(plane[y][x]);
                }
                pooled[0][y][x] = sum / f_prime.len() as f64;
                pooled[1][y][x] = max;
            }
        }
        let q = conv_image(&pooled, &params.spatial);

        let mut z = zeros(2 * c, h, w);
        for y in 0..h {
            for x in 0..w {
                let m_s = logistic(q[0][y][x]);
                for ch in 0..c {
                    z[ch][y][x] = m_c[ch] * (m_s * a[ch][y][x]) + u[ch][y][x];
                    z[c + ch][y][x] = m_c[c + ch] * b[ch][y][x] + u[c + ch][y][x];
                }
            }
        }
        let fused = conv_image(&z, &params.out_proj);
        for (o, plane) in fused.iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    out.set(n, o, y, x, plane[y][x]);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::{conv2d_standard, dmsf_forward};
    use crate::fusion::{dcsf_forward, se_channel_attention};
    use crate::geometry::ScaleConversion;
    use crate::rng::{uniform_tensor, SeedStream};

    #[test]
    fn conv_pixel_matches_standard() {
        let mut rng = SeedStream::new(60).rng("oracle");
        let x = uniform_tensor(&mut rng, Shape4::new(1, 2, 5, 6), -1.0, 1.0);
        let k = ConvKernel::random(&mut rng, 3, 2, 3);
        let fast = conv2d_standard(&x, &k).unwrap();
        let slow = conv_image(&image(&x, 0), &k);
        for o in 0..3 {
            for y in 0..5 {
                for xx in 0..6 {
                    assert!((fast.at(0, o, y, xx) - slow[o][y][xx]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dmsf_matches_pixel_loop() {
        let mut rng = SeedStream::new(61).rng("dmsf");
        let x = uniform_tensor(&mut rng, Shape4::new(2, 2, 6, 5), -1.0, 1.0);
        let p = DmsfParams::random(&mut rng, 3, 2, 2.0).unwrap();
        let conv = ScaleConversion::standard(1.0).unwrap();
        let k = uniform_tensor(&mut rng, Shape4::new(2, 1, 6, 5), 1.0, 9.0);
        let sm = ScaleMap::new(k, conv).unwrap();
        let a = dmsf_forward(&x, &p, &sm).unwrap();
        let b = dmsf_pixel_oracle(&x, &p, &sm).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn se_and_fusion_match() {
        let mut rng = SeedStream::new(62).rng("dcsf");
        let p = DcsfParams::random(&mut rng, 4, 4);
        let fd = uniform_tensor(&mut rng, Shape4::new(1, 4, 6, 6), -1.0, 1.0);
        let fc = uniform_tensor(&mut rng, Shape4::new(1, 4, 6, 6), -1.0, 1.0);
        let feat = Tensor4::concat_channels(&[&fd, &fc]).unwrap();
        let g = se_channel_attention(&feat, &p.se).unwrap();
        assert!(g.max_abs_diff(&se_oracle(&feat, &p.se).unwrap()).unwrap() < 1e-14);

        let conv = ScaleConversion::standard(1.0).unwrap();
        let k = uniform_tensor(&mut rng, Shape4::new(1, 1, 6, 6), 1.0, 9.0);
        let sm = ScaleMap::new(k, conv).unwrap();
        let a = dcsf_forward(&fd, &fc, &sm, &p).unwrap();
        let b = dcsf_oracle(&fd, &fc, &sm, &p).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }
}
