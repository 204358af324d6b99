//! Procedural scenes for the demo: a receding ground plane with a few objects
//! standing at distinct depths, textured so that farther surfaces carry finer
//! detail.

use dcs_core::rng::SeedStream;
use dcs_core::{Error, Result, Shape4, Tensor4};
use rand::Rng;

const BLOBS: usize = 3;

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    /// `n×3×h×w`, values in `[0, 1]`.
    pub image: Tensor4,
    /// `n×1×h×w`, values in `[min_depth, max_depth]`.
    pub depth: Tensor4,
    pub seed: u64,
    pub min_depth: f64,
    pub max_depth: f64,
}

struct Blob {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    depth: f64,
    tint: [f64; 3],
}

impl SyntheticScene {
    /// Single-image scene; depths are clipped into `[min_depth, max_depth]`.
    pub fn generate(seed: u64, h: usize, w: usize, min_depth: f64, max_depth: f64) -> Result<Self> {
        if !(min_depth > 0.0 && min_depth < max_depth && max_depth.is_finite()) {
            return Err(Error::Domain(format!(
                "scene depth range needs 0 < min < max, got [{min_depth}, {max_depth}]"
            )));
        }
        if h == 0 || w == 0 {
            return Err(Error::Shape(format!("scene size {w}x{h} is empty")));
        }
        let streams = SeedStream::new(seed).child("scene");
        let mut rng = streams.rng("layout");

        // positions on the log-depth axis between min_depth (0) and max_depth (1)
        let (ln_min, ln_max) = (min_depth.ln(), max_depth.ln());
        let at = |t: f64| (ln_min + t * (ln_max - ln_min)).exp();
        let far_t = rng.gen_range(0.85..0.95);
        let near_t = rng.gen_range(0.3..0.4);

        // ground plane: far at the top row, near at the bottom row, linear in log depth
        let ground_at = |row_t: f64| at(far_t + (near_t - far_t) * row_t);

        // blob depths spread over the ladder so each sits at its own depth
        let blobs: Vec<Blob> = (0..BLOBS)
            .map(|b| {
                let t = (b as f64 + rng.gen_range(0.2..0.8)) / BLOBS as f64;
                Blob {
                    cy: rng.gen_range(0.25..0.85) * h as f64,
                    cx: rng.gen_range(0.15..0.85) * w as f64,
                    ry: rng.gen_range(0.08..0.2) * h as f64,
                    rx: rng.gen_range(0.08..0.2) * w as f64,
                    depth: at(near_t + t * (far_t - near_t) * 0.8),
                    tint: [rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0)],
                }
            })
            .collect();
        let phase: [f64; 3] = [rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3)];

        let mut depth = Tensor4::zeros(Shape4::new(1, 1, h, w));
        let mut image = Tensor4::zeros(Shape4::new(1, 3, h, w));
        for y in 0..h {
            let row_t = if h > 1 { y as f64 / (h - 1) as f64 } else { 1.0 };
            let ground = ground_at(row_t);
            for x in 0..w {
                let mut d = ground;
                let mut tint = [0.55, 0.5, 0.45];
                // painter's order: nearest blob wins
                for b in &blobs {
                    let dy = (y as f64 + 0.5 - b.cy) / b.ry;
                    let dx = (x as f64 + 0.5 - b.cx) / b.rx;
                    if dy * dy + dx * dx <= 1.0 && b.depth < d {
                        d = b.depth;
                        tint = b.tint;
                    }
                }
                let d = d.clamp(min_depth, max_depth);
                depth.set(0, 0, y, x, d);
                // texture period shrinks with distance
                let freq = 0.3 + 1.2 / (1.0 + d / min_depth).ln();
                for c in 0..3 {
                    let wave = (freq * (x as f64 + 0.7 * y as f64) + phase[c]).sin();
                    image.set(0, c, y, x, (tint[c] * (0.75 + 0.25 * wave)).clamp(0.0, 1.0));
                }
            }
        }
        Ok(Self {
            image,
            depth,
            seed,
            min_depth,
            max_depth,
        })
    }

    /// Mean over colour channels, `n×1×h×w`.
    pub fn luminance(&self) -> Tensor4 {
        let s = self.image.shape();
        Tensor4::from_fn(s.with_channels(1), |n, _, y, x| {
            (0..s.c).map(|c| self.image.at(n, c, y, x)).sum::<f64>() / s.c as f64
        })
    }
}
