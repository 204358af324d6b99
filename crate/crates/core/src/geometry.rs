//! Pinhole length/depth relations and the per-pixel depth-to-scale conversion
//! that drives every adaptive-scale operator.

use crate::error::{domain_err, shape_err, Result};
use crate::tensor::Tensor4;

/// Normalization constant of the scale-difference map.
pub const SCALE_DIFF_CENTER: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    focal_length: f64,
}

impl CameraIntrinsics {
    pub fn new(focal_length: f64) -> Result<Self> {
        if !(focal_length.is_finite() && focal_length > 0.0) {
            return domain_err(format!("focal length must be > 0, got {focal_length}"));
        }
        Ok(Self { focal_length })
    }

    pub fn focal_length(&self) -> f64 {
        self.focal_length
    }
}

fn positive_depth(depth: f64, what: &str) -> Result<()> {
    if !(depth.is_finite() && depth > 0.0) {
        return domain_err(format!("{what} must be > 0, got {depth}"));
    }
    Ok(())
}

/// Image-plane length of a scene segment of `real_length` seen at `depth`.
pub fn project_length(real_length: f64, intr: &CameraIntrinsics, depth: f64) -> Result<f64> {
    positive_depth(depth, "depth")?;
    if !(real_length.is_finite() && real_length >= 0.0) {
        return domain_err(format!("real length must be >= 0, got {real_length}"));
    }
    Ok(real_length * intr.focal_length / depth)
}

/// Image length after the object moves from `depth_from` to `depth_to`.
pub fn rescale_length(image_length: f64, depth_from: f64, depth_to: f64) -> Result<f64> {
    positive_depth(depth_from, "source depth")?;
    positive_depth(depth_to, "target depth")?;
    Ok(image_length * depth_from / depth_to)
}

/// Parameters of the depth → filter-size mapping `k = clamp(k_r · D_r / D)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleConversion {
    pub base_kernel: f64,
    pub reference_depth: f64,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl ScaleConversion {
    pub const DEFAULT_BASE_KERNEL: f64 = 3.0;
    pub const DEFAULT_SCALE_MIN: f64 = 1.0;
    pub const DEFAULT_SCALE_MAX: f64 = 9.0;

    pub fn new(base_kernel: f64, reference_depth: f64, scale_min: f64, scale_max: f64) -> Result<Self> {
        let c = Self {
            base_kernel,
            reference_depth,
            scale_min,
            scale_max,
        };
        c.validate()?;
        Ok(c)
    }

    /// Base kernel 3 with the default `[1, 9]` clamp.
    pub fn standard(reference_depth: f64) -> Result<Self> {
        Self::new(
            Self::DEFAULT_BASE_KERNEL,
            reference_depth,
            Self::DEFAULT_SCALE_MIN,
            Self::DEFAULT_SCALE_MAX,
        )
    }

    pub fn with_reference(self, reference_depth: f64) -> Result<Self> {
        Self::new(self.base_kernel, reference_depth, self.scale_min, self.scale_max)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_kernel.is_finite() && self.base_kernel >= 1.0) {
            return domain_err(format!("base kernel must be >= 1, got {}", self.base_kernel));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.base_kernel && self.base_kernel <= self.scale_max)
            || !self.scale_max.is_finite()
        {
            return domain_err(format!(
                "need 0 < scale_min <= base_kernel <= scale_max, got {} <= {} <= {}",
                self.scale_min, self.base_kernel, self.scale_max
            ));
        }
        positive_depth(self.reference_depth, "reference depth")
    }

    pub fn clamp(&self, k: f64) -> f64 {
        k.clamp(self.scale_min, self.scale_max)
    }
}

/// Filter size for an object at `depth`.
pub fn depth_to_scale(depth: f64, conv: &ScaleConversion) -> Result<f64> {
    positive_depth(depth, "depth")?;
    Ok(conv.clamp(conv.base_kernel * conv.reference_depth / depth))
}

/// Per-pixel filter sizes (`n×1×h×w`) together with the conversion that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMap {
    values: Tensor4,
    conversion: ScaleConversion,
}

impl ScaleMap {
    pub fn new(values: Tensor4, conversion: ScaleConversion) -> Result<Self> {
        conversion.validate()?;
        if values.shape().c != 1 {
            return shape_err(format!("scale map must have one channel, got {}", values.shape()));
        }
        if let Some(i) = values
            .data()
            .iter()
            .position(|&k| !(k.is_finite() && k >= conversion.scale_min && k <= conversion.scale_max))
        {
            return domain_err(format!(
                "scale value {} at flat index {i} outside [{}, {}]",
                values.data()[i],
                conversion.scale_min,
                conversion.scale_max
            ));
        }
        Ok(Self { values, conversion })
    }

    pub fn constant(n: usize, h: usize, w: usize, k: f64, conversion: ScaleConversion) -> Result<Self> {
        Self::new(
            Tensor4::full(crate::tensor::Shape4::new(n, 1, h, w), k),
            conversion,
        )
    }

    pub fn values(&self) -> &Tensor4 {
        &self.values
    }

    pub fn conversion(&self) -> &ScaleConversion {
        &self.conversion
    }

    pub fn into_values(self) -> Tensor4 {
        self.values
    }
}

fn first_nonpositive(depth: &Tensor4) -> Result<()> {
    if let Some(i) = depth.data().iter().position(|&d| !(d.is_finite() && d > 0.0)) {
        let s = depth.shape();
        let (x, rest) = (i % s.w, i / s.w);
        let (y, rest) = (rest % s.h, rest / s.h);
        let (c, n) = (rest % s.c, rest / s.c);
        return domain_err(format!(
            "depth must be > 0, got {} at (n={n}, c={c}, y={y}, x={x})",
            depth.data()[i]
        ));
    }
    Ok(())
}

/// Applies [`depth_to_scale`] to every pixel of an `n×1×h×w` depth map.
pub fn depth_map_to_scale_map(depth: &Tensor4, conv: &ScaleConversion) -> Result<ScaleMap> {
    conv.validate()?;
    if depth.shape().c != 1 {
        return shape_err(format!("depth map must have one channel, got {}", depth.shape()));
    }
    first_nonpositive(depth)?;
    let kr_dr = conv.base_kernel * conv.reference_depth;
    let values = depth.map(|d| conv.clamp(kr_dr / d));
    Ok(ScaleMap {
        values,
        conversion: *conv,
    })
}

/// Mean depth of the scene.
pub fn reference_depth_from_map(depth: &Tensor4) -> Result<f64> {
    first_nonpositive(depth)?;
    Ok(depth.mean())
}

/// Scale-difference map `(k - 3) / 3`.
pub fn normalize_scale_map(scale: &ScaleMap) -> Tensor4 {
    if scale.conversion.base_kernel != SCALE_DIFF_CENTER {
        log::warn!(
            "scale map uses base kernel {}; the difference map is still centred on {}",
            scale.conversion.base_kernel,
            SCALE_DIFF_CENTER
        );
    }
    scale
        .values
        .map(|k| (k - SCALE_DIFF_CENTER) / SCALE_DIFF_CENTER)
}

/// Where the reference depth of a conversion comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceDepth {
    /// Mean of the guiding depth map, recomputed for every map converted.
    SceneMean,
    Fixed(f64),
}

/// Conversion settings minus the reference depth, which is resolved per map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalePolicy {
    pub base_kernel: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub reference: ReferenceDepth,
}

impl Default for ScalePolicy {
    fn default() -> Self {
        Self {
            base_kernel: ScaleConversion::DEFAULT_BASE_KERNEL,
            scale_min: ScaleConversion::DEFAULT_SCALE_MIN,
            scale_max: ScaleConversion::DEFAULT_SCALE_MAX,
            reference: ReferenceDepth::SceneMean,
        }
    }
}

impl ScalePolicy {
    pub fn conversion_for(&self, depth: &Tensor4) -> Result<ScaleConversion> {
        let d_r = match self.reference {
            ReferenceDepth::SceneMean => reference_depth_from_map(depth)?,
            ReferenceDepth::Fixed(d) => d,
        };
        ScaleConversion::new(self.base_kernel, d_r, self.scale_min, self.scale_max)
    }

    pub fn scale_map(&self, depth: &Tensor4) -> Result<ScaleMap> {
        depth_map_to_scale_map(depth, &self.conversion_for(depth)?)
    }
}
