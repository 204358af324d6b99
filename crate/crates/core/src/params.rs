//! Named parameter tensors and their on-disk bundle format.
//!
//! A bundle is a directory holding `manifest.txt` plus one DTEN file per tensor.
//! Each manifest line is `<name> <n> <c> <h> <w> <file>`, in visit order;
//! lines starting with `#` are comments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dten::{read_tensor, write_tensor};
use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

pub const MANIFEST: &str = "manifest.txt";

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// A structure of parameter tensors addressable by dotted names.
///
/// Gradients are returned in the same structure as the parameters they belong to.
pub trait ParamSet: Clone {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor4)>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor4)>);

    fn named_tensors(&self) -> Vec<(String, &Tensor4)> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor4)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out
    }

    fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor4> {
        self.named_tensors_mut()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    fn num_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Same structure with every value set to zero.
    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.named_tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// `self += alpha * other` tensor by tensor.
    fn accumulate(&mut self, alpha: f64, other: &Self) -> Result<()> {
        let src = other.named_tensors();
        for ((name, dst), (_, s)) in self.named_tensors_mut().into_iter().zip(src) {
            dst.axpy(alpha, s)
                .map_err(|e| Error::Shape(format!("{name}: {e}")))?;
        }
        Ok(())
    }
}

fn file_name(index: usize, name: &str) -> String {
    format!("{index:03}_{name}.dten")
}

pub fn save_params<P: ParamSet>(dir: impl AsRef<Path>, params: &P) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("# name n c h w file\n");
    for (i, (name, t)) in params.named_tensors().into_iter().enumerate() {
        let file = file_name(i, &name);
        let s = t.shape();
        writeln!(manifest, "{name} {} {} {} {} {file}", s.n, s.c, s.h, s.w).unwrap();
        write_tensor(dir.join(&file), t)?;
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

/// Loads a bundle into `params`, whose structure fixes the expected names and shapes.
pub fn load_params<P: ParamSet>(dir: impl AsRef<Path>, params: &mut P) -> Result<()> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let entries: Vec<Vec<&str>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().collect())
        .collect();
    let slots = params.named_tensors_mut();
    if entries.len() != slots.len() {
        return Err(Error::Shape(format!(
            "manifest lists {} tensors, parameter set has {}",
            entries.len(),
            slots.len()
        )));
    }
    for (fields, (name, slot)) in entries.into_iter().zip(slots) {
        if fields.len() != 6 || fields[0] != name {
            return Err(Error::Shape(format!("manifest entry {fields:?} does not match parameter {name}")));
        }
        let dims: Vec<usize> = fields[1..5]
            .iter()
            .map(|d| d.parse().map_err(|_| Error::Shape(format!("bad dim {d:?} for {name}"))))
            .collect::<Result<_>>()?;
        let shape = Shape4::new(dims[0], dims[1], dims[2], dims[3]);
        let t = read_tensor(dir.join(fields[5]))?;
        if t.shape() != shape || shape != slot.shape() {
            return Err(Error::Shape(format!(
                "{name}: expected {}, manifest {shape}, file {}",
                slot.shape(),
                t.shape()
            )));
        }
        *slot = t;
    }
    Ok(())
}
