//! Central finite-difference gradients and analytic-vs-numeric comparison.
//!
//! This module only verifies gradients; it never computes them for the
//! operators themselves.

use std::io;
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{shape_err, Error, Result};
use crate::params::ParamSet;
use crate::rng::SeedStream;
use crate::tensor::Tensor4;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const EPS_FLOOR: f64 = 1e-12;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every selected element `i`.
///
/// Unselected elements are zero in the result.
pub fn finite_diff_grad<F>(f: F, x: &Tensor4, h: f64, subset: Option<&[usize]>) -> Result<Tensor4>
where
    F: Fn(&Tensor4) -> f64 + Sync,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("step must be > 0, got {h}")));
    }
    let all: Vec<usize>;
    let indices = match subset {
        Some(s) => s,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    if let Some(&bad) = indices.iter().find(|&&i| i >= x.len()) {
        return Err(Error::Index(format!("element {bad} out of range for {} values", x.len())));
    }
    let values = indices
        .par_iter()
        .map(|&i| {
            let mut probe = x.clone();
            let x0 = probe.data()[i];
            probe.data_mut()[i] = x0 + h;
            let fp = f(&probe);
            probe.data_mut()[i] = x0 - h;
            let fm = f(&probe);
            if !(fp.is_finite() && fm.is_finite()) {
                return Err(Error::Numeric(format!(
                    "objective is non-finite when perturbing element {i} (f+ = {fp}, f- = {fm})"
                )));
            }
            Ok((fp - fm) / (2.0 * h))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Tensor4::zeros(x.shape());
    for (&i, v) in indices.iter().zip(values) {
        out.data_mut()[i] = v;
    }
    Ok(out)
}

/// Element-wise comparison of an analytic gradient against a numeric one.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub parameter_name: String,
    /// Flat indices that were compared.
    pub indices: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Positions (into `indices`) of elements that met neither tolerance.
    pub failures: Vec<usize>,
    pub pass: bool,
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(EPS_FLOOR)
}

/// Compares every element; passes iff each one meets `rel_tol` or `abs_tol`.
pub fn compare_grads(name: &str, analytic: &Tensor4, numeric: &Tensor4, rel_tol: f64, abs_tol: f64) -> Result<GradReport> {
    let all: Vec<usize> = (0..analytic.len()).collect();
    compare_grads_at(name, analytic, numeric, &all, rel_tol, abs_tol)
}

/// Like [`compare_grads`], restricted to the given flat indices.
pub fn compare_grads_at(
    name: &str,
    analytic: &Tensor4,
    numeric: &Tensor4,
    indices: &[usize],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<GradReport> {
    if analytic.shape() != numeric.shape() {
        return shape_err(format!(
            "{name}: analytic dims {} != numeric dims {}",
            analytic.shape(),
            numeric.shape()
        ));
    }
    let mut report = GradReport {
        parameter_name: name.to_string(),
        indices: indices.to_vec(),
        analytic: Vec::with_capacity(indices.len()),
        numeric: Vec::with_capacity(indices.len()),
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        rel_tol,
        abs_tol,
        failures: Vec::new(),
        pass: true,
    };
    for (pos, &i) in indices.iter().enumerate() {
        let (a, n) = (analytic.data()[i], numeric.data()[i]);
        let abs = (a - n).abs();
        let rel = rel_error(a, n);
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
        if !(rel <= rel_tol || abs <= abs_tol) {
            report.failures.push(pos);
        }
        report.analytic.push(a);
        report.numeric.push(n);
    }
    report.pass = report.failures.is_empty();
    Ok(report)
}

pub const CSV_HEADER: [&str; 6] = ["parameter_name", "index", "analytic", "numeric", "rel_error", "abs_error"];

impl GradReport {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn write_row<W: io::Write>(&self, w: &mut csv::Writer<W>, pos: usize) -> csv::Result<()> {
        let (a, n) = (self.analytic[pos], self.numeric[pos]);
        w.write_record([
            self.parameter_name.clone(),
            self.indices[pos].to_string(),
            format!("{a:e}"),
            format!("{n:e}"),
            format!("{:e}", rel_error(a, n)),
            format!("{:e}", (a - n).abs()),
        ])
    }

    /// All compared elements as CSV rows (no header).
    pub fn write_csv<W: io::Write>(&self, w: &mut csv::Writer<W>) -> csv::Result<()> {
        (0..self.len()).try_for_each(|p| self.write_row(w, p))
    }

    /// The failing elements as CSV text with header, for diagnostics.
    pub fn failing_rows_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).unwrap();
        for &p in &self.failures {
            self.write_row(&mut w, p).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    /// One-line summary.
    pub fn summary(&self) -> String {
        format!(
            "{} [{}] n={} max_rel={:.3e} max_abs={:.3e} (rel_tol={:e}, abs_tol={:e})",
            self.parameter_name,
            if self.pass { "pass" } else { "FAIL" },
            self.len(),
            self.max_rel_error,
            self.max_abs_error,
            self.rel_tol,
            self.abs_tol
        )
    }
}

/// Writes several reports into one CSV file with a header row.
pub fn write_reports_csv(path: impl AsRef<Path>, reports: &[GradReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(CSV_HEADER).map_err(csv_io)?;
    for r in reports {
        r.write_csv(&mut w).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(io::Error::other(e))
}

/// Moves every value at least `margin` away from the nearest odd integer.
///
/// DcSConv sampling offsets `(k - 1) / 2` cross integer pixels at odd `k`, where
/// bilinear interpolation has a kink and central differences are unreliable.
pub fn keep_off_odd_integers(scale: &Tensor4, margin: f64) -> Tensor4 {
    scale.map(|k| {
        let odd = 2.0 * ((k - 1.0) / 2.0).round() + 1.0;
        let d = k - odd;
        if d.abs() >= margin {
            k
        } else if d < 0.0 {
            odd - margin - d.abs()
        } else {
            odd + margin + d.abs()
        }
    })
}

/// Settings for a batch of finite-difference checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    pub h: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Check at most this many seeded-random elements per tensor.
    pub max_elements: Option<usize>,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            h: DEFAULT_STEP,
            rel_tol: 1e-4,
            abs_tol: 1e-8,
            max_elements: None,
            seed: 0,
        }
    }
}

impl FdOptions {
    pub fn select(&self, name: &str, len: usize) -> Vec<usize> {
        match self.max_elements {
            Some(m) if m < len => {
                let mut rng = SeedStream::new(self.seed).rng(name);
                let mut idx = sample(&mut rng, len, m).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..len).collect(),
        }
    }
}

/// Finite-difference check of one tensor argument.
pub fn check_tensor_grad<F>(name: &str, x: &Tensor4, analytic: &Tensor4, loss: F, opts: &FdOptions) -> Result<GradReport>
where
    F: Fn(&Tensor4) -> f64 + Sync,
{
    let idx = opts.select(name, x.len());
    let numeric = finite_diff_grad(loss, x, opts.h, Some(&idx))?;
    compare_grads_at(name, analytic, &numeric, &idx, opts.rel_tol, opts.abs_tol)
}

/// Finite-difference check of every tensor in a parameter set.
///
/// `analytic` must have the same structure as `params`.
pub fn check_param_grads<P, F>(params: &P, analytic: &P, loss: F, opts: &FdOptions) -> Result<Vec<GradReport>>
where
    P: ParamSet + Sync,
    F: Fn(&P) -> f64 + Sync,
{
    let grads = analytic.named_tensors();
    let mut reports = Vec::with_capacity(grads.len());
    for (name, x) in params.named_tensors() {
        let Some((_, g)) = grads.iter().find(|(n, _)| *n == name) else {
            return shape_err(format!("no analytic gradient for {name}"));
        };
        let report = check_tensor_grad(
            &name,
            x,
            g,
            |probe| {
                let mut p = params.clone();
                *p.tensor_mut(&name).expect("name from the same structure") = probe.clone();
                loss(&p)
            },
            opts,
        )?;
        reports.push(report);
    }
    Ok(reports)
}
