//! `dcs convert`: DTEN ⇄ 16-bit PGM, direction picked from the file extensions.

use std::path::Path;

use dcs_core::pgm::{read_pgm16, write_pgm16, ValueRange};
use dcs_core::{dten, Tensor4};

use crate::{at_path, CliError, CliResult};

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Data min/max, widened to a unit span when the tensor is constant.
pub fn data_range(t: &Tensor4) -> CliResult<ValueRange> {
    let (lo, hi) = (t.min(), t.max());
    if lo < hi {
        Ok(ValueRange::new(lo, hi)?)
    } else {
        Ok(ValueRange::new(lo - 0.5, hi + 0.5)?)
    }
}

/// Converts `input` to `output`; returns a one-line description of what was written.
pub fn convert(input: &Path, output: &Path, range: Option<(f64, f64)>) -> CliResult<String> {
    let range = range
        .map(|(lo, hi)| ValueRange::new(lo, hi).map_err(|e| CliError::Usage(e.to_string())))
        .transpose()?;
    match (extension(input).as_str(), extension(output).as_str()) {
        ("dten", "pgm") => {
            let t = dten::read_tensor(input).map_err(at_path(input))?;
            let s = t.shape();
            if s.n != 1 || s.c != 1 {
                return Err(CliError::Usage(format!("PGM export needs a single 1x1xHxW map, {} holds {s}", input.display())));
            }
            let range = match range {
                Some(r) => r,
                None => data_range(&t)?,
            };
            write_pgm16(output, &t, range).map_err(at_path(output))?;
            Ok(format!("{}x{} map, range [{:e}, {:e}]", s.w, s.h, range.min, range.max))
        }
        ("pgm", "dten") => {
            let pgm = read_pgm16(input).map_err(at_path(input))?;
            let range = range.or(pgm.range).ok_or_else(|| {
                CliError::Usage(format!("{} records no value range; pass --range MIN:MAX", input.display()))
            })?;
            dten::write_tensor(output, &pgm.to_tensor(range)).map_err(at_path(output))?;
            Ok(format!("{}x{} map, range [{:e}, {:e}]", pgm.width, pgm.height, range.min, range.max))
        }
        (a, b) => Err(CliError::Usage(format!("cannot convert .{a} to .{b}; supported: .dten -> .pgm, .pgm -> .dten"))),
    }
}
