//! Front end for the operator library: verification suites, synthetic demos,
//! micro-benchmarks and file conversion.

pub mod bench;
pub mod check;
pub mod convert;
pub mod demo;
pub mod scene;

use std::io;

/// Failure classes and their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    CheckFailed(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<dcs_core::Error> for CliError {
    fn from(e: dcs_core::Error) -> Self {
        match e {
            dcs_core::Error::Io(_) | dcs_core::Error::Format { .. } => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches the file name to I/O and format errors.
pub fn at_path(path: &std::path::Path) -> impl FnOnce(dcs_core::Error) -> CliError + '_ {
    move |e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Parses `"<a><sep><b>"` into two values.
pub fn parse_pair<T: std::str::FromStr>(s: &str, sep: char) -> Result<(T, T), String> {
    let (a, b) = s
        .split_once(sep)
        .ok_or_else(|| format!("expected two values separated by '{sep}', got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<T>().map_err(|_| format!("cannot parse {v:?} in {s:?}"));
    Ok((parse(a)?, parse(b)?))
}

/// `WxH`, both at least 1.
pub fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = parse_pair::<usize>(&s.to_ascii_lowercase(), 'x')?;
    if w == 0 || h == 0 {
        return Err(format!("size {s:?} must be at least 1x1"));
    }
    Ok((w, h))
}

/// `MIN:MAX` with `0 < MIN <= MAX`.
pub fn parse_clamp(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = parse_pair::<f64>(s, ':')?;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(format!("clamp {s:?} needs 0 < MIN <= MAX"));
    }
    Ok((lo, hi))
}
