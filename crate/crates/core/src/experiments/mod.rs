//! Desk-scale reproductions of the relative-error figures, bound coverage
//! studies and the expression verification suite.

pub mod coverage;
pub mod data;
pub mod figure;
pub mod svg;
pub mod verify;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpmodel::RoundingMode;

pub use coverage::{children_error_coverage, run_coverage, write_coverage_csv, CoverageConfig, CoverageRow};
pub use data::{choose_shift, gen_normal, gen_uniform_shifted, DataGen};
pub use figure::{read_rows_csv, run_figure, write_rows_csv, ExperimentConfig, FigureId, ResultRow};
pub use svg::render_svg;
pub use verify::{run_verify, VerifyConfig, VerifyRow};

/// An arithmetic progression `start, start+step, ...` up to `stop`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub start: usize,
    pub step: usize,
    pub stop: usize,
}

impl Grid {
    pub fn new(start: usize, step: usize, stop: usize) -> Result<Self> {
        if start == 0 || step == 0 || stop < start {
            return Err(Error::InvalidParameter(format!(
                "grid {start}:{step}:{stop} must satisfy 1 <= start <= stop and step >= 1"
            )));
        }
        Ok(Self { start, step, stop })
    }

    pub fn points(&self) -> Vec<usize> {
        (self.start..=self.stop).step_by(self.step).collect()
    }

    pub fn last(&self) -> usize {
        self.start + (self.stop - self.start) / self.step * self.step
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.step, self.stop)
    }
}

/// `start:step:stop`; each part may use exponent notation such as `1e5`.
impl FromStr for Grid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidParameter(format!("bad grid `{s}`, expected start:step:stop"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut v = [0usize; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            let f: f64 = p.trim().parse().map_err(|_| bad())?;
            if !(f >= 0.0 && f.fract() == 0.0 && f < 1e15) {
                return Err(bad());
            }
            *slot = f as usize;
        }
        Grid::new(v[0], v[1], v[2])
    }
}

/// Rounding mode of an experiment; stochastic runs take their streams from
/// the experiment seed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    #[default]
    Nearest,
    Stochastic,
}

impl ModeChoice {
    pub fn mode(self, seed: u64, stream: u64) -> RoundingMode {
        match self {
            ModeChoice::Nearest => RoundingMode::NearestEven,
            ModeChoice::Stochastic => RoundingMode::stochastic(seed, stream),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModeChoice::Nearest => "nearest",
            ModeChoice::Stochastic => "stochastic",
        }
    }
}

impl FromStr for ModeChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(ModeChoice::Nearest),
            "stochastic" => Ok(ModeChoice::Stochastic),
            other => Err(Error::InvalidParameter(format!("unknown rounding mode `{other}`"))),
        }
    }
}
