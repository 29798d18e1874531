//! Relative error sweeps over leading prefixes of one data sequence.

use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{choose_shift, DataGen};
use super::{Grid, ModeChoice};
use crate::algorithms::{compensated_sum, general_sum, shifted_sum, Algorithm, RunTrace};
use crate::bounds::{effective_unit_roundoff, relative_bound_compensated, relative_bound_shifted};
use crate::error::{Error, Result};
use crate::fpmodel::FpFormat;
use crate::sumtree::sequential_tree;
use crate::wide::WideReal;

pub const SHIFTED_BOUND_ID: &str = "shifted_relative";
pub const COMPENSATED_BOUND_ID: &str = "compensated_relative";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureId {
    /// Plain and shifted sequential summation, with the shifted relative bound.
    Fig1,
    /// Plain, shifted and compensated summation.
    Fig2,
    /// Plain and compensated summation in binary16, with the compensated
    /// relative bound.
    Fig3,
}

impl FigureId {
    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigureId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(FigureId::Fig1),
            "fig2" => Ok(FigureId::Fig2),
            "fig3" => Ok(FigureId::Fig3),
            other => Err(Error::InvalidParameter(format!("unknown figure `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub figure: FigureId,
    pub fmt: FpFormat,
    pub algorithms: Vec<Algorithm>,
    pub data: DataGen,
    pub grid: Grid,
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta_fail: f64,
    #[serde(default)]
    pub mode: ModeChoice,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub svg: Option<PathBuf>,
}

fn default_delta() -> f64 {
    0.01
}

impl ExperimentConfig {
    /// Desk-scale defaults for a figure (left panel data).
    pub fn preset(figure: FigureId) -> Self {
        let clustered = DataGen::UniformShifted { m: 1e4 };
        let (fmt, algorithms, data, grid) = match figure {
            FigureId::Fig1 => (
                FpFormat::binary64(),
                vec![Algorithm::General, Algorithm::Shifted],
                clustered,
                Grid { start: 10, step: 1000, stop: 100_000 },
            ),
            FigureId::Fig2 => (
                FpFormat::binary64(),
                vec![Algorithm::General, Algorithm::Shifted, Algorithm::Compensated],
                clustered,
                Grid { start: 10, step: 1000, stop: 100_000 },
            ),
            FigureId::Fig3 => (
                FpFormat::binary16(),
                vec![Algorithm::General, Algorithm::Compensated],
                DataGen::UniformShifted { m: 0.0 },
                Grid { start: 10, step: 1000, stop: 60_000 },
            ),
        };
        Self {
            figure,
            fmt,
            algorithms,
            data,
            grid,
            seed: 1,
            delta_fail: default_delta(),
            mode: ModeChoice::Nearest,
            out: None,
            svg: None,
        }
    }

    fn bound_for(&self, alg: Algorithm) -> Option<&'static str> {
        match (self.figure, alg) {
            (FigureId::Fig1, Algorithm::Shifted) => Some(SHIFTED_BOUND_ID),
            (FigureId::Fig3, Algorithm::Compensated) => Some(COMPENSATED_BOUND_ID),
            _ => None,
        }
    }
}

/// One CSV record: the relative error of one algorithm at one `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n: usize,
    pub algorithm: String,
    /// `|ŝ_n - s_n|/|s_n|`; NaN when `s_n = 0`.
    pub rel_error: f64,
    pub bound_id: Option<String>,
    pub bound_value: Option<f64>,
    pub fmt: String,
    pub seed: u64,
    pub c: Option<f64>,
}

fn relative(computed: &WideReal, exact: &WideReal) -> f64 {
    if exact.is_zero() {
        f64::NAN
    } else {
        computed.exact_sub(exact).abs().div(&exact.abs()).to_f64()
    }
}

fn zero_sum_nan(r: Result<WideReal>) -> Result<f64> {
    match r {
        Ok(v) => Ok(v.to_f64()),
        Err(Error::ZeroSum) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Generate the data and run the sweep. Writes CSV and SVG files when the
/// config names them.
pub fn run_figure(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let x = config.data.generate(config.grid.last(), config.seed, &config.fmt)?;
    let rows = run_figure_on(config, &x)?;
    if let Some(path) = &config.out {
        let file = std::fs::File::create(path)?;
        write_rows_csv(&rows, file)?;
    }
    if let Some(path) = &config.svg {
        std::fs::write(path, super::svg::render_svg(&rows))?;
    }
    Ok(rows)
}

/// Run the sweep on given data; `x` must hold at least the last grid point.
///
/// Plain and compensated summation of a prefix perform the same operations,
/// in the same order and with the same stochastic draw indices, as the first
/// steps of the full run, so one run serves every grid point. Shifted
/// summation depends on the prefix through `c` and is rerun per point.
pub fn run_figure_on(config: &ExperimentConfig, x: &[WideReal]) -> Result<Vec<ResultRow>> {
    let points = config.grid.points();
    let nmax = config.grid.last();
    if x.len() < nmax {
        return Err(Error::InvalidParameter(format!(
            "figure needs {nmax} inputs, got {}",
            x.len()
        )));
    }
    let x = &x[..nmax];
    let fmt = &config.fmt;
    let u = effective_unit_roundoff(fmt, config.mode.mode(config.seed, 0));
    let fmt_name = fmt.name().to_string();

    let mut per_alg: Vec<Vec<ResultRow>> = Vec::new();
    for (slot, &alg) in config.algorithms.iter().enumerate() {
        let mode = config.mode.mode(config.seed, slot as u64 + 1);
        let bound_id = config.bound_for(alg);
        let row = |n: usize, rel: f64, bound: Option<f64>, c: Option<f64>| ResultRow {
            n,
            algorithm: alg.name().to_string(),
            rel_error: rel,
            bound_id: bound_id.map(str::to_string),
            bound_value: bound,
            fmt: fmt_name.clone(),
            seed: config.seed,
            c,
        };
        let rows: Vec<ResultRow> = match alg {
            Algorithm::General | Algorithm::Compensated => {
                let trace: RunTrace = if alg == Algorithm::General {
                    general_sum(&sequential_tree(nmax)?, x, fmt, mode)?
                } else {
                    compensated_sum(x, fmt, mode)?
                };
                points
                    .par_iter()
                    .map(|&n| {
                        let bound = match bound_id {
                            Some(_) => Some(zero_sum_nan(relative_bound_compensated(&x[..n], &u, config.delta_fail))?),
                            None => None,
                        };
                        Ok(row(n, relative(&trace.computed[n], &trace.exact[n]), bound, None))
                    })
                    .collect::<Result<_>>()?
            }
            Algorithm::Shifted => points
                .par_iter()
                .map(|&n| {
                    let prefix = &x[..n];
                    let c = choose_shift(prefix, fmt)?;
                    let trace = shifted_sum(&sequential_tree(n)?, prefix, &c, fmt, mode)?;
                    let bound = match bound_id {
                        Some(_) => Some(zero_sum_nan(relative_bound_shifted(prefix, &c, &u, config.delta_fail))?),
                        None => None,
                    };
                    Ok(row(n, relative(&trace.result, &trace.exact_sum), bound, Some(c.to_f64())))
                })
                .collect::<Result<_>>()?,
        };
        per_alg.push(rows);
    }

    let mut out = Vec::with_capacity(points.len() * per_alg.len());
    for i in 0..points.len() {
        for rows in &per_alg {
            out.push(rows[i].clone());
        }
    }
    Ok(out)
}

pub fn write_rows_csv<W: Write>(rows: &[ResultRow], sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(["n", "algorithm", "rel_error", "bound_id", "bound_value", "fmt", "seed", "c"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(source: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(source);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
