//! MAP and marginal inference on [`EnergyModel`]s.

pub mod bp;
pub mod expansion;
pub mod icm;
pub mod maxflow;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

pub use bp::{bethe_log_z, loopy_bp, loopy_bp_warm, max_marginals_map, BpConfig, BpMode, BpOutcome};
pub use expansion::{alpha_expansion, alpha_expansion_from, binary_submodular_map, check_metric, ExpansionOutcome, DEFAULT_CYCLES};
pub use icm::{icm, icm_detailed, IcmOutcome};
pub use maxflow::{max_flow, FlowNetwork, MinCut};

pub use crate::energy::Marginals;
use crate::energy::{total_energy, EnergyModel, Labeling};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapMethod {
    Icm,
    AlphaExpansion,
    MaxMarginals,
}

impl MapMethod {
    pub fn name(self) -> &'static str {
        match self {
            MapMethod::Icm => "icm",
            MapMethod::AlphaExpansion => "alpha-expansion",
            MapMethod::MaxMarginals => "max-marginals",
        }
    }
}

impl fmt::Display for MapMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "icm" => Ok(MapMethod::Icm),
            "alpha-expansion" | "expansion" | "graph-cut" | "graphcut" => Ok(MapMethod::AlphaExpansion),
            "max-marginals" | "max-product" | "bp" => Ok(MapMethod::MaxMarginals),
            _ => Err(Error::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapOptions {
    /// ICM / expansion start; unary argmin when absent.
    pub init: Option<Labeling>,
    pub max_cycles: usize,
    pub bp: BpConfig,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            init: None,
            max_cycles: DEFAULT_CYCLES,
            bp: BpConfig::max_product(),
        }
    }
}

/// One line of the inference report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub method: MapMethod,
    pub energy: f64,
    /// ICM sweeps, expansion cycles or BP iterations.
    pub iterations: usize,
    pub converged: bool,
    pub wall_ms: f64,
}

impl InferenceReport {
    pub const CSV_HEADER: &'static str = "method,energy,iterations,converged,wall_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12},{},{},{:.3}",
            self.method, self.energy, self.iterations, self.converged, self.wall_ms
        )
    }
}

pub fn write_reports(path: impl AsRef<Path>, reports: &[InferenceReport]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "{}", InferenceReport::CSV_HEADER).expect("vec write");
    for r in reports {
        writeln!(out, "{}", r.csv_row()).expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Runs one MAP method and reports energy, iteration count and timing.
pub fn map_infer(model: &EnergyModel, method: MapMethod, options: &MapOptions) -> Result<(Labeling, InferenceReport)> {
    let start = Instant::now();
    let init = match &options.init {
        Some(y) => {
            model.check_labeling(y)?;
            y.clone()
        }
        None => model.unary().argmin(),
    };
    let (labeling, iterations, converged) = match method {
        MapMethod::Icm => {
            let out = icm_detailed(model, &init)?;
            (out.labeling, out.sweeps, out.converged)
        }
        MapMethod::AlphaExpansion => {
            let out = alpha_expansion_from(model, &init, options.max_cycles)?;
            (out.labeling, out.cycles, out.converged)
        }
        MapMethod::MaxMarginals => {
            let out = max_marginals_map(model, &options.bp)?;
            (out.labeling, out.iterations, out.converged)
        }
    };
    let energy = total_energy(model, &labeling);
    let report = InferenceReport {
        method,
        energy,
        iterations,
        converged,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((labeling, report))
}
