use serde::{Deserialize, Serialize};

use super::fit::{predict_day, SubModelBundle};
use super::predictors::DayInputs;
use crate::brown_resnick::{simulate_grp, GrpSpec};
use crate::error::{Error, Result};
use crate::evaluation::{qq_tail, QqTable};
use crate::io::GriddedDataset;
use crate::losses::standardizing_scale;
use crate::spatial::SemivariogramParams;

/// Simulated r-exceedance fields for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenarios {
    pub p_occ: f64,
    pub theta_extent: f64,
    pub fields: Vec<Vec<f64>>,
    /// Target-region mean of each field.
    pub risk: Vec<f64>,
    pub proposals: usize,
}

/// Simulation specification of the day's conditional r-Pareto law.
pub fn day_spec(bundle: &SubModelBundle, inputs: &DayInputs, extent_override: Option<f64>) -> Result<(f64, GrpSpec)> {
    let pred = predict_day(bundle, inputs)?;
    let theta_extent = extent_override.unwrap_or(pred.theta_extent);
    let th = &bundle.thresholds;
    let scale: Vec<f64> = (0..bundle.grid.len())
        .map(|d| standardizing_scale(pred.theta_int[d], th.m[d], bundle.xi, bundle.scale_convention))
        .collect();
    if let Some(d) = scale.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Numeric(format!("predicted marginal scale {} at grid point {d} is not positive", scale[d])));
    }
    let spec = GrpSpec {
        grid: bundle.grid.clone(),
        params: SemivariogramParams::new(bundle.alpha, theta_extent, bundle.theta_scale)?,
        scale,
        b: th.b.clone(),
        xi: bundle.xi,
        risk: th.risk()?,
        u: th.u,
    };
    Ok((pred.p_occ, spec))
}

/// Draw `n` fields from the fitted model given the day's predictors.
pub fn generate_scenarios(
    bundle: &SubModelBundle,
    inputs: &DayInputs,
    n: usize,
    seed: u64,
    extent_override: Option<f64>,
) -> Result<Scenarios> {
    let (p_occ, spec) = day_spec(bundle, inputs, extent_override)?;
    let sim = simulate_grp(&spec, n, seed)?;
    let risk = sim.fields.iter().map(|f| spec.risk.apply(f)).collect();
    Ok(Scenarios { p_occ, theta_extent: spec.params.theta_extent, fields: sim.fields, risk, proposals: sim.proposals })
}

/// `Pr(Y in R | X)` for `R = {r >= u} & M`: occurrence probability times the
/// fraction of scenarios that fall in `M`.
pub fn event_probability(scenarios: &Scenarios, in_event: impl Fn(&[f64]) -> bool) -> f64 {
    if scenarios.fields.is_empty() {
        return f64::NAN;
    }
    let hits = scenarios.fields.iter().filter(|f| in_event(f)).count();
    scenarios.p_occ * hits as f64 / scenarios.fields.len() as f64
}

/// Tail QQ table of grid point `d` over the exceedance days of `ds`, with
/// the day-varying GPD scales predicted by the intensity sub-model.
pub fn qq_for_point(
    bundle: &SubModelBundle,
    ds: &GriddedDataset,
    response: &str,
    d: usize,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<QqTable> {
    if d >= bundle.grid.len() {
        return Err(Error::Config(format!("grid point {d} outside grid of size {}", bundle.grid.len())));
    }
    let th = &bundle.thresholds;
    let risk = th.risk()?;
    let y = ds.variable(response)?;
    let mut excess = Vec::new();
    let mut scales = Vec::new();
    for (t, field) in y.iter().enumerate() {
        if risk.apply(field) < th.u || field[d] <= th.b[d] {
            continue;
        }
        let inputs = bundle.schema.day_inputs(ds, t)?;
        let theta = bundle.intensity.ensemble.predict(&bundle.schema.intensity_row(&inputs, d))?;
        let s = standardizing_scale(theta, th.m[d], bundle.xi, bundle.scale_convention);
        if !(s > 0.0) {
            return Err(Error::Numeric(format!("non-positive predicted scale at grid point {d} on {}", ds.dates[t])));
        }
        excess.push(field[d] - th.b[d]);
        scales.push(s);
    }
    qq_tail(&excess, &scales, bundle.xi, n_boot, level, seed)
        .map_err(|e| Error::Data(format!("QQ at grid point {d}: {e}")))
}
