//! The five subcommands. Each writes its artifacts into the run directory
//! in the requested formats; JSON artifacts embed the resolved config.

use ephoresim::channel::{expected_signal_windowed, ChannelError};
use ephoresim::detection::DetectionError;
use ephoresim::field::VelocityProfile;
use ephoresim::fluiddyn::{
    bbo_analytic, bbo_numeric, feasibility_ratio, time_to_feasibility, tracking_deviation, FluidError, Trajectory,
};
use ephoresim::mcsim::{estimate_ber, BerReport, McError};
use ephoresim::BBOParams;
use serde::Serialize;

use crate::config::{field_error, ExperimentConfig, FieldSpec, Format};
use crate::output::{Cell, RunDir};
use crate::CliError;

/// Trajectory points per bit interval in the design artifact.
const DESIGN_POINTS: usize = 1000;

fn channel_error(e: ChannelError) -> CliError {
    match e {
        ChannelError::InvalidParams(_) | ChannelError::InvalidBits(_) => CliError::Config(e.to_string()),
        ChannelError::Field(f) => field_error(f),
        _ => CliError::Numerical(e.to_string()),
    }
}

fn mc_error(e: McError) -> CliError {
    match e {
        McError::InvalidConfig(_) => CliError::Config(e.to_string()),
        McError::Detection(DetectionError::NonConvergence(_)) | McError::InvalidMean(_) => {
            CliError::Numerical(e.to_string())
        }
        McError::Detection(_) => CliError::Config(e.to_string()),
        McError::Channel(c) => channel_error(c),
        McError::Field(f) => field_error(f),
    }
}

fn fluid_error(e: FluidError) -> CliError {
    match e {
        FluidError::InvalidParams(_) => CliError::Config(e.to_string()),
        _ => CliError::Numerical(e.to_string()),
    }
}

/// `n·intervals + 1` uniform times `i·T/n`; the product-then-quotient form
/// makes a doubled grid reproduce every shared time exactly.
fn grid(t_int: f64, n: usize, intervals: usize) -> impl Iterator<Item = f64> {
    (0..=n * intervals).map(move |i| i as f64 * t_int / n as f64)
}

/// Scalar parameters of a profile, in declaration order.
fn named_parameters(p: &VelocityProfile) -> Vec<(String, f64)> {
    match serde_json::to_value(p) {
        Ok(serde_json::Value::Object(map)) => {
            map.into_iter().filter_map(|(k, v)| v.as_f64().map(|x| (k, x))).collect()
        }
        _ => Vec::new(),
    }
}

#[derive(Serialize)]
struct DesignArtifact<'a> {
    config: &'a ExperimentConfig,
    field: &'a VelocityProfile,
    /// Mean squared velocity over one interval (m²/s²).
    average_power: f64,
    /// Group-centre displacement over one interval (m).
    displacement: f64,
    t: Vec<f64>,
    x: Vec<f64>,
    v_x: Vec<f64>,
}

pub fn design(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let p = cfg.field.resolve(&cfg.channel, &cfg.frame)?;
    let t_int = cfg.frame.bit_interval;
    let t: Vec<f64> = grid(t_int, DESIGN_POINTS, 1).collect();
    let x = t
        .iter()
        .map(|&t| cfg.channel.group_centre(&p, t, 0.0).map(|c| c[0]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(channel_error)?;
    let v_x: Vec<f64> = t.iter().map(|&t| p.velocity_at(t)).collect();
    let displacement = p.displacement(0.0, t_int).map_err(field_error)?;
    if cfg.output.wants(Format::Csv) {
        let params = named_parameters(&p);
        run.write_csv(
            "parameters.csv",
            &["name", "value"],
            std::iter::once(vec!["variant".to_string(), p.variant_name().to_string()])
                .chain(params.iter().map(|(k, v)| vec![k.clone(), v.cell()])),
        )?;
        run.write_csv("trajectory.csv", &["t", "x", "v_x"], (0..t.len()).map(|i| [t[i], x[i], v_x[i]]))?;
    }
    if cfg.output.wants(Format::Json) {
        let average_power = p.average_power(t_int);
        run.write_json("design.json", &DesignArtifact { config: cfg, field: &p, average_power, displacement, t, x, v_x })?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Trace {
    label: String,
    field: VelocityProfile,
    peak_mean: f64,
    t: Vec<f64>,
    mean_count: Vec<f64>,
    v_x: Vec<f64>,
}

#[derive(Serialize)]
struct SignalArtifact<'a> {
    config: &'a ExperimentConfig,
    traces: Vec<Trace>,
}

fn trace(cfg: &ExperimentConfig, label: String, spec: &FieldSpec) -> Result<Trace, CliError> {
    let p = spec.resolve(&cfg.channel, &cfg.frame)?;
    let bits = &cfg.signal.bits;
    let t: Vec<f64> = grid(cfg.frame.bit_interval, cfg.signal.points_per_interval, bits.len()).collect();
    let window = cfg.simulation.isi_window;
    let mean_count: Vec<f64> =
        t.iter().map(|&t| expected_signal_windowed(&cfg.channel, &p, &cfg.frame, bits, t, window)).collect();
    let v_x = t.iter().map(|&t| p.velocity_at(t)).collect();
    let peak_mean = mean_count.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Trace { label, field: p, peak_mean, t, mean_count, v_x })
}

pub fn signal(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    if cfg.signal.bits.is_empty() {
        return Err(CliError::Config("signal.bits is empty".into()));
    }
    let mut traces = vec![trace(cfg, "signal".into(), &cfg.field)?];
    for (k, spec) in cfg.signal.compare.iter().enumerate() {
        traces.push(trace(cfg, format!("signal-{}", k + 1), spec)?);
    }
    if cfg.output.wants(Format::Csv) {
        for tr in &traces {
            let rows = (0..tr.t.len()).map(|i| [tr.t[i], tr.mean_count[i], tr.v_x[i]]);
            run.write_csv(&format!("{}.csv", tr.label), &["t", "mean_count", "v_x"], rows)?;
        }
    }
    if cfg.output.wants(Format::Json) {
        run.write_json("signal.json", &SignalArtifact { config: cfg, traces })?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BerArtifact<'a> {
    config: &'a ExperimentConfig,
    report: &'a BerReport,
}

fn csv_fields(line: &str) -> Vec<String> {
    line.split(',').map(str::to_string).collect()
}

pub fn ber(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let report = estimate_ber(&cfg.simulation()?).map_err(mc_error)?;
    if cfg.output.wants(Format::Csv) {
        let header = csv_fields(BerReport::CSV_HEADER);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        run.write_csv("ber.csv", &header, [csv_fields(&report.csv_row())])?;
    }
    if cfg.output.wants(Format::Json) {
        run.write_json("ber.json", &BerArtifact { config: cfg, report: &report })?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepPoint {
    value: f64,
    report: BerReport,
}

#[derive(Serialize)]
struct SweepArtifact<'a> {
    config: &'a ExperimentConfig,
    points: &'a [SweepPoint],
}

pub fn sweep(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let block = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("sweep block is required for sweep".into()))?;
    if block.values.is_empty() {
        return Err(CliError::Config("sweep.values is empty".into()));
    }
    let name = serde_json::to_value(block.parameter).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    let mut points = Vec::with_capacity(block.values.len());
    for &value in &block.values {
        let c = cfg.with_parameter(block.parameter, value)?;
        c.validate()?;
        let report = estimate_ber(&c.simulation()?).map_err(mc_error)?;
        eprintln!("{name} = {value}: ber {:.6e} ({} errors)", report.ber, report.bit_errors);
        points.push(SweepPoint { value, report });
    }
    if cfg.output.wants(Format::Csv) {
        let mut header = vec!["parameter".to_string(), "value".to_string()];
        header.extend(csv_fields(BerReport::CSV_HEADER));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = points.iter().map(|pt| {
            let mut row = vec![name.clone(), pt.value.cell()];
            row.extend(csv_fields(&pt.report.csv_row()));
            row
        });
        run.write_csv("sweep.csv", &header, rows)?;
    }
    if cfg.output.wants(Format::Json) {
        run.write_json("sweep.json", &SweepArtifact { config: cfg, points: &points })?;
    }
    Ok(())
}

enum Response {
    Analytic,
    Numeric(Trajectory),
}

#[derive(Serialize)]
struct RadiusSummary {
    r_m: f64,
    relaxation_time: f64,
    /// `max |u − v| / max |v|` over the trajectory grid.
    relative_deviation: f64,
    /// As `relative_deviation`, over the second half of the horizon only.
    steady_deviation: f64,
    /// `max |u − v|` over the trajectory grid (m/s).
    max_abs_deviation: f64,
    /// First time the radius bound reaches `factor · r_m` (s).
    time_to_feasibility: Option<f64>,
    /// `time_to_feasibility / T_int`.
    feasibility_fraction: Option<f64>,
    /// Share of grid points at which the bound holds.
    feasible_share: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    trajectory: Option<BboTrajectory>,
}

#[derive(Serialize)]
struct BboTrajectory {
    t: Vec<f64>,
    u_x: Vec<f64>,
    v_x: Vec<f64>,
    deviation: Vec<f64>,
}

#[derive(Serialize)]
struct BboArtifact<'a> {
    config: &'a ExperimentConfig,
    horizon: f64,
    factor: f64,
    radii: &'a [RadiusSummary],
}

pub fn bbo(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<(), CliError> {
    let block = &cfg.bbo;
    if block.radii.is_empty() {
        return Err(CliError::Config("bbo.radii is empty".into()));
    }
    if !(block.factor > 0.0) {
        return Err(CliError::Config(format!("bbo.factor must be positive, got {}", block.factor)));
    }
    let t_int = cfg.frame.bit_interval;
    let horizon = block.horizon.unwrap_or(t_int);
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CliError::Config(format!("bbo.horizon must be positive, got {horizon}")));
    }
    let p = cfg.field.resolve(&cfg.channel, &cfg.frame)?;
    let t: Vec<f64> = (0..block.points).map(|i| i as f64 * horizon / (block.points - 1) as f64).collect();
    let v_x: Vec<f64> = t.iter().map(|&t| p.velocity_at(t)).collect();
    let mut summaries = Vec::with_capacity(block.radii.len());
    for &r in &block.radii {
        let bp: BBOParams = block.fluid.with_radius(r);
        bp.validate().map_err(fluid_error)?;
        let response = match bbo_analytic(&bp, &p, 0.0) {
            Ok(_) => Response::Analytic,
            Err(FluidError::GeneralFormUnsupported(_)) => {
                Response::Numeric(bbo_numeric(&bp, &p, horizon, block.tolerance).map_err(fluid_error)?)
            }
            Err(e) => return Err(fluid_error(e)),
        };
        let u_x = t
            .iter()
            .map(|&t| match &response {
                Response::Analytic => bbo_analytic(&bp, &p, t),
                Response::Numeric(tr) => Ok(tr.at(t)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(fluid_error)?;
        let deviation: Vec<f64> = u_x.iter().zip(&v_x).map(|(u, v)| u - v).collect();
        let feasible = t
            .iter()
            .zip(&u_x)
            .zip(&v_x)
            .filter(|((_, &u), &v)| feasibility_ratio(&bp, u, bp.acceleration(v, u)) >= block.factor)
            .count();
        let ttf = time_to_feasibility(&bp, &p, horizon, block.factor).map_err(fluid_error)?;
        let summary = RadiusSummary {
            r_m: r,
            relaxation_time: bp.relaxation_time(),
            relative_deviation: tracking_deviation(&bp, &p, 0.0, horizon, block.points).map_err(fluid_error)?,
            steady_deviation: tracking_deviation(&bp, &p, 0.5 * horizon, horizon, block.points)
                .map_err(fluid_error)?,
            max_abs_deviation: deviation.iter().fold(0.0, |m, d| m.max(d.abs())),
            time_to_feasibility: ttf,
            feasibility_fraction: ttf.map(|s| s / t_int),
            feasible_share: feasible as f64 / t.len() as f64,
            trajectory: None,
        };
        eprintln!(
            "r_m = {r:e}: relaxation {:.3e} s, steady deviation {:.3e}, feasible after {}",
            summary.relaxation_time,
            summary.steady_deviation,
            ttf.map_or("never".to_string(), |s| format!("{s:.3e} s"))
        );
        if cfg.output.wants(Format::Csv) {
            let rows = (0..t.len()).map(|i| [t[i], u_x[i], v_x[i], deviation[i]]);
            run.write_csv(&format!("bbo-r{r:e}.csv"), &["t", "u_x", "v_x", "deviation"], rows)?;
        }
        let trajectory = cfg
            .output
            .wants(Format::Json)
            .then(|| BboTrajectory { t: t.clone(), u_x, v_x: v_x.clone(), deviation });
        summaries.push(RadiusSummary { trajectory, ..summary });
    }
    if cfg.output.wants(Format::Csv) {
        let rows = summaries.iter().map(|s| {
            [
                s.r_m.cell(),
                s.relaxation_time.cell(),
                s.relative_deviation.cell(),
                s.steady_deviation.cell(),
                s.max_abs_deviation.cell(),
                s.time_to_feasibility.cell(),
                s.feasibility_fraction.cell(),
                s.feasible_share.cell(),
            ]
        });
        run.write_csv(
            "bbo_summary.csv",
            &[
                "r_m",
                "relaxation_time",
                "relative_deviation",
                "steady_deviation",
                "max_abs_deviation",
                "time_to_feasibility",
                "feasibility_fraction",
                "feasible_share",
            ],
            rows,
        )?;
    }
    if cfg.output.wants(Format::Json) {
        run.write_json("bbo.json", &BboArtifact { config: cfg, horizon, factor: block.factor, radii: &summaries })?;
    }
    Ok(())
}
