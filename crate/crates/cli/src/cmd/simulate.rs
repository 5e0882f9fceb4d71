use std::io::Write;
use std::path::PathBuf;

use pdeforge::container::{write_container, ContainerHeader};
use pdeforge::pde::{clamp_to_value_range, discretization_for, simulate_trajectory, EquationKind, TrajectoryRequest};
use pdeforge::Real;

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub equation: EquationKind,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub frames: Option<usize>,
    pub double: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateReport {
    pub frames: usize,
    pub channels: usize,
    /// Voxels pulled back into the tabulated value range.
    pub clamped: usize,
    pub bytes: u64,
}

pub fn run(args: &SimulateArgs, log: &mut dyn Write) -> Result<SimulateReport, CliError> {
    let report = if args.double { write::<f64>(args, "f64le")? } else { write::<f32>(args, "f32le")? };
    let _ = writeln!(
        log,
        "{}: {} frames x {} channels x {}^3 -> {} ({} bytes, {} clamped voxels)",
        args.equation,
        report.frames,
        report.channels,
        args.n,
        args.out.display(),
        report.bytes,
        report.clamped
    );
    Ok(report)
}

fn write<T: Real>(args: &SimulateArgs, dtype: &str) -> Result<SimulateReport, CliError> {
    let kind = args.equation;
    let req = TrajectoryRequest { frames: args.frames, ..TrajectoryRequest::new(kind, args.n, args.seed) };
    let traj = simulate_trajectory::<T>(&req)?;
    let range = discretization_for(kind, args.n).value_range;
    let mut clamped = 0;
    let frames: Vec<_> = traj
        .frames
        .iter()
        .map(|f| {
            clamped += f.data().iter().filter(|v| !range.contains(v.to_f64().unwrap_or(f64::NAN))).count();
            clamp_to_value_range(f, kind, false)
        })
        .collect();
    let channels = kind.sim_channels();
    let mut header = ContainerHeader::new(kind, traj.params.to_list(kind), traj.grid, dtype, frames.len(), channels);
    header.extra.insert("seed".into(), args.seed.to_string());
    let ics: Vec<&str> = traj.initializers.iter().map(|s| s.config.name()).collect();
    header.extra.insert("initializers".into(), ics.join(","));
    header.extra.insert("clamped_voxels".into(), clamped.to_string());
    write_container(&args.out, &header, &frames).map_err(|e| match e {
        pdeforge::container::ContainerError::Io(source) => CliError::io(args.out.display().to_string(), source),
        other => other.into(),
    })?;
    Ok(SimulateReport { frames: frames.len(), channels, clamped, bytes: header.payload_bytes()? })
}
