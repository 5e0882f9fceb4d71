use std::io::Write;
use std::path::Path;

use pdeforge::generation::decode_checkpoint;

use crate::error::CliError;

/// Prints a summary of a checkpoint file without restoring it.
pub fn inspect(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let bytes = std::fs::read(path).map_err(CliError::at(path))?;
    let state = decode_checkpoint(&bytes)?;
    let c = &state.config;
    let eqs: Vec<&str> = c.equations.iter().map(|e| e.name()).collect();
    let res: Vec<String> = c.resolutions.iter().map(|r| r.to_string()).collect();
    let lines = [
        format!("file: {} ({} bytes)", path.display(), bytes.len()),
        format!("rng: {}", state.rng_algorithm),
        format!("seed: {}", c.seed),
        format!("equations: {}", eqs.join(",")),
        format!("resolutions: {}", res.join(",")),
        format!(
            "warmup_rounds: {}  halt_tolerance: {}  crop: {}  normalize: {}",
            c.warmup_rounds, c.halt_tolerance, c.crop, c.normalize
        ),
        format!("round: {}  position: {}/{}", state.round, state.position, state.schedule.len()),
        format!("error_count: {}  halted: {}", state.error_count, state.halted),
        format!("simulator instances: {}", state.instances),
        match &state.active {
            Some(a) => format!(
                "active: {} n={} instance {} next run {}",
                a.setup.equation, a.setup.resolution, a.instance, a.next_run
            ),
            None => "active: none".to_string(),
        },
        format!(
            "frames emitted: {}  trajectories completed: {}  discarded: {}",
            state.stats.frames_emitted, state.stats.trajectories_completed, state.stats.trajectories_discarded
        ),
    ];
    for l in lines {
        writeln!(out, "{l}").map_err(|e| CliError::io("stdout", e))?;
    }
    Ok(())
}
