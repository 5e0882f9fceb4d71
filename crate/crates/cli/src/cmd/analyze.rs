use std::io::Write;
use std::path::{Path, PathBuf};

use pdeforge::analysis::{mean_enstrophy_spectrum, nrmse, nrmse_es, shell_spectrum, AnalysisError, ShellSpectrum};
use pdeforge::container::read_container;
use pdeforge::spectral::Field;

use crate::error::CliError;

#[derive(Debug, Clone)]
pub enum AnalyzeMode {
    /// Shell-aggregated magnitude spectrum averaged over frames and channels.
    Spectrum { windowed: bool },
    /// Hann-windowed enstrophy spectrum of a 3-channel velocity file, averaged over frames.
    Enstrophy,
    /// Pixel NRMSE (and the enstrophy-spectrum NRMSE for 3-channel files) against a reference.
    Nrmse(PathBuf),
}

fn load(path: &Path) -> Result<Vec<Field<f64>>, CliError> {
    let (_, frames) = read_container::<f64>(path).map_err(|e| match e {
        pdeforge::container::ContainerError::Io(source) => CliError::io(path.display().to_string(), source),
        other => other.into(),
    })?;
    if frames.is_empty() {
        return Err(AnalysisError::Empty.into());
    }
    Ok(frames)
}

pub fn mean_shell_spectrum(frames: &[Field<f64>], windowed: bool) -> Result<ShellSpectrum, CliError> {
    let mut acc: Vec<f64> = Vec::new();
    let mut count = 0.0;
    for f in frames {
        for c in 0..f.channels() {
            let s = shell_spectrum(&f.extract_channel(c), windowed)?;
            if acc.is_empty() {
                acc = vec![0.0; s.bins.len()];
            }
            for (a, v) in acc.iter_mut().zip(s.bins) {
                *a += v;
            }
            count += 1.0;
        }
    }
    Ok(ShellSpectrum { bins: acc.into_iter().map(|v| v / count).collect() })
}

pub fn run(input: &Path, mode: &AnalyzeMode, out: &mut dyn Write) -> Result<(), CliError> {
    let frames = load(input)?;
    let text = match mode {
        AnalyzeMode::Spectrum { windowed } => mean_shell_spectrum(&frames, *windowed)?.to_csv(),
        AnalyzeMode::Enstrophy => mean_enstrophy_spectrum(&frames)?.to_csv(),
        AnalyzeMode::Nrmse(reference) => {
            let refs = load(reference)?;
            if refs.len() != frames.len() {
                return Err(AnalysisError::LengthMismatch(frames.len(), refs.len()).into());
            }
            let mut total = 0.0;
            for (p, r) in frames.iter().zip(&refs) {
                total += nrmse(p, r)?;
            }
            let mut s = format!("metric,value\nnrmse,{:e}\n", total / frames.len() as f64);
            if frames[0].channels() == 3 {
                s.push_str(&format!("nrmse_es,{:e}\n", nrmse_es(&frames, &refs)?));
            }
            s
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::io("stdout", e))
}
