//! Adapter parameters on disk: `W` as a `d × d` TREFFEMB file plus a JSON
//! sidecar at `<path>.json` holding the scalar settings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use treff_core::{AdapterParams, EmbeddingSet, FslScores, PhiSign, Sharpness};

use crate::format::{self, FormatError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsSidecar {
    pub b: f64,
    pub alpha: f64,
    pub phi_sign: PhiSign,
    pub fsl_scores: FslScores,
}

#[derive(Debug, thiserror::Error)]
pub enum ParamsError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad parameter sidecar: {0}")]
    Json(#[from] serde_json::Error),
    #[error("weight matrix is {rows} × {cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error(transparent)]
    Invalid(#[from] treff_core::Error),
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `W` (rounded to f32) and the sidecar.
pub fn save_params(path: impl AsRef<Path>, params: &AdapterParams) -> Result<(), ParamsError> {
    let path = path.as_ref();
    let w = EmbeddingSet::from_matrix(params.weight().clone())?;
    format::write_embeddings(path, &w, None, None)?;
    let side = ParamsSidecar {
        b: params.phi.b(),
        alpha: params.alpha,
        phi_sign: params.phi.sign(),
        fsl_scores: params.fsl,
    };
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&side)? + "\n",
    )?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<AdapterParams, ParamsError> {
    let path = path.as_ref();
    let w = format::read_embeddings(path)?.set.into_matrix();
    if w.rows() != w.cols() {
        return Err(ParamsError::NotSquare {
            rows: w.rows(),
            cols: w.cols(),
        });
    }
    let side: ParamsSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let phi = Sharpness::with_sign(side.b, side.phi_sign)?;
    Ok(AdapterParams::new(w, phi, side.alpha)?.with_fsl_scores(side.fsl_scores))
}
