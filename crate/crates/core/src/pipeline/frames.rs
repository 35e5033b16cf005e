use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;

use crate::corpus::DescriptorSequence;
use crate::error::{Error, Result};
use crate::flowfield::{describe_flow, estimate_flow, Frame};

use super::config::FlowConfig;

/// `*.pgm` files of `dir` in lexicographic filename order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")) {
            frames.push(path);
        }
    }
    frames.sort();
    Ok(frames)
}

/// Describes the flow between every pair of consecutive frames in `dir`,
/// giving a `(frames − 1) × n` sequence identified by `video_id`.
pub fn frames_to_sequence(dir: &Path, video_id: &str, flow: &FlowConfig) -> Result<DescriptorSequence> {
    let paths = list_frames(dir)?;
    if paths.len() < 2 {
        return Err(Error::invalid(format!("{} holds {} PGM frames, need at least 2", dir.display(), paths.len())));
    }
    let frames = paths.iter().map(|p| Frame::read_pgm(p)).collect::<Result<Vec<_>>>()?;
    let rows = frames
        .par_windows(2)
        .map(|pair| {
            let field = estimate_flow(&pair[0], &pair[1], flow.alpha, flow.iterations)?;
            Ok(describe_flow(&field, flow.grid, flow.bins)?.values)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let n = rows[0].len();
    let data = Array2::from_shape_fn((rows.len(), n), |(t, j)| rows[t][j] as f32);
    DescriptorSequence::new(video_id, data)
}
