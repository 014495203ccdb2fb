//! Relative l2 error in its frame-restricted and mask-restricted variants.
//! Norms accumulate in double precision regardless of storage precision.

use ndarray::{Array3, Array4};

use crate::error::{Result, VpdeError};
use crate::fields::FieldVideo;

fn check_shapes(pred: &Array4<f64>, truth: &Array4<f64>) -> Result<()> {
    if pred.dim() != truth.dim() {
        let (t, h, w, c) = truth.dim();
        let (pt, ph, pw, pc) = pred.dim();
        return Err(VpdeError::ShapeMismatch {
            expected: vec![t, h, w, c],
            got: vec![pt, ph, pw, pc],
        });
    }
    Ok(())
}

/// ||pred - truth|| / ||truth|| over the selected frames (all frames when
/// `frames` is `None`).
pub fn relative_l2(
    pred: &Array4<f64>,
    truth: &Array4<f64>,
    frames: Option<&[usize]>,
) -> Result<f64> {
    check_shapes(pred, truth)?;
    let (t, _, _, _) = truth.dim();
    let selected: Vec<usize> = match frames {
        Some(f) => f.to_vec(),
        None => (0..t).collect(),
    };
    for &f in &selected {
        if f >= t {
            return Err(VpdeError::FrameOutOfRange { frame: f, frames: t });
        }
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for &f in &selected {
        let p = pred.index_axis(ndarray::Axis(0), f);
        let g = truth.index_axis(ndarray::Axis(0), f);
        for (&pv, &gv) in p.iter().zip(g.iter()) {
            let d = pv - gv;
            num += d * d;
            den += gv * gv;
        }
    }
    if den == 0.0 {
        return Err(VpdeError::ZeroNormTruth);
    }
    Ok((num / den).sqrt())
}

/// Relative l2 restricted to pixels where `select` is nonzero.
/// `select` is [T, H, W]; all channels of a selected pixel contribute.
pub fn relative_l2_masked(
    pred: &Array4<f64>,
    truth: &Array4<f64>,
    select: &Array3<u8>,
) -> Result<f64> {
    check_shapes(pred, truth)?;
    let (t, h, w, c) = truth.dim();
    if select.dim() != (t, h, w) {
        let (st, sh, sw) = select.dim();
        return Err(VpdeError::ShapeMismatch {
            expected: vec![t, h, w],
            got: vec![st, sh, sw],
        });
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for ((ti, hi, wi), &bit) in select.indexed_iter() {
        if bit != 0 {
            for ci in 0..c {
                let pv = pred[[ti, hi, wi, ci]];
                let gv = truth[[ti, hi, wi, ci]];
                num += (pv - gv) * (pv - gv);
                den += gv * gv;
            }
        }
    }
    if den == 0.0 {
        return Err(VpdeError::ZeroNormTruth);
    }
    Ok((num / den).sqrt())
}

/// Per-frame relative l2. Frames whose truth slice has zero norm yield
/// `None` rather than an error.
pub fn per_frame_error(pred: &Array4<f64>, truth: &Array4<f64>) -> Result<Vec<Option<f64>>> {
    check_shapes(pred, truth)?;
    let (t, _, _, _) = truth.dim();
    let mut out = Vec::with_capacity(t);
    for f in 0..t {
        match relative_l2(pred, truth, Some(&[f])) {
            Ok(v) => out.push(Some(v)),
            Err(VpdeError::ZeroNormTruth) => out.push(None),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// [`relative_l2`] on stored field videos.
pub fn relative_l2_video(
    pred: &FieldVideo,
    truth: &FieldVideo,
    frames: Option<&[usize]>,
) -> Result<f64> {
    relative_l2(&pred.to_f64(), &truth.to_f64(), frames)
}
