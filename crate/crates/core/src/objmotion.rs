//! Independent object velocities from the residual between observed flow
//! and the predicted egomotion field.
//!
//! The residual `r = v_obs - (rho * v_t + v_w)` contains object motion plus
//! residue noise from imperfect prediction, flow and depth. Two filters
//! select the moving-object pixels:
//!
//! - Filter 1 thresholds the squared residual against a multiple of the
//!   frame mean of `tanh(|r|^2)`.
//! - Filter 2 runs a divisive max-normalization cascade on the
//!   depth-attenuated squared residual and gates on nearby depth.
//!
//! Their conjunction masks the residual; the masked residual is the object
//! velocity estimate. All statistics (mean, max) are global over the frame.

use crate::geometry::{FlowField, InverseDepthMap, MaskGrid};
use nalgebra::Vector2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObjMotionError {
    #[error("field shapes disagree: {0}")]
    ShapeMismatch(String),
}

/// Filter constants. The defaults are the tuned operating point:
/// `theta_d = 1.5`, `theta_p = 0.5`, and a depth gate at 20% of the
/// frame's maximum depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjMotionParams {
    pub theta_d: f64,
    pub theta_p: f64,
    /// Fraction of the maximum depth below which objects are considered.
    pub depth_gate: f64,
}

impl Default for ObjMotionParams {
    fn default() -> Self {
        Self {
            theta_d: 1.5,
            theta_p: 0.5,
            depth_gate: 0.2,
        }
    }
}

/// Residual, object mask, and the masked residual velocity.
#[derive(Debug, Clone)]
pub struct ObjectResult {
    pub residual: FlowField,
    pub mask: MaskGrid,
    /// Equals the residual on the mask, zero elsewhere.
    pub velocity: FlowField,
}

fn check_same(
    name: &str,
    aw: usize,
    ah: usize,
    bw: usize,
    bh: usize,
) -> Result<(), ObjMotionError> {
    if (aw, ah) != (bw, bh) {
        return Err(ObjMotionError::ShapeMismatch(format!(
            "{name}: {aw}x{ah} vs {bw}x{bh}"
        )));
    }
    Ok(())
}

/// `r(p) = v_obs(p) - (rho(p) * v_t(p) + v_w(p))`.
pub fn residual(
    observed: &FlowField,
    trans_pred: &FlowField,
    rot_pred: &FlowField,
    rho: &InverseDepthMap,
) -> Result<FlowField, ObjMotionError> {
    check_same(
        "observed vs translational",
        observed.width(),
        observed.height(),
        trans_pred.width(),
        trans_pred.height(),
    )?;
    check_same(
        "observed vs rotational",
        observed.width(),
        observed.height(),
        rot_pred.width(),
        rot_pred.height(),
    )?;
    check_same(
        "observed vs depth",
        observed.width(),
        observed.height(),
        rho.width(),
        rho.height(),
    )?;
    Ok(FlowField::from_fn(
        observed.width(),
        observed.height(),
        |row, col| {
            observed.at(row, col)
                - (trans_pred.at(row, col) * rho.at(row, col) + rot_pred.at(row, col))
        },
    ))
}

/// Average thresholding: `|r|^2 > theta_d * mean(tanh(|r|^2))`, strict.
/// A zero residual therefore yields an all-false mask.
pub fn filter1(res: &FlowField, theta_d: f64) -> MaskGrid {
    let n = res.len() as f64;
    let mean_tanh: f64 = res
        .as_slice()
        .iter()
        .map(|v| v.norm_squared().tanh())
        .sum::<f64>()
        / n;
    let threshold = theta_d * mean_tanh;
    let data = res
        .as_slice()
        .iter()
        .map(|v| v.norm_squared() > threshold)
        .collect();
    MaskGrid::from_vec(res.width(), res.height(), data)
}

/// Depth normalized to [0, 1] by the frame maximum. Points at infinity
/// (`rho = 0`) take the maximum finite depth before normalization; if
/// every pixel is at infinity the whole frame maps to 1.
pub fn normalized_depth(rho: &InverseDepthMap) -> Vec<f64> {
    let finite_max = rho
        .as_slice()
        .iter()
        .filter(|r| **r > 0.0)
        .map(|r| 1.0 / r)
        .fold(0.0f64, f64::max);
    if finite_max == 0.0 {
        return vec![1.0; rho.as_slice().len()];
    }
    rho.as_slice()
        .iter()
        .map(|r| {
            let d = if *r > 0.0 { 1.0 / r } else { finite_max };
            d / finite_max
        })
        .collect()
}

/// Multistage divisive max-normalization filter with a depth gate.
///
/// Stages, with all maxima and means taken over the whole frame and `d`
/// the normalized depth from [`normalized_depth`]:
///
/// 1. `r' = |r|^2 / max(|r|^2)`
/// 2. `r'' = r' * tanh(d)^2`
/// 3. `r'' = r'' / max(r'')`
/// 4. `r_s = r'' / (1 + (max(r'') - r'')^2)`
/// 5. `F2 = (r_s > theta_p * mean(r_s)) AND (d < depth_gate)`
///
/// A zero maximum at stage 1 or 3 short-circuits to an all-false mask.
pub fn filter2(
    res: &FlowField,
    rho: &InverseDepthMap,
    theta_p: f64,
    depth_gate: f64,
) -> Result<MaskGrid, ObjMotionError> {
    check_same(
        "residual vs depth",
        res.width(),
        res.height(),
        rho.width(),
        rho.height(),
    )?;
    let (w, h) = (res.width(), res.height());
    let all_false = || MaskGrid::filled(w, h, false);

    let sq: Vec<f64> = res.as_slice().iter().map(|v| v.norm_squared()).collect();
    let max_sq = sq.iter().cloned().fold(0.0f64, f64::max);
    if max_sq == 0.0 {
        return Ok(all_false());
    }
    let depth = normalized_depth(rho);

    let mut stage: Vec<f64> = sq
        .iter()
        .zip(&depth)
        .map(|(s, d)| (s / max_sq) * d.tanh().powi(2))
        .collect();
    let max_stage = stage.iter().cloned().fold(0.0f64, f64::max);
    if max_stage == 0.0 {
        return Ok(all_false());
    }
    stage.iter_mut().for_each(|v| *v /= max_stage);

    // After renormalization the maximum is exactly 1.
    let scores: Vec<f64> = stage
        .iter()
        .map(|v| v / (1.0 + (1.0 - v).powi(2)))
        .collect();
    let mean_score = scores.iter().sum::<f64>() / scores.len() as f64;
    let threshold = theta_p * mean_score;

    let data = scores
        .iter()
        .zip(&depth)
        .map(|(s, d)| *s > threshold && *d < depth_gate)
        .collect();
    Ok(MaskGrid::from_vec(w, h, data))
}

/// Full pipeline: residual, both filters, conjunction, masked velocity.
pub fn extract_object_motion(
    observed: &FlowField,
    trans_pred: &FlowField,
    rot_pred: &FlowField,
    rho: &InverseDepthMap,
    params: &ObjMotionParams,
) -> Result<ObjectResult, ObjMotionError> {
    let res = residual(observed, trans_pred, rot_pred, rho)?;
    let f1 = filter1(&res, params.theta_d);
    let f2 = filter2(&res, rho, params.theta_p, params.depth_gate)?;
    let mask = f1.and(&f2);
    let velocity = FlowField::from_fn(res.width(), res.height(), |row, col| {
        if mask.at(row, col) {
            res.at(row, col)
        } else {
            Vector2::zeros()
        }
    });
    Ok(ObjectResult {
        residual: res,
        mask,
        velocity,
    })
}
