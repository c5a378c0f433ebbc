use super::{Norm, PointRule};
use crate::error::{Error, Result};
use crate::forest::FeatureBox;

/// Picks a point inside a nonempty box: the projection of `x0` (which
/// minimizes every coordinate distance at once) or the box center.
pub fn choose_point(bx: &FeatureBox, x0: &[f64], rule: PointRule) -> Result<Vec<f64>> {
    if bx.is_empty() {
        return Err(Error::Contract(
            "cannot choose a point in an empty box".into(),
        ));
    }
    if bx.dim() != x0.len() {
        return Err(Error::Contract(format!(
            "box has {} features, x0 has {}",
            bx.dim(),
            x0.len()
        )));
    }
    Ok(match rule {
        PointRule::ProjectX0 => bx.0.iter().zip(x0).map(|(iv, &v)| iv.clamp(v)).collect(),
        PointRule::BoxCenter => bx.0.iter().map(|iv| iv.midpoint()).collect(),
    })
}

fn combine(gaps: impl Iterator<Item = (f64, f64)>, norm: Norm) -> f64 {
    match norm {
        Norm::L1 => gaps.map(|(w, g)| w * g).sum(),
        Norm::L2 => gaps.map(|(w, g)| w * g * g).sum::<f64>().sqrt(),
        Norm::Linf => gaps.map(|(w, g)| w * g).fold(0.0, f64::max),
    }
}

fn weight(weights: Option<&[f64]>, j: usize) -> f64 {
    weights.map_or(1.0, |w| w[j])
}

/// Weighted distance between two points. For L2 the weights multiply the
/// squared coordinate gaps.
pub fn point_distance(x0: &[f64], x: &[f64], norm: Norm, weights: Option<&[f64]>) -> f64 {
    combine(
        x0.iter()
            .zip(x)
            .enumerate()
            .map(|(j, (a, b))| (weight(weights, j), (a - b).abs())),
        norm,
    )
}

/// Distance from `x0` to the nearest point of `bx`; coordinate-separable,
/// so it equals the distance to the projection.
pub fn box_distance(
    x0: &[f64],
    bx: &[crate::forest::Interval],
    norm: Norm,
    weights: Option<&[f64]>,
) -> f64 {
    combine(
        x0.iter()
            .zip(bx)
            .enumerate()
            .map(|(j, (&v, iv))| (weight(weights, j), (iv.clamp(v) - v).abs())),
        norm,
    )
}
