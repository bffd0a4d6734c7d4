//! Browser bindings for three small pieces of the pipeline: soft cluster
//! assignment with its sharpened target, batch-wise hard sampling, and grid
//! binning of coordinates. Inputs and outputs are flat `f64` arrays.

use std::collections::BTreeMap;

use placedup::graph_smooth::bin_of;
use placedup::metric_learn::{hard_select, pair_loss, signed_score, soft_assign_all, target_dist};
use placedup::place_model::Coordinate;
use wasm_bindgen::prelude::*;

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

fn check_finite(name: &str, xs: &[f64]) -> Result<(), String> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(format!("{name}[{i}] is not finite")),
        None => Ok(()),
    }
}

/// Soft assignments `d` of 2-D points to 2-D centers followed by the target
/// `c`, both row-major `n x k`.
pub fn soft_clusters(points: &[f64], centers: &[f64]) -> Result<Vec<f64>, String> {
    if !points.len().is_multiple_of(2) || !centers.len().is_multiple_of(2) {
        return Err("points and centers must be flat (x, y) pairs".into());
    }
    if centers.is_empty() {
        return Err("at least one center is required".into());
    }
    check_finite("points", points)?;
    check_finite("centers", centers)?;
    let k = centers.len() / 2;
    let d = soft_assign_all(points, 2, centers);
    let c = target_dist(&d, k);
    Ok([d, c].concat())
}

/// Per pair `(signed score, loss, selected)` followed by the threshold.
pub fn hard_sampling(dists: &[f64], labels: &[f64], alpha: f64, beta: f64) -> Result<Vec<f64>, String> {
    if dists.len() != labels.len() {
        return Err(format!("{} distances but {} labels", dists.len(), labels.len()));
    }
    check_finite("dists", dists)?;
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err("labels must be 0 or 1".into());
    }
    if !(alpha > 0.0 && beta >= 0.0) {
        return Err("alpha must be positive and beta nonnegative".into());
    }
    let batch: Vec<(f64, f64)> = dists.iter().copied().zip(labels.iter().copied()).collect();
    let selected = hard_select(&batch, beta);
    let mut out = Vec::with_capacity(3 * batch.len() + 1);
    for (l, &(d, y)) in batch.iter().enumerate() {
        out.push(signed_score(d, y));
        out.push(pair_loss(d, y, alpha));
        out.push(if selected.contains(&l) { 1.0 } else { 0.0 });
    }
    let tau = if batch.is_empty() {
        0.0
    } else {
        beta * batch.iter().map(|&(d, y)| signed_score(d, y)).sum::<f64>() / batch.len() as f64
    };
    out.push(tau);
    Ok(out)
}

/// Bin number of each `(lat, lon)` point (bins numbered in sorted order)
/// followed by the number of same-bin pairs.
pub fn grid_bins(lat_lon: &[f64], bin_size: f64) -> Result<Vec<f64>, String> {
    if !lat_lon.len().is_multiple_of(2) {
        return Err("coordinates must be flat (lat, lon) pairs".into());
    }
    if !(bin_size.is_finite() && bin_size > 0.0) {
        return Err("bin size must be positive".into());
    }
    let bins = lat_lon
        .chunks_exact(2)
        .map(|c| Coordinate::new(c[0], c[1]).map(|c| bin_of(c, bin_size)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let mut members: BTreeMap<_, usize> = BTreeMap::new();
    for b in &bins {
        *members.entry(*b).or_default() += 1;
    }
    let number: BTreeMap<_, usize> = members.keys().enumerate().map(|(i, b)| (*b, i)).collect();
    let edges: usize = members.values().map(|&m| m * (m - 1) / 2).sum();
    let mut out: Vec<f64> = bins.iter().map(|b| number[b] as f64).collect();
    out.push(edges as f64);
    Ok(out)
}

#[wasm_bindgen(js_name = softClusters)]
pub fn soft_clusters_js(points: &[f64], centers: &[f64]) -> Result<Vec<f64>, JsError> {
    js(soft_clusters(points, centers))
}

#[wasm_bindgen(js_name = hardSampling)]
pub fn hard_sampling_js(dists: &[f64], labels: &[f64], alpha: f64, beta: f64) -> Result<Vec<f64>, JsError> {
    js(hard_sampling(dists, labels, alpha, beta))
}

#[wasm_bindgen(js_name = gridBins)]
pub fn grid_bins_js(lat_lon: &[f64], bin_size: f64) -> Result<Vec<f64>, JsError> {
    js(grid_bins(lat_lon, bin_size))
}
