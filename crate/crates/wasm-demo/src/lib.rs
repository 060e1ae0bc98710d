//! Browser bindings for three small tvisvar operations: impulse responses of
//! a user-entered system, the spike-and-slab prior implied by restriction
//! patterns, and regime filtering of a scalar series.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wasm_bindgen::prelude::*;

use tvisvar::analytics::{impulse_responses, ImpulseNormalization};
use tvisvar::priors::{sample_ig2, spike_slab_weights};
use tvisvar::regime::{forward_filter, smooth};

fn js_error(e: tvisvar::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), String> {
    if got != want {
        return Err(format!("{what} needs {want} values, got {got}"));
    }
    Ok(())
}

/// Responses to structural shock `shock` (zero-based), flattened row-major
/// as `(horizon + 1) × n`. `a` holds `n × (n · lags)` lag coefficients
/// row-major; `b` is the `n × n` structural matrix row-major. A negative
/// `norm_var` disables normalization.
#[allow(clippy::too_many_arguments)]
pub fn irf(
    a: &[f64],
    b: &[f64],
    n: usize,
    lags: usize,
    horizon: usize,
    shock: usize,
    norm_var: i32,
    norm_value: f64,
) -> Result<Vec<f64>, String> {
    check_len("A", a.len(), n * n * lags)?;
    check_len("B", b.len(), n * n)?;
    let mut a_full = DMatrix::zeros(n, n * lags + 1);
    a_full
        .view_mut((0, 0), (n, n * lags))
        .copy_from(&DMatrix::from_row_slice(n, n * lags, a));
    let b = DMatrix::from_row_slice(n, n, b);
    let normalization = (norm_var >= 0).then_some(ImpulseNormalization {
        variable: norm_var as usize,
        value: norm_value,
    });
    let out = impulse_responses(&a_full, &b, lags, horizon, shock, normalization).map_err(|e| e.to_string())?;
    Ok((0..out.nrows())
        .flat_map(|h| out.row(h).iter().copied().collect::<Vec<_>>())
        .collect())
}

#[wasm_bindgen(js_name = impulseResponses)]
#[allow(clippy::too_many_arguments)]
pub fn impulse_responses_js(
    a: &[f64],
    b: &[f64],
    n: usize,
    lags: usize,
    horizon: usize,
    shock: usize,
    norm_var: i32,
    norm_value: f64,
) -> Result<Vec<f64>, JsValue> {
    irf(a, b, n, lags, horizon, shock, norm_var, norm_value).map_err(|e| JsValue::from_str(&e))
}

/// Prior draws of one structural coefficient when `k` patterns are
/// equally likely and `k_restricting` of them exclude it. The slab is
/// `N(0, γ)` with `γ ~ IG2(s, ν)`. Returns `[zero_fraction, bins...]` where
/// the bins are counts of nonzero draws over `[-range, range]`.
#[allow(clippy::too_many_arguments)]
pub fn spike_slab(
    k: usize,
    k_restricting: usize,
    scale: f64,
    shape: f64,
    draws: usize,
    bins: usize,
    range: f64,
    seed: u64,
) -> Result<Vec<f64>, tvisvar::Error> {
    let (slab, _) = spike_slab_weights(k, k_restricting)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bins = bins.max(1);
    let mut hist = vec![0.0; bins];
    let mut zeros = 0usize;
    for _ in 0..draws {
        if rand::Rng::random::<f64>(&mut rng) >= slab {
            zeros += 1;
            continue;
        }
        let gamma = sample_ig2(scale, shape, &mut rng)?;
        let z: f64 = rand::Rng::sample(&mut rng, StandardNormal);
        let x = z * gamma.sqrt();
        if x.abs() < range {
            let idx = (((x + range) / (2.0 * range)) * bins as f64) as usize;
            hist[idx.min(bins - 1)] += 1.0;
        }
    }
    let mut out = vec![zeros as f64 / draws.max(1) as f64];
    out.extend(hist);
    Ok(out)
}

#[wasm_bindgen(js_name = spikeSlabPrior)]
#[allow(clippy::too_many_arguments)]
pub fn spike_slab_js(
    k: usize,
    k_restricting: usize,
    scale: f64,
    shape: f64,
    draws: usize,
    bins: usize,
    range: f64,
    seed: u32,
) -> Result<Vec<f64>, JsValue> {
    spike_slab(k, k_restricting, scale, shape, draws, bins, range, seed as u64).map_err(js_error)
}

/// Filtered and smoothed probabilities of the high-variance regime for a
/// scalar series `y_t ~ N(0, σ²_{s_t})`. Returns `2T` values: filtered
/// probabilities followed by smoothed ones.
pub fn filter_series(y: &[f64], sd_low: f64, sd_high: f64, stay_low: f64, stay_high: f64) -> Result<Vec<f64>, String> {
    if !(sd_low > 0.0 && sd_high > 0.0) {
        return Err("standard deviations must be positive".into());
    }
    if !(0.0..=1.0).contains(&stay_low) || !(0.0..=1.0).contains(&stay_high) {
        return Err("staying probabilities must lie in [0, 1]".into());
    }
    let t_len = y.len();
    let sds = [sd_low, sd_high];
    let ll = DMatrix::from_fn(t_len, 2, |t, m| {
        let z = y[t] / sds[m];
        -0.5 * (2.0 * std::f64::consts::PI).ln() - sds[m].ln() - 0.5 * z * z
    });
    let p = DMatrix::from_row_slice(2, 2, &[stay_low, 1.0 - stay_low, 1.0 - stay_high, stay_high]);
    let out = forward_filter(&ll, &p, &[0.5, 0.5]).map_err(|e| e.to_string())?;
    let smoothed = smooth(&out, &p);
    let mut v: Vec<f64> = out.filtered.column(1).iter().copied().collect();
    v.extend(smoothed.column(1).iter());
    Ok(v)
}

#[wasm_bindgen(js_name = filterSeries)]
pub fn filter_series_js(
    y: &[f64],
    sd_low: f64,
    sd_high: f64,
    stay_low: f64,
    stay_high: f64,
) -> Result<Vec<f64>, JsValue> {
    filter_series(y, sd_low, sd_high, stay_low, stay_high).map_err(|e| JsValue::from_str(&e))
}

/// A scalar series with a volatile middle third, for the filter demo.
#[wasm_bindgen(js_name = demoSeries)]
pub fn demo_series(t_len: usize, seed: u32) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    (0..t_len)
        .map(|t| {
            let z: f64 = rand::Rng::sample(&mut rng, StandardNormal);
            if t >= t_len / 3 && t < 2 * t_len / 3 {
                3.0 * z
            } else {
                z
            }
        })
        .collect()
}
