//! Discrete viewpoint classes: 24 azimuth bins centred on multiples of 15
//! degrees (wrapping), 12 half-open elevation bins covering [-90, 90].

use serde::{Deserialize, Serialize};

use super::Viewpoint;
use crate::error::{Error, Result};

pub const AZIMUTH_BINS: usize = 24;
pub const ELEVATION_BINS: usize = 12;
pub const BIN_WIDTH_DEG: f64 = 15.0;

const KL_FLOOR: f64 = 1e-12;

pub fn encode_viewpoint_bins(vp: &Viewpoint) -> (usize, usize) {
    let az = (vp.azimuth_deg() / BIN_WIDTH_DEG).round() as usize % AZIMUTH_BINS;
    let el = ((vp.elevation_deg() + 90.0) / BIN_WIDTH_DEG).floor().clamp(0.0, (ELEVATION_BINS - 1) as f64);
    (az, el as usize)
}

/// Bin centres. Panics on an out-of-range index.
pub fn decode_viewpoint_bins(az_bin: usize, el_bin: usize) -> Viewpoint {
    assert!(az_bin < AZIMUTH_BINS, "azimuth bin {az_bin} out of range");
    assert!(el_bin < ELEVATION_BINS, "elevation bin {el_bin} out of range");
    Viewpoint::new(BIN_WIDTH_DEG * az_bin as f64, -90.0 + BIN_WIDTH_DEG * el_bin as f64 + 0.5 * BIN_WIDTH_DEG)
}

pub fn circular_bin_distance(b1: usize, b2: usize, n_bins: usize) -> usize {
    let d = b1.abs_diff(b2);
    d.min(n_bins - d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinDistribution {
    pub azimuth_probs: Vec<f64>,
    pub elevation_probs: Vec<f64>,
}

impl BinDistribution {
    pub fn new(azimuth_probs: Vec<f64>, elevation_probs: Vec<f64>) -> Result<Self> {
        let d = BinDistribution { azimuth_probs, elevation_probs };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        check_probs("azimuth", &self.azimuth_probs, AZIMUTH_BINS)?;
        check_probs("elevation", &self.elevation_probs, ELEVATION_BINS)
    }

    pub fn uniform() -> Self {
        BinDistribution {
            azimuth_probs: vec![1.0 / AZIMUTH_BINS as f64; AZIMUTH_BINS],
            elevation_probs: vec![1.0 / ELEVATION_BINS as f64; ELEVATION_BINS],
        }
    }

    pub fn one_hot(az_bin: usize, el_bin: usize) -> Self {
        let mut azimuth_probs = vec![0.0; AZIMUTH_BINS];
        let mut elevation_probs = vec![0.0; ELEVATION_BINS];
        azimuth_probs[az_bin] = 1.0;
        elevation_probs[el_bin] = 1.0;
        BinDistribution { azimuth_probs, elevation_probs }
    }

    /// Probabilities decaying geometrically with circular (azimuth) or linear
    /// (elevation) bin distance from the bins of `vp`.
    pub fn peaked_at(vp: &Viewpoint, decay: f64) -> Self {
        let (a, e) = encode_viewpoint_bins(vp);
        let az: Vec<f64> =
            (0..AZIMUTH_BINS).map(|b| decay.powi(circular_bin_distance(a, b, AZIMUTH_BINS) as i32)).collect();
        let el: Vec<f64> = (0..ELEVATION_BINS).map(|b| decay.powi(b.abs_diff(e) as i32)).collect();
        BinDistribution { azimuth_probs: normalized(az), elevation_probs: normalized(el) }
    }

    /// Most probable bins; ties go to the lowest index.
    pub fn argmax(&self) -> (usize, usize) {
        (argmax(&self.azimuth_probs), argmax(&self.elevation_probs))
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_probs(name: &str, p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::invalid(format!("{name} distribution needs {n} entries, got {}", p.len())));
    }
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!("{name} distribution has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("{name} distribution sums to {s}")));
    }
    Ok(())
}

fn kl(target: &[f64], pred: &[f64]) -> f64 {
    target
        .iter()
        .zip(pred)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &p)| t * (t.ln() - p.max(KL_FLOOR).ln()))
        .sum()
}

/// KL(target || pred), summed over the azimuth and elevation vectors.
pub fn viewpoint_kl_loss(pred: &BinDistribution, target: &BinDistribution) -> f64 {
    // Individual terms can be slightly negative in floating point; the sum
    // over a vector is nonnegative up to rounding.
    (kl(&target.azimuth_probs, &pred.azimuth_probs) + kl(&target.elevation_probs, &pred.elevation_probs)).max(0.0)
}
