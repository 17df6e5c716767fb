//! Loss functions on probe series, each with its gradient with respect to
//! the series it reads.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Number of trailing samples used for spectral measurements.
pub const SPECTRAL_WINDOW: usize = 1000;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// Cross-entropy over normalized two-port intensities.
///
/// Each raw intensity pair is first normalized to sum to one; the
/// normalized pair is then used as the logits of a two-way softmax, and the
/// loss is the mean negative log-probability of the target port.
pub fn cross_entropy_loss(intensities: &[[f64; 2]], targets: &[usize]) -> Result<f64> {
    Ok(cross_entropy_with_grad(intensities, targets)?.loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Per-sample terms; `loss` is their mean.
    pub terms: Vec<f64>,
    /// Derivative of `loss` with respect to each raw intensity.
    pub grad: Vec<[f64; 2]>,
}

pub fn cross_entropy_with_grad(intensities: &[[f64; 2]], targets: &[usize]) -> Result<CrossEntropy> {
    if intensities.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: intensities.len(),
            got: targets.len(),
        });
    }
    if intensities.is_empty() {
        return Err(Error::Degenerate("empty batch"));
    }
    let n = intensities.len() as f64;
    let mut terms = Vec::with_capacity(intensities.len());
    let mut grad = Vec::with_capacity(intensities.len());
    for (&[i0, i1], &c) in intensities.iter().zip(targets) {
        if c > 1 {
            return Err(Error::Config {
                what: "target port must be 0 or 1",
                value: c as f64,
            });
        }
        if !(i0 >= 0.0 && i1 >= 0.0) {
            return Err(Error::Degenerate("negative intensity"));
        }
        let s = i0 + i1;
        if !(s > 0.0) {
            return Err(Error::Degenerate("zero total intensity"));
        }
        let p = [i0 / s, i1 / s];
        let other = 1 - c;
        // -log softmax(p)_c = softplus(p_other - p_c)
        terms.push(softplus(p[other] - p[c]));
        let e = libm::exp(p[1] - p[0]);
        let soft = [1.0 / (1.0 + e), e / (1.0 + e)];
        let mut dp = soft;
        dp[c] -= 1.0;
        let s2 = s * s;
        grad.push([i1 / s2 * (dp[0] - dp[1]) / n, i0 / s2 * (dp[1] - dp[0]) / n]);
    }
    let loss = terms.iter().sum::<f64>() / n;
    Ok(CrossEntropy { loss, terms, grad })
}

/// Mean absolute error between two equally long series.
pub fn mae_loss(output: &[f64], target: &[f64]) -> Result<f64> {
    if output.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            got: output.len(),
        });
    }
    if output.is_empty() {
        return Err(Error::Degenerate("empty series"));
    }
    let sum: f64 = output.iter().zip(target).map(|(y, t)| libm::fabs(y - t)).sum();
    Ok(sum / output.len() as f64)
}

/// Gradient of [`mae_loss`] with respect to `output` (zero where equal).
pub fn mae_grad(output: &[f64], target: &[f64]) -> Vec<f64> {
    let w = output.len() as f64;
    output.iter().zip(target).map(|(y, t)| sign(y - t) / w).collect()
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// DFT bin of a `len`-sample window nearest to `frequency`, given the
/// sample spacing.
pub fn nearest_bin(frequency: f64, len: usize, sample_interval: f64) -> usize {
    libm::round(frequency * len as f64 * sample_interval) as usize
}

/// `(re, im)` of the DFT of `series` at `bin`.
pub fn dft_bin(series: &[f64], bin: usize) -> (f64, f64) {
    let m = series.len() as f64;
    let mut re = 0.0;
    let mut im = 0.0;
    for (t, &y) in series.iter().enumerate() {
        let phi = 2.0 * core::f64::consts::PI * ((bin * t) % series.len()) as f64 / m;
        re += y * libm::cos(phi);
        im -= y * libm::sin(phi);
    }
    (re, im)
}

fn trailing(series: &[f64]) -> Result<&[f64]> {
    if series.len() < SPECTRAL_WINDOW {
        return Err(Error::LengthMismatch {
            expected: SPECTRAL_WINDOW,
            got: series.len(),
        });
    }
    Ok(&series[series.len() - SPECTRAL_WINDOW..])
}

/// Magnitude of the DFT over the last [`SPECTRAL_WINDOW`] samples at the bin
/// nearest `frequency`.
pub fn spectral_magnitude(series: &[f64], frequency: f64, sample_interval: f64) -> Result<f64> {
    let w = trailing(series)?;
    let (re, im) = dft_bin(w, nearest_bin(frequency, w.len(), sample_interval));
    Ok(libm::hypot(re, im))
}

/// Output magnitude over the summed input magnitudes at `frequency`, over
/// the last [`SPECTRAL_WINDOW`] samples.
pub fn spectral_gain(inputs: [&[f64]; 2], output: &[f64], frequency: f64, sample_interval: f64) -> Result<f64> {
    Ok(spectral_gain_with_grad(inputs, output, frequency, sample_interval)?.0)
}

/// Gain and its gradient with respect to every sample of `output` (zero
/// outside the trailing window). Inputs are treated as constants.
pub fn spectral_gain_with_grad(
    inputs: [&[f64]; 2],
    output: &[f64],
    frequency: f64,
    sample_interval: f64,
) -> Result<(f64, Vec<f64>)> {
    let denom = spectral_magnitude(inputs[0], frequency, sample_interval)?
        + spectral_magnitude(inputs[1], frequency, sample_interval)?;
    if !(denom > 0.0) {
        return Err(Error::Degenerate("zero input magnitude at the drive frequency"));
    }
    let w = trailing(output)?;
    let bin = nearest_bin(frequency, w.len(), sample_interval);
    let (re, im) = dft_bin(w, bin);
    let mag = libm::hypot(re, im);
    let mut grad = vec![0.0; output.len()];
    if mag > 0.0 {
        let offset = output.len() - w.len();
        let m = w.len() as f64;
        for t in 0..w.len() {
            let phi = 2.0 * core::f64::consts::PI * ((bin * t) % w.len()) as f64 / m;
            grad[offset + t] = (re * libm::cos(phi) - im * libm::sin(phi)) / mag / denom;
        }
    }
    Ok((mag / denom, grad))
}
