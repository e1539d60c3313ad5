//! First and second moments of the effective link gain.
//!
//! A link multiplies the true signal by `z = α + (1 − α)β`, where `α` is the
//! Bernoulli "link healthy" indicator and `β` the injected factor, drawn
//! independently. Because `α² = α` and `α(1 − α) = 0`,
//!
//! ```text
//! E[z]   = ᾱ + (1 − ᾱ) β̄
//! E[z²]  = ᾱ + (1 − ᾱ)(β̄² + σβ²)
//! Var[z] = (1 − ᾱ) σβ² + ᾱ (1 − ᾱ)(1 − β̄)²
//! ```
//!
//! The last line is `E[z²] − E[z]²` rearranged so that it is a sum of
//! nonnegative terms.

use crate::linalg::Matrix;
use crate::model::AttackChannel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMoments {
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
}

pub fn channel_moments(ch: &AttackChannel) -> ChannelMoments {
    let a = ch.bernoulli_mean;
    let b = ch.injection_mean;
    let mean = a + (1.0 - a) * b;
    let variance = (1.0 - a) * ch.injection_variance + a * (1.0 - a) * (1.0 - b) * (1.0 - b);
    debug_assert!(variance >= 0.0);
    ChannelMoments {
        mean,
        variance,
        std: variance.sqrt(),
    }
}

/// Diagonal matrices of per-channel means and standard deviations.
pub fn delta_matrices(channels: &[AttackChannel]) -> (Matrix, Matrix) {
    let moments: Vec<ChannelMoments> = channels.iter().map(channel_moments).collect();
    let means: Vec<f64> = moments.iter().map(|m| m.mean).collect();
    let stds: Vec<f64> = moments.iter().map(|m| m.std).collect();
    (
        Matrix::from_diagonal(&means).expect("moments of valid channels are finite"),
        Matrix::from_diagonal(&stds).expect("moments of valid channels are finite"),
    )
}

pub fn variances(channels: &[AttackChannel]) -> Vec<f64> {
    channels.iter().map(|c| channel_moments(c).variance).collect()
}
