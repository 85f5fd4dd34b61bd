use rand::Rng;

use crate::error::{Error, Result};
use crate::privacy::Epsilon;

/// One draw from Laplace(0, `scale`).
///
/// Inverse CDF: with `u` uniform on the open interval (-1/2, 1/2), returns
/// `-scale * sign(u) * ln(1 - 2|u|)`.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Laplace scale must be positive and finite, got {scale}"
        )));
    }
    Ok(draw(scale, rng))
}

#[inline]
pub(crate) fn draw<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u = loop {
        let r: f64 = rng.random();
        // r = 0 would put u on the closed end -1/2
        if r > 0.0 {
            break r - 0.5;
        }
    };
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// `value` plus Laplace noise of scale `sensitivity / epsilon`.
pub fn laplace_mech<R: Rng + ?Sized>(
    value: f64,
    sensitivity: f64,
    epsilon: Epsilon,
    rng: &mut R,
) -> Result<f64> {
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sensitivity must be positive and finite, got {sensitivity}"
        )));
    }
    Ok(value + laplace_sample(sensitivity / epsilon.value(), rng)?)
}

/// CDF of Laplace(`location`, `scale`) at `x`.
pub fn laplace_cdf(x: f64, location: f64, scale: f64) -> f64 {
    let z = (x - location) / scale;
    if z < 0.0 {
        0.5 * z.exp()
    } else {
        1.0 - 0.5 * (-z).exp()
    }
}
