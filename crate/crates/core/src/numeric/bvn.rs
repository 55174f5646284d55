//! Bivariate normal probabilities by Gauss–Legendre quadrature
//! (Drezner–Wesolowsky with Genz's refinements for |ρ| near 1).

#![allow(clippy::excessive_precision)]

use std::f64::consts::PI;

use super::normal::std_normal_cdf;
use crate::error::{Error, Result};

// (weight, abscissa) on [-1, 0]; the mirrored node is evaluated alongside.
const GL6: [(f64, f64); 3] = [
    (0.1713244923791705, -0.9324695142031522),
    (0.3607615730481384, -0.6612093864662647),
    (0.4679139345726904, -0.2386191860831970),
];

const GL12: [(f64, f64); 6] = [
    (0.04717533638651177, -0.9815606342467191),
    (0.1069393259953183, -0.9041172563704750),
    (0.1600783285433464, -0.7699026741943050),
    (0.2031674267230659, -0.5873179542866171),
    (0.2334925365383547, -0.3678314989981802),
    (0.2491470458134029, -0.1252334085114692),
];

const GL20: [(f64, f64); 10] = [
    (0.01761400713915212, -0.9931285991850949),
    (0.04060142980038694, -0.9639719272779138),
    (0.06267204833410906, -0.9122344282513259),
    (0.08327674157670475, -0.8391169718222188),
    (0.1019301198172404, -0.7463319064601508),
    (0.1181945319615184, -0.6360536807265150),
    (0.1316886384491766, -0.5108670019508271),
    (0.1420961093183821, -0.3737060887154196),
    (0.1491729864726037, -0.2277858511416451),
    (0.1527533871307259, -0.07652652113349733),
];

fn nodes(abs_r: f64) -> &'static [(f64, f64)] {
    if abs_r < 0.3 {
        &GL6
    } else if abs_r < 0.75 {
        &GL12
    } else {
        &GL20
    }
}

/// Upper orthant probability P(X > h, Y > k) for a standard bivariate normal
/// with correlation `r`. Infinite limits are allowed.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return std_normal_cdf(-k);
    }
    if k == f64::NEG_INFINITY {
        return std_normal_cdf(-h);
    }
    if r >= 1.0 {
        return std_normal_cdf(-h.max(k));
    }
    if r <= -1.0 {
        // X > h and -X > k
        return (std_normal_cdf(-k) - std_normal_cdf(h)).max(0.0);
    }
    finite_upper(h, k, r).clamp(0.0, 1.0)
}

fn finite_upper(h: f64, mut k: f64, r: f64) -> f64 {
    let quad = nodes(r.abs());
    let mut hk = h * k;
    let mut bvn = 0.0;

    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for &(w, x) in quad {
            for sign in [-1.0, 1.0] {
                let sn = (asr * (sign * x + 1.0) / 2.0).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / (4.0 * PI) + std_normal_cdf(-h) * std_normal_cdf(-k);
    }

    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let a2 = (1.0 - r) * (1.0 + r);
    let mut a = a2.sqrt();
    let b2 = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 16.0;
    let expo = -(b2 / a2 + hk) / 2.0;
    if expo > -100.0 {
        bvn = a
            * expo.exp()
            * (1.0 - c * (b2 - a2) * (1.0 - d * b2 / 5.0) / 3.0 + c * d * a2 * a2 / 5.0);
    }
    if hk > -100.0 {
        let b = b2.sqrt();
        bvn -= (-hk / 2.0).exp()
            * (2.0 * PI).sqrt()
            * std_normal_cdf(-b / a)
            * b
            * (1.0 - c * b2 * (1.0 - d * b2 / 5.0) / 3.0);
    }
    a /= 2.0;
    for &(w, x) in quad {
        for sign in [-1.0, 1.0] {
            let xs = (a * (sign * x + 1.0)).powi(2);
            let rs = (1.0 - xs).sqrt();
            let e = -(b2 / xs + hk) / 2.0;
            if e > -100.0 {
                bvn += a
                    * w
                    * e.exp()
                    * ((-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))).exp() / rs
                        - (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
    }
    bvn = -bvn / (2.0 * PI);

    if r > 0.0 {
        bvn + std_normal_cdf(-h.max(k))
    } else if h >= k {
        -bvn
    } else {
        let l = if h < 0.0 {
            std_normal_cdf(k) - std_normal_cdf(h)
        } else {
            std_normal_cdf(-h) - std_normal_cdf(-k)
        };
        l - bvn
    }
}

/// P(lower < Z < upper) for a standard bivariate normal with correlation `rho`.
pub fn bvn_rectangle(lower: [f64; 2], upper: [f64; 2], rho: f64) -> Result<f64> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::domain(format!("correlation {rho} outside [-1, 1]")));
    }
    for i in 0..2 {
        if lower[i].is_nan() || upper[i].is_nan() || !(lower[i] < upper[i]) {
            return Err(Error::domain(format!(
                "rectangle needs lower < upper, got [{}, {}] in coordinate {i}",
                lower[i], upper[i]
            )));
        }
    }
    let p = bvn_upper(lower[0], lower[1], rho) - bvn_upper(upper[0], lower[1], rho)
        - bvn_upper(lower[0], upper[1], rho)
        + bvn_upper(upper[0], upper[1], rho);
    Ok(p.clamp(0.0, 1.0))
}
