//! Laguerre-Gaussian mode amplitudes.
//!
//! `u_{p,l}(r, φ, z)` is evaluated in its usual paraxial form with an
//! `exp(−ilφ)` azimuthal factor and a `(2p+|l|+1)·atan(z/z_R)` Gouy phase.
//! The normalization is chosen so that every mode has unit L² norm in the
//! transverse plane:
//!
//! ```text
//! prefactor = sqrt(2 p! / (π (p+|l|)!)) / w(z)
//! ```

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modespace::OamIndex;

/// Beam waist used when none is given (1 mm).
pub const DEFAULT_WAIST: f64 = 1e-3;
/// HeNe wavelength (632 nm).
pub const DEFAULT_WAVELENGTH: f64 = 632e-9;

/// Physical parameters of one LG mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgBeamParams {
    p: u32,
    l: OamIndex,
    waist: f64,
    wavelength: f64,
    z: f64,
}

impl LgBeamParams {
    pub fn new(p: u32, l: OamIndex, waist: f64, wavelength: f64, z: f64) -> Result<Self> {
        if !(waist > 0.0 && waist.is_finite()) {
            return Err(Error::Domain(format!("beam waist must be positive, got {waist}")));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::Domain(format!("wavelength must be positive, got {wavelength}")));
        }
        if !z.is_finite() {
            return Err(Error::Domain("axial position must be finite".into()));
        }
        Ok(LgBeamParams { p, l, waist, wavelength, z })
    }

    /// `p = 0`, `z = 0` mode with the default waist and wavelength.
    pub fn detection(l: OamIndex) -> Self {
        LgBeamParams { p: 0, l, waist: DEFAULT_WAIST, wavelength: DEFAULT_WAVELENGTH, z: 0.0 }
    }

    pub fn with_l(self, l: OamIndex) -> Self {
        LgBeamParams { l, ..self }
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn l(&self) -> OamIndex {
        self.l
    }

    pub fn waist(&self) -> f64 {
        self.waist
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn rayleigh_range(&self) -> f64 {
        PI * self.waist * self.waist / self.wavelength
    }

    /// `w(z) = w0 · sqrt(1 + z²/z_R²)`.
    pub fn beam_radius_at(&self, z: f64) -> f64 {
        let zr = self.rayleigh_range();
        self.waist * (1.0 + (z / zr).powi(2)).sqrt()
    }

    /// Beam radius in this parameter set's plane.
    pub fn beam_radius(&self) -> f64 {
        self.beam_radius_at(self.z)
    }
}

/// Point in cylindrical coordinates (meters, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylPoint {
    pub r: f64,
    pub phi: f64,
    pub z: f64,
}

impl CylPoint {
    /// `r` must be nonnegative; `phi` is wrapped into `[0, 2π)`.
    pub fn new(r: f64, phi: f64, z: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("radius must be nonnegative, got {r}")));
        }
        Ok(CylPoint { r, phi: phi.rem_euclid(2.0 * PI), z })
    }
}

/// Associated Laguerre polynomial `L_p^α(x)` by the three-term recurrence.
pub fn laguerre(p: u32, alpha: u32, x: f64) -> f64 {
    let a = alpha as f64;
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for k in 1..p {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + a - x) * cur - (k + a) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `sqrt(2 p! / (π (p+|l|)!))`, without forming either factorial.
fn mode_norm(p: u32, abs_l: u32) -> f64 {
    let ratio: f64 = ((p + 1)..=(p + abs_l)).map(|k| 1.0 / k as f64).product();
    (2.0 * ratio / PI).sqrt()
}

/// Complex amplitude of the mode at `pt`. The point's own `z` selects the
/// evaluation plane; `params.z` is not consulted.
pub fn lg_amplitude(params: &LgBeamParams, pt: CylPoint) -> Complex64 {
    let abs_l = params.l.magnitude();
    let p = params.p;
    let z = pt.z;
    let zr = params.rayleigh_range();
    let wz = params.beam_radius_at(z);
    let r2 = pt.r * pt.r;

    let prefactor = mode_norm(p, abs_l) / wz;
    let radial = (pt.r * std::f64::consts::SQRT_2 / wz).powi(abs_l as i32)
        * (-r2 / (wz * wz)).exp()
        * laguerre(p, abs_l, 2.0 * r2 / (wz * wz));

    let azimuthal = -(params.l.charge() as f64) * pt.phi;
    let curvature = params.wavenumber() * r2 * z / (2.0 * (z * z + zr * zr));
    let gouy = (2 * p + abs_l + 1) as f64 * (z / zr).atan();
    Complex64::from_polar(prefactor * radial, azimuthal + curvature + gouy)
}

/// Radius of peak intensity of a `p = 0` doughnut, `w(z)·sqrt(|l|/2)`.
pub fn peak_radius(params: &LgBeamParams) -> Result<f64> {
    if params.p != 0 {
        return Err(Error::Unsupported(format!("peak radius is only defined here for p = 0, got p = {}", params.p)));
    }
    Ok(params.beam_radius() * (params.l.magnitude() as f64 / 2.0).sqrt())
}

/// Writes `r,phi,re,im` rows for every `(r, φ)` pair in the plane `params.z`.
pub fn write_field_scan<W: Write>(params: &LgBeamParams, radii: &[f64], phis: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "r,phi,re,im")?;
    for &r in radii {
        for &phi in phis {
            let u = lg_amplitude(params, CylPoint::new(r, phi, params.z)?);
            writeln!(out, "{r:e},{phi:e},{:e},{:e}", u.re, u.im)?;
        }
    }
    Ok(())
}
