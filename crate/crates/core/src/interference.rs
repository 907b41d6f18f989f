//! Four-hole interference detection: sampling point sources from the beam
//! profile, rendering the diffraction pattern on a screen, and reading
//! fringe patterns back as mode content.
//!
//! Hole layout (hole plane, `+y` up), a square of side `d` centered on the
//! optical axis:
//!
//! ```text
//!   S_A (−d/2, +d/2)    S_B (+d/2, +d/2)
//!   S_C (−d/2, −d/2)    S_D (+d/2, −d/2)
//! ```
//!
//! The `|l| = 1` branch feeds S_A (real part) and S_D (imaginary part); the
//! `|l| = 2` branch feeds S_B (real part) and S_C (imaginary part).
//! Orthogonal polarizations do not interfere, so each source carries an H
//! and a V amplitude and the screen intensity is `|ΣH|² + |ΣV|²`.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lgfield::{lg_amplitude, peak_radius, CylPoint, LgBeamParams, DEFAULT_WAVELENGTH};
use crate::modespace::{BasisMap, ModeState, OamIndex, Polarization};

/// Largest accepted screen side in pixels.
pub const MAX_RESOLUTION: usize = 8192;

/// Correlation below which a pattern is reported as unrecognized.
pub const RECOGNITION_THRESHOLD: f64 = 0.9;

/// Hole plane, screen and light geometry. Index 0 of the pairs is `x`,
/// index 1 is `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenGeometry {
    pub hole_gap: f64,
    pub screen_distance: f64,
    pub extent: [f64; 2],
    pub resolution: [usize; 2],
    pub wavelength: f64,
    /// Fresnel (small-angle) distances instead of exact ones.
    #[serde(default)]
    pub paraxial: bool,
}

impl Default for ScreenGeometry {
    fn default() -> Self {
        ScreenGeometry {
            hole_gap: 1e-5,
            screen_distance: 1e-1,
            extent: [0.1, 0.1],
            resolution: [512, 512],
            wavelength: DEFAULT_WAVELENGTH,
            paraxial: false,
        }
    }
}

impl ScreenGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be a positive finite length, got {v}")))
            }
        };
        positive("hole gap", self.hole_gap)?;
        positive("screen distance", self.screen_distance)?;
        positive("screen extent x", self.extent[0])?;
        positive("screen extent y", self.extent[1])?;
        positive("wavelength", self.wavelength)?;
        for r in self.resolution {
            if r == 0 {
                return Err(Error::Config("resolution must be at least 1 pixel per side".into()));
            }
            if r > MAX_RESOLUTION {
                return Err(Error::Resource(format!("resolution {r} exceeds {MAX_RESOLUTION} pixels per side")));
            }
        }
        Ok(())
    }

    pub fn with_resolution(self, side: usize) -> Self {
        ScreenGeometry { resolution: [side, side], ..self }
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn pitch(&self) -> [f64; 2] {
        [self.extent[0] / self.resolution[0] as f64, self.extent[1] / self.resolution[1] as f64]
    }

    /// Screen coordinates of a pixel center; row 0 is the top (`+y`) edge.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let [px, py] = self.pitch();
        let x = (col as f64 + 0.5) * px - self.extent[0] / 2.0;
        let y = self.extent[1] / 2.0 - (row as f64 + 0.5) * py;
        (x, y)
    }

    /// Fringe period of a diagonal hole pair, `λD/(√2·d)`.
    pub fn diagonal_fringe_period(&self) -> f64 {
        self.wavelength * self.screen_distance / (2f64.sqrt() * self.hole_gap)
    }

    /// Default hole positions in S_A, S_B, S_C, S_D order.
    pub fn hole_positions(&self) -> [[f64; 2]; 4] {
        let h = self.hole_gap / 2.0;
        [[-h, h], [h, h], [-h, -h], [h, -h]]
    }
}

/// The four holes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hole {
    A,
    B,
    C,
    D,
}

impl Hole {
    pub const ALL: [Hole; 4] = [Hole::A, Hole::B, Hole::C, Hole::D];

    fn index(self) -> usize {
        self as usize
    }

    /// `(|l|, is_real_part)` served by this hole.
    pub fn assignment(self) -> (u32, bool) {
        match self {
            Hole::A => (1, true),
            Hole::D => (1, false),
            Hole::B => (2, true),
            Hole::C => (2, false),
        }
    }
}

/// One point source in the hole plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub position: [f64; 2],
    pub h: Complex64,
    pub v: Complex64,
    pub active: bool,
}

impl Source {
    pub fn new(position: [f64; 2], h: Complex64, v: Complex64) -> Self {
        Source { position, h, v, active: true }
    }

    pub fn inactive(position: [f64; 2]) -> Self {
        Source { position, h: Complex64::new(0.0, 0.0), v: Complex64::new(0.0, 0.0), active: false }
    }

    fn amplitude(&self, pol: Polarization) -> Complex64 {
        match pol {
            Polarization::H => self.h,
            Polarization::V => self.v,
        }
    }
}

/// Sources S_A..S_D in that order, or any custom set of point sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSet {
    pub sources: Vec<Source>,
}

impl SourceSet {
    pub fn hole(&self, h: Hole) -> &Source {
        &self.sources[h.index()]
    }

    pub fn active_holes(&self) -> Vec<Hole> {
        Hole::ALL.into_iter().filter(|h| self.sources.get(h.index()).is_some_and(|s| s.active)).collect()
    }

    /// Multiplies every amplitude by `c`.
    pub fn scaled(&self, c: Complex64) -> Self {
        SourceSet {
            sources: self.sources.iter().map(|s| Source { h: s.h * c, v: s.v * c, ..*s }).collect(),
        }
    }
}

fn branch_field(state: &ModeState, pol: Polarization, m: u32, params: &LgBeamParams, phi: f64) -> Result<Complex64> {
    let base = params.with_l(OamIndex(m as i32));
    let r = peak_radius(&base)?;
    let pt = CylPoint::new(r, phi, 0.0)?;
    let peak = lg_amplitude(&base, CylPoint::new(r, 0.0, 0.0)?).norm();
    let mut sum = Complex64::new(0.0, 0.0);
    for ((l, p), a) in state.terms() {
        if p == pol && l.magnitude() == m {
            sum += a * lg_amplitude(&params.with_l(l), pt);
        }
    }
    Ok(sum / peak)
}

/// Samples the four hole amplitudes from the beam profile.
///
/// For each polarization and each `|l|` branch the branch field is
/// evaluated on the doughnut peak ring. The real-part hole receives the real
/// part of the field on the horizontal axis (`φ = 0`); the imaginary-part
/// hole receives the imaginary part at `φ = 2π − π/(2|l|)` (the lower
/// vertical axis for `|l| = 1`), where a pure `+|l|` mode is `+i` times its `φ = 0`
/// value. Samples are in units of the unit mode's peak magnitude.
///
/// The samples depend on the global phase of `state`; [`render_state`]
/// fixes it first.
pub fn sample_sources(state: &ModeState, params: &LgBeamParams, geom: &ScreenGeometry) -> Result<SourceSet> {
    if params.p() != 0 || params.z() != 0.0 {
        return Err(Error::Unsupported("source sampling needs a p = 0 beam at z = 0".into()));
    }
    geom.validate()?;
    if let Some(((l, _), _)) = state.terms().find(|((l, _), _)| !matches!(l.magnitude(), 1 | 2)) {
        return Err(Error::Unsupported(format!("mode {l} has no interference holes (|l| must be 1 or 2)")));
    }
    let positions = geom.hole_positions();
    let mut sources = Vec::with_capacity(4);
    for hole in Hole::ALL {
        let (m, real) = hole.assignment();
        let pos = positions[hole.index()];
        if !state.terms().any(|((l, _), _)| l.magnitude() == m) {
            sources.push(Source::inactive(pos));
            continue;
        }
        let mut amp = [Complex64::new(0.0, 0.0); 2];
        for (i, pol) in Polarization::BOTH.into_iter().enumerate() {
            amp[i] = if real {
                Complex64::new(branch_field(state, pol, m, params, 0.0)?.re, 0.0)
            } else {
                let phi = 2.0 * PI - FRAC_PI_2 / m as f64;
                Complex64::new(branch_field(state, pol, m, params, phi)?.im, 0.0)
            };
        }
        sources.push(Source::new(pos, amp[0], amp[1]));
    }
    Ok(SourceSet { sources })
}

/// Intensity on the grid of screen pixels, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeImage {
    pub geometry: ScreenGeometry,
    pub intensities: Vec<f64>,
}

impl FringeImage {
    pub fn new(geometry: ScreenGeometry, intensities: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if intensities.len() != geometry.resolution[0] * geometry.resolution[1] {
            return Err(Error::Domain("intensity buffer does not match the resolution".into()));
        }
        if intensities.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain("intensities must be finite and nonnegative".into()));
        }
        Ok(FringeImage { geometry, intensities })
    }

    pub fn width(&self) -> usize {
        self.geometry.resolution[0]
    }

    pub fn height(&self) -> usize {
        self.geometry.resolution[1]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.intensities[row * self.width() + col]
    }

    pub fn max(&self) -> f64 {
        self.intensities.iter().copied().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.intensities.iter().sum()
    }

    fn flipped(&self, about_x: bool) -> Vec<f64> {
        let (w, h) = (self.width(), self.height());
        let mut out = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                out.push(if about_x { self.get(h - 1 - row, col) } else { self.get(row, w - 1 - col) });
            }
        }
        out
    }

    /// `Σ|I − mirror(I)| / ΣI` for the reflection about the x axis
    /// (`y → −y`) or the y axis (`x → −x`).
    pub fn mirror_residual(&self, about_x: bool) -> Result<f64> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::Domain("image is all zero".into()));
        }
        let diff: f64 = self.intensities.iter().zip(self.flipped(about_x)).map(|(a, b)| (a - b).abs()).sum();
        Ok(diff / total)
    }
}

/// Field sum for one polarization at screen point `(x, y)`. Phases are
/// taken relative to the on-axis distance `D` to keep them small.
fn field_at(src: &SourceSet, geom: &ScreenGeometry, pol: Polarization, x: f64, y: f64) -> Complex64 {
    let k = geom.wavenumber();
    let d = geom.screen_distance;
    let mut sum = Complex64::new(0.0, 0.0);
    for s in &src.sources {
        let a = s.amplitude(pol);
        if a == Complex64::new(0.0, 0.0) {
            continue;
        }
        let dx = x - s.position[0];
        let dy = y - s.position[1];
        let rho2 = dx * dx + dy * dy;
        let (excess, r) = if geom.paraxial {
            (rho2 / (2.0 * d), d)
        } else {
            let r = (rho2 + d * d).sqrt();
            (rho2 / (r + d), r)
        };
        sum += a * Complex64::from_polar(1.0 / r, k * excess);
    }
    sum
}

/// Intensity at one screen point.
pub fn intensity_at(src: &SourceSet, geom: &ScreenGeometry, x: f64, y: f64) -> f64 {
    Polarization::BOTH.into_iter().map(|p| field_at(src, geom, p, x, y).norm_sqr()).sum()
}

/// Renders `|Σ_k a_k e^{ikR_k}/R_k|²` (per polarization, summed) at every
/// pixel center, with `R_k` the distance from hole `k` to the pixel.
pub fn render_pattern(src: &SourceSet, geom: &ScreenGeometry) -> Result<FringeImage> {
    geom.validate()?;
    let [w, h] = geom.resolution;
    let mut data = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let (x, y) = geom.pixel_center(row, col);
            data.push(intensity_at(src, geom, x, y));
        }
    }
    FringeImage::new(*geom, data)
}

/// Relative amplitude below which terms are dropped before rendering.
pub const RENDER_PRUNE_TOL: f64 = 1e-12;

/// Drops round-off terms, phase-references `state`, samples its sources and
/// renders the screen.
pub fn render_state(state: &ModeState, params: &LgBeamParams, geom: &ScreenGeometry) -> Result<(SourceSet, FringeImage)> {
    let src = sample_sources(&state.pruned(RENDER_PRUNE_TOL).phase_referenced(), params, geom)?;
    let img = render_pattern(&src, geom)?;
    Ok((src, img))
}

/// Orientation of the fringe stripes (and of the pattern's symmetry axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymmetryAxis {
    X,
    Y,
    Diagonal,
    AntiDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeSignature {
    /// `(disc mean − annulus mean)/(disc mean + annulus mean)`.
    pub center_contrast: f64,
    pub symmetry_axis: SymmetryAxis,
    pub total_power: f64,
    pub mirror_residual_x: f64,
    pub mirror_residual_y: f64,
    /// Structure-tensor coherence in `[0, 1]`; 0 for isotropic images.
    pub orientation_coherence: f64,
}

fn stripe_orientation(img: &FringeImage) -> Option<(f64, f64)> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return None;
    }
    let [px, py] = img.geometry.pitch();
    let (mut jxx, mut jyy, mut jxy) = (0.0, 0.0, 0.0);
    for row in 1..h - 1 {
        for col in 1..w - 1 {
            let gx = (img.get(row, col + 1) - img.get(row, col - 1)) / (2.0 * px);
            let gy = (img.get(row - 1, col) - img.get(row + 1, col)) / (2.0 * py);
            jxx += gx * gx;
            jyy += gy * gy;
            jxy += gx * gy;
        }
    }
    let trace = jxx + jyy;
    if trace <= 0.0 {
        return None;
    }
    let coherence = ((jxx - jyy).powi(2) + 4.0 * jxy * jxy).sqrt() / trace;
    let gradient = 0.5 * (2.0 * jxy).atan2(jxx - jyy);
    Some(((gradient + FRAC_PI_2).rem_euclid(PI), coherence))
}

fn quantize_axis(angle: f64) -> SymmetryAxis {
    let axes = [
        (0.0, SymmetryAxis::X),
        (PI / 4.0, SymmetryAxis::Diagonal),
        (FRAC_PI_2, SymmetryAxis::Y),
        (3.0 * PI / 4.0, SymmetryAxis::AntiDiagonal),
        (PI, SymmetryAxis::X),
    ];
    axes.iter()
        .min_by(|a, b| (angle - a.0).abs().total_cmp(&(angle - b.0).abs()))
        .map(|a| a.1)
        .unwrap_or(SymmetryAxis::X)
}

fn center_contrast(img: &FringeImage) -> Result<f64> {
    let period = img.geometry.diagonal_fringe_period();
    let disc_r = period / 4.0;
    let [px, py] = img.geometry.pitch();
    let (mut disc, mut ring, mut core) = (Vec::new(), Vec::new(), Vec::new());
    for row in 0..img.height() {
        for col in 0..img.width() {
            let (x, y) = img.geometry.pixel_center(row, col);
            let r = x.hypot(y);
            let v = img.get(row, col);
            if r <= disc_r {
                disc.push(v);
            }
            if (period..=2.0 * period).contains(&r) {
                ring.push(v);
            }
            if x.abs() < px && y.abs() < py {
                core.push(v);
            }
        }
    }
    if disc.is_empty() {
        disc = core;
    }
    if ring.is_empty() {
        return Err(Error::Domain("screen too small to hold the contrast annulus".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (d, a) = (mean(&disc), mean(&ring));
    Ok(if d + a > 0.0 { (d - a) / (d + a) } else { 0.0 })
}

/// Contrast, symmetry axis and power of a fringe image.
///
/// The axis is the stripe orientation from the image structure tensor. For
/// isotropic images (coherence below 0.1) it falls back to the mirror axis
/// with the smaller residual, ties going to X.
pub fn signature(img: &FringeImage) -> Result<FringeSignature> {
    let total_power = img.total();
    if total_power <= 0.0 {
        return Err(Error::Domain("cannot take the signature of an all-zero image".into()));
    }
    let mirror_residual_x = img.mirror_residual(true)?;
    let mirror_residual_y = img.mirror_residual(false)?;
    let (symmetry_axis, orientation_coherence) = match stripe_orientation(img) {
        Some((angle, c)) if c >= 0.1 => (quantize_axis(angle), c),
        other => {
            let axis = if mirror_residual_x <= mirror_residual_y { SymmetryAxis::X } else { SymmetryAxis::Y };
            (axis, other.map_or(0.0, |o| o.1))
        }
    };
    Ok(FringeSignature {
        center_contrast: center_contrast(img)?,
        symmetry_axis,
        total_power,
        mirror_residual_x,
        mirror_residual_y,
        orientation_coherence,
    })
}

/// Pearson correlation of two images of the same shape.
pub fn normalized_cross_correlation(a: &FringeImage, b: &FringeImage) -> Result<f64> {
    if a.geometry.resolution != b.geometry.resolution {
        return Err(Error::Config("images have different resolutions".into()));
    }
    let n = a.intensities.len() as f64;
    let ma = a.total() / n;
    let mb = b.total() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.intensities.iter().zip(&b.intensities) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    Ok(if saa > 0.0 && sbb > 0.0 { sab / (saa * sbb).sqrt() } else { 0.0 })
}

/// A rendered candidate pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePattern {
    pub label: String,
    pub j_values: BTreeSet<u64>,
    pub state: ModeState,
    pub image: FringeImage,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceLibrary {
    pub entries: Vec<ReferencePattern>,
}

impl ReferenceLibrary {
    pub fn add(&mut self, label: &str, j_values: BTreeSet<u64>, state: ModeState, params: &LgBeamParams, geom: &ScreenGeometry) -> Result<()> {
        let (_, image) = render_state(&state, params, geom)?;
        self.entries.push(ReferencePattern { label: label.into(), j_values, state, image });
        Ok(())
    }

    /// Candidate post-DFT patterns over a four-label basis: both two-mode
    /// superpositions of `l(0)` and `l(2)`, the `l(0)`-only failure pattern,
    /// and the remaining single modes.
    pub fn post_dft(basis: &BasisMap, params: &LgBeamParams, geom: &ScreenGeometry) -> Result<Self> {
        if basis.len() != 4 {
            return Err(Error::Unsupported("the readout library is built for a four-label basis".into()));
        }
        let l = |x: u64| basis.label(x).map(|o| o.charge()).ok_or_else(|| Error::Domain("basis gap".into()));
        let h = Polarization::H;
        let one = Complex64::new(1.0, 0.0);
        let ket = |x: u64| -> Result<ModeState> { Ok(ModeState::ket(l(x)?, h)) };
        let mut lib = ReferenceLibrary::default();
        lib.add("j-support {0,2}, +", [0, 2].into(), ket(0)?.superpose(&ket(2)?), params, geom)?;
        lib.add("j-support {0,2}, -", [0, 2].into(), ket(0)?.superpose(&ket(2)?.scaled(-one)), params, geom)?;
        for x in 0..4 {
            lib.add(&format!("j-support {{{x}}}"), [x].into(), ket(x)?, params, geom)?;
        }
        Ok(lib)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchStatus {
    /// No light reached this branch.
    Dark,
    Recognized,
    Unrecognized,
}

/// Classification of one polarization branch image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchClassification {
    pub status: BranchStatus,
    pub label: Option<String>,
    pub j_values: BTreeSet<u64>,
    /// All library scores, best first.
    pub scores: Vec<LabelScore>,
}

impl BranchClassification {
    /// Best minus second-best score.
    pub fn margin(&self) -> Option<f64> {
        match self.scores.as_slice() {
            [a, b, ..] => Some(a.score - b.score),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutClassification {
    pub h: BranchClassification,
    pub v: BranchClassification,
}

impl ReadoutClassification {
    /// Union of the j-values of the recognized branches.
    pub fn j_values(&self) -> BTreeSet<u64> {
        self.h.j_values.union(&self.v.j_values).copied().collect()
    }

    pub fn any_unrecognized(&self) -> bool {
        self.h.status == BranchStatus::Unrecognized || self.v.status == BranchStatus::Unrecognized
    }
}

/// Matches one image against the library.
pub fn classify_image(img: &FringeImage, lib: &ReferenceLibrary) -> Result<BranchClassification> {
    if lib.entries.is_empty() {
        return Err(Error::Config("reference library is empty".into()));
    }
    if img.total() <= 0.0 {
        return Ok(BranchClassification { status: BranchStatus::Dark, label: None, j_values: BTreeSet::new(), scores: vec![] });
    }
    let mut scores = Vec::with_capacity(lib.entries.len());
    for e in &lib.entries {
        scores.push(LabelScore { label: e.label.clone(), score: normalized_cross_correlation(img, &e.image)? });
    }
    scores.sort_by(|a, b| b.score.total_cmp(&a.score));
    let best = &scores[0];
    if best.score < RECOGNITION_THRESHOLD {
        return Ok(BranchClassification { status: BranchStatus::Unrecognized, label: None, j_values: BTreeSet::new(), scores });
    }
    let entry = lib.entries.iter().find(|e| e.label == best.label).expect("scored entry");
    Ok(BranchClassification {
        status: BranchStatus::Recognized,
        label: Some(best.label.clone()),
        j_values: entry.j_values.clone(),
        scores,
    })
}

/// Classifies the H and V branch images of a post-DFT readout.
pub fn classify_readout(img_h: &FringeImage, img_v: &FringeImage, lib: &ReferenceLibrary) -> Result<ReadoutClassification> {
    Ok(ReadoutClassification { h: classify_image(img_h, lib)?, v: classify_image(img_v, lib)? })
}
