//! The interference panels shown for single modes, the modular
//! exponentiation stages and the DFT readout.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interference::{render_state, signature, FringeImage, FringeSignature, ScreenGeometry, SourceSet};
use crate::lgfield::LgBeamParams;
use crate::modespace::{make_input_state, BasisMap, ModeState, OamIndex, Polarization, ShorProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Single LG modes `|±1⟩`, `|±2⟩`.
    Fig5,
    /// Input, post-MEF and the two projected branches.
    Fig6,
    /// Post-DFT H and V branches.
    Fig7,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::Fig5, Figure::Fig6, Figure::Fig7];
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig5" => Ok(Figure::Fig5),
            "fig6" => Ok(Figure::Fig6),
            "fig7" => Ok(Figure::Fig7),
            _ => Err(Error::Config(format!("unknown figure {s:?} (expected fig5, fig6, fig7 or all)"))),
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigurePanel {
    /// File stem such as `fig5a`.
    pub id: String,
    pub caption: String,
    pub state: ModeState,
}

fn sum(terms: &[(i32, Polarization, f64)]) -> ModeState {
    ModeState::from_terms(terms.iter().map(|&(l, p, a)| ((OamIndex(l), p), Complex64::new(a, 0.0))))
}

pub fn figure_panels(fig: Figure) -> Vec<FigurePanel> {
    use Polarization::{H, V};
    let panels: Vec<(&str, ModeState)> = match fig {
        Figure::Fig5 => vec![
            ("|+1,H>", ModeState::ket(1, H)),
            ("|-1,V>", ModeState::ket(-1, V)),
            ("|+2,H>", ModeState::ket(2, H)),
            ("|-2,V>", ModeState::ket(-2, V)),
        ],
        Figure::Fig6 => vec![
            (
                "input: |+1,H> + |-1,H> + |+2,H> + |-2,H>",
                make_input_state(&ShorProblem::compiled(), &BasisMap::compiled(), false).expect("compiled instance"),
            ),
            ("after modular exponentiation: |+1,H> + |-1,V> + |+2,H> + |-2,V>", sum(&[(1, H, 1.), (-1, V, 1.), (2, H, 1.), (-2, V, 1.)])),
            ("H branch: |+1,H> + |+2,H>", sum(&[(1, H, 1.), (2, H, 1.)])),
            ("V branch: |-1,V> + |-2,V>", sum(&[(-1, V, 1.), (-2, V, 1.)])),
        ],
        Figure::Fig7 => vec![
            ("H branch after DFT: |+1,H> + |+2,H>", sum(&[(1, H, 1.), (2, H, 1.)])),
            ("V branch after DFT: |+1,V> - |+2,V>", sum(&[(1, V, 1.), (2, V, -1.)])),
        ],
    };
    panels
        .into_iter()
        .enumerate()
        .map(|(i, (caption, state))| FigurePanel {
            id: format!("{fig}{}", (b'a' + i as u8) as char),
            caption: caption.into(),
            state,
        })
        .collect()
}

/// Everything written next to a panel image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelSidecar {
    pub id: String,
    pub caption: String,
    pub state: ModeState,
    pub beam: LgBeamParams,
    pub geometry: ScreenGeometry,
    pub sources: SourceSet,
    pub signature: FringeSignature,
    pub max_intensity: f64,
}

pub fn render_panel(panel: &FigurePanel, beam: &LgBeamParams, geom: &ScreenGeometry) -> Result<(FringeImage, PanelSidecar)> {
    let (sources, image) = render_state(&panel.state, beam, geom)?;
    let sidecar = PanelSidecar {
        id: panel.id.clone(),
        caption: panel.caption.clone(),
        state: panel.state.clone(),
        beam: *beam,
        geometry: *geom,
        sources,
        signature: signature(&image)?,
        max_intensity: image.max(),
    };
    Ok((image, sidecar))
}
