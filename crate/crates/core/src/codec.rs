//! The joint representation and the end-to-end pipeline: separate a panorama,
//! project the ambient part to SH, bin the sources onto anchors, optionally
//! sparsify, and render the parameters back to a map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::EquirectImage;
use crate::sg::{self, decompose_sg, reconstruct_gaussian_map, separate, Separation, SgParams};
use crate::sh::{project_sh, reconstruct_sh, ShCoeffs};
use crate::sparsity::{slsparsemax, CredibilityReport};
use crate::sphere::{vogel_anchors, AnchorSet, GridGeometry, WeightingMode};

/// Codec settings. Defaults: order 2 SH, 128 anchors with 6 neighbours,
/// `s = 0.0025`, top 5% of pixels as sources, solid-angle weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub order: usize,
    pub anchors: usize,
    pub angular_size: f64,
    pub percentile: f64,
    pub knn: usize,
    #[serde(with = "mode_serde")]
    pub mode: WeightingMode,
    pub sparsify: bool,
    /// Entropic regularisation for the transport loss in reports; `None`
    /// skips it.
    pub sml_epsilon: Option<f64>,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            order: 2,
            anchors: 128,
            angular_size: sg::SHARP_ANGULAR_SIZE,
            percentile: sg::DEFAULT_PERCENTILE,
            knn: 6,
            mode: WeightingMode::SolidAngle,
            sparsify: false,
            sml_epsilon: None,
        }
    }
}

pub(crate) mod mode_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::sphere::WeightingMode;

    pub fn serialize<S: Serializer>(m: &WeightingMode, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(m.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<WeightingMode, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.anchors == 0 {
            return Err(Error::invalid("anchor count must be positive"));
        }
        if self.knn >= self.anchors {
            return Err(Error::invalid(format!(
                "knn = {} must be below the anchor count {}",
                self.knn, self.anchors
            )));
        }
        if self.sparsify && self.knn == 0 {
            return Err(Error::invalid("sparsify needs knn >= 1"));
        }
        if !(self.angular_size > 0.0 && self.angular_size.is_finite()) {
            return Err(Error::invalid("angular size must be positive"));
        }
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(Error::invalid("percentile must lie in (0, 1)"));
        }
        if let Some(eps) = self.sml_epsilon {
            if !(eps > 0.0) {
                return Err(Error::invalid("sml epsilon must be positive"));
            }
        }
        Ok(())
    }

    pub fn anchor_set(&self) -> Result<AnchorSet> {
        vogel_anchors(self.anchors, self.knn)
    }
}

/// SH ambient coefficients plus light-source parameters on their anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct MixLightParams {
    pub sh: ShCoeffs,
    pub sg: SgParams,
    pub anchors: AnchorSet,
}

impl MixLightParams {
    pub fn new(sh: ShCoeffs, sg: SgParams, anchors: AnchorSet) -> Result<Self> {
        if sg.n() != anchors.len() {
            return Err(Error::invalid(format!(
                "{} distribution entries for {} anchors",
                sg.n(),
                anchors.len()
            )));
        }
        Ok(MixLightParams { sh, sg, anchors })
    }

    /// Scalar parameter count: SH coefficients, `P`, `E` and `R`.
    pub fn param_count(&self) -> usize {
        self.sh.param_count() + self.sg.n() + 1 + 3
    }

    /// Ambient map, clamped at zero when `clamp_ambient` is set.
    pub fn ambient_map(&self, geom: GridGeometry, clamp_ambient: bool) -> EquirectImage {
        reconstruct_sh(&self.sh, geom, clamp_ambient)
    }

    pub fn source_map(&self, geom: GridGeometry) -> Result<EquirectImage> {
        reconstruct_gaussian_map(&self.sg, &self.anchors, geom)
    }

    /// Ambient plus sources.
    pub fn reconstruct(&self, geom: GridGeometry, clamp_ambient: bool) -> Result<EquirectImage> {
        self.ambient_map(geom, clamp_ambient).add(&self.source_map(geom)?)
    }

    /// Replaces `P` by its sparsified version.
    pub fn sparsify(&mut self) -> Result<CredibilityReport> {
        let (p, report) = slsparsemax(&self.sg.p, &self.anchors)?;
        self.sg.p = p;
        Ok(report)
    }
}

/// Everything produced while decomposing one panorama.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub params: MixLightParams,
    pub separation: Separation,
    /// `P` before sparsification.
    pub dense_p: Vec<f64>,
    pub credibility: Option<CredibilityReport>,
}

pub fn decompose(img: &EquirectImage, config: &CodecConfig) -> Result<Decomposition> {
    config.validate()?;
    let anchors = config.anchor_set()?;
    decompose_with_anchors(img, config, anchors)
}

/// [`decompose`] with a prebuilt anchor set, which must match the config.
pub fn decompose_with_anchors(
    img: &EquirectImage,
    config: &CodecConfig,
    anchors: AnchorSet,
) -> Result<Decomposition> {
    let separation = separate(img, config.percentile)?;
    let sh = project_sh(&separation.ambient, config.order, config.mode);
    let sg = decompose_sg(&separation.sources, &anchors, config.angular_size, config.mode)?;
    let dense_p = sg.p.clone();
    let mut params = MixLightParams::new(sh, sg, anchors)?;
    let credibility = if config.sparsify && !params.sg.is_degenerate() {
        Some(params.sparsify()?)
    } else {
        None
    };
    Ok(Decomposition {
        params,
        separation,
        dense_p,
        credibility,
    })
}
