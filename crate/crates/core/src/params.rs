//! The `.json` parameter file and report documents.
//!
//! Documents are checked against embedded JSON Schemas first, then for
//! cross-field consistency; failures name the offending JSON pointer.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::codec::{mode_serde, CodecConfig, MixLightParams};
use crate::error::{Error, Result};
use crate::eval::RoundTripReport;
use crate::sg::SgParams;
use crate::sh::{coeff_count, ShCoeffs};
use crate::sparsity::CredibilityReport;
use crate::sphere::{vogel_anchors, WeightingMode};

pub const PARAM_FILE_VERSION: u64 = 1;
pub const ANCHOR_GENERATOR: &str = "vogel-v1";

/// JSON Schema for parameter files.
pub const PARAM_FILE_SCHEMA: &str = r##"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "lumiparam parameter file",
  "type": "object",
  "required": ["version", "sh", "sg", "anchors", "meta"],
  "additionalProperties": false,
  "properties": {
    "version": { "const": 1 },
    "sh": {
      "type": "object",
      "required": ["order", "coeffs"],
      "additionalProperties": false,
      "properties": {
        "order": { "type": "integer", "minimum": 0 },
        "coeffs": {
          "type": "array",
          "minItems": 3,
          "maxItems": 3,
          "items": { "type": "array", "minItems": 1, "items": { "type": "number" } }
        }
      }
    },
    "sg": {
      "type": "object",
      "required": ["n", "s", "p", "e", "r"],
      "additionalProperties": false,
      "properties": {
        "n": { "type": "integer", "minimum": 1 },
        "s": { "type": "number", "exclusiveMinimum": 0 },
        "p": { "type": "array", "minItems": 1, "items": { "type": "number", "minimum": 0 } },
        "e": { "type": "number", "minimum": 0 },
        "r": { "type": "array", "minItems": 3, "maxItems": 3, "items": { "type": "number" } }
      }
    },
    "anchors": {
      "type": "object",
      "required": ["n", "k_nn", "generator"],
      "additionalProperties": false,
      "properties": {
        "n": { "type": "integer", "minimum": 1 },
        "k_nn": { "type": "integer", "minimum": 0 },
        "generator": { "const": "vogel-v1" }
      }
    },
    "meta": {
      "type": "object",
      "required": ["mode", "sparsified"],
      "additionalProperties": false,
      "properties": {
        "source": { "type": ["string", "null"] },
        "width": { "type": ["integer", "null"], "minimum": 2 },
        "height": { "type": ["integer", "null"], "minimum": 1 },
        "mode": { "enum": ["solid-angle", "paper-literal"] },
        "percentile": { "type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1 },
        "sparsified": { "type": "boolean" },
        "kappa": { "type": ["integer", "null"], "minimum": 0 },
        "tau": { "type": ["number", "null"] }
      }
    }
  }
}"##;

/// JSON Schema for evaluation reports.
pub const REPORT_SCHEMA: &str = r##"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "lumiparam evaluation report",
  "type": "object",
  "additionalProperties": false,
  "required": [
    "rmse_full", "si_rmse_full", "composite_full",
    "rmse_diffuse", "si_rmse_diffuse", "rmse_mirror", "si_rmse_mirror",
    "loss_sh_coeff", "loss_sh_reconstruction", "loss_sh_rendering",
    "loss_masked_l1", "loss_l2_p", "loss_l2_e", "loss_l2_r",
    "degenerate_prediction", "degenerate_sources"
  ],
  "properties": {
    "rmse_full": { "type": "number", "minimum": 0 },
    "si_rmse_full": { "type": "number", "minimum": 0 },
    "composite_full": { "type": "number", "minimum": 0 },
    "rmse_diffuse": { "type": "number", "minimum": 0 },
    "si_rmse_diffuse": { "type": "number", "minimum": 0 },
    "rmse_mirror": { "type": "number", "minimum": 0 },
    "si_rmse_mirror": { "type": "number", "minimum": 0 },
    "loss_sh_coeff": { "type": "number", "minimum": 0 },
    "loss_sh_reconstruction": { "type": "number", "minimum": 0 },
    "loss_sh_rendering": { "type": "number", "minimum": 0 },
    "loss_masked_l1": { "type": "number", "minimum": 0 },
    "loss_l2_p": { "type": "number", "minimum": 0 },
    "loss_l2_e": { "type": "number", "minimum": 0 },
    "loss_l2_r": { "type": "number", "minimum": 0 },
    "loss_sml": { "type": "number", "minimum": 0 },
    "degenerate_prediction": { "type": "boolean" },
    "degenerate_sources": { "type": "boolean" }
  }
}"##;

fn compiled(cell: &'static OnceLock<jsonschema::Validator>, text: &str) -> &'static jsonschema::Validator {
    cell.get_or_init(|| {
        let schema: Value = serde_json::from_str(text).expect("embedded schema is valid JSON");
        jsonschema::validator_for(&schema).expect("embedded schema compiles")
    })
}

fn check_schema(validator: &jsonschema::Validator, doc: &Value) -> Result<()> {
    match validator.iter_errors(doc).next() {
        None => Ok(()),
        Some(err) => {
            let path = err.instance_path().as_str();
            let path = if path.is_empty() { "/" } else { path };
            Err(Error::validation(path, err.to_string()))
        }
    }
}

/// Checks a parameter document against [`PARAM_FILE_SCHEMA`].
pub fn validate_param_value(doc: &Value) -> Result<()> {
    static CELL: OnceLock<jsonschema::Validator> = OnceLock::new();
    check_schema(compiled(&CELL, PARAM_FILE_SCHEMA), doc)
}

/// Checks a report document against [`REPORT_SCHEMA`].
pub fn validate_report_value(doc: &Value) -> Result<()> {
    static CELL: OnceLock<jsonschema::Validator> = OnceLock::new();
    check_schema(compiled(&CELL, REPORT_SCHEMA), doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShBlock {
    pub order: usize,
    pub coeffs: [Vec<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgBlock {
    pub n: usize,
    pub s: f64,
    pub p: Vec<f64>,
    pub e: f64,
    pub r: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorBlock {
    pub n: usize,
    pub k_nn: usize,
    pub generator: String,
}

/// Provenance and processing flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub source: Option<String>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    #[serde(with = "mode_serde")]
    pub mode: WeightingMode,
    pub percentile: Option<f64>,
    pub sparsified: bool,
    pub kappa: Option<usize>,
    pub tau: Option<f64>,
}

impl Default for Meta {
    fn default() -> Self {
        Meta {
            source: None,
            width: None,
            height: None,
            mode: WeightingMode::SolidAngle,
            percentile: None,
            sparsified: false,
            kappa: None,
            tau: None,
        }
    }
}

impl Meta {
    pub fn from_config(config: &CodecConfig) -> Self {
        Meta {
            mode: config.mode,
            percentile: Some(config.percentile),
            ..Default::default()
        }
    }

    pub fn record_sparsify(&mut self, report: &CredibilityReport) {
        self.sparsified = true;
        self.kappa = Some(report.kappa);
        self.tau = Some(report.tau);
    }
}

/// Serialized parameters. Numbers are written in shortest round-trip form,
/// so `read(write(x))` reproduces every value bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFile {
    pub version: u64,
    pub sh: ShBlock,
    pub sg: SgBlock,
    pub anchors: AnchorBlock,
    pub meta: Meta,
}

impl ParamFile {
    pub fn from_params(params: &MixLightParams, meta: Meta) -> Self {
        ParamFile {
            version: PARAM_FILE_VERSION,
            sh: ShBlock {
                order: params.sh.order(),
                coeffs: params.sh.channels().clone(),
            },
            sg: SgBlock {
                n: params.sg.n(),
                s: params.sg.s,
                p: params.sg.p.clone(),
                e: params.sg.e,
                r: params.sg.r,
            },
            anchors: AnchorBlock {
                n: params.anchors.len(),
                k_nn: params.anchors.k_nn(),
                generator: ANCHOR_GENERATOR.to_string(),
            },
            meta,
        }
    }

    /// Number of scalar values stored in the SH and light-source blocks.
    pub fn value_count(&self) -> usize {
        self.sh.coeffs.iter().map(Vec::len).sum::<usize>() + self.sg.p.len() + 1 + 3
    }

    /// Cross-field checks the schema cannot express.
    pub fn check(&self) -> Result<()> {
        let want = coeff_count(self.sh.order);
        for (c, ch) in self.sh.coeffs.iter().enumerate() {
            if ch.len() != want {
                return Err(Error::validation(
                    format!("/sh/coeffs/{c}"),
                    format!("order {} needs {want} coefficients, found {}", self.sh.order, ch.len()),
                ));
            }
        }
        if self.sg.p.len() != self.sg.n {
            return Err(Error::validation(
                "/sg/p",
                format!("expected {} entries, found {}", self.sg.n, self.sg.p.len()),
            ));
        }
        if self.anchors.n != self.sg.n {
            return Err(Error::validation(
                "/anchors/n",
                format!("{} anchors for {} distribution entries", self.anchors.n, self.sg.n),
            ));
        }
        if self.anchors.k_nn >= self.anchors.n {
            return Err(Error::validation(
                "/anchors/k_nn",
                format!("must be below the anchor count {}", self.anchors.n),
            ));
        }
        if self.sg.e > 0.0 {
            if !self.meta.sparsified {
                let sum: f64 = self.sg.p.iter().sum();
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::validation("/sg/p", format!("sums to {sum}, expected 1")));
                }
            }
            let norm = self.sg.r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::validation("/sg/r", format!("norm {norm}, expected 1")));
            }
        }
        Ok(())
    }

    /// Rebuilds the in-memory parameters, regenerating the anchor set.
    pub fn to_params(&self) -> Result<MixLightParams> {
        self.check()?;
        let sh = ShCoeffs::from_channels(self.sh.order, self.sh.coeffs.clone())?;
        let sg = SgParams {
            p: self.sg.p.clone(),
            e: self.sg.e,
            r: self.sg.r,
            s: self.sg.s,
        };
        let anchors = vogel_anchors(self.anchors.n, self.anchors.k_nn)?;
        MixLightParams::new(sh, sg, anchors)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("parameter file serializes")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("parameter file serializes");
        s.push('\n');
        s
    }

    pub fn from_value(doc: Value) -> Result<Self> {
        validate_param_value(&doc)?;
        let file: ParamFile = serde_json::from_value(doc)?;
        file.check()?;
        Ok(file)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Serializes a report, checking it against [`REPORT_SCHEMA`].
pub fn report_to_json(report: &RoundTripReport) -> Result<String> {
    let value = serde_json::to_value(report)?;
    validate_report_value(&value)?;
    let mut s = serde_json::to_string_pretty(&value)?;
    s.push('\n');
    Ok(s)
}
