//! JSON persistence of fitted models.
//!
//! ```json
//! {"format": 1, "alpha": [...], "A": [[...], ...], "meta": {"kind": "bph_he", ...}}
//! ```
//!
//! The generator is stored dense and row-major. Readers accept any valid
//! sub-generator.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitMethod, FitOutcome};
use crate::phase_type::PhaseTypeModel;
use crate::target::{TargetDistribution, TargetSpec};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// `bph`, `he`, `bph_he`, or anything else for externally built models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_bph: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms_he: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub he_points: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub he_p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub he_lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_target: Option<TargetSpec>,
    /// Mean the model was rescaled to, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaled_to_mean: Option<f64>,
}

impl ModelMeta {
    pub fn for_fit(outcome: &FitOutcome, target: &TargetDistribution) -> Self {
        let r = &outcome.report;
        let (order_bph, terms_he) = match r.method {
            FitMethod::Bph => (Some(r.n), None),
            FitMethod::He => (None, Some(r.k)),
            FitMethod::BphHe => (Some(r.n), Some(r.k)),
        };
        ModelMeta {
            kind: Some(r.method.name().into()),
            order_bph,
            terms_he,
            he_points: (!r.he_points.is_empty()).then(|| r.he_points.clone()),
            k: terms_he,
            n: order_bph,
            he_p: outcome.he.as_ref().map(|h| h.weights().to_vec()),
            he_lambda: outcome.he.as_ref().map(|h| h.rates().to_vec()),
            source_target: Some(target.to_spec()),
            scaled_to_mean: None,
        }
    }

    pub fn target(&self) -> Option<Result<TargetDistribution>> {
        self.source_target.as_ref().map(TargetSpec::build)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format: u32,
    alpha: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(default)]
    meta: ModelMeta,
}

#[derive(Debug, Clone)]
pub struct StoredModel {
    pub model: PhaseTypeModel,
    pub meta: ModelMeta,
}

impl StoredModel {
    pub fn new(model: PhaseTypeModel, meta: ModelMeta) -> Self {
        StoredModel { model, meta }
    }

    fn to_file(&self) -> ModelFile {
        let a = self.model.generator();
        ModelFile {
            format: FORMAT_VERSION,
            alpha: self.model.alpha().to_vec(),
            a: (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect(),
            meta: self.meta.clone(),
        }
    }

    fn from_file(f: ModelFile) -> Result<Self> {
        if f.format != FORMAT_VERSION {
            return Err(Error::InvalidParameter(format!("unsupported model format {}", f.format)));
        }
        let n = f.alpha.len();
        if f.a.len() != n || f.a.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidGenerator(format!("generator must be {n} x {n} to match alpha")));
        }
        let a = DMatrix::from_fn(n, n, |i, j| f.a[i][j]);
        Ok(StoredModel { model: PhaseTypeModel::new(f.alpha, a)?, meta: f.meta })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut w = w;
        serde_json::to_writer_pretty(&mut w, &self.to_file())?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        Self::from_file(serde_json::from_reader(r)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}
