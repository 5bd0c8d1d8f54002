//! On-disk model files: a JSON envelope tagged with the combiner kind.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use delco::aggregation::OutputModel;
use delco::baselines::{BaseModel, StackedEnsemble, StackingEncoding, WeightedVoteEnsemble};
use delco::harness::Method;
use delco::{Classify, CopulaEnsemble, LinearClassifier};
use serde::{Deserialize, Serialize};

pub const MAGIC: &str = "delco-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Combiner {
    Copula { classifiers: Vec<LinearClassifier>, gamma: Vec<f64>, theta: Vec<f64>, lambda_hat: f64 },
    WeightedVote { classifiers: Vec<LinearClassifier>, weights: Vec<f64> },
    Stacking { classifiers: Vec<LinearClassifier>, second_stage: LinearClassifier, one_hot: bool },
    Single { classifier: LinearClassifier },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub magic: String,
    pub version: u32,
    pub method: Method,
    #[serde(flatten)]
    pub combiner: Combiner,
}

fn linear_only(bases: &[BaseModel]) -> Result<Vec<LinearClassifier>> {
    bases
        .iter()
        .map(|b| match b {
            BaseModel::Linear(c) => Ok(c.clone()),
            BaseModel::MajorityVote(_) => bail!("majority-vote members cannot be stored"),
        })
        .collect()
}

impl ModelFile {
    pub fn new(method: Method, combiner: Combiner) -> Self {
        Self { magic: MAGIC.into(), version: VERSION, method, combiner }
    }

    pub fn copula(method: Method, ensemble: &CopulaEnsemble) -> Result<Self> {
        let model = ensemble.model();
        Ok(Self::new(
            method,
            Combiner::Copula {
                classifiers: linear_only(ensemble.classifiers())?,
                gamma: model.gamma().to_vec(),
                theta: model.theta_tensor().to_vec(),
                lambda_hat: ensemble.lambda_hat(),
            },
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if file.magic != MAGIC {
            bail!("{} is not a model file", path.display());
        }
        if file.version != VERSION {
            bail!("unsupported model file version {}", file.version);
        }
        Ok(file)
    }

    pub fn classifier(&self) -> Result<Box<dyn Classify + Sync>> {
        let wrap = |cs: &[LinearClassifier]| cs.iter().cloned().map(BaseModel::Linear).collect::<Vec<_>>();
        Ok(match &self.combiner {
            Combiner::Copula { classifiers, gamma, theta, lambda_hat } => {
                let model = OutputModel::from_estimates(gamma.clone(), theta.clone(), classifiers.len())?;
                Box::new(CopulaEnsemble::new(wrap(classifiers), model, *lambda_hat)?)
            }
            Combiner::WeightedVote { classifiers, weights } => {
                Box::new(WeightedVoteEnsemble::with_weights(wrap(classifiers), weights.clone())?)
            }
            Combiner::Stacking { classifiers, second_stage, one_hot } => {
                let encoding = if *one_hot { StackingEncoding::OneHot } else { StackingEncoding::RawIndex };
                Box::new(StackedEnsemble::from_parts(wrap(classifiers), second_stage.clone(), encoding)?)
            }
            Combiner::Single { classifier } => Box::new(classifier.clone()),
        })
    }
}
