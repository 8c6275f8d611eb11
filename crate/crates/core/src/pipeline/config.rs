use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::critic::{CriticDims, TrainConfig};
use crate::error::{Error, Result};
use crate::grounding::{FileGrounder, Grounder, ImageRecord, SyntheticConfig, SyntheticGrounder};
use crate::ranker::RankOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrounderKind {
    File,
    #[default]
    Synthetic,
}

impl std::str::FromStr for GrounderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "file" => Ok(GrounderKind::File),
            "synthetic" => Ok(GrounderKind::Synthetic),
            other => Err(Error::invalid(format!("unknown grounder '{other}' (expected file or synthetic)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrounderSelection {
    pub kind: GrounderKind,
    /// Groundings file, required for `kind = "file"`.
    pub groundings: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub images: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub holdout_images: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a command needs, loadable from one TOML document. `seed`
/// drives initialization, pair sampling and the held-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dims: CriticDims,
    pub train: TrainConfig,
    pub rank: RankOptions,
    pub grounder: GrounderSelection,
    /// Share of images held out by `train` when no holdout file is given.
    pub holdout_fraction: f64,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dims: CriticDims::default(),
            train: TrainConfig::default(),
            rank: RankOptions::default(),
            grounder: GrounderSelection::default(),
            holdout_fraction: 0.2,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::format(path, 0, format!("invalid UTF-8: {e}")))?;
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::InvalidArgument(format!("{}:{line}: {}", path.display(), e.message()))
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The training config with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.train.validate()?;
        self.grounder.synthetic.validate()?;
        if !(self.rank.lambda >= 0.0 && self.rank.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.rank.lambda)));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::invalid(format!(
                "holdout_fraction must be in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if self.grounder.kind == GrounderKind::File && self.grounder.groundings.is_none() {
            return Err(Error::invalid("file grounder selected but no groundings path given"));
        }
        if self.grounder.kind == GrounderKind::Synthetic && self.grounder.synthetic.feature_dim != self.dims.feature_dim {
            return Err(Error::invalid(format!(
                "synthetic feature_dim {} differs from critic feature_dim {}",
                self.grounder.synthetic.feature_dim, self.dims.feature_dim
            )));
        }
        Ok(())
    }

    /// Instantiates the selected grounder over `images`.
    pub fn build_grounder(&self, images: &[ImageRecord]) -> Result<Box<dyn Grounder>> {
        match self.grounder.kind {
            GrounderKind::Synthetic => Ok(Box::new(SyntheticGrounder::new(self.grounder.synthetic, images)?)),
            GrounderKind::File => {
                let path = self
                    .grounder
                    .groundings
                    .as_ref()
                    .ok_or_else(|| Error::invalid("file grounder selected but no groundings path given"))?;
                Ok(Box::new(FileGrounder::load(path)?))
            }
        }
    }
}
