//! Experiment run manifest: a TOML key-value file; `--seed` and `--out`
//! flags override the file's values.
//!
//! ```toml
//! dataset = "synth/manifest.csv"   # training dataset manifest (required)
//! task = "gender"                  # gender | expression
//! methods = ["wpca", "dpca"]       # any of pca | wpca | dpca
//! map = "maps/gender.map"          # empirical attention map (wpca/dpca)
//! random = ["uniform"]             # control maps: uniform | fixation
//! components = [20, 40, 60]        # default: 20..240 step 20
//! folds = 10
//! protocol = "cv10"                # cv10 | cross_db
//! test_dataset = "feret.csv"       # cross_db only
//! repeats = 5                      # cross_db subsample repeats
//! test_subsample = 0.9             # cross_db subsample fraction
//! covariance = "pooled"            # pooled | whitened
//! seed = 42
//! out = "results"
//! fixation_count = 60              # `fixation` control map parameters
//! fixation_sigma = 6.0
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use eigengaze::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFileConfig {
    pub dataset: PathBuf,
    pub test_dataset: Option<PathBuf>,
    #[serde(default = "default_task")]
    pub task: String,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    pub map: Option<PathBuf>,
    #[serde(default = "default_random")]
    pub random: Vec<String>,
    pub components: Option<Vec<usize>>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_protocol")]
    pub protocol: String,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_test_subsample")]
    pub test_subsample: f64,
    #[serde(default = "default_covariance")]
    pub covariance: String,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default = "default_fixation_count")]
    pub fixation_count: usize,
    #[serde(default = "default_fixation_sigma")]
    pub fixation_sigma: f64,
}

fn default_task() -> String {
    "gender".into()
}

fn default_methods() -> Vec<String> {
    vec!["wpca".into(), "dpca".into()]
}

fn default_random() -> Vec<String> {
    vec!["uniform".into()]
}

fn default_folds() -> usize {
    10
}

fn default_protocol() -> String {
    "cv10".into()
}

fn default_repeats() -> usize {
    5
}

fn default_test_subsample() -> f64 {
    0.9
}

fn default_covariance() -> String {
    "pooled".into()
}

fn default_fixation_count() -> usize {
    60
}

fn default_fixation_sigma() -> f64 {
    6.0
}

impl ExperimentFileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentFileConfig =
            toml::from_str(&content).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: None,
                message: e.to_string(),
            })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.dataset = resolve(base, &config.dataset);
        config.test_dataset = config.test_dataset.map(|p| resolve(base, &p));
        config.map = config.map.map(|p| resolve(base, &p));
        config.out = config.out.map(|p| resolve(base, &p));
        Ok(config)
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
