use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synthetic::{synthetic_dataset, SyntheticSpec};
use crate::dataset_io::{load_dataset, PairedMultimodalDataset};
use crate::error::{Result, XmsError};
use crate::methods::{MethodKind, MethodParams};
use crate::preprocess::PcaSetting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    #[default]
    Map,
    AccAtK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    Random,
    Stratified,
}

/// One method in the benchmark, either a bare name or a full block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodEntry {
    Name(String),
    Full(Box<MethodBlock>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodBlock {
    pub method: String,
    /// Row name in reports; defaults to `PCA+NAME` or `NAME`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Overrides the global PCA setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaSetting>,
    #[serde(default)]
    pub params: MethodParams,
    /// Merged over `params` when the metric mode is `acc_at_k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_acc_at_k: Option<MethodParams>,
}

fn default_repetitions() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Dataset directory; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Generated data used when no dataset directory is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    pub methods: Vec<MethodEntry>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub n_train: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub pca: PcaSetting,
    #[serde(default)]
    pub metric: MetricMode,
    /// `K` summarized in `acc_runs`.
    #[serde(default = "default_acc_k")]
    pub acc_k: usize,
    #[serde(default)]
    pub split: SplitMode,
    #[serde(default)]
    pub time_includes_pca: bool,
    /// Scale raw samples to unit norm before centering and PCA.
    #[serde(default)]
    pub l2_normalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_cutoff: Option<usize>,
    /// Label or method name of the t-test reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(default)]
    pub welch: bool,
    /// Worker threads; all cores when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn default_acc_k() -> usize {
    1
}

/// A method entry with names and parameters resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedMethod {
    pub kind: MethodKind,
    pub label: String,
    pub pca: PcaSetting,
    pub params: MethodParams,
}

impl BenchmarkConfig {
    /// Parses YAML or JSON (JSON is valid YAML, but its errors read better).
    pub fn from_str_any(text: &str, json: bool) -> Result<Self> {
        if json {
            serde_json::from_str(text).map_err(|e| XmsError::Config(format!("config: {e}")))
        } else {
            serde_yaml::from_str(text).map_err(|e| XmsError::Config(format!("config: {e}")))
        }
    }

    /// Reads a config file; `.json` is parsed as JSON, anything else as YAML.
    /// A relative dataset path is resolved against the file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| XmsError::Config(format!("{}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = Self::from_str_any(&text, json)?;
        if let (Some(ds), Some(dir)) = (&cfg.dataset, path.parent()) {
            if ds.is_relative() {
                cfg.dataset = Some(dir.join(ds));
            }
        }
        Ok(cfg)
    }

    /// Loads the dataset directory or generates the synthetic data.
    pub fn load_data(&self) -> Result<PairedMultimodalDataset> {
        match (&self.dataset, &self.synthetic) {
            (Some(dir), None) => load_dataset(dir),
            (None, Some(spec)) => synthetic_dataset(spec),
            (None, None) => Err(XmsError::Config("config needs `dataset` or `synthetic`".into())),
            (Some(_), Some(_)) => Err(XmsError::Config("config sets both `dataset` and `synthetic`".into())),
        }
    }

    pub fn resolved_methods(&self) -> Result<Vec<ResolvedMethod>> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for entry in &self.methods {
            let block = match entry {
                MethodEntry::Name(n) => MethodBlock {
                    method: n.clone(),
                    label: None,
                    pca: None,
                    params: MethodParams::default(),
                    params_acc_at_k: None,
                },
                MethodEntry::Full(b) => (**b).clone(),
            };
            let kind: MethodKind = block.method.parse()?;
            let pca = block.pca.unwrap_or(self.pca);
            let label = block.label.unwrap_or_else(|| match pca {
                PcaSetting::Off => kind.display_name().to_string(),
                _ => format!("PCA+{}", kind.display_name()),
            });
            if !seen.insert(label.clone()) {
                return Err(XmsError::Config(format!("duplicate method label {label:?}")));
            }
            let params = match (self.metric, &block.params_acc_at_k) {
                (MetricMode::AccAtK, Some(over)) => block.params.merged(over),
                _ => block.params,
            };
            out.push(ResolvedMethod {
                kind,
                label,
                pca,
                params,
            });
        }
        Ok(out)
    }

    pub fn validate(&self, n: usize) -> Result<Vec<ResolvedMethod>> {
        if self.repetitions == 0 {
            return Err(XmsError::Config("repetitions must be >= 1".into()));
        }
        if self.n_train < 2 || self.n_train >= n {
            return Err(XmsError::Config(format!(
                "n_train = {} must be in 2..{n}",
                self.n_train
            )));
        }
        if self.acc_k == 0 || self.acc_k > n - self.n_train {
            return Err(XmsError::Config(format!(
                "acc_k = {} must be in 1..={}",
                self.acc_k,
                n - self.n_train
            )));
        }
        if self.threads == Some(0) {
            return Err(XmsError::Config("threads must be >= 1".into()));
        }
        let methods = self.resolved_methods()?;
        if methods.is_empty() {
            return Err(XmsError::Config("no methods configured".into()));
        }
        if let Some(b) = &self.baseline {
            find_label(
                &methods.iter().map(|m| (m.label.as_str(), m.kind)).collect::<Vec<_>>(),
                b,
            )?;
        }
        Ok(methods)
    }
}

/// Finds a method by label (case-insensitive) or, failing that, by a
/// method name that matches exactly one entry.
pub(crate) fn find_label(entries: &[(&str, MethodKind)], wanted: &str) -> Result<String> {
    if let Some((l, _)) = entries.iter().find(|(l, _)| l.eq_ignore_ascii_case(wanted)) {
        return Ok(l.to_string());
    }
    let kind: MethodKind = wanted.parse()?;
    let hits: Vec<&str> = entries.iter().filter(|(_, k)| *k == kind).map(|(l, _)| *l).collect();
    match hits.as_slice() {
        [one] => Ok(one.to_string()),
        [] => Err(XmsError::Config(format!(
            "baseline {wanted:?} is not among the methods"
        ))),
        _ => Err(XmsError::Config(format!("baseline {wanted:?} is ambiguous: {hits:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yaml_with_mixed_entries() {
        let text = r#"
synthetic: {n: 60, seed: 3}
n_train: 40
repetitions: 2
pca: {energy: 0.95}
metric: acc_at_k
methods:
  - cca
  - method: lcfs
    label: LCFS
    pca: off
    params: {lambda1: 0.5}
    params_acc_at_k: {lambda2: 2.0}
"#;
        let cfg = BenchmarkConfig::from_str_any(text, false).unwrap();
        let m = cfg.validate(60).unwrap();
        assert_eq!(m[0].label, "PCA+CCA");
        assert_eq!(m[0].pca, PcaSetting::Energy(0.95));
        assert_eq!(m[1].label, "LCFS");
        assert_eq!(m[1].params.lambda1, Some(0.5));
        assert_eq!(m[1].params.lambda2, Some(2.0));
        assert_eq!(cfg.load_data().unwrap().len(), 60);
    }

    #[test]
    fn config_errors() {
        let base = |extra: &str| format!("synthetic: {{n: 30}}\nmethods: [cca, cca]\nn_train: 20\n{extra}");
        let dup = BenchmarkConfig::from_str_any(&base(""), false).unwrap();
        assert_eq!(dup.validate(30).unwrap_err().exit_code(), 2);
        assert!(BenchmarkConfig::from_str_any("methods: [cca]\nn_train: 5\nbogus: 1", false).is_err());
        let cfg = BenchmarkConfig::from_str_any("synthetic: {}\nmethods: [gmlda]\nn_train: 400", false).unwrap();
        assert!(cfg.validate(400).is_err());
        let cfg = BenchmarkConfig::from_str_any("methods: [svm]\nn_train: 4", false).unwrap();
        assert!(cfg.validate(10).is_err());
    }

    #[test]
    fn baseline_lookup() {
        let e = [
            ("PCA+LCFS", MethodKind::Lcfs),
            ("LCFS", MethodKind::Lcfs),
            ("PCA+CCA", MethodKind::Cca),
        ];
        assert_eq!(find_label(&e, "lcfs").unwrap(), "LCFS");
        assert_eq!(find_label(&e, "cca").unwrap(), "PCA+CCA");
        assert!(find_label(&e, "jfssl").is_err());
    }
}
