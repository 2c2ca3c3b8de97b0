//! Evaluation settings, loadable from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clinical::{RadCliqCoefficients, UndefinedPolicy};
use crate::corpus::SectionRuleSet;
use crate::error::{Error, Result};
use crate::labeler::Lexicon;
use crate::lexical::{BleuConfig, LexicalConfig, RougeConfig};
use crate::stats::BootstrapConfig;
use crate::textnorm::NormConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassificationConfig {
    /// Treatment of classes with undefined F1 in macro averages.
    pub undefined_f1: UndefinedPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelerConfig {
    /// Replacement lexicon (TOML or JSON). Relative paths resolve against
    /// the directory of the config file.
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub tokenizer: NormConfig,
    pub rouge: RougeConfig,
    pub bleu: BleuConfig,
    pub bootstrap: BootstrapConfig,
    /// Absent unless configured; RadCliQ is reported unavailable without it.
    pub radcliq: Option<RadCliqCoefficients>,
    pub classification: ClassificationConfig,
    pub sections: SectionRuleSet,
    pub labeler: LabelerConfig,
}

impl EvalConfig {
    /// Reads a config file; `.json` files are JSON, anything else TOML.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut config = if is_json {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
        .map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let (Some(lexicon), Some(dir)) = (&config.labeler.lexicon, path.parent()) {
            config.labeler.lexicon = Some(dir.join(lexicon));
        }
        Ok(config)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let config: EvalConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let config: EvalConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.tokenizer.validate()?;
        self.lexical().validate()?;
        self.bootstrap.validate()?;
        if let Some(c) = &self.radcliq {
            c.validate()?;
        }
        Ok(())
    }

    pub fn lexical(&self) -> LexicalConfig {
        LexicalConfig {
            rouge: self.rouge,
            bleu: self.bleu,
        }
    }

    /// The configured lexicon, or the bundled default.
    pub fn load_lexicon(&self) -> Result<Lexicon> {
        match &self.labeler.lexicon {
            Some(path) => Lexicon::from_path(path),
            None => Ok(Lexicon::default()),
        }
    }
}
