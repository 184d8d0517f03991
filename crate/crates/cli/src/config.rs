//! Run configuration: a JSON document validated before any computation starts.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shadowpose_core::bingham::{BinghamLossKind, MIN_QUADRATURE_ORDER};
use shadowpose_core::{DescriptorMask, ToyTaskConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub k: usize,
    pub delta: f64,
    pub descriptor_mask: DescriptorMask,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub quadrature_order: usize,
    pub bingham_loss_kind: BinghamLossKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = ToyTaskConfig::default();
        Self {
            k: t.k,
            delta: t.delta,
            descriptor_mask: t.mask,
            seed: t.seed,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            quadrature_order: t.quadrature_order,
            bingham_loss_kind: t.bingham_loss_kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
                Self::from_json(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let field = |name: &str, why: &str| Err(ConfigError(format!("field `{name}` {why}")));
        if self.k == 0 {
            return field("k", "must be at least 1");
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return field("delta", "must be a finite non-negative number");
        }
        if self.epochs == 0 {
            return field("epochs", "must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return field("learning_rate", "must be a positive number");
        }
        if self.quadrature_order < MIN_QUADRATURE_ORDER {
            return field("quadrature_order", &format!("must be at least {MIN_QUADRATURE_ORDER}"));
        }
        Ok(())
    }

    /// Trainer settings: these fields over the library defaults.
    pub fn toy_task(&self) -> ToyTaskConfig {
        ToyTaskConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            k: self.k,
            delta: self.delta,
            mask: self.descriptor_mask,
            seed: self.seed,
            quadrature_order: self.quadrature_order,
            bingham_loss_kind: self.bingham_loss_kind,
            ..ToyTaskConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c.delta, 0.8);
        assert_eq!(c.k, 20);
        assert_eq!(c.descriptor_mask, DescriptorMask::Sipf);
    }

    #[test]
    fn parses_every_field() {
        let c = RunConfig::from_json(
            r#"{"k": 8, "delta": 0.5, "descriptor_mask": "sipf-no-direction", "seed": 3, "epochs": 7,
                "learning_rate": 0.01, "quadrature_order": 24, "bingham_loss_kind": "nll_mode"}"#,
        )
        .unwrap();
        assert_eq!(c.descriptor_mask, DescriptorMask::SipfNoDirection);
        assert_eq!(c.bingham_loss_kind, BinghamLossKind::NllMode);
        assert_eq!(c.toy_task().epochs, 7);
    }

    #[test]
    fn violations_name_the_field() {
        for (doc, name) in [
            (r#"{"k": 0}"#, "k"),
            (r#"{"delta": -0.1}"#, "delta"),
            (r#"{"quadrature_order": 4}"#, "quadrature_order"),
            (r#"{"learnign_rate": 0.1}"#, "learnign_rate"),
            (r#"{"descriptor_mask": "fpfh"}"#, "fpfh"),
        ] {
            let e = RunConfig::from_json(doc).unwrap_err();
            assert!(e.0.contains(name), "{doc}: {e}");
        }
    }
}
