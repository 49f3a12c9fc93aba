//! Run configuration from a key-value file, overridable by flags.

use std::path::Path;

use anyhow::{bail, Context, Result};

/// Settings that may come from a config file or command-line flags.
/// `None` means "not specified here".
#[derive(Debug, Clone, Default)]
pub struct RunSettings {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub draws: Option<u64>,
    pub burn_in: Option<f64>,
    pub thin: Option<u64>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub fixed_effects: Option<bool>,
    pub output_dir: Option<String>,
}

impl RunSettings {
    /// Parse a `key = value` file (one pair per line, `#` comments).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut s = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected key = value, got {raw:?}", i + 1);
            };
            let key = key.trim();
            let value = value.trim();
            let ctx = || format!("config line {}: bad value for {key}", i + 1);
            match key {
                "seed" => s.seed = Some(value.parse().with_context(ctx)?),
                "chains" => s.chains = Some(value.parse().with_context(ctx)?),
                "draws" => s.draws = Some(value.parse().with_context(ctx)?),
                "burn_in" => s.burn_in = Some(value.parse().with_context(ctx)?),
                "thin" => s.thin = Some(value.parse().with_context(ctx)?),
                "lambda" => s.lambda = Some(value.parse().with_context(ctx)?),
                "eta" => s.eta = Some(value.parse().with_context(ctx)?),
                "fixed_effects" => s.fixed_effects = Some(value.parse().with_context(ctx)?),
                "output_dir" => s.output_dir = Some(value.to_string()),
                other => bail!("config line {}: unknown key {other:?}", i + 1),
            }
        }
        Ok(s)
    }

    /// Overlay `flags` (higher precedence) on top of `self`.
    pub fn overridden_by(self, flags: &RunSettings) -> Self {
        Self {
            seed: flags.seed.or(self.seed),
            chains: flags.chains.or(self.chains),
            draws: flags.draws.or(self.draws),
            burn_in: flags.burn_in.or(self.burn_in),
            thin: flags.thin.or(self.thin),
            lambda: flags.lambda.or(self.lambda),
            eta: flags.eta.or(self.eta),
            fixed_effects: flags.fixed_effects.or(self.fixed_effects),
            output_dir: flags.output_dir.clone().or(self.output_dir),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let tmp = std::env::temp_dir().join("ifr_config_test.txt");
        std::fs::write(&tmp, "seed = 7\nlambda = 0.1  # prior\nchains=4\n").unwrap();
        let file = RunSettings::from_file(&tmp).unwrap();
        std::fs::remove_file(&tmp).ok();
        assert_eq!(file.seed, Some(7));
        assert_eq!(file.lambda, Some(0.1));
        assert_eq!(file.chains, Some(4));
        let flags = RunSettings {
            lambda: Some(0.5),
            ..Default::default()
        };
        let merged = file.overridden_by(&flags);
        assert_eq!(merged.lambda, Some(0.5));
        assert_eq!(merged.seed, Some(7));
    }

    #[test]
    fn rejects_unknown_keys() {
        let tmp = std::env::temp_dir().join("ifr_config_bad.txt");
        std::fs::write(&tmp, "sigma = 1\n").unwrap();
        assert!(RunSettings::from_file(&tmp).is_err());
        std::fs::remove_file(&tmp).ok();
    }
}
