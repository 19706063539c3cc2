//! The flat key=value model-configuration dialect.
//!
//! Keys mirror the configuration field names one-to-one; unknown keys are
//! rejected so typos fail loudly. Command-line flags override file values.

use ovid_core::model::OvidConfig;

pub fn parse_config(text: &str) -> Result<OvidConfig, String> {
    let mut cfg = OvidConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value, got {raw:?}", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let bad =
            |e: &dyn std::fmt::Display| format!("line {}: bad value for {key}: {e}", lineno + 1);
        match key {
            "th_e_max" => cfg.th_e_max = value.parse().map_err(|e| bad(&e))?,
            "n_pred" => cfg.n_pred = value.parse().map_err(|e| bad(&e))?,
            "n_head" => cfg.n_head = value.parse().map_err(|e| bad(&e))?,
            "d_h" => cfg.d_h = value.parse().map_err(|e| bad(&e))?,
            "dropout" => cfg.dropout = value.parse().map_err(|e| bad(&e))?,
            "lambda" => cfg.lambda = value.parse().map_err(|e| bad(&e))?,
            "th_class" => cfg.th_class = value.parse().map_err(|e| bad(&e))?,
            "use_changeset" => cfg.use_changeset = value.parse().map_err(|e| bad(&e))?,
            "use_user" => cfg.use_user = value.parse().map_err(|e| bad(&e))?,
            "use_edits" => cfg.use_edits = value.parse().map_err(|e| bad(&e))?,
            "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
            "batch_size" => cfg.batch_size = value.parse().map_err(|e| bad(&e))?,
            "learning_rate" => cfg.learning_rate = value.parse().map_err(|e| bad(&e))?,
            "patience" => cfg.patience = value.parse().map_err(|e| bad(&e))?,
            "max_epochs" => cfg.max_epochs = value.parse().map_err(|e| bad(&e))?,
            other => {
                return Err(format!(
                    "line {}: unknown configuration key {other:?}",
                    lineno + 1
                ))
            }
        }
    }
    Ok(cfg)
}

pub fn render_config(cfg: &OvidConfig) -> String {
    format!(
        "th_e_max = {}\n\
         n_pred = {}\n\
         n_head = {}\n\
         d_h = {}\n\
         dropout = {}\n\
         lambda = {}\n\
         th_class = {}\n\
         use_changeset = {}\n\
         use_user = {}\n\
         use_edits = {}\n\
         seed = {}\n\
         batch_size = {}\n\
         learning_rate = {}\n\
         patience = {}\n\
         max_epochs = {}\n",
        cfg.th_e_max,
        cfg.n_pred,
        cfg.n_head,
        cfg.d_h,
        cfg.dropout,
        cfg.lambda,
        cfg.th_class,
        cfg.use_changeset,
        cfg.use_user,
        cfg.use_edits,
        cfg.seed,
        cfg.batch_size,
        cfg.learning_rate,
        cfg.patience,
        cfg.max_epochs,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = OvidConfig {
            d_h: 36,
            dropout: 0.6,
            seed: 17,
            use_edits: false,
            ..OvidConfig::default()
        };
        let text = render_config(&cfg);
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(parse_config("d_hh = 3")
            .unwrap_err()
            .contains("unknown configuration key"));
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = parse_config("# comment\n\nd_h = 48\n").unwrap();
        assert_eq!(cfg.d_h, 48);
    }
}
