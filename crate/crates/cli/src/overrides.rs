//! `--set key=value` overrides on the resolved config.
//!
//! Overrides address existing keys of the fully-resolved config by dotted
//! path (`unlearn.alpha=0.5`). The replacement must parse to the same JSON
//! type as the current value; `null` accepts any type.

use serde_json::Value;
use unlearn_core::config::ResolvedConfig;

fn json_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn parse_rhs(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Apply `KEY=VALUE` overrides. Errors name the offending key.
pub fn apply_overrides(
    cfg: ResolvedConfig,
    sets: &[String],
) -> Result<ResolvedConfig, String> {
    if sets.is_empty() {
        return Ok(cfg);
    }
    let mut value = serde_json::to_value(&cfg).map_err(|e| e.to_string())?;
    for entry in sets {
        let (key, raw) = entry
            .split_once('=')
            .ok_or_else(|| format!("invalid override `{entry}`: expected KEY=VALUE"))?;
        let slot = locate(&mut value, key)?;
        let replacement = parse_rhs(raw);
        if !matches!(slot, Value::Null)
            && std::mem::discriminant(slot) != std::mem::discriminant(&replacement)
        {
            return Err(format!(
                "type mismatch for `{key}`: expected {}, got {} (`{raw}`)",
                json_type(slot),
                json_type(&replacement)
            ));
        }
        *slot = replacement;
    }
    serde_json::from_value(value).map_err(|e| format!("invalid config after overrides: {e}"))
}

fn locate<'a>(root: &'a mut Value, key: &str) -> Result<&'a mut Value, String> {
    let mut current = root;
    for segment in key.split('.') {
        current = match current {
            Value::Object(map) => map
                .get_mut(segment)
                .ok_or_else(|| format!("unknown config key `{key}` (no field `{segment}`)"))?,
            _ => {
                return Err(format!(
                    "unknown config key `{key}`: `{segment}` addresses a non-object value"
                ))
            }
        };
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use unlearn_core::config::ExperimentConfig;

    fn base() -> ResolvedConfig {
        ExperimentConfig::from_json(
            r#"{
                "dataset": {"kind": "synth_blobs", "num_classes": 4, "per_class": 20, "image_side": 8},
                "forget": {"mode": "by_class", "classes": [1]},
                "seed": 42
            }"#,
        )
        .unwrap()
        .resolve()
    }

    #[test]
    fn sets_nested_float() {
        let cfg = apply_overrides(base(), &["unlearn.alpha=0.5".into()]).unwrap();
        assert_eq!(cfg.unlearn.alpha, 0.5);
    }

    #[test]
    fn sets_array_and_integer() {
        let cfg = apply_overrides(
            base(),
            &["forget.classes=[2,3]".into(), "train.epochs=5".into()],
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(
            cfg.forget,
            unlearn_core::data::ForgetSpec::by_class([2, 3])
        );
    }

    #[test]
    fn unknown_key_is_named() {
        let err = apply_overrides(base(), &["unlearn.gamma=1".into()]).unwrap_err();
        assert!(err.contains("unlearn.gamma"), "{err}");
    }

    #[test]
    fn type_mismatch_is_named() {
        let err = apply_overrides(base(), &["unlearn.alpha=abc".into()]).unwrap_err();
        assert!(err.contains("unlearn.alpha"), "{err}");
        assert!(err.contains("expected number"), "{err}");
    }

    #[test]
    fn missing_equals_is_rejected() {
        let err = apply_overrides(base(), &["unlearn.alpha".into()]).unwrap_err();
        assert!(err.contains("KEY=VALUE"), "{err}");
    }
}
