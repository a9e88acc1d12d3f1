//! Merging a JSON config file with command-line flags.
//!
//! Flags and file share one key space: the serde names of the argument
//! structs. A key set in both places takes the file's value and produces a
//! warning. Unknown keys in the file are rejected.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::exit::CliError;

pub struct Merged<T> {
    pub args: T,
    pub warnings: Vec<String>,
}

/// Reads `path` as either a flat object of options or a manifest written by
/// a previous run of `subcommand` (its `config` member is used).
pub fn load_file(path: &Path, subcommand: &str) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!("config {} is not valid JSON: {e}", path.display()))
    })?;
    let Value::Object(mut obj) = value else {
        return Err(CliError::Config(format!(
            "config {} must be a JSON object",
            path.display()
        )));
    };
    if let (Some(Value::String(sub)), Some(Value::Object(_))) =
        (obj.get("subcommand"), obj.get("config"))
    {
        if sub != subcommand {
            return Err(CliError::Config(format!(
                "manifest {} was written by `{sub}`, not `{subcommand}`",
                path.display()
            )));
        }
        let Some(Value::Object(cfg)) = obj.remove("config") else {
            unreachable!()
        };
        return Ok(cfg);
    }
    Ok(obj)
}

/// Overlays `file` on the flag values in `flags`.
pub fn merge<T>(flags: &T, file: Option<Map<String, Value>>) -> Result<Merged<T>, CliError>
where
    T: Serialize + DeserializeOwned + Default,
{
    let to_obj = |v: &T| match serde_json::to_value(v) {
        Ok(Value::Object(m)) => Ok(m),
        _ => Err(CliError::Config(
            "arguments do not serialise to an object".into(),
        )),
    };
    let known = to_obj(&T::default())?;
    let mut merged = to_obj(flags)?;
    let mut warnings = Vec::new();
    if let Some(file) = file {
        let mut keys: Vec<_> = file.keys().cloned().collect();
        keys.sort();
        for key in keys {
            if !known.contains_key(&key) {
                return Err(CliError::Config(format!("unknown config key `{key}`")));
            }
            let value = file[&key].clone();
            if value.is_null() {
                continue;
            }
            if let Some(flag) = merged.get(&key).filter(|v| !v.is_null()) {
                if *flag != value {
                    warnings.push(format!(
                        "config file sets `{key}` = {value}, overriding command-line value {flag}"
                    ));
                }
            }
            merged.insert(key, value);
        }
    }
    let args = serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Config(format!("config: {e}")))?;
    Ok(Merged { args, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::EvolveArgs;
    use serde_json::json;

    fn obj(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn file_wins_with_warning() {
        let flags = EvolveArgs {
            dt: Some(0.1),
            steps: Some(3),
            ..EvolveArgs::default()
        };
        let m = merge(&flags, Some(obj(json!({"dt": 0.2, "nmax": 30, "L": 10.0})))).unwrap();
        assert_eq!(m.args.dt, Some(0.2));
        assert_eq!(m.args.steps, Some(3));
        assert_eq!(m.args.nmax, Some(30));
        assert_eq!(m.args.gadget.l, Some(10.0));
        assert_eq!(m.warnings.len(), 1);
        assert!(m.warnings[0].contains("`dt`"));
    }

    #[test]
    fn equal_values_do_not_warn() {
        let flags = EvolveArgs {
            dt: Some(0.1),
            ..EvolveArgs::default()
        };
        let m = merge(&flags, Some(obj(json!({"dt": 0.1})))).unwrap();
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = merge(&EvolveArgs::default(), Some(obj(json!({"dtt": 0.1}))))
            .err()
            .unwrap();
        assert!(matches!(err, CliError::Config(msg) if msg.contains("dtt")));
    }

    #[test]
    fn manifest_config_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(
            &path,
            json!({"subcommand": "evolve", "config": {"dt": 0.3}}).to_string(),
        )
        .unwrap();
        assert_eq!(load_file(&path, "evolve").unwrap()["dt"], json!(0.3));
        assert!(load_file(&path, "qft").is_err());
    }
}
