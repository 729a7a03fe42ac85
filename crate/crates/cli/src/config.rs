//! Config layering: defaults, then a JSON config file, then flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Deep-merge `top` onto `base`. Nulls in `top` leave `base` alone.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (_, Value::Null) => {}
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, t) => *b = t,
    }
}

/// Read a config file. Either a bare object of settings, or a `run.json`
/// written by an earlier run of the same command.
fn read_file(path: &Path, command: &str) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| pvk_core::Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| pvk_core::Error::Format(format!("{}: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(pvk_core::Error::Config(format!("{}: expected a JSON object", path.display())).into());
    };
    if let Some(Value::String(c)) = map.get("command") {
        if c != command {
            return Err(pvk_core::Error::Config(format!("{} holds a {c:?} run, not {command:?}", path.display())).into());
        }
        return Ok(map.remove("config").unwrap_or(Value::Object(Map::new())));
    }
    Ok(Value::Object(map))
}

pub fn resolve<T: Serialize + DeserializeOwned + Default>(
    command: &str,
    file: Option<&Path>,
    flags: Value,
) -> Result<T, CliError> {
    let mut value = serde_json::to_value(T::default()).expect("defaults serialize");
    if let Some(path) = file {
        merge(&mut value, read_file(path, command)?);
    }
    merge(&mut value, flags);
    serde_json::from_value(value).map_err(|e| pvk_core::Error::Config(format!("{command}: {e}")).into())
}

/// Echo of the effective config, replayable with `--config`.
#[derive(Serialize)]
pub struct RunRecord<'a, T> {
    pub command: &'a str,
    pub version: &'a str,
    pub config: &'a T,
}
