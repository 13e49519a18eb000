//! `run --config`: a JSON object naming a command and its flags.
//!
//! `{"command": "gen", "seed": 1, "nodes": 500, "with_camera": true}` runs
//! the same parse as `sltree gen --seed 1 --nodes 500 --with-camera`, so a
//! config file is validated exactly like the command line and unknown keys
//! are rejected.

use serde_json::Value;

use crate::commands::Usage;

pub fn to_argv(doc: &Value) -> Result<Vec<String>, Usage> {
    let obj = doc
        .as_object()
        .ok_or_else(|| Usage("config must be a JSON object".into()))?;
    let command = obj
        .get("command")
        .and_then(Value::as_str)
        .ok_or_else(|| Usage("config needs a string \"command\" key".into()))?;
    if command == "run" {
        return Err(Usage("a config cannot run another config".into()));
    }
    let mut argv = vec!["sltree".to_string(), command.to_string()];
    for (key, value) in obj {
        if key == "command" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => argv.push(flag),
            Value::Number(n) => argv.extend([flag, n.to_string()]),
            Value::String(s) => argv.extend([flag, s.clone()]),
            Value::Array(items) => {
                let parts = items
                    .iter()
                    .map(|v| match v {
                        Value::Number(n) => Ok(n.to_string()),
                        Value::String(s) => Ok(s.clone()),
                        _ => Err(Usage(format!("{key}: list items must be numbers or strings"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                argv.extend([flag, parts.join(",")]);
            }
            Value::Object(_) => return Err(Usage(format!("{key}: nested objects are not flags"))),
        }
    }
    Ok(argv)
}
