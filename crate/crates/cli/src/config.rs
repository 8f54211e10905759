//! `key = value` run files, translated into the equivalent command line.
//!
//! ```text
//! # Born window with the Gaussian count model
//! subcommand = born-window
//! count-model = gaussian
//! window-low = 0.65
//! window-high = 0.75
//! ```
//!
//! Every key except `subcommand` becomes `--key value`; underscores may stand
//! in for dashes. Blank lines and lines starting with `#` are ignored.

use std::path::Path;

pub fn parse(text: &str) -> Result<Vec<String>, String> {
    let mut subcommand = None;
    let mut flags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value, got {line:?}", i + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        match key.as_str() {
            "subcommand" => {
                if subcommand.replace(value.to_string()).is_some() {
                    return Err(format!("line {}: subcommand given twice", i + 1));
                }
            }
            "config" => return Err(format!("line {}: run files cannot include other run files", i + 1)),
            _ => {
                flags.push(format!("--{key}"));
                flags.push(value.to_string());
            }
        }
    }
    let subcommand = subcommand.ok_or("run file has no subcommand")?;
    let mut args = vec!["mangle".to_string(), subcommand];
    args.extend(flags);
    Ok(args)
}

pub fn load(path: &Path) -> Result<Vec<String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text)
}
