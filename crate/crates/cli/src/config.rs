//! `key = value` config files, merged into argv ahead of the user's flags.

use std::ffi::OsString;
use std::path::Path;

use clap::Command;

#[derive(Debug)]
pub struct ConfigError(pub String);

/// Parse `key = value` lines; `#` starts a comment. Keys use flag names
/// (`cor-reg`), underscores are accepted for hyphens.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("config line {}: expected key = value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        let value = v.trim().trim_matches('"').to_string();
        if key.is_empty() {
            return Err(ConfigError(format!("config line {}: empty key", n + 1)));
        }
        out.push((key, value));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Insert `--key=value` for each config entry right after the subcommand,
/// so that flags given on the command line (which come later) win.
pub fn merge_config(cmd: &Command, args: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let Some(sub_name) = args.get(1).map(|s| s.to_string_lossy().into_owned()) else {
        return Ok(args);
    };
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let mut injected = Vec::new();
    for (key, value) in parse_config(&text)? {
        if key == "config" || !sub.get_arguments().any(|a| a.get_long() == Some(key.as_str())) {
            return Err(ConfigError(format!("config key '{key}' is not a flag of '{sub_name}'")));
        }
        injected.push(OsString::from(format!("--{key}={value}")));
    }
    let mut merged = args[..2].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&args[2..]);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_underscores() {
        let kv = parse_config("# run\nloss = log\ncor_reg=off  # inline\n\nlambda1 = 2.5\n").unwrap();
        assert_eq!(
            kv,
            vec![
                ("loss".into(), "log".into()),
                ("cor-reg".into(), "off".into()),
                ("lambda1".into(), "2.5".into())
            ]
        );
        assert!(parse_config("novalue\n").is_err());
    }

    #[test]
    fn finds_config_flag() {
        let a: Vec<OsString> = ["evcore", "train", "--config=x.cfg"].iter().map(OsString::from).collect();
        assert_eq!(config_path(&a), Some("x.cfg".into()));
        let b: Vec<OsString> = ["evcore", "train", "--config", "y"].iter().map(OsString::from).collect();
        assert_eq!(config_path(&b), Some("y".into()));
    }
}
