//! Small shared helpers: error-to-exit-code mapping, deterministic
//! checksums, path relativization for manifests, and normal parsing.

use std::path::{Component, Path, PathBuf};

/// Exit code 1: the invocation itself is wrong. Exit code 2: an input file
/// is missing or malformed, or the data violates a contract.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

pub fn data_err(message: impl Into<String>) -> CliError {
    CliError::Data(message.into())
}

pub fn usage_err(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

/// FNV-1a over the little-endian bytes of a float slice; stable across
/// runs, platforms and thread counts.
pub fn checksum(values: &[f64]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_le_bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

/// Renders `target` relative to `base_dir` so manifests stay portable.
/// Falls back to the absolute path when no common prefix exists.
pub fn relative_to(base_dir: &Path, target: &Path) -> PathBuf {
    let base = base_dir
        .canonicalize()
        .unwrap_or_else(|_| base_dir.to_path_buf());
    let target = target
        .canonicalize()
        .unwrap_or_else(|_| target.to_path_buf());

    let base_parts: Vec<Component> = base.components().collect();
    let target_parts: Vec<Component> = target.components().collect();
    let common = base_parts
        .iter()
        .zip(&target_parts)
        .take_while(|(a, b)| a == b)
        .count();
    if common == 0 {
        return target;
    }
    let mut out = PathBuf::new();
    for _ in common..base_parts.len() {
        out.push("..");
    }
    for part in &target_parts[common..] {
        out.push(part);
    }
    if out.as_os_str().is_empty() {
        out.push(".");
    }
    out
}

/// Accepts `x,y,z` literals or a JSON file containing `[x,y,z]` or
/// `{"normal": [x,y,z]}`; returns the normalized vector.
pub fn parse_normal(spec: &str) -> Result<[f64; 3], CliError> {
    let raw = match parse_normal_literal(spec) {
        Some(v) => v,
        None => parse_normal_file(spec)?,
    };
    let norm = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
    if !(norm.is_finite() && norm > 1e-9) {
        return Err(data_err(format!(
            "normal `{spec}` is zero or non-finite and cannot be normalized"
        )));
    }
    Ok([raw[0] / norm, raw[1] / norm, raw[2] / norm])
}

fn parse_normal_literal(spec: &str) -> Option<[f64; 3]> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        return None;
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part.trim().parse::<f64>().ok()?;
    }
    Some(v)
}

fn parse_normal_file(spec: &str) -> Result<[f64; 3], CliError> {
    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum NormalFile {
        Bare([f64; 3]),
        Keyed { normal: [f64; 3] },
    }

    let text = std::fs::read_to_string(spec)
        .map_err(|e| data_err(format!("failed to read normal from {spec}: {e}")))?;
    let parsed: NormalFile = serde_json::from_str(&text)
        .map_err(|e| data_err(format!("failed to parse normal from {spec}: {e}")))?;
    Ok(match parsed {
        NormalFile::Bare(v) => v,
        NormalFile::Keyed { normal } => normal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_is_order_sensitive_and_stable() {
        let a = checksum(&[1.0, 2.0, 3.0]);
        let b = checksum(&[1.0, 2.0, 3.0]);
        let c = checksum(&[3.0, 2.0, 1.0]);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn relative_path_walks_up_and_down() {
        let rel = relative_to(Path::new("/a/b/c"), Path::new("/a/x/y.json"));
        assert_eq!(rel, PathBuf::from("../../x/y.json"));
        let same = relative_to(Path::new("/a/b"), Path::new("/a/b/file.json"));
        assert_eq!(same, PathBuf::from("file.json"));
    }

    #[test]
    fn normal_literals_are_normalized() {
        let n = parse_normal("0,3,4").unwrap();
        assert!((n[1] - 0.6).abs() < 1e-12);
        assert!((n[2] - 0.8).abs() < 1e-12);
        assert!(parse_normal("0,0,0").is_err());
    }
}
