//! Byte-stable CSV/JSON writers and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

/// Float with 17 significant digits, `.` decimal point, JSON-compatible.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

/// Serializes `v` with two-space indentation, sorted keys and 17-digit
/// floats.
pub fn to_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize| "  ".repeat(d);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => write!(out, "{i}").unwrap(),
            (_, Some(u)) => write!(out, "{u}").unwrap(),
            _ => out.push_str(&num(n.as_f64().unwrap_or(f64::NAN))),
        },
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(x, depth, out);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                write_value(x, depth + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(&map[*k], depth + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
    }
}

/// Resolved parameters of one run; its hash tags every output file.
pub struct Manifest {
    pub value: Value,
    pub hash: String,
}

impl Manifest {
    pub fn new(mut value: Value) -> Self {
        value["version"] = Value::String(periodic_spectra::VERSION.into());
        let hash = hex::encode(Sha256::digest(to_json(&value).as_bytes()));
        Manifest { value, hash }
    }
}

pub struct Sink {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, manifest: Manifest) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        let mut sink = Sink { dir: dir.to_path_buf(), manifest, written: Vec::new() };
        let text = to_json(&sink.manifest.value);
        sink.put("manifest.json", &text)?;
        Ok(sink)
    }

    fn put(&mut self, name: &str, text: &str) -> std::io::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }

    /// Writes a JSON object with the manifest hash added as a field.
    pub fn json(&mut self, name: &str, mut v: Value) -> std::io::Result<()> {
        v["manifest_sha256"] = Value::String(self.manifest.hash.clone());
        self.put(name, &to_json(&v))
    }

    /// Writes CSV with a `#` comment line carrying the manifest hash.
    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> std::io::Result<()> {
        let mut text = format!("# manifest-sha256: {}\n{}\n", self.manifest.hash, header.join(","));
        for r in rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        self.put(name, &text)
    }

    /// Whitespace-separated columns for gnuplot.
    pub fn plot(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> std::io::Result<()> {
        let mut text = format!("# manifest-sha256: {}\n# {}\n", self.manifest.hash, header.join(" "));
        for r in rows {
            text.push_str(&r.join(" "));
            text.push('\n');
        }
        self.put(name, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(num(1.0 / 3.0), "3.3333333333333331e-1");
        assert_eq!(num(-1.0), "-1.0000000000000000e0");
        let back: f64 = num(0.1).parse().unwrap();
        assert_eq!(back, 0.1);
    }

    #[test]
    fn json_is_sorted_and_parses_back() {
        let v = json!({"b": [1, 2.5], "a": {"x": null, "y": [{"z": true}]}});
        let text = to_json(&v);
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["b"][1], json!(2.5));
        assert_eq!(back["a"]["y"][0]["z"], json!(true));
    }

    #[test]
    fn manifest_hash_depends_on_content() {
        let a = Manifest::new(json!({"command": "bands", "grid": 64}));
        let b = Manifest::new(json!({"command": "bands", "grid": 64}));
        let c = Manifest::new(json!({"command": "bands", "grid": 32}));
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
        assert_eq!(a.hash.len(), 64);
    }
}
