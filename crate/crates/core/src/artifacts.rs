//! Manifests, JSON helpers and dataset files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::condition::Condition;
use crate::error::{Error, Result};
use crate::langgen::{
    length_histogram, ActionStyle, DyckConfig, DyckDatasets, DyckSample, LengthSplit, ScanPair,
};

/// Provenance written next to every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
    pub config: serde_json::Value,
    /// Input file name -> SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        let text = config.to_string();
        Manifest {
            command: command.into(),
            config_hash: hex::encode(&Sha256::digest(text.as_bytes())[..8]),
            seed,
            version: build_version(),
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

/// Crate version plus `git describe` of the source tree when available.
pub fn build_version() -> String {
    let git = std::process::Command::new("git")
        .args([
            "-C",
            env!("CARGO_MANIFEST_DIR"),
            "describe",
            "--always",
            "--dirty",
        ])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string());
    match git {
        Some(g) if !g.is_empty() => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    // write-then-rename so a crash never leaves a truncated cache entry
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Load(format!("{}: {e}", path.display())))
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

/// What a Dyck dataset directory was generated from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyckDataSpec {
    pub task: String,
    pub dyck: DyckConfig,
    pub condition: Condition,
    pub seed: u64,
}

pub const DYCK_SPLITS: [&str; 3] = ["train", "val", "test"];

/// Writes `train.txt`, `val.txt`, `test.txt` and `manifest.json`.
pub fn write_dyck_data(dir: &Path, data: &DyckDatasets) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vocab = data.config.vocab();
    let spec = DyckDataSpec {
        task: "dyck".into(),
        dyck: data.config.clone(),
        condition: data.condition,
        seed: data.seed,
    };
    let mut m = Manifest::new("generate", serde_json::to_value(&spec)?, Some(data.seed));
    let mut details = serde_json::Map::new();
    for (name, set) in DYCK_SPLITS
        .iter()
        .zip([&data.train, &data.validation, &data.test])
    {
        let file = format!("{name}.txt");
        write_lines(
            &dir.join(&file),
            set.iter().map(|s| vocab.render_line(&s.tokens)),
        )?;
        m.outputs.push(file);
        details.insert(
            (*name).into(),
            serde_json::json!({ "count": set.len(), "length_histogram": length_histogram(set) }),
        );
    }
    m.details = details.into();
    m.write(dir)?;
    Ok(m)
}

/// Reads a directory written by [`write_dyck_data`].
pub fn read_dyck_data(dir: &Path) -> Result<DyckDatasets> {
    let m: Manifest = read_json(&dir.join("manifest.json"))?;
    let spec: DyckDataSpec = serde_json::from_value(m.config)
        .map_err(|e| Error::Validation(format!("{} is not a Dyck dataset: {e}", dir.display())))?;
    let vocab = spec.dyck.vocab();
    let mut sets = Vec::new();
    for name in DYCK_SPLITS {
        let samples = read_lines(&dir.join(format!("{name}.txt")))?
            .iter()
            .map(|l| DyckSample::from_tokens(&vocab, vocab.parse_line(l)?))
            .collect::<Result<Vec<_>>>()?;
        sets.push(samples);
    }
    let test = sets.pop().expect("three splits");
    let validation = sets.pop().expect("three splits");
    let train = sets.pop().expect("three splits");
    Ok(DyckDatasets {
        config: spec.dyck,
        condition: spec.condition,
        seed: spec.seed,
        train,
        validation,
        test,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanDataSpec {
    pub task: String,
    pub cutoff: usize,
}

/// Writes `train.txt`, `test.txt` and `manifest.json` for a length split.
pub fn write_scan_data(dir: &Path, split: &LengthSplit) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let spec = ScanDataSpec {
        task: "scan".into(),
        cutoff: split.cutoff,
    };
    let mut m = Manifest::new("generate", serde_json::to_value(&spec)?, None);
    let mut details = serde_json::Map::new();
    for (name, set) in [("train", &split.train), ("test", &split.test)] {
        let file = format!("{name}.txt");
        write_lines(
            &dir.join(&file),
            set.iter().map(|p| p.to_line(ActionStyle::Prefixed)),
        )?;
        m.outputs.push(file);
        let mut hist = BTreeMap::<usize, usize>::new();
        for p in set.iter() {
            *hist.entry(p.actions.len()).or_default() += 1;
        }
        details.insert(
            name.into(),
            serde_json::json!({ "count": set.len(), "length_histogram": hist }),
        );
    }
    m.details = details.into();
    m.write(dir)?;
    Ok(m)
}

pub fn read_scan_data(dir: &Path) -> Result<LengthSplit> {
    let m: Manifest = read_json(&dir.join("manifest.json"))?;
    let spec: ScanDataSpec = serde_json::from_value(m.config)
        .map_err(|e| Error::Validation(format!("{} is not a SCAN dataset: {e}", dir.display())))?;
    let read = |name: &str| -> Result<Vec<ScanPair>> {
        read_lines(&dir.join(format!("{name}.txt")))?
            .iter()
            .map(|l| ScanPair::from_line(l))
            .collect()
    };
    Ok(LengthSplit {
        cutoff: spec.cutoff,
        train: read("train")?,
        test: read("test")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langgen::{build_dyck_datasets, scan_enumerate, scan_length_split};

    #[test]
    fn dyck_files_round_trip_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = DyckConfig::standard(4).unwrap();
        cfg.n_train = 20;
        cfg.n_val = 5;
        cfg.n_test = 3;
        for cond in Condition::ALL {
            let data = build_dyck_datasets(&cfg, cond, 7).unwrap();
            let d = dir.path().join(cond.as_str());
            write_dyck_data(&d, &data).unwrap();
            assert_eq!(read_dyck_data(&d).unwrap(), data);
            let before = fs::read(d.join("train.txt")).unwrap();
            let manifest = fs::read(d.join("manifest.json")).unwrap();
            write_dyck_data(&d, &data).unwrap();
            assert_eq!(fs::read(d.join("train.txt")).unwrap(), before);
            assert_eq!(fs::read(d.join("manifest.json")).unwrap(), manifest);
        }
        assert!(matches!(
            read_dyck_data(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn scan_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let split = scan_length_split(&scan_enumerate(), 22).unwrap();
        let m = write_scan_data(dir.path(), &split).unwrap();
        assert_eq!(m.details["train"]["count"], 16990);
        assert_eq!(m.details["test"]["count"], 3920);
        assert_eq!(read_scan_data(dir.path()).unwrap(), split);
        let text = fs::read_to_string(dir.path().join("train.txt")).unwrap();
        assert!(text
            .lines()
            .all(|l| l.starts_with("IN: ") && l.contains(" OUT: I_")));
    }
}
