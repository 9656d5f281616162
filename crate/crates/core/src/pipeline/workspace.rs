use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineConfig, PipelineError, Stage};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    /// SHA-256 of every file written, keyed by path relative to the stage
    /// directory.
    pub files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha256(path: &Path) -> Result<String, PipelineError> {
    let mut f = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| PipelineError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn chain(stage: Stage, parts: &[serde_json::Value]) -> String {
    let v = serde_json::json!({ "stage": stage.name(), "parts": parts });
    sha256_hex(&serde_json::to_vec(&v).expect("json values serialize"))
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

/// Expected configuration hash of every stage. The ingest hash covers the
/// bytes of the input log.
pub fn stage_hashes(workspace: &Path, cfg: &PipelineConfig) -> Result<BTreeMap<Stage, String>, PipelineError> {
    let input = cfg.input_path(workspace);
    if !input.is_file() {
        return Err(PipelineError::Dependency {
            artifact: input.display().to_string(),
            message: "input transaction log not found".into(),
        });
    }
    let input_hash = file_sha256(&input)?;
    let mut h = BTreeMap::new();
    let s = |x: &str| serde_json::Value::String(x.to_string());
    h.insert(Stage::Ingest, chain(Stage::Ingest, &[s(&input_hash), json(&cfg.columns), json(&cfg.split)]));
    h.insert(Stage::Featurize, chain(Stage::Featurize, &[s(&h[&Stage::Ingest]), json(&cfg.features)]));
    h.insert(
        Stage::Train,
        chain(Stage::Train, &[s(&h[&Stage::Featurize]), json(&cfg.network), json(&cfg.train)]),
    );
    h.insert(Stage::Predict, chain(Stage::Predict, &[s(&h[&Stage::Train])]));
    h.insert(Stage::Thresholds, chain(Stage::Thresholds, &[s(&h[&Stage::Predict])]));
    h.insert(Stage::Elasticity, chain(Stage::Elasticity, &[s(&h[&Stage::Predict]), json(&cfg.elasticity)]));
    h.insert(
        Stage::Optimize,
        chain(
            Stage::Optimize,
            &[s(&h[&Stage::Elasticity]), s(&h[&Stage::Thresholds]), json(&cfg.optimize)],
        ),
    );
    h.insert(Stage::Report, chain(Stage::Report, &[s(&h[&Stage::Optimize]), json(&cfg.report)]));
    Ok(h)
}

pub fn stage_dir(workspace: &Path, stage: Stage) -> PathBuf {
    workspace.join(stage.name())
}

/// Checks that `stage` ran with the current configuration and that its
/// files are unchanged since.
pub fn require(workspace: &Path, stage: Stage, expected: &str) -> Result<Manifest, PipelineError> {
    let dir = stage_dir(workspace, stage);
    let path = dir.join(MANIFEST_FILE);
    let artifact = format!("{}/{}", stage.name(), MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|_| PipelineError::Dependency {
        artifact: artifact.clone(),
        message: format!("run the {stage} stage first"),
    })?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| PipelineError::Schema(format!("{artifact}: {e}")))?;
    if manifest.config_hash != expected {
        return Err(PipelineError::Stale {
            stage,
            message: "configuration or upstream artifacts changed since it ran".into(),
        });
    }
    for (name, digest) in &manifest.files {
        let file = dir.join(name);
        if !file.is_file() {
            return Err(PipelineError::Dependency {
                artifact: format!("{}/{name}", stage.name()),
                message: format!("listed in the manifest; rerun the {stage} stage"),
            });
        }
        if &file_sha256(&file)? != digest {
            return Err(PipelineError::Stale { stage, message: format!("{name} was modified") });
        }
    }
    Ok(manifest)
}

/// Collects a stage's files and writes its manifest last.
pub struct StageWriter {
    dir: PathBuf,
    stage: Stage,
    hash: String,
    files: BTreeMap<String, String>,
}

impl StageWriter {
    /// Empties the stage directory first so no stale file survives.
    pub fn new(workspace: &Path, stage: Stage, hash: &str) -> Result<Self, PipelineError> {
        let dir = stage_dir(workspace, stage);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        Ok(Self { dir, stage, hash: hash.to_string(), files: BTreeMap::new() })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Records a file written by other means.
    pub fn record(&mut self, name: &str) -> Result<(), PipelineError> {
        let digest = file_sha256(&self.dir.join(name))?;
        self.files.insert(name.to_string(), digest);
        Ok(())
    }

    /// Delimited text led by a `# config_hash:` comment line.
    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), PipelineError> {
        let bytes = csv_bytes(&self.hash, rows)?;
        self.write(name, &bytes)
    }

    /// JSON object with a `config_hash` member next to `body`'s members.
    pub fn write_json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), PipelineError> {
        let mut v = serde_json::to_value(body).map_err(|e| PipelineError::Internal(e.to_string()))?;
        let obj = v.as_object_mut().ok_or_else(|| PipelineError::Internal(format!("{name}: not an object")))?;
        obj.insert("config_hash".into(), serde_json::Value::String(self.hash.clone()));
        let mut bytes = serde_json::to_vec_pretty(&v).map_err(|e| PipelineError::Internal(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn finish(self) -> Result<Manifest, PipelineError> {
        let manifest = Manifest { stage: self.stage.name().to_string(), config_hash: self.hash, files: self.files };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| PipelineError::Internal(e.to_string()))?;
        bytes.push(b'\n');
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn csv_bytes<T: Serialize>(hash: &str, rows: &[T]) -> Result<Vec<u8>, PipelineError> {
    let mut out = format!("# config_hash: {hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r).map_err(|e| PipelineError::Internal(e.to_string()))?;
        }
        w.flush().map_err(|e| PipelineError::Internal(e.to_string()))?;
    }
    Ok(out)
}

/// Rows of a stage CSV, skipping `#` comment lines.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| PipelineError::Schema(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| PipelineError::Schema(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Schema(format!("{}: {e}", path.display())))
}

/// Directory name of a category: lower-case ASCII letters and digits with
/// runs of anything else collapsed to `-`.
pub fn category_dir(category: &str) -> String {
    let mut out = String::new();
    for c in category.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    let trimmed = out.trim_matches('-');
    if trimmed.is_empty() {
        "category".to_string()
    } else {
        trimmed.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_dirs() {
        assert_eq!(category_dir("Dairy, Juices, Snacks"), "dairy-juices-snacks");
        assert_eq!(category_dir("Grocery"), "grocery");
        assert_eq!(category_dir("!!"), "category");
    }

    #[test]
    fn csv_comment_round_trip() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct Row {
            a: String,
            b: f64,
        }
        let rows = vec![Row { a: "x, y".into(), b: 0.1 }, Row { a: "z".into(), b: 2.0 }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, csv_bytes("abc", &rows).unwrap()).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("# config_hash: abc\na,b\n"));
        assert_eq!(read_csv::<Row>(&p).unwrap(), rows);
    }
}
