//! Report bundle on disk: plain files plus a manifest of their digests.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    /// Input role to sha256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// Bundle file name to sha256, the manifest itself excluded.
    pub files: BTreeMap<String, String>,
    pub metrics: Vec<String>,
    pub skipped_metrics: BTreeMap<String, String>,
    /// Metrics whose results are known to be incomplete, with the reason.
    pub partial_metrics: BTreeMap<String, String>,
    pub complete: bool,
}

impl Manifest {
    pub fn load(dir: &Path) -> io::Result<Manifest> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        serde_json::from_str(&text).map_err(io::Error::other)
    }

    /// Bundle files whose digest no longer matches, or that are missing.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|(name, digest)| sha256_file(&dir.join(name)).ok().as_ref() != Some(*digest))
            .map(|(name, _)| name.clone())
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug)]
pub struct Bundle {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl Bundle {
    /// Opens `dir` for a fresh bundle. A previous bundle there is removed;
    /// any other content makes this fail.
    pub fn create(dir: &Path) -> io::Result<Bundle> {
        if dir.exists() {
            let previous = Manifest::load(dir).ok();
            if let Some(m) = &previous {
                for name in m.files.keys().map(String::as_str).chain([MANIFEST]) {
                    if !name.contains(['/', '\\']) {
                        let _ = fs::remove_file(dir.join(name));
                    }
                }
            }
            if fs::read_dir(dir)?.next().is_some() {
                return Err(io::Error::new(
                    io::ErrorKind::AlreadyExists,
                    format!("output directory {} is not empty", dir.display()),
                ));
            }
        }
        fs::create_dir_all(dir)?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.path(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> io::Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Records a file that was written directly into the bundle directory.
    pub fn register(&mut self, name: &str) -> io::Result<()> {
        let digest = sha256_file(&self.path(name))?;
        self.files.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    pub fn finish(self, mut manifest: Manifest) -> io::Result<Manifest> {
        manifest.files = self.files;
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(io::Error::other)?;
        bytes.push(b'\n');
        fs::write(self.dir.join(MANIFEST), bytes)?;
        Ok(manifest)
    }
}
