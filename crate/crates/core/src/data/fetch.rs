//! Optional MNIST download from a configurable mirror.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DataError;

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
];

pub const MANIFEST_NAME: &str = "manifest.json";

/// SHA-256 digests recorded the first time each file was fetched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FetchManifest {
    pub base_url: String,
    pub sha256: BTreeMap<String, String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn download(url: &str) -> Result<Vec<u8>, DataError> {
    let fail = |reason: String| DataError::Fetch {
        url: url.to_string(),
        reason,
    };
    let response = ureq::get(url).call().map_err(|e| fail(e.to_string()))?;
    let mut out = Vec::new();
    response
        .into_body()
        .into_reader()
        .read_to_end(&mut out)
        .map_err(|e| fail(e.to_string()))?;
    Ok(out)
}

/// Downloads the four MNIST files into `out_dir`.
///
/// Files already present and matching the manifest are kept. A download
/// whose digest disagrees with a previously recorded one is rejected.
pub fn fetch_mnist(base_url: &str, out_dir: &Path) -> Result<FetchManifest, DataError> {
    std::fs::create_dir_all(out_dir).map_err(|e| DataError::io(out_dir, e))?;
    let manifest_path = out_dir.join(MANIFEST_NAME);
    let mut manifest: FetchManifest = match std::fs::read(&manifest_path) {
        Ok(bytes) => {
            serde_json::from_slice(&bytes).map_err(|e| DataError::Config(format!("unreadable fetch manifest: {e}")))?
        }
        Err(_) => FetchManifest::default(),
    };
    let base = base_url.trim_end_matches('/');
    manifest.base_url = base.to_string();

    for name in MNIST_FILES {
        let path = out_dir.join(name);
        let recorded = manifest.sha256.get(name).cloned();
        if let (Some(digest), Ok(existing)) = (&recorded, std::fs::read(&path)) {
            if &hex(&Sha256::digest(&existing)) == digest {
                log::info!("{name}: present, digest matches manifest");
                continue;
            }
        }
        let url = format!("{base}/{name}");
        log::info!("fetching {url}");
        let bytes = download(&url)?;
        let digest = hex(&Sha256::digest(&bytes));
        if let Some(expected) = recorded {
            if expected != digest {
                return Err(DataError::Fetch {
                    url,
                    reason: format!("sha256 {digest} differs from recorded {expected}"),
                });
            }
        }
        crate::util::write_atomic(&path, &bytes).map_err(|e| DataError::io(&path, e))?;
        manifest.sha256.insert(name.to_string(), digest);
    }

    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
    crate::util::write_atomic(&manifest_path, &json).map_err(|e| DataError::io(&manifest_path, e))?;
    Ok(manifest)
}
