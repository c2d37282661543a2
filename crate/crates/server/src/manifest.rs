//! The JSON manifest written next to an index file. The binary index
//! holds only vectors and ids; the manifest names the snippet collection
//! and the encoder artifacts needed to embed queries.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use codesearch::corpus::{load_collection, SnippetCollection};
use codesearch::embed::{EmbeddingTable, IdfTable, NgramConfig};
use codesearch::encoders::{import_external_embeddings, load_unif_params, NcsQueryEncoder, UnifCodeEncoder};
use codesearch::index::{EnsembleSpec, Half};
use codesearch::pipeline::{nbow_half, ncs_half};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("bad encoder source {0:?}: expected nbow:<table>, ncs:<table>:<idf>, unif:<params> or external:<vectors>")]
    BadSource(String),
    #[error("loading {what}: {message}")]
    Artifact { what: String, message: String },
}

/// Where one ensemble half's encoders come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HalfSource {
    /// Summed description embeddings, lemmatized.
    Nbow { table: PathBuf },
    /// Idf-weighted code embeddings; plain sums for queries.
    Ncs { table: PathBuf, idf: PathBuf },
    /// Attention-weighted code embeddings; plain sums for queries.
    Unif { params: PathBuf },
    /// Precomputed sentence vectors keyed by text.
    External { vectors: PathBuf },
}

impl FromStr for HalfSource {
    type Err = ManifestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ManifestError::BadSource(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        if rest.is_empty() {
            return Err(bad());
        }
        match kind {
            "nbow" => Ok(Self::Nbow { table: rest.into() }),
            "ncs" => {
                let (table, idf) = rest.split_once(':').filter(|(a, b)| !a.is_empty() && !b.is_empty()).ok_or_else(bad)?;
                Ok(Self::Ncs { table: table.into(), idf: idf.into() })
            }
            "unif" => Ok(Self::Unif { params: rest.into() }),
            "external" => Ok(Self::External { vectors: rest.into() }),
            _ => Err(bad()),
        }
    }
}

impl HalfSource {
    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Self::Nbow { table } => vec![table],
            Self::Ncs { table, idf } => vec![table, idf],
            Self::Unif { params } => vec![params],
            Self::External { vectors } => vec![vectors],
        }
    }

    pub fn load(&self) -> Result<Half, ManifestError> {
        let artifact = |what: &Path, e: &dyn std::fmt::Display| ManifestError::Artifact {
            what: what.display().to_string(),
            message: e.to_string(),
        };
        match self {
            Self::Nbow { table } => {
                let t = EmbeddingTable::load_text(table, NgramConfig::default()).map_err(|e| artifact(table, &e))?;
                Ok(nbow_half(Arc::new(t)))
            }
            Self::Ncs { table, idf } => {
                let t = EmbeddingTable::load_text(table, NgramConfig::default()).map_err(|e| artifact(table, &e))?;
                Ok(ncs_half(Arc::new(t), Arc::new(load_idf(idf)?)))
            }
            Self::Unif { params } => {
                let p = load_unif_params(params, NgramConfig::default()).map_err(|e| artifact(params, &e))?;
                let query = NcsQueryEncoder::new(Arc::new(p.table.clone()));
                Ok(Half::new(Arc::new(UnifCodeEncoder::new(Arc::new(p))), Arc::new(query)))
            }
            Self::External { vectors } => {
                let enc = import_external_embeddings(vectors).map_err(|e| artifact(vectors, &e))?;
                Ok(Half::shared(Arc::new(enc)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub collection: PathBuf,
    pub lambda_desc: f64,
    pub lambda_code: f64,
    pub desc: Option<HalfSource>,
    pub code: Option<HalfSource>,
}

/// `<index>.manifest.json`.
pub fn manifest_path(index: &Path) -> PathBuf {
    let mut name = index.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io { path: path.display().to_string(), source }
}

impl IndexManifest {
    /// Rewrites every artifact path as an absolute path.
    pub fn absolutize(&mut self) -> Result<(), ManifestError> {
        let mut paths = vec![&mut self.collection];
        for half in [&mut self.desc, &mut self.code].into_iter().flatten() {
            paths.extend(half.paths_mut());
        }
        for p in paths {
            *p = std::path::absolute(&*p).map_err(io_err(p))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(io_err(path))
    }

    /// Reads a manifest; relative paths are taken relative to its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut m: Self =
            serde_json::from_str(&text).map_err(|source| ManifestError::Json { path: path.display().to_string(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut paths = vec![&mut m.collection];
        for half in [&mut m.desc, &mut m.code].into_iter().flatten() {
            paths.extend(half.paths_mut());
        }
        for p in paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(m)
    }

    pub fn load_spec(&self) -> Result<EnsembleSpec, ManifestError> {
        Ok(EnsembleSpec {
            lambda_desc: self.lambda_desc,
            lambda_code: self.lambda_code,
            desc: self.desc.as_ref().map(HalfSource::load).transpose()?,
            code: self.code.as_ref().map(HalfSource::load).transpose()?,
        })
    }

    pub fn load_collection(&self) -> Result<SnippetCollection, ManifestError> {
        load_collection(&self.collection).map_err(|e| ManifestError::Artifact {
            what: self.collection.display().to_string(),
            message: e.to_string(),
        })
    }
}

pub fn save_idf(idf: &IdfTable, path: &Path) -> Result<(), ManifestError> {
    let text = serde_json::to_string(idf).expect("idf table serializes");
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn load_idf(path: &Path) -> Result<IdfTable, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ManifestError::Json { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_half_sources() {
        assert_eq!("nbow:a.vec".parse::<HalfSource>().unwrap(), HalfSource::Nbow { table: "a.vec".into() });
        assert_eq!(
            "ncs:t.vec:idf.json".parse::<HalfSource>().unwrap(),
            HalfSource::Ncs { table: "t.vec".into(), idf: "idf.json".into() }
        );
        assert_eq!("unif:p.txt".parse::<HalfSource>().unwrap(), HalfSource::Unif { params: "p.txt".into() });
        for bad in ["nbow", "nbow:", "ncs:t.vec", "ncs::x", "bert:x"] {
            assert!(bad.parse::<HalfSource>().is_err(), "{bad}");
        }
    }

    #[test]
    fn manifest_round_trip_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = IndexManifest {
            collection: "snippets.jsonl".into(),
            lambda_desc: 1.0,
            lambda_code: 0.5,
            desc: Some(HalfSource::Nbow { table: "desc.vec".into() }),
            code: None,
        };
        let path = dir.path().join("idx.acsi.manifest.json");
        m.save(&path).unwrap();
        let back = IndexManifest::load(&path).unwrap();
        assert_eq!(back.collection, dir.path().join("snippets.jsonl"));
        assert_eq!(back.desc, Some(HalfSource::Nbow { table: dir.path().join("desc.vec") }));
        assert_eq!(back.lambda_code, 0.5);
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(manifest_path(Path::new("out/idx.acsi")), PathBuf::from("out/idx.acsi.manifest.json"));
    }
}
