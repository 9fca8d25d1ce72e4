//! Bundled pipeline and device files, plus lookup of user-supplied ones.

use std::path::{Path, PathBuf};

use fuseplan_core::{Device, Pipeline};

use crate::config::{parse_device, parse_pipeline, ConfigError};

pub const DEVICE_DIR_ENV: &str = "FUSEPLAN_DEVICE_DIR";

pub const BUNDLED_PIPELINE: &str = include_str!("../profiles/tableII_pipeline.json");
pub const K20_LIKE: &str = include_str!("../profiles/k20_like.json");
pub const C1060_LIKE: &str = include_str!("../profiles/c1060_like.json");

pub const DEFAULT_PIPELINE: &str = "tableII_pipeline";
pub const DEFAULT_DEVICE: &str = "k20_like";

pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "tableII_pipeline" => Some(BUNDLED_PIPELINE),
        "k20_like" => Some(K20_LIKE),
        "c1060_like" => Some(C1060_LIKE),
        _ => None,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0:?} is neither a file nor a bundled profile")]
    NotFound(String),
    #[error("{origin}: {source}")]
    Config { origin: String, source: ConfigError },
}

/// Where a profile argument resolved to, and its text.
pub struct Source {
    pub origin: String,
    pub stem: String,
    pub text: String,
}

/// Resolves `arg` as a path, then as `<name>.json` in the device directory,
/// then as a bundled name.
pub fn resolve(arg: &str, device_dir: Option<&Path>) -> Result<Source, LoadError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| LoadError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let stem_of = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let path = Path::new(arg);
    if path.is_file() {
        return Ok(Source {
            origin: arg.to_string(),
            stem: stem_of(path),
            text: read(path)?,
        });
    }
    if let Some(dir) = device_dir {
        let p = dir.join(format!("{arg}.json"));
        if p.is_file() {
            return Ok(Source {
                origin: p.display().to_string(),
                stem: arg.to_string(),
                text: read(&p)?,
            });
        }
    }
    bundled(arg)
        .map(|t| Source {
            origin: format!("bundled:{arg}"),
            stem: arg.to_string(),
            text: t.to_string(),
        })
        .ok_or_else(|| LoadError::NotFound(arg.to_string()))
}

fn device_dir() -> Option<PathBuf> {
    std::env::var_os(DEVICE_DIR_ENV).map(PathBuf::from)
}

pub fn load_pipeline(arg: &str) -> Result<(Pipeline, String), LoadError> {
    let src = resolve(arg, device_dir().as_deref())?;
    let p = parse_pipeline(&src.text).map_err(|source| LoadError::Config {
        origin: src.origin,
        source,
    })?;
    Ok((p, src.stem))
}

pub fn load_device(arg: &str) -> Result<Device, LoadError> {
    let src = resolve(arg, device_dir().as_deref())?;
    parse_device(&src.text).map_err(|source| LoadError::Config {
        origin: src.origin,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use fuseplan_core::pipeline::{bundled_pipeline, bundled_video};

    #[test]
    fn bundled_files_match_presets() {
        assert_eq!(
            parse_pipeline(BUNDLED_PIPELINE).unwrap(),
            bundled_pipeline(bundled_video()).unwrap()
        );
        assert_eq!(parse_device(K20_LIKE).unwrap(), Device::k20_like());
        assert_eq!(parse_device(C1060_LIKE).unwrap(), Device::c1060_like());
    }

    #[test]
    fn device_dir_takes_precedence_over_bundled() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = Device::k20_like();
        d.smem_bytes = 1234;
        std::fs::write(
            dir.path().join("k20_like.json"),
            crate::config::render_device(&d),
        )
        .unwrap();
        let src = resolve("k20_like", Some(dir.path())).unwrap();
        assert_eq!(parse_device(&src.text).unwrap().smem_bytes, 1234);
        assert!(resolve("k20_like", None)
            .unwrap()
            .origin
            .starts_with("bundled:"));
        assert!(matches!(resolve("nope", None), Err(LoadError::NotFound(_))));
    }
}
