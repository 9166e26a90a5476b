//! JSON documents and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::assets::AssetCatalog;
use crate::embodiment::Embodiment;
use crate::scenegen::Scene;
use crate::{Error, Result};

/// Parses JSON, reporting the failing field path on error.
pub fn parse_json<T: DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let location = if path == "." { source.to_string() } else { format!("{source}: {path}") };
        Error::format(location, e.into_inner().to_string())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    parse_json(&text, &path.display().to_string())
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

/// Writes `bytes` to a temporary sibling and renames it over `path`, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = temp_path(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::domain(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json_pretty(value)?.as_bytes())
}

fn check(source: &Path, violations: Vec<String>) -> Result<()> {
    match violations.first() {
        None => Ok(()),
        Some(first) => {
            let (loc, msg) = first.split_once(": ").unwrap_or(("", first));
            Err(Error::format(format!("{}: {loc}", source.display()), msg.to_string()))
        }
    }
}

/// Reads and validates an embodiment file.
pub fn load_embodiment(path: &Path) -> Result<Embodiment> {
    let emb: Embodiment = read_json(path)?;
    check(path, emb.violations())?;
    Ok(emb)
}

/// Reads and validates an asset catalog file.
pub fn load_catalog(path: &Path) -> Result<AssetCatalog> {
    let cat: AssetCatalog = read_json(path)?;
    check(path, cat.violations())?;
    Ok(cat)
}

/// Reads and validates a scene file.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let scene: Scene = read_json(path)?;
    check(path, scene.violations())?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_is_reported_for_bad_field() {
        let emb = Embodiment::default_humanoid();
        let mut v = serde_json::to_value(&emb).unwrap();
        v["capsule_radii_m"][4] = serde_json::json!("thick");
        let err = parse_json::<Embodiment>(&v.to_string(), "e.json").unwrap_err();
        assert!(err.to_string().contains("capsule_radii_m[4]"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let emb = Embodiment::default_humanoid();
        let mut v = serde_json::to_value(&emb).unwrap();
        v["wings"] = serde_json::json!(2);
        assert!(parse_json::<Embodiment>(&v.to_string(), "e.json").is_err());
    }

    #[test]
    fn embodiment_round_trip() {
        let emb = Embodiment::default_humanoid();
        let text = to_json_pretty(&emb).unwrap();
        assert_eq!(parse_json::<Embodiment>(&text, "e").unwrap(), emb);
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = std::env::temp_dir().join(format!("cb-io-{}", std::process::id()));
        let path = dir.join("a.json");
        write_json(&path, &vec![1, 2, 3]).unwrap();
        let names: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("a.json")]);
        assert_eq!(read_json::<Vec<i32>>(&path).unwrap(), vec![1, 2, 3]);
        fs::remove_dir_all(&dir).unwrap();
    }
}
