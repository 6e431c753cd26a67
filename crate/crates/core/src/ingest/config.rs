use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::{is_http, is_valid_person_id, PersonRef, SourceDescriptor};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourcesFile {
    #[serde(default)]
    source: Vec<SourceDescriptor>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default)]
    person: Vec<PersonRef>,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses and validates a person registry (`[[person]]` tables).
pub fn parse_registry(text: &str) -> Result<Vec<PersonRef>, ConfigError> {
    let file: RegistryFile =
        toml::from_str(text).map_err(|e| ConfigError::Invalid(format!("person registry: {e}")))?;
    let mut ids = HashSet::new();
    let mut names = HashSet::new();
    for p in &file.person {
        if !is_valid_person_id(&p.id) {
            return Err(ConfigError::Invalid(format!(
                "person id `{}` must match [a-z0-9-]+",
                p.id
            )));
        }
        if !ids.insert(p.id.as_str()) {
            return Err(ConfigError::Invalid(format!("duplicate person id `{}`", p.id)));
        }
        let name = p.display_name.trim().to_lowercase();
        if name.is_empty() {
            return Err(ConfigError::Invalid(format!("person `{}` has no display_name", p.id)));
        }
        if !names.insert(name) {
            return Err(ConfigError::Invalid(format!(
                "display_name `{}` is ambiguous",
                p.display_name
            )));
        }
    }
    Ok(file.person)
}

pub fn load_registry(path: &Path) -> Result<Vec<PersonRef>, ConfigError> {
    parse_registry(&read(path)?).map_err(|e| match e {
        ConfigError::Invalid(message) => ConfigError::Syntax {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses and validates a source list (`[[source]]` tables). Default persons
/// must exist in `registry`. Relative file locations are resolved against
/// `base_dir` when given.
pub fn parse_sources(
    text: &str,
    registry: &[PersonRef],
    base_dir: Option<&Path>,
) -> Result<Vec<SourceDescriptor>, ConfigError> {
    let file: SourcesFile =
        toml::from_str(text).map_err(|e| ConfigError::Invalid(format!("sources: {e}")))?;
    let mut ids = HashSet::new();
    let mut out = Vec::with_capacity(file.source.len());
    for mut s in file.source {
        if s.source_id.is_empty() {
            return Err(ConfigError::Invalid("source with empty source_id".into()));
        }
        if !ids.insert(s.source_id.clone()) {
            return Err(ConfigError::Invalid(format!(
                "duplicate source_id `{}`",
                s.source_id
            )));
        }
        if s.location.trim().is_empty() {
            return Err(ConfigError::Invalid(format!(
                "source `{}` has an empty location",
                s.source_id
            )));
        }
        if s.poll_interval == Some(0) {
            return Err(ConfigError::Invalid(format!(
                "source `{}`: poll_interval must be positive",
                s.source_id
            )));
        }
        if let Some(p) = &s.default_person {
            if !registry.iter().any(|r| &r.id == p) {
                return Err(ConfigError::Invalid(format!(
                    "source `{}`: default_person `{p}` is not in the registry",
                    s.source_id
                )));
            }
        }
        if let Some(base) = base_dir {
            if !is_http(&s.location) && Path::new(&s.location).is_relative() {
                s.location = base.join(&s.location).display().to_string();
            }
        }
        out.push(s);
    }
    Ok(out)
}

pub fn load_sources(path: &Path, registry: &[PersonRef]) -> Result<Vec<SourceDescriptor>, ConfigError> {
    parse_sources(&read(path)?, registry, path.parent()).map_err(|e| match e {
        ConfigError::Invalid(message) => ConfigError::Syntax {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Platform, SourceKind, TranscriptFormat};

    const PERSONS: &str = r#"
        [[person]]
        id = "jane-doe"
        display_name = "Jane Doe"
        party = "green"
    "#;

    #[test]
    fn sources_round_trip() {
        let reg = parse_registry(PERSONS).unwrap();
        let text = r#"
            [[source]]
            source_id = "hansard"
            kind = "transcript_dir"
            location = "transcripts"
            platform = "parliament"
            transcript_format = "plain_sections"

            [[source]]
            source_id = "blog"
            kind = "rss_url"
            location = "https://example.org/feed.xml"
            platform = "blog"
            default_person = "jane-doe"
            poll_interval = 3600
        "#;
        let s = parse_sources(text, &reg, Some(Path::new("/cfg"))).unwrap();
        assert_eq!(s[0].kind, SourceKind::TranscriptDir);
        assert_eq!(s[0].location, "/cfg/transcripts");
        assert_eq!(s[0].transcript_format, Some(TranscriptFormat::PlainSections));
        assert_eq!(s[1].platform, Platform::Blog);
        assert_eq!(s[1].location, "https://example.org/feed.xml");
    }

    #[test]
    fn rejects_bad_sources() {
        let reg = parse_registry(PERSONS).unwrap();
        let one = |extra: &str| {
            format!("[[source]]\nsource_id = \"a\"\nkind = \"feed_file\"\nplatform = \"social\"\n{extra}")
        };
        assert!(parse_sources(&one("location = \"\""), &reg, None).is_err());
        assert!(parse_sources(&one("location = \"f\"\npoll_interval = 0"), &reg, None).is_err());
        assert!(parse_sources(&one("location = \"f\"\ndefault_person = \"nobody\""), &reg, None).is_err());
        assert!(parse_sources(&one("location = \"f\"\nplatform2 = 1"), &reg, None).is_err());
        let dup = format!("{}\n{}", one("location = \"f\""), one("location = \"g\""));
        assert!(parse_sources(&dup, &reg, None).is_err());
    }

    #[test]
    fn rejects_bad_registry() {
        assert!(parse_registry("[[person]]\nid = \"Jane\"\ndisplay_name = \"J\"\nparty = \"p\"").is_err());
        let dup = format!("{PERSONS}\n{PERSONS}");
        assert!(parse_registry(&dup).is_err());
    }
}
