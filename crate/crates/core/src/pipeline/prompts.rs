use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::SystemTime;

use crate::error::PipelineError;

const SUMMARY: &str = include_str!("../../assets/prompts/summary.txt");
const COUNTERARGUMENT: &str = include_str!("../../assets/prompts/counterargument.txt");
const PERSONA: &str = include_str!("../../assets/prompts/persona.txt");

/// Prompt templates with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub summary: String,
    pub counterargument: String,
    pub persona: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            summary: SUMMARY.to_string(),
            counterargument: COUNTERARGUMENT.to_string(),
            persona: PERSONA.to_string(),
        }
    }
}

impl PromptTemplates {
    /// Loads `summary.txt`, `counterargument.txt` and `persona.txt` from `dir`;
    /// a missing file falls back to the built-in template.
    pub fn load_dir(dir: &Path) -> Result<Self, PipelineError> {
        let read = |name: &str, fallback: &str| -> Result<String, PipelineError> {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(text) => Ok(text),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(fallback.to_string()),
                Err(e) => Err(PipelineError::Template(format!("{}: {e}", path.display()))),
            }
        };
        let templates = Self {
            summary: read("summary.txt", SUMMARY)?,
            counterargument: read("counterargument.txt", COUNTERARGUMENT)?,
            persona: read("persona.txt", PERSONA)?,
        };
        templates.check()?;
        Ok(templates)
    }

    fn check(&self) -> Result<(), PipelineError> {
        let required: [(&str, &str, &[&str]); 3] = [
            ("summary", &self.summary, &["history"]),
            ("counterargument", &self.counterargument, &["majority_stance", "rejected_drafts", "history"]),
            ("persona", &self.persona, &["history", "briefing"]),
        ];
        for (name, template, keys) in required {
            for key in keys {
                if !template.contains(&format!("{{{key}}}")) {
                    return Err(PipelineError::Template(format!("{name} template lacks {{{key}}}")));
                }
            }
        }
        Ok(())
    }
}

/// Replaces every `{name}` with its value. Unknown placeholders are an error
/// so a typo in an edited template is caught on first use.
pub fn render(template: &str, values: &BTreeMap<&str, String>) -> Result<String, PipelineError> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) if after[..end].chars().all(|c| c.is_ascii_alphanumeric() || c == '_') && end > 0 => {
                let key = &after[..end];
                let value = values
                    .get(key)
                    .ok_or_else(|| PipelineError::Template(format!("unknown placeholder {{{key}}}")))?;
                out.push_str(value);
                rest = &after[end + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug)]
struct Cached {
    templates: PromptTemplates,
    stamp: Option<Vec<Option<SystemTime>>>,
}

/// Templates that are either built in or read from a directory and reloaded
/// whenever one of the files changes.
#[derive(Debug)]
pub struct PromptStore {
    dir: Option<PathBuf>,
    cache: Mutex<Cached>,
}

impl Default for PromptStore {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptStore {
    pub fn builtin() -> Self {
        Self {
            dir: None,
            cache: Mutex::new(Cached {
                templates: PromptTemplates::default(),
                stamp: None,
            }),
        }
    }

    pub fn from_templates(templates: PromptTemplates) -> Self {
        Self {
            dir: None,
            cache: Mutex::new(Cached { templates, stamp: None }),
        }
    }

    pub fn watch_dir(dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let dir = dir.into();
        let templates = PromptTemplates::load_dir(&dir)?;
        let stamp = Some(stamps(&dir));
        Ok(Self {
            dir: Some(dir),
            cache: Mutex::new(Cached { templates, stamp }),
        })
    }

    pub fn current(&self) -> Result<PromptTemplates, PipelineError> {
        let mut cache = self.cache.lock().expect("prompt cache poisoned");
        if let Some(dir) = &self.dir {
            let now = stamps(dir);
            if cache.stamp.as_ref() != Some(&now) {
                cache.templates = PromptTemplates::load_dir(dir)?;
                cache.stamp = Some(now);
            }
        }
        Ok(cache.templates.clone())
    }
}

fn stamps(dir: &Path) -> Vec<Option<SystemTime>> {
    ["summary.txt", "counterargument.txt", "persona.txt"]
        .iter()
        .map(|name| std::fs::metadata(dir.join(name)).and_then(|m| m.modified()).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_replaces_known_and_rejects_unknown() {
        let mut values = BTreeMap::new();
        values.insert("name", "world".to_string());
        assert_eq!(render("hello {name}!", &values).unwrap(), "hello world!");
        assert!(render("hello {nope}", &values).is_err());
        // JSON braces in the template text are left alone.
        assert_eq!(render("{\"a\": 1} {name}", &values).unwrap(), "{\"a\": 1} world");
    }

    #[test]
    fn builtin_templates_have_placeholders() {
        PromptTemplates::default().check().unwrap();
    }

    #[test]
    fn store_reloads_edited_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("summary.txt"), "v1 {history}").unwrap();
        let store = PromptStore::watch_dir(dir.path()).unwrap();
        assert_eq!(store.current().unwrap().summary, "v1 {history}");
        // mtime granularity can be coarse; bump it explicitly.
        std::fs::write(dir.path().join("summary.txt"), "v2 {history}").unwrap();
        let f = std::fs::File::options().write(true).open(dir.path().join("summary.txt")).unwrap();
        f.set_modified(SystemTime::now() + std::time::Duration::from_secs(5)).unwrap();
        assert_eq!(store.current().unwrap().summary, "v2 {history}");
    }

    #[test]
    fn bad_template_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("counterargument.txt"), "no placeholders").unwrap();
        assert!(PromptStore::watch_dir(dir.path()).is_err());
    }
}
