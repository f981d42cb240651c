use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use async_trait::async_trait;

use super::{ImageCandidate, ImageError, ImageQuery, ImageSearch, SearchError};

/// Offline image provider backed by a JSON file mapping each term to a list
/// of `{url, width, height}` results. Terms match case-insensitively.
#[derive(Debug, Default)]
pub struct MockCatalog {
    entries: BTreeMap<String, Vec<ImageCandidate>>,
    lookups: AtomicUsize,
}

impl MockCatalog {
    pub fn load(path: &Path) -> Result<Self, ImageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ImageError::InvalidConfig(format!("cannot read catalog {}: {e}", path.display())))?;
        Self::from_json(&text)
            .map_err(|e| ImageError::InvalidConfig(format!("catalog {}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let raw: BTreeMap<String, Vec<ImageCandidate>> = serde_json::from_str(text)?;
        Ok(Self::from_entries(raw))
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, Vec<ImageCandidate>)>) -> Self {
        Self {
            entries: entries
                .into_iter()
                .map(|(term, list)| (normalize(&term), list))
                .collect(),
            lookups: AtomicUsize::new(0),
        }
    }

    /// Number of searches served so far.
    pub fn lookups(&self) -> usize {
        self.lookups.load(Ordering::SeqCst)
    }
}

fn normalize(term: &str) -> String {
    term.trim().to_lowercase()
}

#[async_trait]
impl ImageSearch for MockCatalog {
    fn provider_id(&self) -> String {
        "mock-catalog".to_string()
    }

    async fn search(&self, query: &ImageQuery) -> Result<Vec<ImageCandidate>, SearchError> {
        self.lookups.fetch_add(1, Ordering::SeqCst);
        Ok(self.entries.get(&normalize(&query.term)).cloned().unwrap_or_default())
    }
}
