use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::chunker::Lexicon;
use crate::error::{Error, Result};
use crate::grounding::ImageRecord;
use crate::jsonl;
use crate::ranker::ExplanationCandidate;

/// Images, their candidate explanations and the lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    /// Candidates per image id, in file order.
    pub candidates: BTreeMap<String, Vec<ExplanationCandidate>>,
    pub lexicon: Lexicon,
}

impl Dataset {
    pub fn image(&self, id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.image_id == id)
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.values().map(Vec::len).sum()
    }

    /// Candidates in file order across images.
    pub fn all_candidates(&self) -> Vec<ExplanationCandidate> {
        let mut all: Vec<_> = self.candidates.values().flatten().cloned().collect();
        let order: BTreeMap<&str, usize> = self
            .images
            .iter()
            .enumerate()
            .map(|(i, img)| (img.image_id.as_str(), i))
            .collect();
        all.sort_by_key(|c| (order[c.image_id.as_str()], c.candidate_index));
        all
    }

    pub fn save(&self, images_path: &Path, candidates_path: &Path, lexicon_path: &Path) -> Result<()> {
        jsonl::write_jsonl(images_path, &self.images)?;
        jsonl::write_jsonl(candidates_path, &self.all_candidates())?;
        self.lexicon.save(lexicon_path)
    }
}

/// Reads and validates an images file. Errors carry the offending line.
pub fn load_images(path: &Path, lex: &Lexicon) -> Result<Vec<ImageRecord>> {
    let rows: Vec<(usize, ImageRecord)> = jsonl::read_jsonl_numbered(path)?;
    let mut seen = BTreeSet::new();
    let mut images = Vec::with_capacity(rows.len());
    for (line, img) in rows {
        img.validate(lex)
            .map_err(|e| Error::format(path, line, e.to_string()))?;
        if !seen.insert(img.image_id.clone()) {
            return Err(Error::format(path, line, format!("duplicate image_id '{}'", img.image_id)));
        }
        images.push(img);
    }
    Ok(images)
}

/// Reads a candidates file, checking every image id against `images`.
pub fn load_candidates(
    path: &Path,
    images: &[ImageRecord],
) -> Result<BTreeMap<String, Vec<ExplanationCandidate>>> {
    let known: BTreeSet<&str> = images.iter().map(|i| i.image_id.as_str()).collect();
    let rows: Vec<(usize, ExplanationCandidate)> = jsonl::read_jsonl_numbered(path)?;
    let mut out: BTreeMap<String, Vec<ExplanationCandidate>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (line, c) in rows {
        if !known.contains(c.image_id.as_str()) {
            return Err(Error::ReferentialIntegrity(format!(
                "{}:{line}: candidate references unknown image '{}'",
                path.display(),
                c.image_id
            )));
        }
        if !seen.insert((c.image_id.clone(), c.candidate_index)) {
            return Err(Error::format(
                path,
                line,
                format!("duplicate candidate_index {} for '{}'", c.candidate_index, c.image_id),
            ));
        }
        out.entry(c.image_id.clone()).or_default().push(c);
    }
    Ok(out)
}

/// Loads a dataset. Without `lexicon_path` the bundled lexicon is used;
/// without `candidates_path` the dataset has no candidates.
pub fn load_dataset(
    images_path: &Path,
    candidates_path: Option<&Path>,
    lexicon_path: Option<&Path>,
) -> Result<Dataset> {
    let lexicon = match lexicon_path {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::default(),
    };
    let images = load_images(images_path, &lexicon)?;
    let candidates = match candidates_path {
        Some(p) => load_candidates(p, &images)?,
        None => BTreeMap::new(),
    };
    Ok(Dataset {
        images,
        candidates,
        lexicon,
    })
}
