//! Word lexicons: an antonym list used to filter mask fills, and a
//! similarity-ranked substitution lexicon used by the search baseline.
//!
//! File formats (UTF-8, one record per line, `#` lines and blanks skipped):
//!
//! * antonyms: `word<TAB>ant1,ant2,...` (closure is symmetrized on load)
//! * substitutions: `word<TAB>cand1:score,cand2:score,...` (scores descending)

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};

/// Lowercases and strips plausible inflectional suffixes. Returns every form
/// worth checking against lexicon keys, the surface form first.
fn lemma_forms(word: &str) -> Vec<String> {
    let lower = word.to_lowercase();
    let mut forms = vec![lower.clone()];
    let push = |forms: &mut Vec<String>, s: String| {
        if !forms.contains(&s) {
            forms.push(s);
        }
    };
    for suffix in ["ing", "ed", "es", "s"] {
        if let Some(stem) = lower.strip_suffix(suffix) {
            if stem.chars().count() < 3 {
                continue;
            }
            push(&mut forms, stem.to_string());
            if matches!(suffix, "ing" | "ed") {
                push(&mut forms, format!("{stem}e"));
                let chars: Vec<char> = stem.chars().collect();
                if chars.len() >= 4 && chars[chars.len() - 1] == chars[chars.len() - 2] {
                    push(&mut forms, chars[..chars.len() - 1].iter().collect());
                }
            }
        }
    }
    forms
}

/// Symmetric antonym relation with case-insensitive, lemma-tolerant lookup.
#[derive(Debug, Clone, Default)]
pub struct AntonymLexicon {
    sets: BTreeMap<String, BTreeSet<String>>,
}

impl AntonymLexicon {
    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut lex = AntonymLexicon::default();
        for (a, b) in pairs {
            lex.insert(a.as_ref(), b.as_ref());
        }
        lex
    }

    fn insert(&mut self, a: &str, b: &str) {
        if a.is_empty() || b.is_empty() || a.eq_ignore_ascii_case(b) {
            return;
        }
        for af in lemma_forms(a) {
            for bf in lemma_forms(b) {
                if af == bf {
                    continue;
                }
                self.sets.entry(af.clone()).or_default().insert(bf.clone());
                self.sets.entry(bf).or_default().insert(af.clone());
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)?;
        let mut lex = AntonymLexicon::default();
        for (lineno, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, rest) = line.split_once('\t').ok_or_else(|| Error::MalformedRow {
                line: lineno + 1,
                msg: "expected `word<TAB>ant1,ant2,...`".into(),
            })?;
            let word = word.trim();
            if word.is_empty() {
                return Err(Error::MalformedRow { line: lineno + 1, msg: "empty head word".into() });
            }
            for ant in rest.split(',') {
                let ant = ant.trim();
                if ant.is_empty() {
                    return Err(Error::MalformedRow { line: lineno + 1, msg: "empty antonym entry".into() });
                }
                lex.insert(word, ant);
            }
        }
        Ok(lex)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// True when `b` appears in the antonym set of `a`, matching either
    /// surface form or stripped lemma on both sides.
    pub fn is_antonym(&self, a: &str, b: &str) -> bool {
        let a_forms = lemma_forms(a);
        let b_forms = lemma_forms(b);
        for af in &a_forms {
            if let Some(set) = self.sets.get(af) {
                if b_forms.iter().any(|bf| set.contains(bf)) {
                    return true;
                }
            }
        }
        false
    }
}

/// Similarity-ranked substitution candidates for the search baseline.
#[derive(Debug, Clone, Default)]
pub struct SubstitutionLexicon {
    entries: BTreeMap<String, Vec<(String, f64)>>,
}

impl SubstitutionLexicon {
    pub fn from_entries<I, W>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (W, Vec<(String, f64)>)>,
        W: AsRef<str>,
    {
        let mut lex = SubstitutionLexicon::default();
        for (word, candidates) in entries {
            lex.insert(word.as_ref(), candidates, 0)?;
        }
        Ok(lex)
    }

    fn insert(&mut self, word: &str, candidates: Vec<(String, f64)>, lineno: usize) -> Result<()> {
        let key = word.to_lowercase();
        if key.is_empty() {
            return Err(Error::MalformedRow { line: lineno, msg: "empty head word".into() });
        }
        if candidates.iter().any(|(c, _)| c.to_lowercase() == key) {
            return Err(Error::MalformedRow { line: lineno, msg: format!("candidate list for `{key}` contains the word itself") });
        }
        if !candidates.windows(2).all(|w| w[0].1 >= w[1].1) {
            return Err(Error::MalformedRow { line: lineno, msg: format!("candidates for `{key}` are not score-descending") });
        }
        self.entries.insert(key, candidates);
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)?;
        let mut lex = SubstitutionLexicon::default();
        for (lineno, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, rest) = line.split_once('\t').ok_or_else(|| Error::MalformedRow {
                line: lineno + 1,
                msg: "expected `word<TAB>cand1:score,...`".into(),
            })?;
            let mut candidates = Vec::new();
            for part in rest.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                let (cand, score) = part.rsplit_once(':').ok_or_else(|| Error::MalformedRow {
                    line: lineno + 1,
                    msg: format!("entry `{part}` lacks a `:score` suffix"),
                })?;
                let score: f64 = score.parse().map_err(|_| Error::MalformedRow {
                    line: lineno + 1,
                    msg: format!("unparseable score in `{part}`"),
                })?;
                if !score.is_finite() {
                    return Err(Error::MalformedRow { line: lineno + 1, msg: "non-finite score".into() });
                }
                candidates.push((cand.trim().to_string(), score));
            }
            lex.insert(word.trim(), candidates, lineno + 1)?;
        }
        Ok(lex)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Up to `k` best-scored substitutes for `word`; empty when unknown.
    pub fn top(&self, word: &str, k: usize) -> &[(String, f64)] {
        match self.entries.get(&word.to_lowercase()) {
            Some(c) => &c[..c.len().min(k)],
            None => &[],
        }
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}
