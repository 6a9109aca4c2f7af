use std::collections::BTreeMap;

use super::AnalysisError;

/// Feature name (`lexicon:category` or `lexicon:dimension`) to value.
pub type FeatureVector = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq)]
pub enum LexiconKind {
    /// Category to terms; a term ending in `*` matches by prefix.
    Categorical(BTreeMap<String, Vec<String>>),
    /// Term to one value per dimension.
    Scalar {
        dims: Vec<String>,
        terms: BTreeMap<String, Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub name: String,
    pub kind: LexiconKind,
}

fn term_matches(term: &str, token: &str) -> bool {
    match term.strip_suffix('*') {
        Some(prefix) => token.starts_with(prefix),
        None => term == token,
    }
}

impl Lexicon {
    /// `category<TAB>term` lines.
    pub fn parse_categorical(name: &str, contents: &str) -> Result<Self, AnalysisError> {
        let mut cats: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| AnalysisError::MalformedLexicon {
                name: name.to_owned(),
                line: i + 1,
                reason: reason.to_owned(),
            };
            let (cat, term) = line.split_once('\t').ok_or_else(|| bad("expected category<TAB>term"))?;
            let (cat, term) = (cat.trim(), term.trim().to_lowercase());
            if cat.is_empty() || term.is_empty() || term.contains('\t') {
                return Err(bad("expected category<TAB>term"));
            }
            let terms = cats.entry(cat.to_owned()).or_default();
            if !terms.contains(&term) {
                terms.push(term);
            }
        }
        Ok(Self {
            name: name.to_owned(),
            kind: LexiconKind::Categorical(cats),
        })
    }

    /// `term<TAB>dim=value<TAB>...` lines; every term must list the same
    /// dimensions.
    pub fn parse_scalar(name: &str, contents: &str) -> Result<Self, AnalysisError> {
        let mut dims: Option<Vec<String>> = None;
        let mut terms = BTreeMap::new();
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| AnalysisError::MalformedLexicon {
                name: name.to_owned(),
                line: i + 1,
                reason,
            };
            let mut fields = line.split('\t');
            let term = fields.next().unwrap_or("").trim().to_lowercase();
            if term.is_empty() {
                return Err(bad("missing term".into()));
            }
            let mut pairs: Vec<(String, f64)> = Vec::new();
            for f in fields {
                let (d, v) = f.split_once('=').ok_or_else(|| bad(format!("expected dim=value, got {f:?}")))?;
                let v: f64 = v.trim().parse().map_err(|_| bad(format!("bad number {v:?}")))?;
                pairs.push((d.trim().to_owned(), v));
            }
            pairs.sort_by(|a, b| a.0.cmp(&b.0));
            let names: Vec<String> = pairs.iter().map(|(d, _)| d.clone()).collect();
            if names.is_empty() || names.windows(2).any(|w| w[0] == w[1]) {
                return Err(bad("dimensions must be non-empty and distinct".into()));
            }
            match &dims {
                Some(expected) if *expected != names => {
                    return Err(bad(format!("dimensions {names:?} differ from {expected:?}")))
                }
                Some(_) => {}
                None => dims = Some(names),
            }
            if terms.insert(term, pairs.into_iter().map(|(_, v)| v).collect()).is_some() {
                return Err(bad("duplicate term".into()));
            }
        }
        Ok(Self {
            name: name.to_owned(),
            kind: LexiconKind::Scalar {
                dims: dims.unwrap_or_default(),
                terms,
            },
        })
    }

    /// Scalar when the first data line carries `dim=value` fields,
    /// categorical otherwise.
    pub fn parse(name: &str, contents: &str) -> Result<Self, AnalysisError> {
        let first = contents.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        if first.split('\t').skip(1).any(|f| f.contains('=')) {
            Self::parse_scalar(name, contents)
        } else {
            Self::parse_categorical(name, contents)
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        let keys: Vec<&String> = match &self.kind {
            LexiconKind::Categorical(c) => c.keys().collect(),
            LexiconKind::Scalar { dims, .. } => dims.iter().collect(),
        };
        keys.into_iter().map(|k| format!("{}:{k}", self.name)).collect()
    }
}

/// Categorical: share of tokens matching the category. Scalar: mean value
/// over tokens found in the lexicon, zero when none is.
pub fn lexicon_features<S: AsRef<str>>(tokens: &[S], lexicons: &[Lexicon]) -> FeatureVector {
    let mut out = FeatureVector::new();
    for lex in lexicons {
        match &lex.kind {
            LexiconKind::Categorical(cats) => {
                for (cat, terms) in cats {
                    let hits = tokens
                        .iter()
                        .filter(|t| terms.iter().any(|term| term_matches(term, t.as_ref())))
                        .count();
                    let v = if tokens.is_empty() {
                        0.0
                    } else {
                        hits as f64 / tokens.len() as f64
                    };
                    out.insert(format!("{}:{cat}", lex.name), v);
                }
            }
            LexiconKind::Scalar { dims, terms } => {
                let mut sums = vec![0.0; dims.len()];
                let mut n = 0usize;
                for t in tokens {
                    if let Some(vals) = terms.get(t.as_ref()) {
                        sums.iter_mut().zip(vals).for_each(|(s, v)| *s += v);
                        n += 1;
                    }
                }
                for (d, s) in dims.iter().zip(sums) {
                    let v = if n == 0 { 0.0 } else { s / n as f64 };
                    out.insert(format!("{}:{d}", lex.name), v);
                }
            }
        }
    }
    out
}
