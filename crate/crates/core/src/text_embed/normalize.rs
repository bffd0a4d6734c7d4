use crate::place_model::DEFAULT_CITIES;

/// Text normalization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizerConfig {
    /// Location phrases stripped from either end, longest first.
    gazetteer: Vec<Vec<String>>,
    pub lowercase: bool,
}

impl NormalizerConfig {
    /// Phrases are normalized on the way in; empty phrases are dropped.
    pub fn new<I, S>(phrases: I, lowercase: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut gazetteer: Vec<Vec<String>> = phrases
            .into_iter()
            .map(|p| tokenize(p.as_ref(), true))
            .filter(|p| !p.is_empty())
            .collect();
        gazetteer.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        gazetteer.dedup();
        NormalizerConfig {
            gazetteer,
            lowercase,
        }
    }

    /// No gazetteer stripping, lowercasing on.
    pub fn plain() -> Self {
        NormalizerConfig::new(std::iter::empty::<&str>(), true)
    }

    pub fn gazetteer(&self) -> &[Vec<String>] {
        &self.gazetteer
    }
}

impl Default for NormalizerConfig {
    /// Lowercasing on, gazetteer built from the synthetic generator's cities.
    fn default() -> Self {
        NormalizerConfig::new(DEFAULT_CITIES.iter().map(|c| c.0), true)
    }
}

/// Replaces every character that is not a letter or digit with a space and
/// splits on whitespace.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let lowered;
    let text = if lowercase {
        lowered = text.to_lowercase();
        lowered.as_str()
    } else {
        text
    };
    let cleaned: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(String::from).collect()
}

/// Tokenizes `text` and strips leading/trailing gazetteer phrases until none
/// match. A phrase is never stripped if it is all that is left.
pub fn normalize(text: &str, cfg: &NormalizerConfig) -> Vec<String> {
    let mut tokens = tokenize(text, cfg.lowercase);
    let matches = |window: &[String], phrase: &[String]| {
        window
            .iter()
            .zip(phrase)
            .all(|(t, p)| t == p || (!cfg.lowercase && t.to_lowercase() == *p))
    };
    loop {
        let mut changed = false;
        for phrase in &cfg.gazetteer {
            let n = phrase.len();
            if tokens.len() > n && matches(&tokens[tokens.len() - n..], phrase) {
                tokens.truncate(tokens.len() - n);
                changed = true;
            }
            if tokens.len() > n && matches(&tokens[..n], phrase) {
                tokens.drain(..n);
                changed = true;
            }
        }
        if !changed {
            return tokens;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_location_suffix() {
        let cfg = NormalizerConfig::new(["New York"], true);
        assert_eq!(
            normalize("Time Square New York", &cfg),
            vec!["time", "square"]
        );
    }

    #[test]
    fn special_characters_become_spaces() {
        assert_eq!(
            normalize("Corner $ Deli", &NormalizerConfig::plain()),
            vec!["corner", "deli"]
        );
        assert_eq!(
            normalize("Joe's☕Cafe!!", &NormalizerConfig::plain()),
            vec!["joe", "s", "cafe"]
        );
    }

    #[test]
    fn empty_input_gives_no_tokens() {
        assert!(normalize("", &NormalizerConfig::default()).is_empty());
        assert!(normalize("  $$ ", &NormalizerConfig::default()).is_empty());
    }

    #[test]
    fn strips_prefixes_and_repeats() {
        let cfg = NormalizerConfig::new(["new york", "ny"], true);
        assert_eq!(normalize("NY Pizza New York NY", &cfg), vec!["pizza"]);
    }

    #[test]
    fn never_strips_to_empty() {
        let cfg = NormalizerConfig::new(["salem"], true);
        assert_eq!(normalize("Salem", &cfg), vec!["salem"]);
    }

    #[test]
    fn case_preserving_mode_still_matches_gazetteer() {
        let cfg = NormalizerConfig::new(["new york"], false);
        assert_eq!(normalize("Katz Deli New York", &cfg), vec!["Katz", "Deli"]);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}", city in prop::sample::select(vec!["salem", "new haven", "lake city"])) {
            let cfg = NormalizerConfig::default();
            let text = format!("{s} {city}");
            let once = normalize(&text, &cfg);
            let twice = normalize(&once.join(" "), &cfg);
            prop_assert_eq!(once, twice);
        }
    }
}
