//! Word-boundary phrase matching and whitespace normalization shared by the
//! verbalizer and the hallucination metric.

/// A phrase occurrence in some text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseMatch<'a, T> {
    pub start: usize,
    pub end: usize,
    pub value: &'a T,
}

/// Longest-match, ASCII case-insensitive, word-boundary-anchored matcher.
#[derive(Debug, Clone)]
pub struct PhraseMatcher<T> {
    phrases: Vec<(String, T)>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

impl<T> PhraseMatcher<T> {
    pub fn new(phrases: impl IntoIterator<Item = (String, T)>) -> Self {
        let mut phrases: Vec<(String, T)> = phrases
            .into_iter()
            .map(|(p, v)| (p.trim().to_string(), v))
            .filter(|(p, _)| !p.is_empty())
            .collect();
        // Stable: equal-length phrases keep insertion order.
        phrases.sort_by_key(|p| std::cmp::Reverse(p.0.len()));
        Self { phrases }
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Non-overlapping matches scanned left to right.
    pub fn find_all<'a>(&'a self, text: &str) -> Vec<PhraseMatch<'a, T>> {
        let mut out = Vec::new();
        if self.phrases.is_empty() {
            return out;
        }
        let mut prev: Option<char> = None;
        let mut skip_until = 0;
        for (i, c) in text.char_indices() {
            let boundary = prev.is_none_or(|p| !is_word_char(p));
            prev = Some(c);
            if i < skip_until || !boundary || !is_word_char(c) {
                continue;
            }
            let hit = self.phrases.iter().find(|(phrase, _)| {
                let end = i + phrase.len();
                text.get(i..end).is_some_and(|s| s.eq_ignore_ascii_case(phrase))
                    && text[end..].chars().next().is_none_or(|n| !is_word_char(n))
            });
            if let Some((phrase, value)) = hit {
                out.push(PhraseMatch { start: i, end: i + phrase.len(), value });
                skip_until = i + phrase.len();
            }
        }
        out
    }
}

/// Collapses whitespace runs to one space, trims, and removes whitespace
/// directly before `. , ; : ! ?`.
pub fn normalize_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        let glue = word.starts_with(['.', ',', ';', ':', '!', '?']);
        if !out.is_empty() && !glue {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn longest_match_wins() {
        let m = PhraseMatcher::new([("dog".to_string(), 1), ("hot dog".to_string(), 2)]);
        let hits = m.find_all("A hot dog and a dog.");
        assert_eq!(hits.iter().map(|h| *h.value).collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn respects_word_boundaries() {
        let m = PhraseMatcher::new([("cat".to_string(), ())]);
        assert!(m.find_all("category concatenate cats").is_empty());
        assert_eq!(m.find_all("Cat, cat-like").len(), 2);
    }

    #[test]
    fn whitespace_normalization() {
        assert_eq!(normalize_whitespace("  a   b \n c . d ,e "), "a b c. d,e");
        assert_eq!(normalize_whitespace(""), "");
    }
}
