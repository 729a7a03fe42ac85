//! Word-boundary helpers shared by term counting and pronoun rewriting.
//!
//! A word character is an alphanumeric code point or `_`. A match is
//! word-bounded when neither neighbouring character is a word character.

#[inline]
pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Maximal runs of word characters, as `(byte_start, run)`.
pub fn word_runs(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut chars = text.char_indices().peekable();
    std::iter::from_fn(move || {
        while let Some(&(_, c)) = chars.peek() {
            if is_word_char(c) {
                break;
            }
            chars.next();
        }
        let (start, _) = *chars.peek()?;
        let mut end = start;
        while let Some(&(i, c)) = chars.peek() {
            if !is_word_char(c) {
                break;
            }
            end = i + c.len_utf8();
            chars.next();
        }
        Some((start, &text[start..end]))
    })
}

/// Byte offsets of every word-bounded occurrence of `needle` in `haystack`.
pub fn bounded_matches<'a>(haystack: &'a str, needle: &'a str) -> impl Iterator<Item = usize> + 'a {
    let mut from = 0;
    std::iter::from_fn(move || {
        if needle.is_empty() {
            return None;
        }
        while let Some(rel) = haystack[from..].find(needle) {
            let start = from + rel;
            let end = start + needle.len();
            let before_ok = haystack[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
            let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word_char(c));
            // Step past the first char so overlapping candidates are still tried.
            from = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
            if before_ok && after_ok {
                return Some(start);
            }
        }
        None
    })
}

pub fn contains_bounded(haystack: &str, needle: &str) -> bool {
    bounded_matches(haystack, needle).next().is_some()
}
