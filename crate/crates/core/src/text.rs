//! Small text normalization helpers shared by the cleaning and dedup layers.

/// Trim surrounding whitespace and collapse internal runs of whitespace into
/// a single space. Boilerplate lines vary in indentation; fingerprints must
/// not.
pub fn normalize_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Case-folded whitespace tokens of a text.
pub fn fold_words(text: &str) -> Vec<String> {
    text.split_whitespace().map(|w| w.to_lowercase()).collect()
}

/// True if the text contains a character from the common emoji blocks.
/// Used as the bundled probe predicate for response audits.
pub fn contains_emoji(text: &str) -> bool {
    text.chars().any(|c| {
        let cp = c as u32;
        (0x1F300..=0x1FAFF).contains(&cp)   // pictographs, emoticons, symbols
            || (0x2600..=0x27BF).contains(&cp) // misc symbols + dingbats
            || (0x1F1E6..=0x1F1FF).contains(&cp) // regional indicators
            || cp == 0xFE0F // variation selector-16
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_runs_and_trims() {
        assert_eq!(normalize_whitespace("  a\t b\n\nc  "), "a b c");
        assert_eq!(normalize_whitespace(""), "");
        assert_eq!(normalize_whitespace("   "), "");
    }

    #[test]
    fn fold_words_lowercases() {
        assert_eq!(fold_words("Foo BAR baz"), vec!["foo", "bar", "baz"]);
    }

    #[test]
    fn emoji_detection() {
        assert!(contains_emoji("nice day \u{1F600}"));
        assert!(contains_emoji("check \u{2705}"));
        assert!(!contains_emoji("plain text, no pictographs"));
        assert!(!contains_emoji("múltiple scripts ไทย မြန်မာ"));
    }
}
