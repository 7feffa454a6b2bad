/// Lowercases and drops punctuation; whitespace runs collapse to one space.
pub fn normalize_text(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalized whitespace tokens.
pub fn tokenize(s: &str) -> Vec<String> {
    normalize_text(s).split_whitespace().map(str::to_string).collect()
}
