//! Label normalization used everywhere a free-text label enters the system.

/// Lowercase, trim, and collapse internal whitespace runs to one space.
///
/// No singularization or other linguistic processing is applied.
pub fn normalize(label: &str) -> String {
    label
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// True when `label` is already in normalized form.
pub fn is_normalized(label: &str) -> bool {
    normalize(label) == label
}
