use serde::{Deserialize, Serialize};

/// A draft that was not posted, fed back into the next attempt's prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedDraft {
    pub text: String,
    pub reason: String,
}

/// Socratic close: the message must end in a question mark (ASCII or full-width).
pub fn ends_with_question(text: &str) -> bool {
    let trimmed = text.trim_end_matches(|c: char| c.is_whitespace() || c == '"' || c == '\'' || c == ')');
    trimmed.ends_with('?') || trimmed.ends_with('？')
}

pub(crate) fn rejected_section(rejected: &[RejectedDraft]) -> String {
    if rejected.is_empty() {
        return String::new();
    }
    let mut out = String::from(
        "\nEarlier drafts were rejected. Your message must differ clearly from every one of them in wording and in the point it makes:\n",
    );
    for draft in rejected {
        out.push_str(&format!("- ({}) {}\n", draft.reason, draft.text));
    }
    out
}
