use super::tree::Label;

/// Maps a registry status to a class, or `None` when the study is excluded.
///
/// Completed studies are class 0; terminated, withdrawn and suspended studies
/// are grouped into class 1. Only interventional studies are kept. Matching is
/// case-insensitive after trimming.
pub fn assign_label(overall_status: &str, study_type: &str) -> Option<Label> {
    if !study_type.trim().eq_ignore_ascii_case("interventional") {
        return None;
    }
    let status = overall_status.trim().to_ascii_lowercase();
    match status.as_str() {
        "completed" => Some(Label::Completed),
        "terminated" | "withdrawn" | "suspended" => Some(Label::Terminated),
        _ => None,
    }
}
