use serde::{Deserialize, Serialize};

use super::MatchError;
use crate::project::ProjectionStyle;

/// Placeholder replaced by the class name.
pub const CLASS_SLOT: &str = "[n_c]";

/// Every prompt wording evaluated for the three projection styles.
pub const CANDIDATE_TEMPLATES: [&str; 10] = [
    "one model of [n_c]",
    "one line-drawn [n_c]",
    "one photo of one [n_c]",
    "one photo of one standalone [n_c]",
    "one depth map of one standalone [n_c]",
    "one edge map of one standalone [n_c]",
    "one render image of one standalone white [n_c]",
    "one sketch photo of one standalone white [n_c]",
    "one model of [n_c] in linear composition",
    "one photo of one [n_c] in linear composition",
];

/// A style-specific prompt with a single `[n_c]` slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub style: ProjectionStyle,
    template: String,
}

impl PromptTemplate {
    pub fn new(style: ProjectionStyle, template: impl Into<String>) -> Result<Self, MatchError> {
        let template = template.into();
        if template.matches(CLASS_SLOT).count() != 1 {
            return Err(MatchError::BadTemplate(template));
        }
        Ok(Self { style, template })
    }

    /// Best-scoring wording per style.
    pub fn default_for(style: ProjectionStyle) -> Self {
        let template = match style {
            ProjectionStyle::Render => "one model of [n_c] in linear composition",
            ProjectionStyle::Depth => "one line-drawn [n_c]",
            ProjectionStyle::Edge => "one edge map of one standalone [n_c]",
        };
        Self {
            style,
            template: template.to_string(),
        }
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    /// Underscores in dataset class names become spaces.
    pub fn fill(&self, class_name: &str) -> String {
        self.template
            .replace(CLASS_SLOT, &class_name.trim().replace('_', " "))
    }
}

/// Prompt for `class_name` under the default template of `style`.
pub fn build_prompt(style: ProjectionStyle, class_name: &str) -> String {
    PromptTemplate::default_for(style).fill(class_name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_prompts_per_style() {
        assert_eq!(
            build_prompt(ProjectionStyle::Edge, "chair"),
            "one edge map of one standalone chair"
        );
        assert_eq!(
            build_prompt(ProjectionStyle::Render, "table"),
            "one model of table in linear composition"
        );
        assert_eq!(
            build_prompt(ProjectionStyle::Depth, "bed"),
            "one line-drawn bed"
        );
        assert_eq!(
            build_prompt(ProjectionStyle::Depth, "night_stand"),
            "one line-drawn night stand"
        );
    }

    #[test]
    fn templates_need_one_slot() {
        for t in CANDIDATE_TEMPLATES {
            assert!(PromptTemplate::new(ProjectionStyle::Render, t).is_ok());
        }
        assert!(PromptTemplate::new(ProjectionStyle::Edge, "a picture").is_err());
        assert!(PromptTemplate::new(ProjectionStyle::Edge, "[n_c] and [n_c]").is_err());
    }
}
