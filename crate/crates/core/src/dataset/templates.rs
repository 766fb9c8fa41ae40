//! Query templates and the prompts used to draft the matrices.

use serde::{Deserialize, Serialize};

use super::SymptomSet;
use crate::llm::{DomainTag, RankingQuery, VariantId};

pub const PLACEHOLDER: &str = "{symptoms}";

const SUFFIX: &str = "Please output top 5 possible issues ranked by confidence without additional text.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub domain: DomainTag,
    pub variant: VariantId,
    pub text: String,
}

impl QueryTemplate {
    /// Fails unless `text` contains [`PLACEHOLDER`] exactly once.
    pub fn new(domain: DomainTag, variant: VariantId, text: impl Into<String>) -> Result<Self, String> {
        let text = text.into();
        match text.matches(PLACEHOLDER).count() {
            1 => Ok(QueryTemplate { domain, variant, text }),
            n => Err(format!("template must contain {PLACEHOLDER} exactly once, found {n}")),
        }
    }

    pub fn render(&self, symptoms: &[String]) -> String {
        self.text.replace(PLACEHOLDER, &symptoms.join(", "))
    }
}

pub fn builtin_template(domain: DomainTag, variant: VariantId) -> QueryTemplate {
    use DomainTag::*;
    use VariantId::*;
    let head = match (domain, variant) {
        (Manufacturing, Base) => "Given we observe {symptoms} what critical problems might exist in factory?",
        (Manufacturing, Synonym) => "Given we detect {symptoms} what essential issues might exist in factory?",
        (Manufacturing, Restructured) => {
            "What potentially serious problems in the manufacturing may there be if we notice {symptoms}?"
        }
        (Finance, Base) => "Given we observe {symptoms} what critical financial issue might we have in our company?",
        (Finance, Synonym) => "Given we detect {symptoms} what essential financial issues might we have in our company?",
        (Finance, Restructured) => "What potentially serious financial issues may our company have if we notice {symptoms}?",
        (Medical, Base) => "Given following symptoms: {symptoms} what disease might the patient have?",
        (Medical, Synonym) => "Given following signs: {symptoms} what illness might the patient have?",
        (Medical, Restructured) => "What illness may the patient potentially suffer from if we notice {symptoms}?",
    };
    QueryTemplate::new(domain, variant, format!("{head} {SUFFIX}")).expect("builtin templates have one placeholder")
}

pub fn render_query(template: &QueryTemplate, set: &SymptomSet) -> RankingQuery {
    RankingQuery {
        text: template.render(&set.symptoms),
        domain: template.domain,
        variant: template.variant,
        symptom_set_id: set.id(),
    }
}

/// Prompts for drafting a matrix by hand with a chat model: one asking for
/// the causes, one (with `<the specific problem>` to fill in) asking for the
/// symptoms of each cause.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MatrixPrompts {
    pub causes: &'static str,
    pub symptoms: &'static str,
}

pub fn matrix_prompts(domain: DomainTag) -> MatrixPrompts {
    match domain {
        DomainTag::Manufacturing => MatrixPrompts {
            causes: "In manufacturing, what are the critical problems that can severely impact the health and overall performance of the factory? Output a list of those problems and rank them based on degree of risk to factory.",
            symptoms: "What can we observe in factory to identify the underlying problem <the specific problem>? Output a list of indicators and rank them based on your confidence.",
        },
        DomainTag::Finance => MatrixPrompts {
            causes: "What are the critical financial problems that can severely impact the health and overall performance of a company? Output a list of those problems and rank them based on degree of risk to company.",
            symptoms: "What can we observe in company to identify the underlying problem <the specific problem>? Output a list of indicators and rank them based on your confidence.",
        },
        DomainTag::Medical => MatrixPrompts {
            causes: "What are common diseases with similar symptoms?",
            symptoms: "What can we observe in human body to identify the underlying problem <the specific problem>? Output a list of indicators and rank them based on your confidence.",
        },
    }
}
