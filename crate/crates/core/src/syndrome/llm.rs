use super::{normalize_label, SyndromeClassifier, SyndromeError, SyndromePrediction};
use crate::gateway::{ChatBackend, ChatExchange};
use crate::prompts;

/// Prompted classifier. With a non-empty label space, replies that name a
/// label case-insensitively are mapped to its canonical spelling and
/// anything else is flagged out of vocabulary.
#[derive(Debug, Clone)]
pub struct LlmClassifier {
    labels: Vec<String>,
}

impl LlmClassifier {
    pub fn new(labels: Vec<String>) -> Self {
        Self { labels }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl SyndromeClassifier for LlmClassifier {
    fn id(&self) -> &str {
        "llm"
    }

    fn classify(&self, record_text: &str, gateway: &dyn ChatBackend) -> Result<SyndromePrediction, SyndromeError> {
        let reply = gateway.chat(ChatExchange::new(prompts::syndrome_system(&self.labels), record_text))?;
        let fields = prompts::parse_keyed(reply.response_text());
        let get = |key: &str| fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.trim().to_string());

        let raw_label = get("label")
            .filter(|l| !l.is_empty())
            .ok_or_else(|| SyndromeError::ClassifierFailure(format!("no label in {:?}", reply.response_text())))?;
        let confidence = get("confidence")
            .and_then(|c| c.parse::<f64>().ok())
            .filter(|c| c.is_finite())
            .map_or(1.0, |c| c.clamp(0.0, 1.0));

        let wanted = normalize_label(&raw_label);
        let canonical = self.labels.iter().find(|l| normalize_label(l) == wanted);
        Ok(SyndromePrediction {
            label: canonical.cloned().unwrap_or(raw_label),
            confidence,
            rationale: get("rationale").unwrap_or_default(),
            classifier_id: self.id().to_string(),
            out_of_vocabulary: !self.labels.is_empty() && canonical.is_none(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedBackend;

    fn run(reply: &str, labels: &[&str]) -> Result<SyndromePrediction, SyndromeError> {
        let backend = ScriptedBackend::new(vec![], Some(reply.into())).unwrap();
        LlmClassifier::new(labels.iter().map(|s| s.to_string()).collect()).classify("record", &backend)
    }

    #[test]
    fn canonicalizes_case() {
        let p = run("label: Damp-Heat  Sinking Downward", &["damp-heat sinking downward"]).unwrap();
        assert_eq!(p.label, "damp-heat sinking downward");
        assert_eq!(p.confidence, 1.0);
    }

    #[test]
    fn unknown_label_flagged() {
        let p = run("label: wind-cold\nconfidence: 7", &["damp-heat sinking downward"]).unwrap();
        assert!(p.out_of_vocabulary);
        assert_eq!(p.confidence, 1.0);
    }

    #[test]
    fn missing_label_is_failure() {
        assert!(matches!(run("rationale: unsure", &[]), Err(SyndromeError::ClassifierFailure(_))));
    }
}
