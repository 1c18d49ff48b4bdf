use std::collections::BTreeMap;

use super::MaccmError;
use crate::domain::{ConsultationState, MedicalRecord, TqsConfig};
use crate::gateway::{ChatBackend, ChatExchange};
use crate::prompts;

/// Record agent: condenses the consultation so far into TQS-keyed sections.
///
/// Lines whose key is not a TQS category are kept only in `raw_summary`.
pub fn summarize_record(
    state: &ConsultationState,
    round: usize,
    gateway: &dyn ChatBackend,
    tqs: &TqsConfig,
) -> Result<MedicalRecord, MaccmError> {
    let reply = gateway.chat(ChatExchange::new(prompts::record_system(tqs), prompts::record_user(state)))?;
    let raw = reply.response_text().to_string();
    let mut sections: BTreeMap<String, String> = BTreeMap::new();
    for (key, value) in prompts::parse_keyed(&raw) {
        if let Some(name) = tqs.resolve(&key) {
            sections
                .entry(name.to_string())
                .and_modify(|v| {
                    v.push_str("; ");
                    v.push_str(&value);
                })
                .or_insert(value);
        }
    }
    Ok(MedicalRecord::new(sections, raw, round, tqs)?)
}
