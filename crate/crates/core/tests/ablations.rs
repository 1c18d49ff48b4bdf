use std::path::PathBuf;

use jingfang::domain::load_cases;
use jingfang::dsrs::DsrsConfig;
use jingfang::engine::Engine;
use jingfang::eval::{ablate_general_agent, confounder_ablation, DsrsAblationReport, PatientMode};

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

#[test]
fn dropping_the_general_agent_narrows_coverage() {
    let engine = Engine::load(&fixture("general_ablation/engine.json")).unwrap();
    let cases = load_cases(&fixture("general_ablation/cases.jsonl")).unwrap();
    let mode = PatientMode::Extractive { embedder: engine.embedder.clone(), threshold: 0.25 };
    let report = ablate_general_agent(&cases, &engine.consultant(), &mode, Some(engine.chat.as_ref()), 3).unwrap();

    assert_eq!(report.full.completed, cases.len());
    assert_eq!(report.without_general.completed, cases.len());
    assert_eq!(report.without_general.general_questions_merged, 0);
    assert!(report.full.general_questions_merged > 0);
    assert!(
        report.without_general.mean_tqs_categories < report.full.mean_tqs_categories,
        "{} vs {}",
        report.without_general.mean_tqs_categories,
        report.full.mean_tqs_categories
    );
    let sel = report.selection.unwrap();
    assert_eq!(sel.full + sel.without_general + sel.tie, cases.len());
    assert!(report.per_case.iter().all(|c| c.full_rounds == 2 && c.without_general_rounds == 2));
}

#[test]
fn dsrs_ablation_matches_golden_report() {
    let report = confounder_ablation(&DsrsConfig::default()).unwrap();
    let golden = fixture("golden/dsrs-ablation.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        report.write(&golden).unwrap();
    }
    let expected: DsrsAblationReport = serde_json::from_str(&std::fs::read_to_string(&golden).unwrap()).unwrap();
    assert_eq!(report, expected);
    assert!(report.dsrs_hit_rate > report.single_stage_hit_rate);
}
