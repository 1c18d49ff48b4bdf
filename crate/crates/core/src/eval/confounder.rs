//! Constructed corpus where symptom matching alone is misled.
//!
//! Five symptom groups, each with two syndromes that present with the same
//! symptoms. Per group there are two target entries (the group's symptoms
//! only partly, plus distinctive findings) and two confounder entries of the
//! other syndrome whose manifestations repeat the case symptoms in full.
//! Every case belongs to a target syndrome, so filtering on the syndrome
//! leaves exactly the two target entries while a pure symptom match puts
//! both confounders first.

use std::sync::Arc;

use super::ablation::{ablate_dsrs, DsrsAblationReport, PredictionSource};
use super::EvalError;
use crate::domain::{CaseRecord, PrescriptionEntry, TqsConfig};
use crate::dsrs::{DsrsConfig, Retriever};
use crate::gateway::{HashedBigramEmbedder, ScriptedBackend, ScriptedEntry};

struct Group {
    symptoms: [&'static str; 6],
    target: &'static str,
    confounder: &'static str,
    target_extras: [&'static str; 2],
    target_formulas: [&'static str; 2],
    confounder_formulas: [&'static str; 2],
}

const GROUPS: [Group; 5] = [
    Group {
        symptoms: ["loose", "stools", "abdominal", "cramping", "urgency", "borborygmi"],
        target: "damp-heat in large intestine",
        confounder: "spleen deficiency with dampness",
        target_extras: ["burning anus foul odour", "yellow greasy coating"],
        target_formulas: ["Gegen Qinlian Decoction", "Baitouweng Decoction"],
        confounder_formulas: ["Shenling Baizhu Powder", "Huoxiang Zhengqi Powder"],
    },
    Group {
        symptoms: ["cough", "sputum", "wheezing", "chest", "tightness", "hoarse"],
        target: "phlegm-heat obstructing the lung",
        confounder: "wind-cold fettering the lung",
        target_extras: ["thick yellow phlegm fever", "red tongue rapid pulse"],
        target_formulas: ["Qingjin Huatan Decoction", "Sangbaipi Decoction"],
        confounder_formulas: ["Mahuang Decoction", "Xiaoqinglong Decoction"],
    },
    Group {
        symptoms: ["insomnia", "palpitations", "dreams", "restless", "forgetful", "anxious"],
        target: "heart-spleen deficiency",
        confounder: "heart-kidney disharmony",
        target_extras: ["poor appetite pale face", "fatigue after meals"],
        target_formulas: ["Guipi Decoction", "Yangxin Decoction"],
        confounder_formulas: ["Jiaotai Pill", "Tianwang Buxin Pill"],
    },
    Group {
        symptoms: ["headache", "dizziness", "tinnitus", "irritable", "flushed", "temples"],
        target: "liver yang rising",
        confounder: "liver fire blazing",
        target_extras: ["sore weak knees", "numb limbs wiry pulse"],
        target_formulas: ["Tianma Gouteng Decoction", "Zhengan Xifeng Decoction"],
        confounder_formulas: ["Longdan Xiegan Decoction", "Danggui Longhui Pill"],
    },
    Group {
        symptoms: ["edema", "swollen", "ankles", "scanty", "urination", "heaviness"],
        target: "spleen-kidney yang deficiency",
        confounder: "lung failing to regulate water",
        target_extras: ["cold limbs aversion to cold", "pale swollen tongue"],
        target_formulas: ["Zhenwu Decoction", "Jisheng Shenqi Pill"],
        confounder_formulas: ["Yuebi Jiashu Decoction", "Fangji Huangqi Decoction"],
    },
];

pub const CONFOUNDER_CASES_PER_GROUP: usize = 10;

fn entry(id: String, syndrome: &str, manifestations: String, formula: &str) -> PrescriptionEntry {
    PrescriptionEntry {
        id,
        disease_category: String::new(),
        syndrome_type: syndrome.into(),
        etiology: String::new(),
        affected_organ: String::new(),
        clinical_manifestations: manifestations,
        syndrome_mechanism: String::new(),
        treatment_methods: String::new(),
        representative_formula: formula.into(),
        herbs: Vec::new(),
    }
}

/// 20 entries and 50 cases.
pub fn confounder_corpus() -> (Vec<PrescriptionEntry>, Vec<CaseRecord>) {
    let mut db = Vec::new();
    let mut cases = Vec::new();
    for (g, group) in GROUPS.iter().enumerate() {
        let all = group.symptoms.join(" ");
        let half = group.symptoms[..3].join(" ");
        for t in 0..2 {
            db.push(entry(
                format!("g{g}-t{}", t + 1),
                group.target,
                format!("{half} {}", group.target_extras[t]),
                group.target_formulas[t],
            ));
        }
        db.push(entry(format!("g{g}-c1"), group.confounder, all.clone(), group.confounder_formulas[0]));
        db.push(entry(format!("g{g}-c2"), group.confounder, format!("{all} fatigue"), group.confounder_formulas[1]));
        for i in 0..CONFOUNDER_CASES_PER_GROUP {
            cases.push(CaseRecord {
                id: format!("g{g}-case{i:02}"),
                narrative: all.clone(),
                gold_syndrome: Some(group.target.into()),
                gold_formula: Some(group.target_formulas[i % 2].into()),
                tqs_extract: None,
            });
        }
    }
    (db, cases)
}

/// The retrieval ablation on [`confounder_corpus`] with gold syndromes,
/// hashed embeddings and an offline attribute extractor that reports
/// nothing beyond the syndrome. Fully deterministic.
pub fn confounder_ablation(config: &DsrsConfig) -> Result<DsrsAblationReport, EvalError> {
    let (db, cases) = confounder_corpus();
    let retriever = Retriever::new(db, Arc::new(HashedBigramEmbedder::default()))?;
    let gateway = ScriptedBackend::new(
        vec![
            ScriptedEntry::contains("ROLE: attributes", "etiology: none\naffected_organ: none"),
            ScriptedEntry::contains("ROLE: tr", "Candidates restricted to the predicted syndrome."),
        ],
        None,
    )?;
    ablate_dsrs(&cases, &retriever, &gateway, &TqsConfig::default(), config, PredictionSource::Gold)
}
