//! Seeded synthetic corpora for offline runs and tests.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::ingest::{write_knowledge, write_records, IngestError};
use crate::model::{
    AspectKey, CityTier, ConsultationRecord, Department, DoctorMeta, Gender, HospitalPrestige, KnowledgeEntry,
    KnowledgeKind, Title, Turn,
};
use crate::util::{atomic_write, derive_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSizes {
    pub records: usize,
    pub diseases: usize,
    pub medicines: usize,
}

impl Default for SynthSizes {
    fn default() -> Self {
        SynthSizes { records: 200, diseases: 50, medicines: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixtures {
    pub records: Vec<ConsultationRecord>,
    pub diseases: Vec<KnowledgeEntry>,
    pub medicines: Vec<KnowledgeEntry>,
}

// Few departments keep every (department, length band) bucket well stocked
// at fixture scale.
const DEPARTMENTS: [(Department, u32); 6] = [
    (Department::InternalMedicine, 5),
    (Department::Dermatovenereology, 3),
    (Department::Otorhinolaryngology, 3),
    (Department::Gynecology, 2),
    (Department::Orthopedics, 2),
    (Department::Psychiatry, 1),
];

const SYMPTOMS: [&str; 12] = [
    "a dry cough",
    "a sore throat",
    "itchy red patches on my arm",
    "pain in my lower back",
    "trouble sleeping",
    "a blocked nose",
    "stomach ache after meals",
    "ringing in my ears",
    "swelling in my knee",
    "a mild fever",
    "headaches in the afternoon",
    "irregular periods",
];

const DURATIONS: [&str; 6] = ["two days", "a week", "about a month", "three months", "since last year", "on and off"];

const PATIENT_FOLLOWUPS: [&str; 8] = [
    "It gets worse at night.",
    "I took some painkillers but they did not help much.",
    "No allergies that I know of.",
    "Should I go to the hospital?",
    "Is it serious?",
    "我最近工作压力比较大。",
    "Can I keep exercising?",
    "Thank you, doctor.",
];

const DOCTOR_LINES: [&str; 12] = [
    "How long has this been going on?",
    "Do you have any other symptoms?",
    "Don't worry, this is usually manageable.",
    "Please avoid spicy food for now.",
    "I suggest a blood test to rule out infection.",
    "You can take the medicine twice a day after meals.",
    "If it gets worse, please visit the clinic in person.",
    "Get enough rest and drink warm water.",
    "Any history of similar problems?",
    "建议您先观察两天。",
    "That sounds like a mild inflammation.",
    "Let me know how you feel after a week.",
];

const DISEASE_ADJ: [&str; 5] = ["Acute", "Chronic", "Allergic", "Recurrent", "Seasonal"];
const DISEASE_BASE: [&str; 10] = [
    "bronchitis",
    "gastritis",
    "dermatitis",
    "sinusitis",
    "conjunctivitis",
    "arthritis",
    "pharyngitis",
    "otitis media",
    "tendinitis",
    "cystitis",
];
const DRUG_STEM: [&str; 10] = [
    "Amoxalin", "Cetorin", "Loratex", "Ibuprol", "Metforan", "Predanol", "Omeprin", "Azithrol", "Salbutex", "Dexalin",
];
const DRUG_FORM: [&str; 5] = ["tablets", "capsules", "granules", "syrup", "ointment"];

fn weighted_department(rng: &mut ChaCha8Rng) -> Department {
    let total: u32 = DEPARTMENTS.iter().map(|d| d.1).sum();
    let mut x = rng.random_range(0..total);
    for (d, w) in DEPARTMENTS {
        if x < w {
            return d;
        }
        x -= w;
    }
    unreachable!()
}

fn doctor_meta(rng: &mut ChaCha8Rng) -> DoctorMeta {
    let experience_years = rng.random_range(1..36);
    DoctorMeta {
        experience_years,
        hospital_city_tier: *[CityTier::Tier1, CityTier::Tier2, CityTier::Tier3].choose(rng).expect("non-empty"),
        hospital_prestige: *[HospitalPrestige::TopTier, HospitalPrestige::WellKnown, HospitalPrestige::Ordinary]
            .choose(rng)
            .expect("non-empty"),
        gender: if rng.random_bool(0.5) { Gender::Female } else { Gender::Male },
        age: rng.random_bool(0.85).then(|| 24 + experience_years + rng.random_range(0..6)),
        times_consulted: (10f64.powf(rng.random_range(1.5..4.5))).round() as u64,
        title: match experience_years {
            0..=4 => Title::Junior,
            5..=11 => Title::Attending,
            12..=19 => Title::Associate,
            _ => Title::Chief,
        },
    }
}

fn record(i: usize, rng: &mut ChaCha8Rng) -> ConsultationRecord {
    let department = weighted_department(rng);
    let rounds = rng.random_range(1..=7);
    let symptom = SYMPTOMS.choose(rng).expect("non-empty");
    let mut turns = vec![Turn::patient(format!(
        "Hello doctor, I have had {symptom} for {}.",
        DURATIONS.choose(rng).expect("non-empty")
    ))];
    for r in 0..rounds {
        let n = rng.random_range(1..=3);
        let lines: Vec<&str> = DOCTOR_LINES.choose_multiple(rng, n).copied().collect();
        turns.push(Turn::doctor(lines.join(" ")));
        if r + 1 < rounds {
            turns.push(Turn::patient(PATIENT_FOLLOWUPS.choose(rng).expect("non-empty").to_string()));
        }
    }
    let mut rec = ConsultationRecord::new(format!("rec-{i:04}"), department, turns);
    if rng.random_bool(0.9) {
        rec.doctor_meta = Some(doctor_meta(rng));
    }
    rec
}

fn aspect_text(aspect: AspectKey, name: &str, rng: &mut ChaCha8Rng) -> String {
    let detail = rng.random_range(1..=9);
    match aspect {
        AspectKey::Symptoms => format!("{name} typically presents with discomfort grade {detail} and local irritation."),
        AspectKey::Causes => format!("{name} is most often triggered by infection or irritants, risk factor {detail}."),
        AspectKey::Diagnosis => format!("Diagnosis of {name} relies on history, examination and test panel {detail}."),
        AspectKey::Treatment => format!("{name} is treated with rest, symptomatic relief and regimen {detail}."),
        AspectKey::Lifestyle => format!("Patients with {name} should sleep regularly and avoid trigger {detail}."),
        AspectKey::Prevention => format!("{name} can be prevented by hygiene measure {detail} and vaccination."),
        AspectKey::WhenToConsult => format!("See a doctor about {name} if fever lasts beyond {detail} days."),
        AspectKey::Indications => format!("{name} is indicated for infections and inflammation, class {detail}."),
        AspectKey::UsageDosage => format!("Take {name} {detail} times daily after meals."),
        AspectKey::Contraindications => format!("{name} must not be used with known hypersensitivity, group {detail}."),
        AspectKey::Precautions => format!("Use {name} with care in pregnancy and liver disease, level {detail}."),
        AspectKey::Pharmacology => format!("{name} acts by inhibiting pathway {detail}."),
        AspectKey::Components => format!("Each dose of {name} contains {detail}0 mg of active ingredient."),
    }
}

fn entry(kind: KnowledgeKind, name: String, rng: &mut ChaCha8Rng) -> KnowledgeEntry {
    let all = kind.aspects();
    let n = rng.random_range(3..=all.len());
    let aspects: BTreeMap<AspectKey, String> = all
        .choose_multiple(rng, n)
        .map(|&a| (a, aspect_text(a, &name, rng)))
        .collect();
    KnowledgeEntry { kind, name, aspects }
}

pub fn generate(seed: u64, sizes: SynthSizes) -> Fixtures {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth-records"));
    let records = (0..sizes.records).map(|i| record(i, &mut rng)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth-knowledge"));
    let disease_names = DISEASE_ADJ.iter().flat_map(|a| DISEASE_BASE.iter().map(move |b| format!("{a} {b}")));
    let diseases = disease_names
        .take(sizes.diseases)
        .collect::<Vec<_>>()
        .into_iter()
        .map(|n| entry(KnowledgeKind::Disease, n, &mut rng))
        .collect();
    let medicine_names = DRUG_FORM.iter().flat_map(|f| DRUG_STEM.iter().map(move |s| format!("{s} {f}")));
    let medicines = medicine_names
        .take(sizes.medicines)
        .collect::<Vec<_>>()
        .into_iter()
        .map(|n| entry(KnowledgeKind::Medicine, n, &mut rng))
        .collect();
    Fixtures { records, diseases, medicines }
}

/// The config written next to generated fixtures.
pub fn fixture_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig { seed, ..PipelineConfig::default() };
    cfg.eval.simulation_seeds = Some(24);
    cfg.judge.max_rounds = 8;
    cfg
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Write records, both knowledge bases and a `pipeline.toml` into `dir`.
pub fn write_fixtures(dir: &Path, seed: u64, sizes: SynthSizes) -> Result<Vec<PathBuf>, SynthError> {
    let f = generate(seed, sizes);
    let cfg = fixture_config(seed);
    let paths = [
        dir.join(&cfg.paths.records),
        dir.join(&cfg.paths.diseases),
        dir.join(&cfg.paths.medicines),
        dir.join("pipeline.toml"),
    ];
    write_records(&paths[0], &f.records)?;
    write_knowledge(&paths[1], &f.diseases)?;
    write_knowledge(&paths[2], &f.medicines)?;
    atomic_write(&paths[3], cfg.to_toml().as_bytes())?;
    Ok(paths.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Validate;

    #[test]
    fn deterministic_and_valid() {
        let a = generate(7, SynthSizes::default());
        assert_eq!(a, generate(7, SynthSizes::default()));
        assert_ne!(a.records, generate(8, SynthSizes::default()).records);
        assert_eq!(a.records.len(), 200);
        assert_eq!(a.diseases.len(), 50);
        assert_eq!(a.medicines.len(), 50);
        for r in &a.records {
            assert!(r.violations().is_empty(), "{:?}", r.violations());
        }
        for e in a.diseases.iter().chain(&a.medicines) {
            assert!(e.violations().is_empty());
        }
    }

    #[test]
    fn covers_every_length_band() {
        use crate::model::LengthBand;
        let f = generate(1, SynthSizes::default());
        for band in [LengthBand::Short, LengthBand::Medium, LengthBand::Long] {
            assert!(f.records.iter().any(|r| r.length_band() == band));
        }
    }

    #[test]
    fn written_fixtures_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_fixtures(dir.path(), 3, SynthSizes::default()).unwrap();
        let cfg = PipelineConfig::load(&paths[3]).unwrap();
        assert_eq!(cfg.seed, 3);
        let loaded = crate::ingest::load_records(&cfg.paths.records, crate::ingest::ParseMode::Strict).unwrap();
        assert_eq!(loaded.items, generate(3, SynthSizes::default()).records);
    }
}
