//! Domain types shared by every stage, plus record normalisation and
//! invariant checking.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("record {id}: no patient or no doctor turn survives normalization")]
    EmptyAfterNormalization { id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Patient,
    Doctor,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Patient => "patient",
            Role::Doctor => "doctor",
        }
    }
}

/// One utterance in a consultation. `index` is derived from position and is
/// not part of the serialized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    #[serde(skip)]
    pub index: usize,
}

impl Turn {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Turn {
            role,
            text: text.into(),
            index: 0,
        }
    }

    pub fn patient(text: impl Into<String>) -> Self {
        Self::new(Role::Patient, text)
    }

    pub fn doctor(text: impl Into<String>) -> Self {
        Self::new(Role::Doctor, text)
    }
}

/// Outpatient departments used for matching and heterogeneity tables.
/// Labels the classifier does not recognise fold into `Others`;
/// `Unclassified` marks records that have not been through classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Department {
    InternalMedicine,
    Orthopedics,
    Otorhinolaryngology,
    Dermatovenereology,
    Psychiatry,
    Gynecology,
    Ophthalmology,
    OralMaxillofacialSurgery,
    Surgery,
    Andrology,
    Others,
    Unclassified,
}

impl Department {
    /// The eleven classifiable departments, in report order.
    pub const CLASSIFIED: [Department; 11] = [
        Department::InternalMedicine,
        Department::Orthopedics,
        Department::Otorhinolaryngology,
        Department::Dermatovenereology,
        Department::Psychiatry,
        Department::Gynecology,
        Department::Ophthalmology,
        Department::OralMaxillofacialSurgery,
        Department::Surgery,
        Department::Andrology,
        Department::Others,
    ];

    pub const ALL: [Department; 12] = [
        Department::InternalMedicine,
        Department::Orthopedics,
        Department::Otorhinolaryngology,
        Department::Dermatovenereology,
        Department::Psychiatry,
        Department::Gynecology,
        Department::Ophthalmology,
        Department::OralMaxillofacialSurgery,
        Department::Surgery,
        Department::Andrology,
        Department::Others,
        Department::Unclassified,
    ];

    /// Wire key used in corpus files.
    pub fn key(self) -> &'static str {
        match self {
            Department::InternalMedicine => "internal_medicine",
            Department::Orthopedics => "orthopedics",
            Department::Otorhinolaryngology => "otorhinolaryngology",
            Department::Dermatovenereology => "dermatovenereology",
            Department::Psychiatry => "psychiatry",
            Department::Gynecology => "gynecology",
            Department::Ophthalmology => "ophthalmology",
            Department::OralMaxillofacialSurgery => "oral_maxillofacial_surgery",
            Department::Surgery => "surgery",
            Department::Andrology => "andrology",
            Department::Others => "others",
            Department::Unclassified => "unclassified",
        }
    }

    /// Human-readable name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Department::InternalMedicine => "Internal Medicine",
            Department::Orthopedics => "Orthopedics",
            Department::Otorhinolaryngology => "Otorhinolaryngology (ENT)",
            Department::Dermatovenereology => "Dermatovenereology",
            Department::Psychiatry => "Psychiatry",
            Department::Gynecology => "Gynecology",
            Department::Ophthalmology => "Ophthalmology",
            Department::OralMaxillofacialSurgery => "Oral and Maxillofacial Surgery",
            Department::Surgery => "Surgery",
            Department::Andrology => "Andrology",
            Department::Others => "Others",
            Department::Unclassified => "Unclassified",
        }
    }

    /// Map a free-form label (wire key, display name, common alias or Chinese
    /// department name) onto the closed set. Anything unrecognised is `Others`.
    pub fn from_label(label: &str) -> Department {
        let trimmed = label.trim();
        let norm: String = trimmed
            .to_lowercase()
            .replace("(ent)", "")
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '_' })
            .collect::<String>()
            .split('_')
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("_");
        match norm.as_str() {
            "internal_medicine" | "内科" => Department::InternalMedicine,
            "orthopedics" | "orthopaedics" | "骨科" => Department::Orthopedics,
            "otorhinolaryngology" | "otolaryngology" | "ent" | "耳鼻喉科" | "耳鼻咽喉科" => {
                Department::Otorhinolaryngology
            }
            "dermatovenereology" | "dermatology" | "皮肤科" | "皮肤性病科" => {
                Department::Dermatovenereology
            }
            "psychiatry" | "精神科" | "精神心理科" => Department::Psychiatry,
            "gynecology" | "gynaecology" | "妇科" => Department::Gynecology,
            "ophthalmology" | "眼科" => Department::Ophthalmology,
            "oral_maxillofacial_surgery" | "oral_and_maxillofacial_surgery" | "口腔颌面外科" => {
                Department::OralMaxillofacialSurgery
            }
            "surgery" | "general_surgery" | "外科" => Department::Surgery,
            "andrology" | "男科" => Department::Andrology,
            "unclassified" => Department::Unclassified,
            _ => Department::Others,
        }
    }
}

impl fmt::Display for Department {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl Serialize for Department {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for Department {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Department::from_label(&s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    Human,
    Model,
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CityTier {
    Tier1,
    Tier2,
    Tier3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HospitalPrestige {
    Ordinary,
    WellKnown,
    TopTier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Title {
    Junior,
    Attending,
    Associate,
    Chief,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperienceBand {
    Under10,
    From10To19,
    Over20,
}

impl ExperienceBand {
    pub fn of(years: u32) -> Self {
        match years {
            0..=9 => ExperienceBand::Under10,
            10..=19 => ExperienceBand::From10To19,
            _ => ExperienceBand::Over20,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ExperienceBand::Under10 => "0-9",
            ExperienceBand::From10To19 => "10-19",
            ExperienceBand::Over20 => "20+",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgeBand {
    Under30,
    From30To40,
    From40To50,
    Over50,
}

impl AgeBand {
    pub fn of(age: u32) -> Self {
        match age {
            0..=29 => AgeBand::Under30,
            30..=39 => AgeBand::From30To40,
            40..=49 => AgeBand::From40To50,
            _ => AgeBand::Over50,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeBand::Under30 => "<30",
            AgeBand::From30To40 => "30-40",
            AgeBand::From40To50 => "40-50",
            AgeBand::Over50 => "50+",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConsultsBand {
    Under1000,
    From1000To5000,
    From5000To10000,
    Over10000,
}

impl ConsultsBand {
    pub fn of(times: u64) -> Self {
        match times {
            0..=999 => ConsultsBand::Under1000,
            1000..=4999 => ConsultsBand::From1000To5000,
            5000..=9999 => ConsultsBand::From5000To10000,
            _ => ConsultsBand::Over10000,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ConsultsBand::Under1000 => "<1000",
            ConsultsBand::From1000To5000 => "1000-5000",
            ConsultsBand::From5000To10000 => "5000-10000",
            ConsultsBand::Over10000 => "10000+",
        }
    }
}

/// Conversation-length bands over total turn count. Odd counts between the
/// bands fall into the band below (7 -> 2-6, 11 -> 8-10).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthBand {
    Short,
    Medium,
    Long,
}

impl LengthBand {
    pub fn of(turns: usize) -> Self {
        match turns {
            0..=7 => LengthBand::Short,
            8..=11 => LengthBand::Medium,
            _ => LengthBand::Long,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LengthBand::Short => "2-6",
            LengthBand::Medium => "8-10",
            LengthBand::Long => "12+",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoctorMeta {
    pub experience_years: u32,
    pub hospital_city_tier: CityTier,
    pub hospital_prestige: HospitalPrestige,
    #[serde(default)]
    pub gender: Gender,
    #[serde(default)]
    pub age: Option<u32>,
    pub times_consulted: u64,
    #[serde(default)]
    pub title: Title,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsultationRecord {
    pub id: String,
    pub department: Department,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doctor_meta: Option<DoctorMeta>,
    pub source: RecordSource,
}

impl ConsultationRecord {
    pub fn new(id: impl Into<String>, department: Department, turns: Vec<Turn>) -> Self {
        let mut r = ConsultationRecord {
            id: id.into(),
            department,
            turns,
            doctor_meta: None,
            source: RecordSource::Human,
        };
        r.reindex();
        r
    }

    pub fn reindex(&mut self) {
        for (i, t) in self.turns.iter_mut().enumerate() {
            t.index = i;
        }
    }

    pub fn doctor_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.role == Role::Doctor)
    }

    pub fn first_patient_turn(&self) -> Option<&Turn> {
        self.turns.iter().find(|t| t.role == Role::Patient)
    }

    pub fn length_band(&self) -> LengthBand {
        LengthBand::of(self.turns.len())
    }
}

/// Canonicalise a raw record: blank turns and leading doctor turns are
/// dropped, consecutive same-role turns are merged with a newline, and
/// indices are reassigned.
pub fn normalize(raw: &ConsultationRecord) -> Result<ConsultationRecord, ModelError> {
    let mut turns: Vec<Turn> = Vec::with_capacity(raw.turns.len());
    for t in raw
        .turns
        .iter()
        .filter(|t| !t.text.trim().is_empty())
        .skip_while(|t| t.role == Role::Doctor)
    {
        match turns.last_mut() {
            Some(prev) if prev.role == t.role => {
                prev.text.push('\n');
                prev.text.push_str(&t.text);
            }
            _ => turns.push(Turn::new(t.role, t.text.clone())),
        }
    }
    let has_patient = turns.iter().any(|t| t.role == Role::Patient);
    let has_doctor = turns.iter().any(|t| t.role == Role::Doctor);
    if !has_patient || !has_doctor {
        return Err(ModelError::EmptyAfterNormalization { id: raw.id.clone() });
    }
    let mut out = ConsultationRecord {
        id: raw.id.clone(),
        department: raw.department,
        turns,
        doctor_meta: raw.doctor_meta.clone(),
        source: raw.source,
    };
    out.reindex();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyId,
    MinTurns,
    FirstTurnNotPatient,
    RolesNotAlternating,
    BlankText,
    IndexMismatch,
    Range,
    EmptyName,
    DisallowedAspect,
    NoAspects,
    BlankAspect,
    QuestionMissingName,
}

/// One invariant violation, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub kind: ViolationKind,
    pub detail: String,
}

impl Violation {
    fn new(path: impl Into<String>, kind: ViolationKind, detail: impl Into<String>) -> Self {
        Violation {
            path: path.into(),
            kind,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?} ({})", self.path, self.kind, self.detail)
    }
}

/// Invariant checking. Violations are data; an empty list means valid.
pub trait Validate {
    fn violations_at(&self, prefix: &str) -> Vec<Violation>;

    fn violations(&self) -> Vec<Violation> {
        self.violations_at("")
    }

    fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }
}

fn join_path(prefix: &str, field: &str) -> String {
    if prefix.is_empty() {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    }
}

fn check_score(out: &mut Vec<Violation>, path: String, value: f64) {
    if !(0.0..=100.0).contains(&value) {
        out.push(Violation::new(
            path,
            ViolationKind::Range,
            format!("{value} not in [0,100]"),
        ));
    }
}

impl Validate for ConsultationRecord {
    fn violations_at(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.id.trim().is_empty() {
            out.push(Violation::new(
                join_path(prefix, "id"),
                ViolationKind::EmptyId,
                "id is empty",
            ));
        }
        let turns_path = join_path(prefix, "turns");
        if self.turns.len() < 2 {
            out.push(Violation::new(
                turns_path.clone(),
                ViolationKind::MinTurns,
                format!("{} turn(s), need at least 2", self.turns.len()),
            ));
        }
        if let Some(first) = self.turns.first() {
            if first.role != Role::Patient {
                out.push(Violation::new(
                    format!("{turns_path}[0].role"),
                    ViolationKind::FirstTurnNotPatient,
                    "first turn must be the patient",
                ));
            }
        }
        for (i, t) in self.turns.iter().enumerate() {
            if t.text.trim().is_empty() {
                out.push(Violation::new(
                    format!("{turns_path}[{i}].text"),
                    ViolationKind::BlankText,
                    "turn text is blank",
                ));
            }
            if t.index != i {
                out.push(Violation::new(
                    format!("{turns_path}[{i}].index"),
                    ViolationKind::IndexMismatch,
                    format!("index {} at position {i}", t.index),
                ));
            }
            if i > 0 && self.turns[i - 1].role == t.role {
                out.push(Violation::new(
                    format!("{turns_path}[{i}].role"),
                    ViolationKind::RolesNotAlternating,
                    format!("two consecutive {} turns", t.role.as_str()),
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftSkillScores {
    pub professionalism: f64,
    pub explainability: f64,
    pub emotional_support: f64,
}

impl SoftSkillScores {
    pub const FIELDS: [&'static str; 3] = ["professionalism", "explainability", "emotional_support"];

    pub fn new(professionalism: f64, explainability: f64, emotional_support: f64) -> Self {
        SoftSkillScores {
            professionalism,
            explainability,
            emotional_support,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.professionalism, self.explainability, self.emotional_support]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn mean(&self) -> f64 {
        self.as_array().iter().sum::<f64>() / 3.0
    }
}

impl Validate for SoftSkillScores {
    fn violations_at(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, v) in Self::FIELDS.iter().zip(self.as_array()) {
            check_score(&mut out, join_path(prefix, name), v);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub professionalism: f64,
    pub accuracy: f64,
    pub satisfaction: f64,
    pub trustworthiness: f64,
}

impl EvalScores {
    pub const FIELDS: [&'static str; 4] =
        ["professionalism", "accuracy", "satisfaction", "trustworthiness"];

    pub fn new(professionalism: f64, accuracy: f64, satisfaction: f64, trustworthiness: f64) -> Self {
        EvalScores {
            professionalism,
            accuracy,
            satisfaction,
            trustworthiness,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.professionalism, self.accuracy, self.satisfaction, self.trustworthiness]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn medical_expertise(&self) -> f64 {
        (self.professionalism + self.accuracy) / 2.0
    }

    pub fn consumer_preference(&self) -> f64 {
        (self.satisfaction + self.trustworthiness) / 2.0
    }

    pub fn overall(&self) -> f64 {
        self.as_array().iter().sum::<f64>() / 4.0
    }
}

impl Validate for EvalScores {
    fn violations_at(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, v) in Self::FIELDS.iter().zip(self.as_array()) {
            check_score(&mut out, join_path(prefix, name), v);
        }
        out
    }
}

/// A record together with any judge scores attached to it. This is the line
/// shape of scored-corpus files: the record fields plus optional
/// `soft_skills` / `eval_scores` objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    #[serde(flatten)]
    pub record: ConsultationRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_skills: Option<SoftSkillScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_scores: Option<EvalScores>,
}

impl Validate for ScoredRecord {
    fn violations_at(&self, prefix: &str) -> Vec<Violation> {
        let mut out = self.record.violations_at(prefix);
        if let Some(s) = &self.soft_skills {
            out.extend(s.violations_at(&join_path(prefix, "soft_skills")));
        }
        if let Some(s) = &self.eval_scores {
            out.extend(s.violations_at(&join_path(prefix, "eval_scores")));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeKind {
    Disease,
    Medicine,
}

impl KnowledgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KnowledgeKind::Disease => "disease",
            KnowledgeKind::Medicine => "medicine",
        }
    }

    pub fn aspects(self) -> &'static [AspectKey] {
        match self {
            KnowledgeKind::Disease => &AspectKey::DISEASE,
            KnowledgeKind::Medicine => &AspectKey::MEDICINE,
        }
    }
}

impl fmt::Display for KnowledgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Knowledge aspects. Declaration order is the canonical output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AspectKey {
    Symptoms,
    Causes,
    Diagnosis,
    Treatment,
    Lifestyle,
    Prevention,
    WhenToConsult,
    Indications,
    UsageDosage,
    Contraindications,
    Precautions,
    Pharmacology,
    Components,
}

impl AspectKey {
    pub const DISEASE: [AspectKey; 7] = [
        AspectKey::Symptoms,
        AspectKey::Causes,
        AspectKey::Diagnosis,
        AspectKey::Treatment,
        AspectKey::Lifestyle,
        AspectKey::Prevention,
        AspectKey::WhenToConsult,
    ];

    pub const MEDICINE: [AspectKey; 6] = [
        AspectKey::Indications,
        AspectKey::UsageDosage,
        AspectKey::Contraindications,
        AspectKey::Precautions,
        AspectKey::Pharmacology,
        AspectKey::Components,
    ];

    pub fn kind(self) -> KnowledgeKind {
        if Self::DISEASE.contains(&self) {
            KnowledgeKind::Disease
        } else {
            KnowledgeKind::Medicine
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AspectKey::Symptoms => "symptoms",
            AspectKey::Causes => "causes",
            AspectKey::Diagnosis => "diagnosis",
            AspectKey::Treatment => "treatment",
            AspectKey::Lifestyle => "lifestyle",
            AspectKey::Prevention => "prevention",
            AspectKey::WhenToConsult => "when_to_consult",
            AspectKey::Indications => "indications",
            AspectKey::UsageDosage => "usage_dosage",
            AspectKey::Contraindications => "contraindications",
            AspectKey::Precautions => "precautions",
            AspectKey::Pharmacology => "pharmacology",
            AspectKey::Components => "components",
        }
    }

    pub fn parse(s: &str) -> Option<AspectKey> {
        Self::DISEASE
            .iter()
            .chain(Self::MEDICINE.iter())
            .copied()
            .find(|a| a.as_str() == s)
    }
}

impl fmt::Display for AspectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub kind: KnowledgeKind,
    pub name: String,
    pub aspects: BTreeMap<AspectKey, String>,
}

impl Validate for KnowledgeEntry {
    fn violations_at(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push(Violation::new(
                join_path(prefix, "name"),
                ViolationKind::EmptyName,
                "name is empty",
            ));
        }
        if self.aspects.is_empty() {
            out.push(Violation::new(
                join_path(prefix, "aspects"),
                ViolationKind::NoAspects,
                "at least one aspect required",
            ));
        }
        for (key, text) in &self.aspects {
            let path = join_path(prefix, &format!("aspects.{key}"));
            if key.kind() != self.kind {
                out.push(Violation::new(
                    path.clone(),
                    ViolationKind::DisallowedAspect,
                    format!("{key} is not a {} aspect", self.kind),
                ));
            }
            if text.trim().is_empty() {
                out.push(Violation::new(path, ViolationKind::BlankAspect, "aspect text is blank"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub answer: String,
    pub kind: KnowledgeKind,
    pub source_name: String,
    pub aspect: AspectKey,
}

impl Validate for QAPair {
    fn violations_at(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if !self.question.contains(&self.source_name) {
            out.push(Violation::new(
                join_path(prefix, "question"),
                ViolationKind::QuestionMissingName,
                format!("question does not mention {:?}", self.source_name),
            ));
        }
        if self.answer.trim().is_empty() {
            out.push(Violation::new(
                join_path(prefix, "answer"),
                ViolationKind::BlankAspect,
                "answer is blank",
            ));
        }
        if self.aspect.kind() != self.kind {
            out.push(Violation::new(
                join_path(prefix, "aspect"),
                ViolationKind::DisallowedAspect,
                format!("{} is not a {} aspect", self.aspect, self.kind),
            ));
        }
        out
    }
}
