//! Flat, one-row-per-individual model input table and its CSV/JSON forms.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    validate_pedigree, BiRadsDensity, CancerDiagnosis, CbcModifiers, Classification, Finding,
    FirstBreastCancerType, Individual, PanelResult, Pedigree, PedigreeError, Surgery, TumorMarkers,
    TumorSize,
};
use crate::engine::RunSettings;
use crate::kb::KnowledgeBase;
use crate::types::{IndividualId, MarkerStatus, Sex, SurgeryKind, TriState};

/// Trailing CBC modifier columns, in header order.
pub const CBC_COLUMNS: [&str; 5] = [
    "CBC.first_bc_type",
    "CBC.anti_estrogen",
    "CBC.high_risk_preneoplasia",
    "CBC.birads",
    "CBC.tumor_size",
];

const FIXED_COLUMNS: [&str; 11] = [
    "ID", "MotherID", "FatherID", "Sex", "Age", "isDead", "Race", "Ethnicity", "Ancestry", "isProband",
    "CloneOf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GermlineCell {
    Untested,
    Positive,
    Negative,
    Vus,
}

impl GermlineCell {
    pub fn as_str(self) -> &'static str {
        match self {
            GermlineCell::Untested => "",
            GermlineCell::Positive => "1",
            GermlineCell::Negative => "0",
            GermlineCell::Vus => "VUS",
        }
    }

    fn parse(s: &str) -> Option<GermlineCell> {
        match s.trim() {
            "" => Some(GermlineCell::Untested),
            "1" => Some(GermlineCell::Positive),
            "0" => Some(GermlineCell::Negative),
            v if v.eq_ignore_ascii_case("vus") => Some(GermlineCell::Vus),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub id: IndividualId,
    pub mother: Option<IndividualId>,
    pub father: Option<IndividualId>,
    pub sex: Sex,
    pub age: Option<u32>,
    pub deceased: bool,
    pub race: String,
    /// `Hispanic`, `NonHispanic` or empty when unknown.
    pub ethnicity: String,
    pub ancestry: String,
    pub is_proband: bool,
    pub clone_of: Option<IndividualId>,
    /// Model cancers diagnosed, with age when known.
    pub diagnoses: BTreeMap<String, Option<u32>>,
    pub surgeries: BTreeMap<SurgeryKind, Option<u32>>,
    /// Observed markers only.
    pub markers: BTreeMap<String, MarkerStatus>,
    /// Tested genes only.
    pub germline: BTreeMap<String, GermlineCell>,
    pub cbc: CbcModifiers,
}

impl ModelRow {
    pub fn germline(&self, gene: &str) -> GermlineCell {
        self.germline.get(gene).copied().unwrap_or(GermlineCell::Untested)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInputTable {
    pub pedigree_id: String,
    pub cancers: Vec<String>,
    pub markers: Vec<String>,
    pub genes: Vec<String>,
    /// Topological order: every parent precedes their children.
    pub rows: Vec<ModelRow>,
}

fn ethnicity_label(h: TriState) -> &'static str {
    match h {
        TriState::Yes => "Hispanic",
        TriState::No => "NonHispanic",
        TriState::Unknown => "",
    }
}

/// Kahn's algorithm, always releasing the lowest ready id first.
fn topological_ids(members: &BTreeMap<IndividualId, Individual>) -> Vec<IndividualId> {
    let mut pending: BTreeMap<IndividualId, usize> = BTreeMap::new();
    let mut children: BTreeMap<IndividualId, Vec<IndividualId>> = BTreeMap::new();
    for m in members.values() {
        let parents: Vec<_> = [m.mother, m.father]
            .into_iter()
            .flatten()
            .filter(|p| members.contains_key(p))
            .collect();
        pending.insert(m.id, parents.len());
        for p in parents {
            children.entry(p).or_default().push(m.id);
        }
    }
    let mut ready: BTreeSet<IndividualId> =
        pending.iter().filter(|(_, &n)| n == 0).map(|(&id, _)| id).collect();
    let mut out = Vec::with_capacity(members.len());
    while let Some(id) = ready.pop_first() {
        out.push(id);
        for c in children.get(&id).into_iter().flatten() {
            let n = pending.get_mut(c).unwrap();
            *n -= 1;
            if *n == 0 {
                ready.insert(*c);
            }
        }
    }
    out
}

impl ModelInputTable {
    /// Flattens a validated pedigree, filling unknown race and ancestry from
    /// the settings defaults. Free-text cancers are dropped.
    pub fn from_pedigree(p: &Pedigree, kb: &KnowledgeBase, settings: &RunSettings) -> Result<Self, PedigreeError> {
        let report = validate_pedigree(p, kb);
        if report.has_blocking() {
            return Err(PedigreeError::ValidationFailed(report));
        }
        Ok(Self::build(p, kb, settings))
    }

    /// Flattening without the validation gate.
    pub(crate) fn build(p: &Pedigree, kb: &KnowledgeBase, settings: &RunSettings) -> Self {
        let cancers = kb.cancer_names();
        let markers = kb.all_markers();
        let genes = kb.gene_names();
        let rows = topological_ids(&p.members)
            .into_iter()
            .map(|id| {
                let m = &p.members[&id];
                ModelRow {
                    id,
                    mother: m.mother,
                    father: m.father,
                    sex: m.sex,
                    age: m.age,
                    deceased: m.deceased,
                    race: m.race.clone().unwrap_or_else(|| settings.default_race.clone()),
                    ethnicity: ethnicity_label(m.hispanic).to_string(),
                    ancestry: m.ancestry.clone().unwrap_or_else(|| settings.default_ancestry.clone()),
                    is_proband: id == p.proband,
                    clone_of: m.clone_of,
                    diagnoses: m
                        .cancers
                        .iter()
                        .filter(|d| d.is_model_cancer && kb.has_cancer(&d.cancer))
                        .map(|d| (d.cancer.clone(), d.age))
                        .collect(),
                    surgeries: m.surgeries.iter().map(|s| (s.kind, s.age)).collect(),
                    markers: m
                        .markers
                        .as_ref()
                        .map(|t| t.observed().map(|(k, v)| (k.to_string(), v)).collect())
                        .unwrap_or_default(),
                    germline: m
                        .panel
                        .as_ref()
                        .map(|panel| {
                            genes
                                .iter()
                                .map(|g| (g.clone(), panel.cell(g)))
                                .filter(|(_, c)| *c != GermlineCell::Untested)
                                .collect()
                        })
                        .unwrap_or_default(),
                    cbc: m.cbc.clone().unwrap_or_default(),
                }
            })
            .collect();
        ModelInputTable {
            pedigree_id: p.pedigree_id.clone(),
            cancers,
            markers,
            genes,
            rows,
        }
    }

    pub fn proband(&self) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.is_proband)
    }

    pub fn row(&self, id: IndividualId) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    /// Rebuilds a pedigree; builder-only data (panel names, variant detail,
    /// childless partnerships) is not carried by the table.
    pub fn to_pedigree(&self) -> Result<Pedigree, PedigreeError> {
        let proband = self
            .proband()
            .ok_or_else(|| PedigreeError::Table("no proband row".into()))?
            .id;
        let mut members = BTreeMap::new();
        for r in &self.rows {
            let mut ind = Individual::new(r.id, r.sex);
            ind.mother = r.mother;
            ind.father = r.father;
            ind.age = r.age;
            ind.deceased = r.deceased;
            ind.race = Some(r.race.clone());
            ind.hispanic = match r.ethnicity.as_str() {
                "Hispanic" => TriState::Yes,
                "NonHispanic" => TriState::No,
                _ => TriState::Unknown,
            };
            ind.ancestry = Some(r.ancestry.clone());
            ind.clone_of = r.clone_of;
            ind.cancers = r
                .diagnoses
                .iter()
                .map(|(c, a)| CancerDiagnosis {
                    cancer: c.clone(),
                    age: *a,
                    is_model_cancer: true,
                })
                .collect();
            ind.surgeries = r.surgeries.iter().map(|(k, a)| Surgery { kind: *k, age: *a }).collect();
            if !r.markers.is_empty() {
                ind.markers = Some(TumorMarkers(r.markers.clone()));
            }
            if !r.germline.is_empty() {
                let mut panel = PanelResult {
                    panel_name: "table".into(),
                    ..Default::default()
                };
                for (g, cell) in &r.germline {
                    panel.genes_tested.insert(g.clone());
                    let class = match cell {
                        GermlineCell::Positive => Some(Classification::Plp),
                        GermlineCell::Vus => Some(Classification::Vus),
                        _ => None,
                    };
                    if let Some(c) = class {
                        panel.findings.insert(g.clone(), Finding::new(c));
                    }
                }
                ind.panel = Some(panel);
            }
            if !r.cbc.is_empty() {
                ind.cbc = Some(r.cbc.clone());
            }
            if members.insert(r.id, ind).is_some() {
                return Err(PedigreeError::Table(format!("duplicate id {}", r.id)));
            }
        }
        let next_id = members.keys().next_back().map_or(1, |id: &IndividualId| id.0 + 1);
        Ok(Pedigree {
            pedigree_id: self.pedigree_id.clone(),
            proband,
            revision: 1,
            members,
            partnerships: BTreeSet::new(),
            next_id,
        })
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        for c in &self.cancers {
            h.push(format!("isAff.{c}"));
            h.push(format!("Age.{c}"));
        }
        for k in SurgeryKind::ALL {
            h.push(format!("Surg.{}", k.as_str()));
            h.push(format!("SurgAge.{}", k.as_str()));
        }
        h.extend(self.markers.iter().map(|m| format!("Marker.{m}")));
        h.extend(self.genes.iter().map(|g| format!("Gene.{g}")));
        h.extend(CBC_COLUMNS.iter().map(|s| s.to_string()));
        h
    }

    pub fn to_csv(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        fn flag(b: bool) -> String {
            if b { "1" } else { "0" }.to_string()
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![
                r.id.to_string(),
                opt(r.mother),
                opt(r.father),
                r.sex.as_str().to_string(),
                opt(r.age),
                flag(r.deceased),
                r.race.clone(),
                r.ethnicity.clone(),
                r.ancestry.clone(),
                flag(r.is_proband),
                opt(r.clone_of),
            ];
            for c in &self.cancers {
                match r.diagnoses.get(c) {
                    Some(age) => {
                        rec.push("1".into());
                        rec.push(opt(*age));
                    }
                    None => {
                        rec.push("0".into());
                        rec.push(String::new());
                    }
                }
            }
            for k in SurgeryKind::ALL {
                match r.surgeries.get(&k) {
                    Some(age) => {
                        rec.push("1".into());
                        rec.push(opt(*age));
                    }
                    None => {
                        rec.push("0".into());
                        rec.push(String::new());
                    }
                }
            }
            for m in &self.markers {
                rec.push(r.markers.get(m).map(|s| s.as_str().to_string()).unwrap_or_default());
            }
            for g in &self.genes {
                rec.push(r.germline(g).as_str().to_string());
            }
            rec.push(opt(r.cbc.first_breast_cancer_type.map(|t| t.as_str())));
            rec.push(r.cbc.anti_estrogen_therapy.as_str().to_string());
            rec.push(r.cbc.high_risk_pre_neoplasia.as_str().to_string());
            rec.push(opt(r.cbc.birads_density.map(|d| d.as_str())));
            rec.push(opt(r.cbc.tumor_size.map(|s| s.as_str())));
            w.write_record(rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn from_csv(pedigree_id: &str, text: &str) -> Result<Self, PedigreeError> {
        let err = |m: String| PedigreeError::Table(m);
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = rd
            .headers()
            .map_err(|e| err(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.len() < FIXED_COLUMNS.len() || header[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
            return Err(err(format!("header must start with {}", FIXED_COLUMNS.join(","))));
        }
        let strip = |prefix: &str| -> Vec<String> {
            header.iter().filter_map(|h| h.strip_prefix(prefix)).map(str::to_string).collect()
        };
        let mut table = ModelInputTable {
            pedigree_id: pedigree_id.to_string(),
            cancers: strip("isAff."),
            markers: strip("Marker."),
            genes: strip("Gene."),
            rows: Vec::new(),
        };
        if table.header() != header {
            return Err(err("unexpected column layout".into()));
        }
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let at = |m: String| err(format!("row {}: {m}", line + 1));
            let mut cells = rec.iter();
            let mut next = || cells.next().unwrap_or("").trim().to_string();
            let opt_u32 = |s: String, col: &str| -> Result<Option<u32>, PedigreeError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| at(format!("bad {col} '{s}'")))
                }
            };
            let opt_id = |s: String, col: &str| opt_u32(s, col).map(|o| o.map(IndividualId));
            let flag = |s: String, col: &str| match s.as_str() {
                "1" => Ok(true),
                "0" | "" => Ok(false),
                _ => Err(at(format!("bad {col} '{s}'"))),
            };
            let id = opt_id(next(), "ID")?.ok_or_else(|| at("missing ID".into()))?;
            let mother = opt_id(next(), "MotherID")?;
            let father = opt_id(next(), "FatherID")?;
            let sex = Sex::from_str(&next()).map_err(at)?;
            let age = opt_u32(next(), "Age")?;
            let deceased = flag(next(), "isDead")?;
            let race = next();
            let ethnicity = next();
            let ancestry = next();
            let is_proband = flag(next(), "isProband")?;
            let clone_of = opt_id(next(), "CloneOf")?;
            let mut diagnoses = BTreeMap::new();
            for c in &table.cancers {
                let aff = flag(next(), "isAff")?;
                let a = opt_u32(next(), "Age")?;
                if aff {
                    diagnoses.insert(c.clone(), a);
                }
            }
            let mut surgeries = BTreeMap::new();
            for k in SurgeryKind::ALL {
                let done = flag(next(), "Surg")?;
                let a = opt_u32(next(), "SurgAge")?;
                if done {
                    surgeries.insert(k, a);
                }
            }
            let mut markers = BTreeMap::new();
            for m in &table.markers {
                let s = MarkerStatus::from_str(&next()).map_err(at)?;
                if s != MarkerStatus::Untested {
                    markers.insert(m.clone(), s);
                }
            }
            let mut germline = BTreeMap::new();
            for g in &table.genes {
                let v = next();
                let cell = GermlineCell::parse(&v).ok_or_else(|| at(format!("bad gene cell '{v}'")))?;
                if cell != GermlineCell::Untested {
                    germline.insert(g.clone(), cell);
                }
            }
            let cbc = CbcModifiers {
                first_breast_cancer_type: parse_level(&next(), &[
                    FirstBreastCancerType::PureInvasive,
                    FirstBreastCancerType::MixedInvasive,
                    FirstBreastCancerType::Dcis,
                ], |t| t.as_str())
                .map_err(at)?,
                anti_estrogen_therapy: tri(&next()).map_err(at)?,
                high_risk_pre_neoplasia: tri(&next()).map_err(at)?,
                birads_density: parse_level(&next(), &[BiRadsDensity::A, BiRadsDensity::B, BiRadsDensity::C, BiRadsDensity::D], |d| d.as_str())
                    .map_err(at)?,
                tumor_size: parse_level(&next(), &[TumorSize::Tis, TumorSize::T1, TumorSize::T2, TumorSize::T3], |s| s.as_str())
                    .map_err(at)?,
            };
            table.rows.push(ModelRow {
                id,
                mother,
                father,
                sex,
                age,
                deceased,
                race,
                ethnicity,
                ancestry,
                is_proband,
                clone_of,
                diagnoses,
                surgeries,
                markers,
                germline,
                cbc,
            });
        }
        if table.rows.iter().filter(|r| r.is_proband).count() != 1 {
            return Err(err("exactly one row must be the proband".into()));
        }
        Ok(table)
    }
}

fn tri(s: &str) -> Result<TriState, String> {
    TriState::parse(s).ok_or_else(|| format!("bad yes/no value '{s}'"))
}

fn parse_level<T: Copy>(s: &str, all: &[T], name: impl Fn(T) -> &'static str) -> Result<Option<T>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    all.iter()
        .copied()
        .find(|v| name(*v).eq_ignore_ascii_case(s))
        .map(Some)
        .ok_or_else(|| format!("unknown level '{s}'"))
}
