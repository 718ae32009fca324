//! On-disk bundle format: a directory with `manifest.json` and UTF-8 CSV tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    CancerSpec, GeneSpec, HazardCurve, KbError, KnowledgeBase, MarkerKey, ModelDef,
    SexRestriction, NONCARRIER,
};
use crate::types::{MarkerStatus, Sex, SurgeryKind};

pub const MANIFEST: &str = "manifest.json";

/// Every CSV table in a bundle, with its exact header.
pub const BUNDLE_FILES: [(&str, &[&str]); 10] = [
    ("genes.csv", &["gene", "allele_frequency"]),
    ("ancestry_frequencies.csv", &["gene", "ancestry", "allele_frequency"]),
    ("race_adjustments.csv", &["gene", "cancer", "race", "multiplier"]),
    ("cancers.csv", &["cancer", "sex_restriction", "organ"]),
    ("penetrance.csv", &["gene", "cancer", "sex", "age", "hazard"]),
    ("baseline.csv", &["cancer", "sex", "age", "hazard"]),
    ("life_table.csv", &["sex", "age", "mortality"]),
    ("marker_lr.csv", &["cancer", "marker", "status", "gene", "likelihood_ratio"]),
    ("cbc_hazard.csv", &["genotype", "age", "hazard"]),
    ("cbc_factors.csv", &["modifier", "level", "relative_risk"]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub max_age: u32,
    #[serde(default)]
    pub synthetic: bool,
    pub races: Vec<String>,
    pub ethnicities: Vec<String>,
    pub ancestries: Vec<String>,
    pub marker_sets: BTreeMap<String, Vec<String>>,
    pub surgery_organs: BTreeMap<String, String>,
    pub models: BTreeMap<String, ModelDef>,
    /// file name -> lowercase hex SHA-256 of its bytes
    pub files: BTreeMap<String, String>,
}

type Row = BTreeMap<&'static str, String>;

struct Table {
    file: &'static str,
    rows: Vec<(usize, Row)>,
}

impl Table {
    fn schema(&self, line: usize, message: impl Into<String>) -> KbError {
        KbError::Schema {
            file: self.file.to_string(),
            message: format!("line {line}: {}", message.into()),
        }
    }

    fn range(&self, line: usize, message: impl Into<String>) -> KbError {
        KbError::Range {
            file: self.file.to_string(),
            message: format!("line {line}: {}", message.into()),
        }
    }

    fn dangling(&self, line: usize, message: impl Into<String>) -> KbError {
        KbError::DanglingRef {
            file: self.file.to_string(),
            message: format!("line {line}: {}", message.into()),
        }
    }

    fn f64(&self, line: usize, row: &Row, col: &str) -> Result<f64, KbError> {
        let v = &row[col];
        let x: f64 = v
            .parse()
            .map_err(|_| self.schema(line, format!("{col} '{v}' is not a number")))?;
        if !x.is_finite() {
            return Err(self.range(line, format!("{col} must be finite")));
        }
        Ok(x)
    }

    fn age(&self, line: usize, row: &Row, max_age: u32) -> Result<u32, KbError> {
        let v = &row["age"];
        let a: u32 = v
            .parse()
            .map_err(|_| self.schema(line, format!("age '{v}' is not an integer")))?;
        if a > max_age {
            return Err(self.range(line, format!("age {a} exceeds max_age {max_age}")));
        }
        Ok(a)
    }

    fn sex(&self, line: usize, row: &Row) -> Result<Sex, KbError> {
        row["sex"].parse().map_err(|e: String| self.schema(line, e))
    }

    fn probability(&self, line: usize, row: &Row, col: &str) -> Result<f64, KbError> {
        let x = self.f64(line, row, col)?;
        if !(0.0..1.0).contains(&x) {
            return Err(self.range(line, format!("{col} {x} outside [0, 1)")));
        }
        Ok(x)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> KbError {
    KbError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_table(
    dir: &Path,
    file: &'static str,
    header: &'static [&'static str],
    manifest: &Manifest,
) -> Result<Table, KbError> {
    let path = dir.join(file);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    match manifest.files.get(file) {
        Some(sum) if *sum == checksum(&bytes) => {}
        Some(_) => return Err(KbError::Checksum { file: file.to_string() }),
        None => {
            return Err(KbError::Schema {
                file: MANIFEST.to_string(),
                message: format!("no checksum listed for {file}"),
            })
        }
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
    let schema = |message: String| KbError::Schema {
        file: file.to_string(),
        message,
    };
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| schema(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    for col in header {
        if !found.iter().any(|h| h == col) {
            return Err(schema(format!("missing column '{col}'")));
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| schema(e.to_string()))?;
        let mut row = Row::new();
        for col in header {
            let idx = found.iter().position(|h| h == col).unwrap();
            let v = rec
                .get(idx)
                .ok_or_else(|| schema(format!("line {}: missing field '{col}'", i + 2)))?;
            row.insert(*col, v.trim().to_string());
        }
        rows.push((i + 2, row));
    }
    Ok(Table { file, rows })
}

fn header_of(file: &str) -> &'static [&'static str] {
    BUNDLE_FILES.iter().find(|(f, _)| *f == file).unwrap().1
}

/// Collects per-age rows into complete curves.
struct CurveBuilder<K: Ord> {
    max_age: u32,
    partial: BTreeMap<K, Vec<Option<f64>>>,
}

impl<K: Ord + Clone + std::fmt::Debug> CurveBuilder<K> {
    fn new(max_age: u32) -> Self {
        CurveBuilder {
            max_age,
            partial: BTreeMap::new(),
        }
    }

    fn insert(&mut self, t: &Table, line: usize, key: K, age: u32, h: f64) -> Result<(), KbError> {
        let slots = self
            .partial
            .entry(key.clone())
            .or_insert_with(|| vec![None; self.max_age as usize + 1]);
        if slots[age as usize].replace(h).is_some() {
            return Err(t.schema(line, format!("duplicate age {age} for {key:?}")));
        }
        Ok(())
    }

    fn finish(self, file: &str) -> Result<BTreeMap<K, HazardCurve>, KbError> {
        self.partial
            .into_iter()
            .map(|(k, slots)| {
                let values: Option<Vec<f64>> = slots.iter().copied().collect();
                match values {
                    Some(v) => Ok((k, HazardCurve::new(v))),
                    None => Err(KbError::Schema {
                        file: file.to_string(),
                        message: format!("curve {k:?} does not cover every age"),
                    }),
                }
            })
            .collect()
    }
}

/// Loads and validates a bundle directory.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<KnowledgeBase, KbError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| KbError::Schema {
        file: MANIFEST.to_string(),
        message: e.to_string(),
    })?;
    let max_age = manifest.max_age;
    let table = |file: &'static str| read_table(dir, file, header_of(file), &manifest);
    let manifest_err = |message: String| KbError::DanglingRef {
        file: MANIFEST.to_string(),
        message,
    };

    // cancers
    let t = table("cancers.csv")?;
    let mut cancers: Vec<CancerSpec> = Vec::new();
    for (line, row) in &t.rows {
        let name = row["cancer"].clone();
        if name.is_empty() {
            return Err(t.schema(*line, "empty cancer name"));
        }
        if cancers.iter().any(|c| c.name == name) {
            return Err(t.schema(*line, format!("duplicate cancer '{name}'")));
        }
        let sex_restriction = match row["sex_restriction"].as_str() {
            "any" => SexRestriction::Any,
            "female" => SexRestriction::Female,
            "male" => SexRestriction::Male,
            other => return Err(t.schema(*line, format!("bad sex_restriction '{other}'"))),
        };
        let organ = row["organ"].clone();
        if organ.is_empty() {
            return Err(t.schema(*line, format!("cancer '{name}' has no organ")));
        }
        cancers.push(CancerSpec {
            name,
            sex_restriction,
            organ,
        });
    }
    let cancer_spec = |name: &str| cancers.iter().find(|c| c.name == name);

    // genes
    let t = table("genes.csv")?;
    let mut genes: Vec<GeneSpec> = Vec::new();
    for (line, row) in &t.rows {
        let name = row["gene"].clone();
        if name.is_empty() {
            return Err(t.schema(*line, "empty gene name"));
        }
        if genes.iter().any(|g| g.name == name) {
            return Err(t.schema(*line, format!("duplicate gene '{name}'")));
        }
        let f = t.f64(*line, row, "allele_frequency")?;
        if !(f > 0.0 && f < 0.5) {
            return Err(t.range(*line, format!("allele frequency {f} of {name} outside (0, 0.5)")));
        }
        genes.push(GeneSpec {
            name,
            allele_frequency: f,
            ancestry_frequencies: BTreeMap::new(),
            penetrance: BTreeMap::new(),
            race_adjustments: BTreeMap::new(),
        });
    }
    let gene_index = |t: &Table, line: usize, name: &str, genes: &[GeneSpec]| {
        genes
            .iter()
            .position(|g| g.name == name)
            .ok_or_else(|| t.dangling(line, format!("unknown gene '{name}'")))
    };
    let check_cancer = |t: &Table, line: usize, name: &str| {
        cancer_spec(name).ok_or_else(|| t.dangling(line, format!("unknown cancer '{name}'")))
    };

    let t = table("ancestry_frequencies.csv")?;
    for (line, row) in &t.rows {
        let gi = gene_index(&t, *line, &row["gene"], &genes)?;
        let ancestry = row["ancestry"].clone();
        if !manifest.ancestries.contains(&ancestry) {
            return Err(t.dangling(*line, format!("unknown ancestry '{ancestry}'")));
        }
        let f = t.f64(*line, row, "allele_frequency")?;
        if !(f > 0.0 && f < 0.5) {
            return Err(t.range(*line, format!("ancestry frequency {f} outside (0, 0.5)")));
        }
        if genes[gi].ancestry_frequencies.insert(ancestry, f).is_some() {
            return Err(t.schema(*line, "duplicate ancestry override"));
        }
    }

    let t = table("race_adjustments.csv")?;
    for (line, row) in &t.rows {
        let gi = gene_index(&t, *line, &row["gene"], &genes)?;
        let cancer = check_cancer(&t, *line, &row["cancer"])?.name.clone();
        let race = row["race"].clone();
        if !manifest.races.contains(&race) {
            return Err(t.dangling(*line, format!("unknown race '{race}'")));
        }
        let m = t.f64(*line, row, "multiplier")?;
        if m <= 0.0 {
            return Err(t.range(*line, "multiplier must be positive"));
        }
        if genes[gi].race_adjustments.insert((race, cancer), m).is_some() {
            return Err(t.schema(*line, "duplicate race adjustment"));
        }
    }

    let t = table("penetrance.csv")?;
    let mut curves = CurveBuilder::<(usize, String, Sex)>::new(max_age);
    for (line, row) in &t.rows {
        let gi = gene_index(&t, *line, &row["gene"], &genes)?;
        let cancer = check_cancer(&t, *line, &row["cancer"])?;
        let sex = t.sex(*line, row)?;
        if !cancer.sex_restriction.allows(sex) {
            return Err(t.range(*line, format!("{} curve for sex {sex}", cancer.name)));
        }
        let age = t.age(*line, row, max_age)?;
        let h = t.probability(*line, row, "hazard")?;
        curves.insert(&t, *line, (gi, cancer.name.clone(), sex), age, h)?;
    }
    for ((gi, cancer, sex), curve) in curves.finish(t.file)? {
        genes[gi].penetrance.insert((cancer, sex), curve);
    }

    let t = table("baseline.csv")?;
    let mut curves = CurveBuilder::<(String, Sex)>::new(max_age);
    for (line, row) in &t.rows {
        let cancer = check_cancer(&t, *line, &row["cancer"])?;
        let sex = t.sex(*line, row)?;
        if !cancer.sex_restriction.allows(sex) {
            return Err(t.range(*line, format!("{} baseline for sex {sex}", cancer.name)));
        }
        let age = t.age(*line, row, max_age)?;
        let h = t.probability(*line, row, "hazard")?;
        curves.insert(&t, *line, (cancer.name.clone(), sex), age, h)?;
    }
    let baseline = curves.finish(t.file)?;
    for c in &cancers {
        for sex in [Sex::Female, Sex::Male] {
            if c.sex_restriction.allows(sex) && !baseline.contains_key(&(c.name.clone(), sex)) {
                return Err(KbError::Schema {
                    file: t.file.to_string(),
                    message: format!("missing baseline curve for {} / {sex}", c.name),
                });
            }
        }
    }

    let t = table("life_table.csv")?;
    let mut curves = CurveBuilder::<Sex>::new(max_age);
    for (line, row) in &t.rows {
        let sex = t.sex(*line, row)?;
        let age = t.age(*line, row, max_age)?;
        let m = t.f64(*line, row, "mortality")?;
        if !(0.0..=1.0).contains(&m) {
            return Err(t.range(*line, format!("mortality {m} outside [0, 1]")));
        }
        curves.insert(&t, *line, sex, age, m)?;
    }
    let life_table = curves.finish(t.file)?;
    for sex in [Sex::Female, Sex::Male] {
        if !life_table.contains_key(&sex) {
            return Err(KbError::Schema {
                file: t.file.to_string(),
                message: format!("missing life table for {sex}"),
            });
        }
    }

    let t = table("marker_lr.csv")?;
    let mut marker_lr = BTreeMap::new();
    for (line, row) in &t.rows {
        let cancer = check_cancer(&t, *line, &row["cancer"])?.name.clone();
        let marker = row["marker"].clone();
        let known = manifest
            .marker_sets
            .get(&cancer)
            .is_some_and(|ms| ms.contains(&marker));
        if !known {
            return Err(t.dangling(*line, format!("marker '{marker}' not defined for {cancer}")));
        }
        let status: MarkerStatus = row["status"].parse().map_err(|e: String| t.schema(*line, e))?;
        let gene = genes[gene_index(&t, *line, &row["gene"], &genes)?].name.clone();
        let lr = t.f64(*line, row, "likelihood_ratio")?;
        if lr <= 0.0 {
            return Err(t.range(*line, "likelihood ratio must be positive"));
        }
        let key = MarkerKey {
            cancer,
            marker,
            status,
            gene,
        };
        if marker_lr.insert(key, lr).is_some() {
            return Err(t.schema(*line, "duplicate marker likelihood ratio"));
        }
    }

    let t = table("cbc_hazard.csv")?;
    let mut curves = CurveBuilder::<String>::new(max_age);
    for (line, row) in &t.rows {
        let g = row["genotype"].clone();
        if g != NONCARRIER {
            gene_index(&t, *line, &g, &genes)?;
        }
        let age = t.age(*line, row, max_age)?;
        let h = t.probability(*line, row, "hazard")?;
        curves.insert(&t, *line, g, age, h)?;
    }
    let cbc_hazard = curves.finish(t.file)?;
    if !cbc_hazard.contains_key(NONCARRIER) {
        return Err(KbError::Schema {
            file: t.file.to_string(),
            message: "missing noncarrier curve".into(),
        });
    }

    let t = table("cbc_factors.csv")?;
    let mut cbc_factors = BTreeMap::new();
    for (line, row) in &t.rows {
        let rr = t.f64(*line, row, "relative_risk")?;
        if rr <= 0.0 {
            return Err(t.range(*line, "relative risk must be positive"));
        }
        let key = (row["modifier"].clone(), row["level"].clone());
        if cbc_factors.insert(key, rr).is_some() {
            return Err(t.schema(*line, "duplicate CBC factor"));
        }
    }

    let mut surgery_organs = BTreeMap::new();
    for (k, organ) in &manifest.surgery_organs {
        let kind: SurgeryKind = k.parse().map_err(|e: String| KbError::Schema {
            file: MANIFEST.to_string(),
            message: e,
        })?;
        surgery_organs.insert(kind, organ.clone());
    }
    for cancer in manifest.marker_sets.keys() {
        if cancer_spec(cancer).is_none() {
            return Err(manifest_err(format!("marker set for unknown cancer '{cancer}'")));
        }
    }
    for (name, model) in &manifest.models {
        for g in &model.genes {
            if !genes.iter().any(|x| &x.name == g) {
                return Err(manifest_err(format!("model {name} names unknown gene '{g}'")));
            }
        }
        for c in &model.cancers {
            if cancer_spec(c).is_none() {
                return Err(manifest_err(format!("model {name} names unknown cancer '{c}'")));
            }
        }
    }
    let listed: BTreeSet<&str> = manifest.files.keys().map(String::as_str).collect();
    let expected: BTreeSet<&str> = BUNDLE_FILES.iter().map(|(f, _)| *f).collect();
    if listed != expected {
        return Err(KbError::Schema {
            file: MANIFEST.to_string(),
            message: "file list does not match the bundle schema".into(),
        });
    }

    Ok(KnowledgeBase {
        version: manifest.version,
        max_age,
        synthetic: manifest.synthetic,
        races: manifest.races,
        ethnicities: manifest.ethnicities,
        ancestries: manifest.ancestries,
        marker_sets: manifest.marker_sets,
        surgery_organs,
        models: manifest.models,
        genes,
        cancers,
        baseline,
        life_table,
        marker_lr,
        cbc_hazard,
        cbc_factors,
    })
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn curve_rows<'a>(
    prefix: Vec<String>,
    curve: &'a HazardCurve,
) -> impl Iterator<Item = Vec<String>> + 'a {
    curve.values().iter().enumerate().map(move |(age, h)| {
        let mut r = prefix.clone();
        r.push(age.to_string());
        r.push(h.to_string());
        r
    })
}

/// Serializes the bundle's tables; deterministic for a given knowledge base.
pub(crate) fn render_tables(kb: &KnowledgeBase) -> Vec<(&'static str, Vec<u8>)> {
    let h = header_of;
    let mut out = Vec::new();
    out.push((
        "genes.csv",
        write_csv(
            h("genes.csv"),
            kb.genes
                .iter()
                .map(|g| vec![g.name.clone(), g.allele_frequency.to_string()]),
        ),
    ));
    out.push((
        "ancestry_frequencies.csv",
        write_csv(
            h("ancestry_frequencies.csv"),
            kb.genes.iter().flat_map(|g| {
                g.ancestry_frequencies
                    .iter()
                    .map(|(a, f)| vec![g.name.clone(), a.clone(), f.to_string()])
            }),
        ),
    ));
    out.push((
        "race_adjustments.csv",
        write_csv(
            h("race_adjustments.csv"),
            kb.genes.iter().flat_map(|g| {
                g.race_adjustments.iter().map(|((race, cancer), m)| {
                    vec![g.name.clone(), cancer.clone(), race.clone(), m.to_string()]
                })
            }),
        ),
    ));
    out.push((
        "cancers.csv",
        write_csv(
            h("cancers.csv"),
            kb.cancers.iter().map(|c| {
                vec![
                    c.name.clone(),
                    c.sex_restriction.as_str().to_string(),
                    c.organ.clone(),
                ]
            }),
        ),
    ));
    out.push((
        "penetrance.csv",
        write_csv(
            h("penetrance.csv"),
            kb.genes.iter().flat_map(|g| {
                g.penetrance.iter().flat_map(|((cancer, sex), curve)| {
                    curve_rows(
                        vec![g.name.clone(), cancer.clone(), sex.to_string()],
                        curve,
                    )
                })
            }),
        ),
    ));
    out.push((
        "baseline.csv",
        write_csv(
            h("baseline.csv"),
            kb.baseline
                .iter()
                .flat_map(|((c, s), curve)| curve_rows(vec![c.clone(), s.to_string()], curve)),
        ),
    ));
    out.push((
        "life_table.csv",
        write_csv(
            h("life_table.csv"),
            kb.life_table
                .iter()
                .flat_map(|(s, curve)| curve_rows(vec![s.to_string()], curve)),
        ),
    ));
    out.push((
        "marker_lr.csv",
        write_csv(
            h("marker_lr.csv"),
            kb.marker_lr.iter().map(|(k, lr)| {
                vec![
                    k.cancer.clone(),
                    k.marker.clone(),
                    k.status.as_str().to_string(),
                    k.gene.clone(),
                    lr.to_string(),
                ]
            }),
        ),
    ));
    out.push((
        "cbc_hazard.csv",
        write_csv(
            h("cbc_hazard.csv"),
            kb.cbc_hazard
                .iter()
                .flat_map(|(g, curve)| curve_rows(vec![g.clone()], curve)),
        ),
    ));
    out.push((
        "cbc_factors.csv",
        write_csv(
            h("cbc_factors.csv"),
            kb.cbc_factors
                .iter()
                .map(|((m, l), rr)| vec![m.clone(), l.clone(), rr.to_string()]),
        ),
    ));
    out
}

pub(crate) fn manifest_for(kb: &KnowledgeBase, tables: &[(&'static str, Vec<u8>)]) -> Manifest {
    Manifest {
        version: kb.version.clone(),
        max_age: kb.max_age,
        synthetic: kb.synthetic,
        races: kb.races.clone(),
        ethnicities: kb.ethnicities.clone(),
        ancestries: kb.ancestries.clone(),
        marker_sets: kb.marker_sets.clone(),
        surgery_organs: kb
            .surgery_organs
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), v.clone()))
            .collect(),
        models: kb.models.clone(),
        files: tables
            .iter()
            .map(|(f, bytes)| (f.to_string(), checksum(bytes)))
            .collect(),
    }
}

/// Writes `kb` as a bundle directory, creating it if needed.
pub fn save_bundle(kb: &KnowledgeBase, dir: impl AsRef<Path>) -> Result<(), KbError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let tables = render_tables(kb);
    for (file, bytes) in &tables {
        let path = dir.join(file);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
    }
    let manifest = manifest_for(kb, &tables);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}
