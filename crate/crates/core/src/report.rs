//! Run artifacts: CSV tables, plot data, SVG plots, a family-tree drawing,
//! the parameter trace, a data dictionary and a printable HTML page.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::{RiskCurve, RunResult};
use crate::pedigree::ModelInputTable;
use crate::types::{IndividualId, Sex};

/// Probability at which the carrier plot draws its dashed reference line.
pub const CARRIER_THRESHOLD: f64 = 0.025;

/// Entry names of the download bundle, in archive order.
pub const BUNDLE_ENTRIES: [&str; 8] = [
    "posterior.csv",
    "risk.csv",
    "plot_data.json",
    "plots.svg",
    "pedigree.csv",
    "family_tree.svg",
    "parameters.json",
    "data_dictionary.txt",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleEntry {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierPlot {
    pub genes: Vec<String>,
    pub probabilities: Vec<f64>,
    pub noncarrier_probability: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub pedigree_id: String,
    pub carrier: CarrierPlot,
    pub future_risk: Vec<RiskCurve>,
    pub cbc_risk: RiskCurve,
}

impl PlotData {
    pub fn from_result(r: &RunResult) -> PlotData {
        PlotData {
            pedigree_id: r.pedigree_id.clone(),
            carrier: CarrierPlot {
                genes: r.carrier_posterior.iter().map(|g| g.gene.clone()).collect(),
                probabilities: r.carrier_posterior.iter().map(|g| g.probability).collect(),
                noncarrier_probability: r.noncarrier_probability,
                threshold: CARRIER_THRESHOLD,
            },
            future_risk: r.future_risk.clone(),
            cbc_risk: r.cbc_risk.clone(),
        }
    }
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Carrier probabilities per gene, the non-carrier probability and the joint
/// posterior over genotype states.
pub fn posterior_csv(r: &RunResult) -> String {
    let mut rows = vec![vec!["kind".into(), "name".into(), "probability".into()]];
    for g in &r.carrier_posterior {
        rows.push(vec!["gene".into(), g.gene.clone(), g.probability.to_string()]);
    }
    rows.push(vec!["noncarrier".into(), "noncarrier".into(), r.noncarrier_probability.to_string()]);
    for s in &r.joint_posterior {
        rows.push(vec!["joint".into(), s.state.clone(), s.probability.to_string()]);
    }
    csv_string(rows)
}

/// One row per (cancer, horizon age) for every applicable curve, CBC last.
pub fn risk_csv(r: &RunResult) -> String {
    let mut rows = vec![vec!["cancer".into(), "age".into(), "risk".into(), "baseline".into()]];
    for c in r.future_risk.iter().chain(std::iter::once(&r.cbc_risk)) {
        for ((a, x), b) in c.ages.iter().zip(&c.risk).zip(&c.baseline) {
            rows.push(vec![c.cancer.clone(), a.to_string(), x.to_string(), b.to_string()]);
        }
    }
    csv_string(rows)
}

pub fn plot_data_json(r: &RunResult) -> String {
    serde_json::to_string_pretty(&PlotData::from_result(r)).expect("plot data always serializes")
}

pub fn parameters_json(r: &RunResult) -> String {
    serde_json::to_string_pretty(&r.trace).expect("trace always serializes")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"];

fn carrier_panel(out: &mut String, plot: &CarrierPlot, x0: f64, y0: f64, w: f64, h: f64) {
    let top = plot.probabilities.iter().copied().fold(CARRIER_THRESHOLD * 2.0, f64::max).min(1.0);
    let n = plot.genes.len().max(1) as f64;
    let bw = w / n;
    let y = |p: f64| y0 + h - p / top * h;
    let _ = writeln!(out, r#"<g class="carrier-plot">"#);
    let _ = writeln!(
        out,
        r#"<text x="{x0}" y="{}" font-size="14">Carrier probability</text>"#,
        y0 - 8.0
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        y0 + h,
        x0 + w,
        y0 + h
    );
    for (i, (g, &p)) in plot.genes.iter().zip(&plot.probabilities).enumerate() {
        let x = x0 + i as f64 * bw;
        let _ = writeln!(
            out,
            r##"<rect class="bar" data-gene="{}" data-value="{p}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4c72b0"/>"##,
            esc(g),
            x + bw * 0.1,
            y(p),
            bw * 0.8,
            y0 + h - y(p)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="9" transform="rotate(60 {:.2} {:.2})">{}</text>"#,
            x + bw * 0.3,
            y0 + h + 12.0,
            x + bw * 0.3,
            y0 + h + 12.0,
            esc(g)
        );
    }
    let ty = y(plot.threshold);
    let _ = writeln!(
        out,
        r#"<line class="threshold" data-value="{}" x1="{x0}" y1="{ty:.2}" x2="{}" y2="{ty:.2}" stroke="red" stroke-dasharray="6 4"/>"#,
        plot.threshold,
        x0 + w
    );
    let _ = writeln!(out, "</g>");
}

fn risk_panel(out: &mut String, curves: &[RiskCurve], x0: f64, y0: f64, w: f64, h: f64) {
    let shown: Vec<&RiskCurve> = curves.iter().filter(|c| c.applicable && !c.ages.is_empty()).collect();
    let _ = writeln!(out, r#"<g class="risk-plot">"#);
    let _ = writeln!(
        out,
        r#"<text x="{x0}" y="{}" font-size="14">Future cancer risk</text>"#,
        y0 - 8.0
    );
    let a_min = shown.iter().map(|c| c.ages[0]).min().unwrap_or(0) as f64 - 1.0;
    let a_max = shown.iter().filter_map(|c| c.ages.last()).max().copied().unwrap_or(1) as f64;
    let top = shown
        .iter()
        .flat_map(|c| c.risk.iter().chain(&c.baseline))
        .copied()
        .fold(0.01, f64::max)
        .min(1.0);
    let px = |a: f64| x0 + (a - a_min) / (a_max - a_min).max(1.0) * w;
    let py = |p: f64| y0 + h - p / top * h;
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        y0 + h,
        x0 + w,
        y0 + h
    );
    for (i, c) in shown.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        for (series, values, dash) in [("risk", &c.risk, ""), ("baseline", &c.baseline, r#" stroke-dasharray="3 3""#)] {
            let pts: Vec<String> = c
                .ages
                .iter()
                .zip(values.iter())
                .map(|(&a, &p)| format!("{:.2},{:.2}", px(a as f64), py(p)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline class="{series}" data-cancer="{}" points="{}" fill="none" stroke="{colour}"{dash}/>"#,
                esc(&c.cancer),
                pts.join(" ")
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" fill="{colour}">{}</text>"#,
            x0 + w + 6.0,
            y0 + 12.0 * (i as f64 + 1.0),
            esc(&c.cancer)
        );
    }
    let _ = writeln!(out, "</g>");
}

/// Carrier bar chart (with the dashed red threshold line) above the
/// future-risk curves and their baseline overlays.
pub fn plots_svg(r: &RunResult) -> String {
    let data = PlotData::from_result(r);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="900" height="720" viewBox="0 0 900 720">"#
    );
    carrier_panel(&mut out, &data.carrier, 60.0, 40.0, 700.0, 240.0);
    let mut curves = data.future_risk.clone();
    curves.push(data.cbc_risk.clone());
    risk_panel(&mut out, &curves, 60.0, 400.0, 650.0, 280.0);
    out.push_str("</svg>\n");
    out
}

/// Generation index per row: children sit one row below their lower parent,
/// and married-in founders are pulled level with their partner.
fn generations(t: &ModelInputTable) -> BTreeMap<IndividualId, usize> {
    let mut gen: BTreeMap<IndividualId, usize> = t.rows.iter().map(|r| (r.id, 0)).collect();
    for _ in 0..=t.rows.len() {
        let mut changed = false;
        for r in &t.rows {
            if let (Some(m), Some(f)) = (r.mother, r.father) {
                let (gm, gf) = (gen.get(&m).copied().unwrap_or(0), gen.get(&f).copied().unwrap_or(0));
                let g = gm.max(gf) + 1;
                if gen[&r.id] < g {
                    gen.insert(r.id, g);
                    changed = true;
                }
                for (p, gp) in [(m, gm), (f, gf)] {
                    if gp < g - 1 && t.row(p).is_some_and(|x| x.mother.is_none()) {
                        gen.insert(p, g - 1);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    gen
}

/// Standard pedigree symbols: squares for males, circles for females, a
/// slash for deceased, filled when any model cancer is recorded, arrow on
/// the proband.
pub fn family_tree_svg(t: &ModelInputTable) -> String {
    const DX: f64 = 90.0;
    const DY: f64 = 110.0;
    const S: f64 = 30.0;
    let gen = generations(t);
    let mut by_gen: BTreeMap<usize, Vec<IndividualId>> = BTreeMap::new();
    for r in &t.rows {
        by_gen.entry(gen[&r.id]).or_default().push(r.id);
    }
    let mut pos: BTreeMap<IndividualId, (f64, f64)> = BTreeMap::new();
    for (g, ids) in &by_gen {
        for (i, id) in ids.iter().enumerate() {
            pos.insert(*id, (50.0 + i as f64 * DX, 60.0 + *g as f64 * DY));
        }
    }
    let width = by_gen.values().map(Vec::len).max().unwrap_or(1) as f64 * DX + 100.0;
    let height = by_gen.len() as f64 * DY + 60.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let mut unions: BTreeMap<(IndividualId, IndividualId), Vec<IndividualId>> = BTreeMap::new();
    for r in &t.rows {
        if let (Some(m), Some(f)) = (r.mother, r.father) {
            unions.entry((m, f)).or_default().push(r.id);
        }
    }
    for ((m, f), kids) in &unions {
        let (Some(&(mx, my)), Some(&(fx, fy))) = (pos.get(m), pos.get(f)) else { continue };
        let (ux, uy) = ((mx + fx) / 2.0, (my + fy) / 2.0);
        let _ = writeln!(
            out,
            r#"<line class="union" x1="{mx}" y1="{my}" x2="{fx}" y2="{fy}" stroke="black"/>"#
        );
        let bar = uy + DY / 2.0;
        let _ = writeln!(out, r#"<line x1="{ux}" y1="{uy}" x2="{ux}" y2="{bar}" stroke="black"/>"#);
        for k in kids {
            let (kx, ky) = pos[k];
            let _ = writeln!(
                out,
                r#"<polyline class="descent" points="{ux},{bar} {kx},{bar} {kx},{}" fill="none" stroke="black"/>"#,
                ky - S / 2.0
            );
        }
    }
    for r in &t.rows {
        let (x, y) = pos[&r.id];
        let fill = if r.diagnoses.is_empty() { "white" } else { "black" };
        let shape = match r.sex {
            Sex::Male => format!(
                r#"<rect x="{}" y="{}" width="{S}" height="{S}" fill="{fill}" stroke="black"/>"#,
                x - S / 2.0,
                y - S / 2.0
            ),
            Sex::Female => format!(r#"<circle cx="{x}" cy="{y}" r="{}" fill="{fill}" stroke="black"/>"#, S / 2.0),
        };
        let _ = writeln!(out, r#"<g class="individual" data-id="{}">{shape}"#, r.id);
        if r.deceased {
            let _ = writeln!(
                out,
                r#"<line class="deceased" x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="2"/>"#,
                x - S * 0.7,
                y + S * 0.7,
                x + S * 0.7,
                y - S * 0.7
            );
        }
        if r.is_proband {
            let _ = writeln!(
                out,
                r#"<path class="proband" d="M {} {} L {} {}" stroke="black" stroke-width="2"/>"#,
                x - S * 1.3,
                y + S * 1.1,
                x - S * 0.6,
                y + S * 0.5
            );
        }
        let mut label = format!("{}", r.id);
        if let Some(a) = r.age {
            let _ = write!(label, ", {a}y");
        }
        if let Some(c) = r.clone_of {
            let _ = write!(label, " (clone of {c})");
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{}</text>"#,
            x,
            y + S / 2.0 + 12.0,
            esc(&label)
        );
        for (i, (c, age)) in r.diagnoses.iter().enumerate() {
            let age = age.map(|a| a.to_string()).unwrap_or_else(|| "?".into());
            let _ = writeln!(
                out,
                r#"<text class="diagnosis" x="{}" y="{}" font-size="9" text-anchor="middle">{} {}</text>"#,
                x,
                y + S / 2.0 + 24.0 + 11.0 * i as f64,
                esc(c),
                age
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

pub const DATA_DICTIONARY: &str = "\
posterior.csv
  kind          gene | noncarrier | joint
  name          gene name, or genotype state label (noncarrier, A, A+B; xN marks a multi-variant level)
  probability   posterior probability for the proband

risk.csv
  cancer        cancer name; contralateral_breast is the second-primary breast outcome
  age           horizon age (exact years)
  risk          cumulative risk from the proband's current age to this age, mixed over genotypes
  baseline      average-risk cumulative risk over the same interval

plot_data.json
  carrier       genes, probabilities, noncarrier_probability and the reference threshold
  future_risk   one curve per model cancer; applicable=false curves carry a reason
  cbc_risk      contralateral breast cancer curve

plots.svg       carrier bar chart with a dashed red line at the threshold, risk curves with baselines

pedigree.csv    model input table, one row per individual
  ID, MotherID, FatherID    identifiers; parents empty for founders
  Sex                        female | male
  Age                        current age, or age at death when isDead=1; empty when unknown
  Race, Ethnicity, Ancestry  labels used for penetrance and allele-frequency adjustments
  isProband                  1 for the proband
  CloneOf                    original individual for loop-breaking clones
  isAff.<cancer>, Age.<cancer>        diagnosis flag and age at diagnosis
  Surg.<kind>, SurgAge.<kind>         prophylactic surgery flag and age
  Marker.<marker>                     positive | negative | empty when untested
  Gene.<gene>                         1 pathogenic, 0 negative, VUS, empty when untested
  CBC.*                               contralateral breast cancer modifiers

family_tree.svg squares = male, circles = female, filled = affected, slash = deceased, arrow = proband

parameters.json full settings, knowledge-base version, seed, state-space size and approximation flags
";

/// The eight bundle entries in [`BUNDLE_ENTRIES`] order.
pub fn bundle_entries(result: &RunResult, table: &ModelInputTable) -> Vec<BundleEntry> {
    let contents = [
        posterior_csv(result),
        risk_csv(result),
        plot_data_json(result),
        plots_svg(result),
        table.to_csv(),
        family_tree_svg(table),
        parameters_json(result),
        DATA_DICTIONARY.to_string(),
    ];
    BUNDLE_ENTRIES
        .iter()
        .zip(contents)
        .map(|(name, text)| BundleEntry {
            name,
            bytes: text.into_bytes(),
        })
        .collect()
}

fn html_table(out: &mut String, header: &[&str], rows: impl Iterator<Item = Vec<String>>) {
    out.push_str("<table>\n<tr>");
    for h in header {
        let _ = write!(out, "<th>{}</th>", esc(h));
    }
    out.push_str("</tr>\n");
    for r in rows {
        out.push_str("<tr>");
        for c in r {
            let _ = write!(out, "<td>{}</td>", esc(&c));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</table>\n");
}

/// Self-contained printable report.
pub fn printable_html(result: &RunResult, table: &ModelInputTable) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Risk report {}</title>\n\
         <style>body{{font-family:sans-serif;margin:2em}}table{{border-collapse:collapse}}\
         td,th{{border:1px solid #999;padding:2px 6px}}@media print{{.page{{page-break-after:always}}}}</style>\n\
         </head><body>",
        esc(&result.pedigree_id)
    );
    let _ = writeln!(out, "<h1>Risk report: {}</h1>", esc(&result.pedigree_id));
    if result.trace.kb_synthetic {
        let _ = writeln!(
            out,
            "<p><strong>Knowledge base {} is synthetic. Numbers are not clinical estimates.</strong></p>",
            esc(&result.trace.kb_version)
        );
    }
    out.push_str("<h2>Console output</h2>\n<pre>");
    for l in &result.console_log {
        let _ = writeln!(out, "{}", esc(l));
    }
    out.push_str("</pre>\n<h2>Plots</h2>\n");
    out.push_str(&plots_svg(result));
    out.push_str("<h2>Carrier probabilities</h2>\n");
    html_table(
        &mut out,
        &["gene", "probability"],
        result
            .carrier_posterior
            .iter()
            .map(|g| vec![g.gene.clone(), format!("{:.6}", g.probability)])
            .chain(std::iter::once(vec!["noncarrier".into(), format!("{:.6}", result.noncarrier_probability)])),
    );
    out.push_str("<h2>Joint carrier probabilities</h2>\n");
    html_table(
        &mut out,
        &["state", "probability"],
        result
            .joint_posterior
            .iter()
            .filter(|s| s.probability > 0.0)
            .map(|s| vec![s.state.clone(), format!("{:.6}", s.probability)]),
    );
    out.push_str("<h2>Future risk</h2>\n");
    html_table(
        &mut out,
        &["cancer", "age", "risk", "baseline"],
        result
            .future_risk
            .iter()
            .chain(std::iter::once(&result.cbc_risk))
            .flat_map(|c| {
                c.ages.iter().zip(&c.risk).zip(&c.baseline).map(|((a, r), b)| {
                    vec![c.cancer.clone(), a.to_string(), format!("{r:.6}"), format!("{b:.6}")]
                })
            }),
    );
    out.push_str("<h2>Family tree</h2>\n");
    out.push_str(&family_tree_svg(table));
    out.push_str("<h2>Parameters</h2>\n<pre>");
    out.push_str(&esc(&parameters_json(result)));
    out.push_str("</pre>\n</body></html>\n");
    out
}
