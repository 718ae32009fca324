//! Reading pedigrees, tables and knowledge bundles from disk.

use std::path::Path;
use std::sync::Arc;

use famrisk_core::kb::{load_bundle, synthetic::synthetic_bundle};
use famrisk_core::{fixtures, KnowledgeBase, ModelInputTable, Pedigree};

use crate::commands::Failure;
use crate::InputArgs;

pub enum Input {
    Pedigree(Pedigree),
    /// A flat model table; builder-only fields are absent.
    Table(ModelInputTable),
}

impl Input {
    pub fn id(&self) -> &str {
        match self {
            Input::Pedigree(p) => &p.pedigree_id,
            Input::Table(t) => &t.pedigree_id,
        }
    }

    /// The pedigree view, rebuilt from the table when needed.
    pub fn pedigree(&self) -> Result<Pedigree, Failure> {
        match self {
            Input::Pedigree(p) => Ok(p.clone()),
            Input::Table(t) => t.to_pedigree().map_err(|e| Failure::Error(e.to_string())),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))
}

pub fn load_input(args: &InputArgs) -> Result<Input, Failure> {
    if let Some(name) = &args.fixture {
        let p = match name.as_str() {
            "example" => fixtures::example_pedigree(),
            "example-complete" => fixtures::example_pedigree_complete(),
            "five-member" => fixtures::five_member_pedigree(),
            "consanguineous" => fixtures::consanguineous_pedigree(),
            "double-loop" => fixtures::double_loop_pedigree(),
            other => return Err(Failure::Error(format!("unknown fixture '{other}'"))),
        };
        return Ok(Input::Pedigree(p));
    }
    let path = args.pedigree.as_deref().ok_or_else(|| Failure::Error("no input given".into()))?;
    let text = read_text(path)?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        ModelInputTable::from_csv(&id, &text)
            .map(Input::Table)
            .map_err(|e| Failure::Error(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text)
            .map(Input::Pedigree)
            .map_err(|e| Failure::Error(format!("{}: {e}", path.display())))
    }
}

pub fn load_kb(dir: Option<&Path>) -> Result<Arc<KnowledgeBase>, Failure> {
    match dir {
        Some(d) => load_bundle(d).map(Arc::new).map_err(|e| Failure::Error(e.to_string())),
        None => Ok(Arc::new(synthetic_bundle())),
    }
}
