//! Ready-made pedigrees used by tests, benchmarks and the CLI.

use std::collections::{BTreeMap, BTreeSet};

use crate::pedigree::{CancerDiagnosis, CoreCounts, Individual, Pedigree, TumorMarkers};
use crate::types::{IndividualId, MarkerStatus, Sex};

fn dx(cancer: &str, age: Option<u32>) -> CancerDiagnosis {
    CancerDiagnosis {
        cancer: cancer.into(),
        age,
        is_model_cancer: true,
    }
}

fn edit(p: &mut Pedigree, id: u32, f: impl FnOnce(&mut Individual)) {
    f(p.members.get_mut(&IndividualId(id)).expect("fixture member"));
}

/// Thirteen members over three generations: the proband (45), parents, two
/// sisters and a brother, maternal grandparents with two aunts, paternal
/// grandparents with an uncle. One sister had breast cancer at 42, the
/// mother ovarian cancer at 55 and the maternal grandmother breast cancer
/// at 60. Three ages are unknown.
pub fn example_pedigree() -> Pedigree {
    let mut p = Pedigree::create("example", Sex::Female, 45)
        .expect("valid proband")
        .add_core_relatives(CoreCounts {
            sisters: 2,
            brothers: 1,
            maternal_aunts: 2,
            paternal_uncles: 1,
            ..Default::default()
        })
        .expect("core relatives");
    edit(&mut p, 2, |m| {
        m.age = Some(70);
        m.cancers.push(dx("ovarian", Some(55)));
    });
    edit(&mut p, 3, |m| m.age = Some(72));
    edit(&mut p, 4, |m| {
        m.age = Some(48);
        m.cancers.push(dx("breast", Some(42)));
        m.markers = Some(TumorMarkers([("ER".to_string(), MarkerStatus::Negative)].into_iter().collect()));
    });
    edit(&mut p, 5, |m| m.age = Some(40));
    edit(&mut p, 6, |m| m.age = Some(50));
    edit(&mut p, 7, |m| {
        m.deceased = true;
        m.cancers.push(dx("breast", Some(60)));
    });
    edit(&mut p, 8, |m| m.deceased = true);
    edit(&mut p, 9, |m| m.age = Some(66));
    edit(&mut p, 11, |m| {
        m.deceased = true;
        m.age = Some(80);
    });
    edit(&mut p, 12, |m| {
        m.deceased = true;
        m.age = Some(85);
    });
    edit(&mut p, 13, |m| {
        m.age = Some(68);
        m.cancers.push(dx("prostate", Some(62)));
    });
    p
}

/// Same structure as [`example_pedigree`] with every age filled in.
pub fn example_pedigree_complete() -> Pedigree {
    let mut p = example_pedigree();
    edit(&mut p, 7, |m| m.age = Some(82));
    edit(&mut p, 8, |m| m.age = Some(79));
    edit(&mut p, 10, |m| m.age = Some(61));
    p
}

/// Proband (40, breast at 38), parents (mother ovarian at 60), a sister and a brother.
pub fn five_member_pedigree() -> Pedigree {
    let mut p = Pedigree::create("five", Sex::Female, 40)
        .expect("valid proband")
        .add_core_relatives(CoreCounts {
            sisters: 1,
            brothers: 1,
            ..Default::default()
        })
        .expect("core relatives");
    edit(&mut p, 1, |m| m.cancers.push(dx("breast", Some(38))));
    edit(&mut p, 2, |m| {
        m.age = Some(65);
        m.cancers.push(dx("ovarian", Some(60)));
    });
    edit(&mut p, 3, |m| m.age = Some(67));
    edit(&mut p, 4, |m| m.age = Some(42));
    edit(&mut p, 5, |m| m.age = Some(45));
    p
}

fn raw(id: &str, proband: u32, people: &[(u32, Sex, Option<u32>, Option<(u32, u32)>)]) -> Pedigree {
    let mut members = BTreeMap::new();
    for &(i, sex, age, parents) in people {
        let mut ind = Individual::new(IndividualId(i), sex);
        ind.age = age;
        if let Some((m, f)) = parents {
            ind.mother = Some(IndividualId(m));
            ind.father = Some(IndividualId(f));
        }
        members.insert(ind.id, ind);
    }
    let next_id = members.keys().next_back().map_or(1, |k: &IndividualId| k.0 + 1);
    Pedigree {
        pedigree_id: id.into(),
        proband: IndividualId(proband),
        revision: 1,
        members,
        partnerships: BTreeSet::new(),
        next_id,
    }
}

/// The proband's parents are first cousins through grandparents 6 and 7.
pub fn consanguineous_pedigree() -> Pedigree {
    use Sex::{Female as F, Male as M};
    let mut p = raw(
        "cousins",
        1,
        &[
            (1, F, Some(30), Some((2, 3))),
            (2, F, Some(55), Some((8, 10))),
            (3, M, Some(57), Some((11, 9))),
            (6, F, None, None),
            (7, M, None, None),
            (8, F, Some(78), Some((6, 7))),
            (9, M, Some(80), Some((6, 7))),
            (10, M, Some(81), None),
            (11, F, Some(76), None),
        ],
    );
    edit(&mut p, 2, |m| m.cancers.push(dx("breast", Some(50))));
    edit(&mut p, 6, |m| m.deceased = true);
    edit(&mut p, 7, |m| m.deceased = true);
    p
}

/// Double first cousins: the proband's grandparents 10 and 11 are siblings
/// too, adding a second loop.
pub fn double_loop_pedigree() -> Pedigree {
    use Sex::{Female as F, Male as M};
    let mut p = consanguineous_pedigree();
    p.pedigree_id = "double-cousins".into();
    let extra = raw("x", 13, &[(13, F, None, None), (14, M, None, None)]);
    for (id, ind) in extra.members {
        p.members.insert(id, ind);
    }
    for id in [10, 11] {
        edit(&mut p, id, |m| {
            m.mother = Some(IndividualId(13));
            m.father = Some(IndividualId(14));
        });
    }
    for id in [13, 14] {
        edit(&mut p, id, |m| m.deceased = true);
    }
    let _ = (F, M);
    p.next_id = 15;
    p
}

/// A single proband with no recorded history.
pub fn lone_proband(sex: Sex, age: i64) -> Pedigree {
    Pedigree::create("lone", sex, age).expect("valid proband")
}
