mod common;

use basiskit::libsvm::{parse_libsvm_str, serialize_libsvm, RawDataset, Row};
use proptest::prelude::*;

#[test]
fn golden_files() {
    let inputs = common::golden_inputs();
    assert!(inputs.len() >= 10, "golden corpus shrank to {}", inputs.len());
    let failures: Vec<String> = inputs.iter().filter_map(|p| common::check_golden(p).err()).collect();
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn golden_corpus_has_error_cases() {
    let errs = common::golden_inputs()
        .iter()
        .filter(|p| p.with_extension("err").exists())
        .count();
    assert!(errs >= 6);
}

fn row() -> impl Strategy<Value = Row> {
    (
        any::<bool>(),
        proptest::collection::btree_map(1usize..200, -1e6f64..1e6, 0..12),
    )
        .prop_map(|(pos, feats)| Row {
            label: if pos { 1.0 } else { -1.0 },
            features: feats.into_iter().collect(),
        })
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(rows in proptest::collection::vec(row(), 1..20)) {
        let max_index = rows.iter().filter_map(|r| r.features.last().map(|f| f.0)).max().unwrap_or(0);
        let ds = RawDataset { rows, max_index };
        let back = parse_libsvm_str(&serialize_libsvm(&ds)).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "[-+0-9.:e# \\n]{0,80}") {
        let _ = parse_libsvm_str(&text);
    }
}
