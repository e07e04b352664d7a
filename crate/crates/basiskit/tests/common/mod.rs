//! Golden LibSVM cases: `name.libsvm` paired with either `name.expected`
//! (canonical serialization) or `name.err` (error message).

use std::fs;
use std::path::{Path, PathBuf};

use basiskit::libsvm::{parse_libsvm_str, read_libsvm, serialize_libsvm};

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

pub fn golden_inputs() -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(golden_dir())
        .expect("golden directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "libsvm"))
        .collect();
    out.sort();
    out
}

/// Checks one golden input, returning a description of any mismatch.
pub fn check_golden(input: &Path) -> Result<(), String> {
    let expected = input.with_extension("expected");
    let err = input.with_extension("err");
    let parsed = read_libsvm(input);
    if expected.exists() {
        let want = fs::read_to_string(&expected).map_err(|e| e.to_string())?;
        let ds = parsed.map_err(|e| format!("{}: unexpected error {e}", input.display()))?;
        let got = serialize_libsvm(&ds);
        if got != want {
            return Err(format!("{}: serialized\n{got}\nexpected\n{want}", input.display()));
        }
        let again = parse_libsvm_str(&got).map_err(|e| e.to_string())?;
        if again != ds {
            return Err(format!("{}: serialization does not round-trip", input.display()));
        }
        Ok(())
    } else if err.exists() {
        let want = fs::read_to_string(&err).map_err(|e| e.to_string())?;
        match parsed {
            Ok(_) => Err(format!("{}: parsed, expected error {}", input.display(), want.trim())),
            Err(e) if e.to_string() == want.trim() => Ok(()),
            Err(e) => Err(format!("{}: error {e:?}, expected {}", input.display(), want.trim())),
        }
    } else {
        Err(format!("{}: no .expected or .err file", input.display()))
    }
}
