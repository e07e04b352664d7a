use std::path::Path;

use basiskit::exec::PoolExecutor;
use basiskit::harness::{cost_report, Status};
use basiskit::{run, RunConfig};

fn configs() -> Vec<std::path::PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    out.sort();
    out
}

#[test]
fn shipped_configs_load_and_price() {
    let paths = configs();
    assert!(paths.len() >= 7);
    for p in paths {
        let cfg = RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let report = cost_report(&cfg).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(!report.lines.is_empty(), "{}", p.display());
    }
}

#[test]
fn subspace_newton_config_converges() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/newton_synth_subspace.json");
    let e = run(RunConfig::load(&path).unwrap(), &PoolExecutor::new(2)).unwrap();
    assert_eq!(e.status, Status::Converged);
    assert!(e.last().round <= 10);
}
