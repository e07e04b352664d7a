//! Client partitioning and the bundled a1a-shaped fixture.

use basiskit_core::matrix::DenseMatrix;
use basiskit_core::problem::{sigmoid, ClientShard, Problem};
use basiskit_core::rng::{Purpose, RngStream};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DataError, Result};
use crate::libsvm::{parse_libsvm_str, read_libsvm, RawDataset, Row};

/// Feature count of a1a.
pub const A1A_D: usize = 123;
/// Row count of a1a.
pub const A1A_ROWS: usize = 1605;
/// Environment variable pointing at a real a1a file.
pub const A1A_ENV: &str = "BASISKIT_A1A";

/// Committed output of [`a1a_fixture`].
pub const A1A_FIXTURE: &str = include_str!("../data/a1a_fixture.libsvm");

/// One-hot group widths of the 14 Adult attributes (sum 123).
const GROUPS: [usize; 14] = [5, 8, 5, 16, 5, 7, 14, 6, 5, 2, 2, 2, 5, 41];
/// Groups that are left empty for a small fraction of rows.
const SOMETIMES_MISSING: [usize; 3] = [1, 6, 13];

/// Deterministic stand-in for a1a: 1605 rows of 123 binary features, one
/// active category per attribute group with skewed frequencies, and labels
/// from a planted logistic model (about a quarter positive).
pub fn a1a_fixture() -> RawDataset {
    let mut rng = RngStream::server(0xa1a, 0, Purpose::Data).rng();
    let weights: Vec<f64> = (0..A1A_D).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut rows = Vec::with_capacity(A1A_ROWS);
    for _ in 0..A1A_ROWS {
        let mut features = Vec::new();
        let mut offset = 0;
        for (g, &width) in GROUPS.iter().enumerate() {
            let missing = SOMETIMES_MISSING.contains(&g) && rng.random::<f64>() < 0.03;
            if !missing {
                let cat = skewed_category(width, &mut rng);
                features.push((offset + cat + 1, 1.0));
            }
            offset += width;
        }
        let score: f64 = features.iter().map(|&(j, _)| weights[j - 1]).sum::<f64>() - 3.5;
        let label = if rng.random::<f64>() < sigmoid(score) { 1.0 } else { -1.0 };
        rows.push(Row { label, features });
    }
    let max_index = rows.iter().filter_map(|r| r.features.last().map(|f| f.0)).max().unwrap_or(0);
    RawDataset { rows, max_index }
}

/// Category `k` with probability proportional to `(k + 1)^{-1.3}`.
fn skewed_category(width: usize, rng: &mut impl Rng) -> usize {
    let total: f64 = (0..width).map(|k| ((k + 1) as f64).powf(-1.3)).sum();
    let mut u = rng.random::<f64>() * total;
    for k in 0..width {
        u -= ((k + 1) as f64).powf(-1.3);
        if u <= 0.0 {
            return k;
        }
    }
    width - 1
}

/// a1a from `BASISKIT_A1A` when set, otherwise the bundled fixture.
pub fn load_a1a() -> Result<RawDataset> {
    match std::env::var_os(A1A_ENV) {
        Some(path) => Ok(read_libsvm(std::path::Path::new(&path))?),
        None => Ok(parse_libsvm_str(A1A_FIXTURE)?),
    }
}

/// Splits `raw` into `n` contiguous shards of `m = rows / n` rows, dropping the
/// excess rows from the tail, densified to `d` columns (`max_index` if unset).
pub fn partition(raw: &RawDataset, n: usize, d: Option<usize>) -> Result<Vec<ClientShard>> {
    if n == 0 || n > raw.len() {
        return Err(DataError::TooFewRows { rows: raw.len(), n }.into());
    }
    let d = d.unwrap_or(raw.max_index);
    if raw.max_index > d {
        return Err(DataError::IndexOutOfRange { index: raw.max_index, d }.into());
    }
    let m = raw.len() / n;
    let mut shards = Vec::with_capacity(n);
    for i in 0..n {
        let rows = &raw.rows[i * m..(i + 1) * m];
        let mut a = DenseMatrix::zeros(m, d);
        for (j, row) in rows.iter().enumerate() {
            for &(idx, v) in &row.features {
                a[(j, idx - 1)] = v;
            }
        }
        let labels = rows.iter().map(|r| r.label).collect();
        shards.push(ClientShard::new(i, a, labels)?);
    }
    Ok(shards)
}

pub fn logistic_problem(raw: &RawDataset, n: usize, d: Option<usize>, lambda: f64) -> Result<Problem> {
    Ok(Problem::logistic(partition(raw, n, d)?, lambda)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::libsvm::serialize_libsvm;

    #[test]
    fn committed_fixture_matches_generator() {
        assert_eq!(serialize_libsvm(&a1a_fixture()), A1A_FIXTURE);
    }

    #[test]
    fn fixture_shape() {
        let ds = parse_libsvm_str(A1A_FIXTURE).unwrap();
        assert_eq!(ds.len(), A1A_ROWS);
        assert!(ds.max_index <= A1A_D);
        let pos = ds.rows.iter().filter(|r| r.label > 0.0).count() as f64 / ds.len() as f64;
        assert!((0.1..0.45).contains(&pos), "positive share {pos}");
    }

    #[test]
    fn a1a_split_across_sixteen_clients() {
        let ds = parse_libsvm_str(A1A_FIXTURE).unwrap();
        let shards = partition(&ds, 16, Some(A1A_D)).unwrap();
        assert_eq!(shards.len(), 16);
        assert!(shards.iter().all(|s| s.m() == 100 && s.d() == A1A_D));
    }

    #[test]
    fn single_client_keeps_every_row() {
        let ds = parse_libsvm_str("+1 1:1\n-1 2:3\n+1 1:2 2:2\n").unwrap();
        let shards = partition(&ds, 1, None).unwrap();
        assert_eq!(shards[0].m(), 3);
        assert_eq!(shards[0].features()[(1, 1)], 3.0);
    }

    #[test]
    fn tail_rows_are_dropped() {
        let ds = parse_libsvm_str("+1 1:1\n-1 1:2\n+1 1:3\n-1 1:4\n+1 1:5\n").unwrap();
        let shards = partition(&ds, 2, None).unwrap();
        assert_eq!(shards[1].features()[(1, 0)], 4.0);
        assert_eq!(shards.iter().map(|s| s.m()).sum::<usize>(), 4);
    }

    #[test]
    fn too_many_clients_or_columns() {
        let ds = parse_libsvm_str("+1 3:1\n").unwrap();
        assert!(partition(&ds, 2, None).is_err());
        assert!(partition(&ds, 1, Some(2)).is_err());
        assert_eq!(partition(&ds, 1, Some(5)).unwrap()[0].d(), 5);
    }
}
