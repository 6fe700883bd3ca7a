//! Solution and manifest documents, plus the bit-run codec.
//!
//! Primary outputs are fully deterministic for fixed inputs; everything
//! environment-dependent (wall-clock time, content hashes) lives in a
//! sidecar manifest next to each written file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Run-length encodes bits as alternating run lengths, starting with the
/// length of the leading zero run (which may be 0).
pub fn rle_encode(bits: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut count = 0usize;
    for &bit in bits {
        if bit == current {
            count += 1;
        } else {
            runs.push(count);
            current = bit;
            count = 1;
        }
    }
    if count > 0 {
        runs.push(count);
    }
    runs
}

/// Inverse of [`rle_encode`].
pub fn rle_decode(runs: &[usize]) -> Vec<bool> {
    let mut bits = Vec::new();
    for (i, &run) in runs.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, run));
    }
    bits
}

/// Feasibility block of a solution document.
#[derive(Debug, Serialize, Deserialize)]
pub struct FeasibilityDoc {
    pub feasible: bool,
    pub contiguous: bool,
    /// Ids of areas whose assignment bits are not one-hot.
    pub one_hot_violations: Vec<String>,
    /// Count of edge/region link bits that disagree with the assignment.
    pub link_violations: usize,
    /// Nonzero flow-balance residuals keyed by area id.
    pub conservation_residuals: BTreeMap<String, i64>,
}

/// One border-refinement round in a pipeline solution.
#[derive(Debug, Serialize, Deserialize)]
pub struct HistoryDoc {
    pub heterogeneity_before: f64,
    pub heterogeneity_after: f64,
    pub moved: usize,
    pub rejected: usize,
}

/// A solved regionalization, as written to `--out`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub version: u32,
    /// Which search produced it: "exact", "sa", or "hybrid".
    pub sampler: String,
    /// Resolved parameter snapshot.
    pub params: serde_json::Value,
    /// Root area ids, ordered by region.
    pub seeds: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_vars: Option<usize>,
    /// Model energy of the returned state.
    pub energy: f64,
    /// Objective value of the decoded labeling alone.
    pub heterogeneity: f64,
    /// Raw model bits, run-length encoded (leading zero run first).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits_rle: Option<Vec<usize>>,
    /// Region per area id, numbered from 1.
    pub labels: BTreeMap<String, usize>,
    pub feasibility: FeasibilityDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<HistoryDoc>>,
}

impl SolutionDoc {
    pub fn to_pretty_string(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("document serializes");
        text.push('\n');
        text
    }
}

/// Sidecar manifest describing one written output.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    /// Subcommand that produced the output.
    pub command: String,
    /// Resolved configuration snapshot, including any auto-chosen values.
    pub config: serde_json::Value,
    pub outputs: Vec<ManifestOutput>,
    pub wall_clock_ms: u128,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestOutput {
    pub path: String,
    pub sha256: String,
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Path of the manifest sitting next to `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Writes a primary output and its manifest sidecar.
pub fn write_with_manifest(
    out: &Path,
    contents: &str,
    command: &str,
    config: serde_json::Value,
    wall_clock_ms: u128,
) -> std::io::Result<()> {
    std::fs::write(out, contents)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config,
        outputs: vec![ManifestOutput {
            path: out.display().to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        }],
        wall_clock_ms,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(manifest_path(out), text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rle_round_trips() {
        let cases: Vec<Vec<bool>> = vec![
            vec![],
            vec![false],
            vec![true],
            vec![true, true, false, true],
            vec![false; 17],
            vec![true; 9],
            (0..50).map(|i| i % 3 == 0).collect(),
        ];
        for bits in cases {
            let runs = rle_encode(&bits);
            assert_eq!(rle_decode(&runs), bits);
            // Alternation starts with the zero run; only it may be empty.
            for (i, &run) in runs.iter().enumerate() {
                assert!(i == 0 || run > 0);
            }
        }
    }

    #[test]
    fn rle_known_values() {
        assert_eq!(rle_encode(&[true, true, false]), vec![0, 2, 1]);
        assert_eq!(rle_encode(&[false, false, true]), vec![2, 1]);
        assert_eq!(rle_decode(&[0, 2, 1]), vec![true, true, false]);
    }

    #[test]
    fn sha256_matches_known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(
            manifest_path(Path::new("/tmp/model.txt")),
            PathBuf::from("/tmp/model.txt.manifest.json")
        );
    }
}
