//! JSON kernel files.
//!
//! ```json
//! {"n": 2, "complex": false, "entries": [0.5, 0.5, 0.5, 0.5]}
//! ```
//!
//! Entries are row-major, either plain reals or `[re, im]` pairs when
//! `complex` is true. An optional `ground_set` carries `coords`, `weights`
//! and `labels`. Floats are written in shortest round-trip form, so a
//! write/read cycle preserves every value exactly.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{validate_kernel, GroundSet, KernelMatrix, KernelTolerances};
use crate::error::{DppError, Result};
use crate::linalg::CMatrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Entries {
    Real(Vec<f64>),
    Complex(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct GroundSetFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KernelFile {
    n: usize,
    complex: bool,
    entries: Entries,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_set: Option<GroundSetFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

/// A kernel read from disk together with its optional ground set.
#[derive(Debug, Clone)]
pub struct LoadedKernel {
    pub kernel: KernelMatrix,
    pub ground_set: Option<GroundSet>,
    pub label: Option<String>,
}

/// Serializes the kernel, with its ground set and a free-form label.
pub fn to_json(k: &KernelMatrix, ground_set: Option<&GroundSet>, label: Option<&str>) -> String {
    let complex = !k.is_real();
    let entries = if complex {
        Entries::Complex(row_major(k.entries()).map(|z| [z.re, z.im]).collect())
    } else {
        Entries::Real(row_major(k.entries()).map(|z| z.re).collect())
    };
    let file = KernelFile {
        n: k.n(),
        complex,
        entries,
        ground_set: ground_set.map(|g| GroundSetFile {
            labels: Some(g.labels().to_vec()),
            coords: g.coords().map(<[_]>::to_vec),
            weights: g.weights().map(<[_]>::to_vec),
        }),
        label: label.map(str::to_string),
    };
    serde_json::to_string(&file).expect("kernel files always serialize")
}

fn row_major(m: &CMatrix) -> impl Iterator<Item = Complex64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

/// Parses and validates a kernel file with the given tolerances.
pub fn from_json(text: &str, tols: KernelTolerances) -> Result<LoadedKernel> {
    let file: KernelFile = serde_json::from_str(text).map_err(|e| DppError::Parse(e.to_string()))?;
    let n = file.n;
    let values: Vec<Complex64> = match (&file.entries, file.complex) {
        (Entries::Real(v), _) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        (Entries::Complex(v), true) => v.iter().map(|p| Complex64::new(p[0], p[1])).collect(),
        (Entries::Complex(_), false) => {
            return Err(DppError::Parse("complex entries in a file marked complex=false".into()))
        }
    };
    if values.len() != n * n {
        return Err(DppError::Parse(format!("expected {} entries, found {}", n * n, values.len())));
    }
    let raw = DMatrix::from_row_slice(n, n, &values);
    let kernel = validate_kernel(&raw, tols)?;
    let ground_set = match file.ground_set {
        None => None,
        Some(g) => {
            let labels = g.labels.unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect());
            if labels.len() != n {
                return Err(DppError::InvalidGroundSet(format!(
                    "{} labels for {n} sites",
                    labels.len()
                )));
            }
            Some(GroundSet::new(labels, g.coords, g.weights)?)
        }
    };
    Ok(LoadedKernel { kernel, ground_set, label: file.label })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::factory;

    #[test]
    fn real_round_trip_is_exact() {
        let (k, g) = factory::sine_kernel(16, 2.0).unwrap();
        let text = to_json(&k, Some(&g), Some("sine"));
        let back = from_json(&text, KernelTolerances::default()).unwrap();
        assert_eq!(back.kernel.entries(), k.entries());
        assert_eq!(back.ground_set.as_ref(), Some(&g));
        assert_eq!(back.label.as_deref(), Some("sine"));
    }

    #[test]
    fn complex_round_trip_is_exact() {
        let (k, _) = factory::bergman_kernel(3, 4, 0.5).unwrap();
        let text = to_json(&k, None, None);
        assert!(text.contains("\"complex\":true"));
        let back = from_json(&text, KernelTolerances::default()).unwrap();
        assert_eq!(back.kernel.entries(), k.entries());
    }

    #[test]
    fn malformed_input_is_a_parse_error() {
        let tols = KernelTolerances::default();
        assert!(matches!(from_json("{not json", tols), Err(DppError::Parse(_))));
        assert!(matches!(
            from_json(r#"{"n":2,"complex":false,"entries":[1.0]}"#, tols),
            Err(DppError::Parse(_))
        ));
    }

    #[test]
    fn plain_file_validates() {
        let text = r#"{"n":2,"complex":false,"entries":[0.3,0,0,0.5]}"#;
        let k = from_json(text, KernelTolerances::default()).unwrap().kernel;
        assert!((k.trace() - 0.8).abs() < 1e-15);
        assert!(!k.is_projection());
    }
}
