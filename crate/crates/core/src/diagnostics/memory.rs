//! Weights-plus-optimizer-state memory at two bytes per scalar, reported in
//! decimal GB.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::BYTES_PER_SCALAR;

pub const MEMORY_CSV_HEADER: [&str; 4] = ["method", "gb", "bytes", "source"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixShape {
    #[serde(default)]
    pub name: Option<String>,
    pub rows: u64,
    pub cols: u64,
    #[serde(default = "one")]
    pub count: u64,
}

fn one() -> u64 {
    1
}

/// Parameter counts of a model. `pre_last_params` includes the first layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    #[serde(default)]
    pub name: Option<String>,
    pub pre_last_params: u64,
    pub last_layer_params: u64,
    pub first_layer_params: u64,
    /// Needed only for Adafactor.
    #[serde(default)]
    pub matrices: Option<Vec<MatrixShape>>,
}

impl ModelShape {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// Bundled LLaMA-style shapes: `"llama_1b"` and `"llama_7b"`.
    pub fn bundled(name: &str) -> Result<Self> {
        let text = match name {
            "llama_1b" => include_str!("../../data/llama_1b.json"),
            "llama_7b" => include_str!("../../data/llama_7b.json"),
            _ => return Err(Error::Config(format!("no bundled shape `{name}`"))),
        };
        Self::from_json(text)
    }

    pub fn total_params(&self) -> u64 {
        self.pre_last_params + self.last_layer_params
    }

    pub fn validate(&self) -> Result<()> {
        if self.pre_last_params == 0 || self.last_layer_params == 0 || self.first_layer_params == 0
        {
            return Err(Error::Config("parameter counts must be positive".into()));
        }
        if self.first_layer_params > self.pre_last_params {
            return Err(Error::Config(
                "first layer cannot exceed the pre-last total".into(),
            ));
        }
        if let Some(m) = &self.matrices {
            if m.is_empty() || m.iter().any(|s| s.rows == 0 || s.cols == 0 || s.count == 0) {
                return Err(Error::Config(
                    "matrix table entries must be positive".into(),
                ));
            }
            let table: u64 = m.iter().map(|s| s.rows * s.cols * s.count).sum();
            let total = self.total_params();
            if table.abs_diff(total) * 100 > total {
                return Err(Error::Config(format!(
                    "matrix table sums to {table} parameters but the counts give {total}"
                )));
            }
        }
        Ok(())
    }

    fn row_col_sum(&self) -> Result<u64> {
        let m = self
            .matrices
            .as_ref()
            .ok_or_else(|| Error::Config("adafactor needs the per-matrix table".into()))?;
        Ok(m.iter().map(|s| (s.rows + s.cols) * s.count).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMethod {
    Sgd,
    Adafactor,
    Adam,
    Muon,
    Swan,
    Scale,
    Apollo,
    ApolloMini,
    #[serde(rename = "galore")]
    GaLore,
    Fira,
}

impl MemoryMethod {
    pub const COMPUTED: [MemoryMethod; 6] = [
        MemoryMethod::Sgd,
        MemoryMethod::Adafactor,
        MemoryMethod::Adam,
        MemoryMethod::Muon,
        MemoryMethod::Swan,
        MemoryMethod::Scale,
    ];
    pub const REFERENCE: [MemoryMethod; 4] = [
        MemoryMethod::Apollo,
        MemoryMethod::ApolloMini,
        MemoryMethod::GaLore,
        MemoryMethod::Fira,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MemoryMethod::Sgd => "sgd",
            MemoryMethod::Adafactor => "adafactor",
            MemoryMethod::Adam => "adam",
            MemoryMethod::Muon => "muon",
            MemoryMethod::Swan => "swan",
            MemoryMethod::Scale => "scale",
            MemoryMethod::Apollo => "apollo",
            MemoryMethod::ApolloMini => "apollo_mini",
            MemoryMethod::GaLore => "galore",
            MemoryMethod::Fira => "fira",
        }
    }

    pub fn is_reference_only(self) -> bool {
        Self::REFERENCE.contains(&self)
    }
}

impl fmt::Display for MemoryMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bytes for weights plus optimizer state.
pub fn memory_estimate(method: MemoryMethod, shape: &ModelShape) -> Result<u64> {
    shape.validate()?;
    let p = shape.total_params();
    let scalars = match method {
        MemoryMethod::Sgd => p,
        MemoryMethod::Adam => 3 * p,
        MemoryMethod::Muon => 2 * p,
        MemoryMethod::Scale => p + shape.last_layer_params,
        MemoryMethod::Swan => p + 2 * (shape.first_layer_params + shape.last_layer_params),
        MemoryMethod::Adafactor => p + shape.row_col_sum()?,
        m => {
            return Err(Error::ReferenceOnly(format!(
                "{m} has no formula here; use reference_gb for its published figure"
            )))
        }
    };
    Ok(BYTES_PER_SCALAR * scalars)
}

/// Published totals for methods whose layouts are not modelled, keyed by
/// bundled shape name.
pub fn reference_gb(method: MemoryMethod, shape_name: &str) -> Option<f64> {
    use MemoryMethod::*;
    match (shape_name, method) {
        ("llama_7b", Apollo) => Some(16.144),
        ("llama_7b", ApolloMini) => Some(14.531),
        ("llama_1b", Apollo) => Some(4.76),
        ("llama_1b", ApolloMini) => Some(3.20),
        ("llama_1b", GaLore) => Some(4.76),
        ("llama_1b", Fira) => Some(4.76),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Computed,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryRow {
    pub method: MemoryMethod,
    pub gb: f64,
    pub bytes: Option<u64>,
    pub source: Source,
}

/// Every computable method, then whatever reference figures exist for the
/// shape's name. Adafactor is skipped when the matrix table is absent.
pub fn memory_table(shape: &ModelShape) -> Result<Vec<MemoryRow>> {
    shape.validate()?;
    let mut rows = Vec::new();
    for m in MemoryMethod::COMPUTED {
        if m == MemoryMethod::Adafactor && shape.matrices.is_none() {
            continue;
        }
        let bytes = memory_estimate(m, shape)?;
        rows.push(MemoryRow {
            method: m,
            gb: bytes as f64 / 1e9,
            bytes: Some(bytes),
            source: Source::Computed,
        });
    }
    if let Some(name) = &shape.name {
        for m in MemoryMethod::REFERENCE {
            if let Some(gb) = reference_gb(m, name) {
                rows.push(MemoryRow {
                    method: m,
                    gb,
                    bytes: None,
                    source: Source::Reference,
                });
            }
        }
    }
    Ok(rows)
}

/// CSV with columns `method,gb,bytes,source`; GB to three decimals.
pub fn write_memory_csv<W: Write>(out: W, rows: &[MemoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MEMORY_CSV_HEADER)?;
    for r in rows {
        let source = match r.source {
            Source::Computed => "computed",
            Source::Reference => "reference",
        };
        w.write_record([
            r.method.name().to_string(),
            format!("{:.3}", r.gb),
            r.bytes.map(|b| b.to_string()).unwrap_or_default(),
            source.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gb(m: MemoryMethod, s: &ModelShape) -> f64 {
        memory_estimate(m, s).unwrap() as f64 / 1e9
    }

    #[test]
    fn bundled_shapes_reproduce_published_totals() {
        use MemoryMethod::*;
        let s7 = ModelShape::bundled("llama_7b").unwrap();
        let s1 = ModelShape::bundled("llama_1b").unwrap();
        let expect = [
            (Sgd, 13.476, 2.678),
            (Adam, 40.428, 8.034),
            (Muon, 26.952, 5.356),
            (Swan, 14.524, 3.202),
            (Scale, 13.738, 2.809),
            (Adafactor, 13.481, 2.68),
        ];
        for (m, g7, g1) in expect {
            assert!((gb(m, &s7) - g7).abs() <= 0.01, "{m} 7b {}", gb(m, &s7));
            assert!((gb(m, &s1) - g1).abs() <= 0.01, "{m} 1b {}", gb(m, &s1));
        }
    }

    #[test]
    fn rounded_component_counts() {
        let s = ModelShape {
            name: None,
            pre_last_params: 6_607_000_000,
            last_layer_params: 131_000_000,
            first_layer_params: 131_000_000,
            matrices: None,
        };
        assert!((gb(MemoryMethod::Scale, &s) - 13.738).abs() < 1e-9);
        assert!((gb(MemoryMethod::Swan, &s) - 14.524).abs() < 1e-9);
        assert!(memory_estimate(MemoryMethod::Adafactor, &s).is_err());
        assert_eq!(memory_table(&s).unwrap().len(), 5);
    }

    #[test]
    fn reference_methods_are_not_computed() {
        let s = ModelShape::bundled("llama_7b").unwrap();
        assert!(matches!(
            memory_estimate(MemoryMethod::Apollo, &s),
            Err(Error::ReferenceOnly(_))
        ));
        let table = memory_table(&s).unwrap();
        let apollo = table
            .iter()
            .find(|r| r.method == MemoryMethod::Apollo)
            .unwrap();
        assert_eq!(apollo.gb, 16.144);
        assert_eq!(apollo.source, Source::Reference);
        assert!(table.iter().all(|r| r.method != MemoryMethod::GaLore));
    }

    #[test]
    fn ordering_holds() {
        for s in [
            ModelShape::bundled("llama_1b").unwrap(),
            ModelShape::bundled("llama_7b").unwrap(),
        ] {
            let v: Vec<f64> = [
                MemoryMethod::Sgd,
                MemoryMethod::Scale,
                MemoryMethod::Muon,
                MemoryMethod::Adam,
            ]
            .iter()
            .map(|&m| gb(m, &s))
            .collect();
            assert!(v.windows(2).all(|w| w[0] <= w[1]), "{v:?}");
        }
    }

    #[test]
    fn invalid_shapes() {
        assert!(ModelShape::from_json("").is_err());
        assert!(ModelShape::from_json("{}").is_err());
        let bad = r#"{"pre_last_params": 10, "last_layer_params": 0, "first_layer_params": 1}"#;
        assert!(ModelShape::from_json(bad).is_err());
        let inconsistent = r#"{"pre_last_params": 100, "last_layer_params": 10, "first_layer_params": 10,
            "matrices": [{"rows": 5, "cols": 5}]}"#;
        assert!(ModelShape::from_json(inconsistent).is_err());
        assert!(ModelShape::bundled("llama_70b").is_err());
    }

    #[test]
    fn csv_layout() {
        let s = ModelShape::bundled("llama_7b").unwrap();
        let mut buf = Vec::new();
        write_memory_csv(&mut buf, &memory_table(&s).unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method,gb,bytes,source");
        assert!(lines.contains(&"scale,13.738,13738442752,computed"));
        assert!(lines.contains(&"apollo,16.144,,reference"));
    }
}
