//! Serde adapters that write matrices as row-major nested arrays.

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Builds a matrix from nested rows. `ncols` is needed when there are no rows.
pub fn from_rows(rows: &[Vec<f64>], ncols: Option<usize>) -> Result<DMatrix<f64>, String> {
    let c = match rows.first() {
        Some(r) => r.len(),
        None => ncols.unwrap_or(0),
    };
    if let Some(bad) = rows.iter().position(|r| r.len() != c) {
        return Err(format!(
            "row {bad} has {} entries, expected {c}",
            rows[bad].len()
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

#[derive(Serialize, Deserialize)]
struct Shaped {
    rows: usize,
    cols: usize,
    data: Vec<Vec<f64>>,
}

/// `#[serde(with = "rows")]`: shape plus row-major data, so empty blocks keep their column count.
pub mod rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        Shaped {
            rows: m.nrows(),
            cols: m.ncols(),
            data: to_rows(m),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let sh = Shaped::deserialize(d)?;
        if sh.data.len() != sh.rows {
            return Err(D::Error::custom(format!(
                "expected {} rows, got {}",
                sh.rows,
                sh.data.len()
            )));
        }
        from_rows(&sh.data, Some(sh.cols))
            .map_err(D::Error::custom)
            .and_then(|m| {
                if m.ncols() != sh.cols {
                    Err(D::Error::custom(format!(
                        "expected {} columns, got {}",
                        sh.cols,
                        m.ncols()
                    )))
                } else {
                    Ok(m)
                }
            })
    }
}

pub mod rows_vec {
    use super::*;

    #[derive(Serialize)]
    struct Ref<'a>(#[serde(with = "rows")] &'a DMatrix<f64>);

    #[derive(Deserialize)]
    struct Owned(#[serde(with = "rows")] DMatrix<f64>);

    pub fn serialize<S: Serializer>(v: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(Ref))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        Ok(Vec::<Owned>::deserialize(d)?
            .into_iter()
            .map(|o| o.0)
            .collect())
    }
}
