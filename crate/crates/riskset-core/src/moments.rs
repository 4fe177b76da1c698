//! Per-environment samples and their second-moment reduction.
//!
//! Everything downstream depends on the data only through `G = E[X^T X]`,
//! `Z = E[X Y]` and `E[Y^2]`, so these statistics are the only interface the
//! rest of the library sees. Population-moment fixtures are expressed by
//! constructing [`EnvironmentMoments`] directly.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One environment's raw samples: `n` rows of `p` covariates plus a target.
#[derive(Debug, Clone)]
pub struct SampleMatrix {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl SampleMatrix {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::DataValidation("no samples".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "X has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        for r in 0..x.nrows() {
            if !y[r].is_finite() {
                return Err(Error::DataValidation(format!(
                    "non-finite target in row {r}"
                )));
            }
            for c in 0..x.ncols() {
                if !x[(r, c)].is_finite() {
                    return Err(Error::DataValidation(format!(
                        "non-finite covariate in row {r}, column {c}"
                    )));
                }
            }
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
}

/// Whether moments were estimated from samples or declared exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCount {
    Observed(usize),
    Population,
}

/// Second-moment summary of one environment: `G`, `Z`, `E[Y^2]`.
#[derive(Debug, Clone)]
pub struct EnvironmentMoments {
    g: DMatrix<f64>,
    z: DVector<f64>,
    y2: f64,
    n: SampleCount,
}

/// Relative symmetry tolerance for `G`.
const SYM_TOL: f64 = 1e-12;
/// Relative slack allowed on the smallest eigenvalue of the block matrix.
const PSD_TOL: f64 = 1e-9;

impl EnvironmentMoments {
    pub fn new(g: DMatrix<f64>, z: DVector<f64>, y2: f64, n: SampleCount) -> Result<Self> {
        let p = g.nrows();
        if g.ncols() != p || z.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "G is {}x{}, Z has length {}",
                g.nrows(),
                g.ncols(),
                z.len()
            )));
        }
        if !(y2.is_finite() && y2 >= 0.0) {
            return Err(Error::DataValidation(format!(
                "mean squared target must be finite and nonnegative, got {y2}"
            )));
        }
        let scale = g.amax().max(1.0);
        for r in 0..p {
            for c in 0..r {
                if (g[(r, c)] - g[(c, r)]).abs() > SYM_TOL * scale {
                    return Err(Error::DataValidation(format!(
                        "G not symmetric at ({r},{c})"
                    )));
                }
            }
        }
        // The (p+1)x(p+1) block [[G, Z], [Z^T, y2]] is an (empirical) second
        // moment matrix, hence positive semi-definite.
        let mut block = DMatrix::zeros(p + 1, p + 1);
        block.view_mut((0, 0), (p, p)).copy_from(&g);
        for r in 0..p {
            block[(r, p)] = z[r];
            block[(p, r)] = z[r];
        }
        block[(p, p)] = y2;
        let block_scale = block.amax().max(1.0);
        let eigs = block.symmetric_eigen().eigenvalues;
        let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL * block_scale {
            return Err(Error::DataValidation(format!(
                "second-moment block matrix not PSD (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(Self { g, z, y2, n })
    }

    /// Exact population moments (no sample count attached).
    pub fn population(g: DMatrix<f64>, z: DVector<f64>, y2: f64) -> Result<Self> {
        Self::new(g, z, y2, SampleCount::Population)
    }

    pub fn p(&self) -> usize {
        self.g.nrows()
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn n(&self) -> SampleCount {
        self.n
    }
}

/// Kahan-compensated accumulator; keeps the reduction deterministic for a
/// fixed input order and accurate for large `n`.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum
    }
}

/// Reduce samples to `G = X^T X / n`, `Z = X^T y / n`, `y2 = |y|^2 / n`.
pub fn compute_moments(samples: &SampleMatrix) -> Result<EnvironmentMoments> {
    let n = samples.n();
    let p = samples.p();
    let x = samples.x();
    let y = samples.y();

    let mut g_acc = vec![Kahan::default(); p * p];
    let mut z_acc = vec![Kahan::default(); p];
    let mut y2_acc = Kahan::default();
    for l in 0..n {
        for a in 0..p {
            let xa = x[(l, a)];
            for b in a..p {
                g_acc[a * p + b].add(xa * x[(l, b)]);
            }
            z_acc[a].add(xa * y[l]);
        }
        y2_acc.add(y[l] * y[l]);
    }

    let inv_n = 1.0 / n as f64;
    let mut g = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v = g_acc[a * p + b].value() * inv_n;
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    // Symmetry is enforced structurally above; average with the transpose
    // anyway so the invariant never depends on the accumulation layout.
    let g = (&g + g.transpose()) * 0.5;
    let z = DVector::from_fn(p, |a, _| z_acc[a].value() * inv_n);
    let y2 = y2_acc.value() * inv_n;
    EnvironmentMoments::new(g, z, y2, SampleCount::Observed(n))
}

/// Column layout of an environment CSV: the named target column plus the
/// covariate columns in the order the configuration fixes (not file order).
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub target: String,
    pub covariates: Vec<String>,
}

/// Load one environment from a headered CSV file.
pub fn load_environment_csv(path: &Path, schema: &CsvSchema) -> Result<SampleMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::DataValidation(format!("{}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::DataValidation(format!("missing column '{name}'")))
    };
    let target_idx = col_index(&schema.target)?;
    let cov_idx = schema
        .covariates
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<Vec<_>>>()?;

    let parse_cell = |record: &csv::StringRecord, idx: usize, line: usize| -> Result<f64> {
        let raw = record.get(idx).ok_or(Error::Parse {
            line,
            msg: format!("row too short, no column {idx}"),
        })?;
        let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("non-numeric cell '{raw}' in column '{}'", &headers[idx]),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line,
                msg: format!("non-finite cell '{raw}' in column '{}'", &headers[idx]),
            });
        }
        Ok(v)
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header occupies line 1
        let record = record.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        ys.push(parse_cell(&record, target_idx, line)?);
        let row = cov_idx
            .iter()
            .map(|&c| parse_cell(&record, c, line))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::DataValidation("no samples".into()));
    }
    let n = rows.len();
    let p = cov_idx.len();
    let x = DMatrix::from_fn(n, p, |r, c| rows[r][c]);
    let y = DVector::from_vec(ys);
    SampleMatrix::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write;

    fn sample(xs: &[&[f64]], ys: &[f64]) -> SampleMatrix {
        let n = xs.len();
        let p = xs[0].len();
        let x = DMatrix::from_fn(n, p, |r, c| xs[r][c]);
        SampleMatrix::new(x, DVector::from_column_slice(ys)).unwrap()
    }

    #[test]
    fn single_sample_outer_product() {
        let m = compute_moments(&sample(&[&[1.0, 0.0]], &[2.0])).unwrap();
        assert_eq!(m.g(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(m.z(), &DVector::from_column_slice(&[2.0, 0.0]));
        assert_eq!(m.y2(), 4.0);
        assert_eq!(m.n(), SampleCount::Observed(1));
    }

    #[test]
    fn two_sample_direct_summation() {
        // Oracle: direct summation of outer products.
        let m = compute_moments(&sample(&[&[1.0, 1.0], &[1.0, -1.0]], &[1.0, 3.0])).unwrap();
        assert_relative_eq!(m.g(), &DMatrix::identity(2, 2), epsilon = 1e-15);
        assert_relative_eq!(
            m.z(),
            &DVector::from_column_slice(&[2.0, -1.0]),
            epsilon = 1e-15
        );
        assert_relative_eq!(m.y2(), 5.0, epsilon = 1e-15);
    }

    #[test]
    fn all_zero_samples() {
        let m = compute_moments(&sample(&[&[0.0], &[0.0]], &[0.0, 0.0])).unwrap();
        assert_eq!(m.g()[(0, 0)], 0.0);
        assert_eq!(m.z()[0], 0.0);
        assert_eq!(m.y2(), 0.0);
    }

    #[test]
    fn rejects_non_finite_input() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        let y = DVector::from_column_slice(&[0.0, 0.0]);
        let err = SampleMatrix::new(x, y).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn block_psd_rejects_impossible_moments() {
        // y2 too small for the declared cross moment: block matrix indefinite.
        let g = DMatrix::from_row_slice(1, 1, &[1.0]);
        let z = DVector::from_column_slice(&[10.0]);
        assert!(EnvironmentMoments::new(g, z, 1.0, SampleCount::Population).is_err());
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn csv_roundtrip_and_column_order() {
        let f = write_csv("y,x1,x2\n1.0,2.0,3.0\n4.0,5.0,6.0\n");
        let schema = CsvSchema {
            target: "y".into(),
            // Deliberately reversed relative to the file order.
            covariates: vec!["x2".into(), "x1".into()],
        };
        let s = load_environment_csv(f.path(), &schema).unwrap();
        assert_eq!((s.n(), s.p()), (2, 2));
        assert_eq!(s.x()[(0, 0)], 3.0);
        assert_eq!(s.x()[(0, 1)], 2.0);
        assert_eq!(s.y()[1], 4.0);
    }

    #[test]
    fn csv_empty_data_section() {
        let f = write_csv("y,x1\n");
        let schema = CsvSchema { target: "y".into(), covariates: vec!["x1".into()] };
        let err = load_environment_csv(f.path(), &schema).unwrap_err();
        assert!(err.to_string().contains("no samples"));
    }

    #[test]
    fn csv_nan_cell_named() {
        let f = write_csv("y,x1\n1.0,NaN\n");
        let schema = CsvSchema { target: "y".into(), covariates: vec!["x1".into()] };
        let err = load_environment_csv(f.path(), &schema).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("x1"), "{msg}");
    }

    #[test]
    fn csv_missing_column() {
        let f = write_csv("y,x1\n1.0,2.0\n");
        let schema = CsvSchema { target: "y".into(), covariates: vec!["x7".into()] };
        let err = load_environment_csv(f.path(), &schema).unwrap_err();
        assert!(err.to_string().contains("x7"));
    }
}
