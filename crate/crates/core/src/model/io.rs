//! Headered CSV matrices and the JSON instance bundle.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::index::ModelIndex;
use super::instance::{DesignSpec, GroundTruth, ProblemInstance};
use crate::error::{invalid, Error, Result};

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((1..=m.ncols()).map(|j| format!("x{j}")))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let cols = r.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::Parse(format!("row {} has {} fields, header has {cols}", rows + 1, rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: '{field}' is not a number", rows + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 || cols == 0 {
        return invalid("matrix file is empty");
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix_csv(BufReader::new(File::open(path)?))
}

pub fn save_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    write_matrix_csv(m, BufWriter::new(File::create(path)?))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Bundle {
    version: u32,
    n: usize,
    p: usize,
    /// row-major
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta_star: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma_star: Option<f64>,
    /// one-based
    #[serde(default, skip_serializing_if = "Option::is_none")]
    xi_star: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    design: Option<DesignSpec>,
}

const BUNDLE_VERSION: u32 = 1;

pub fn write_bundle<W: Write>(inst: &ProblemInstance, out: W) -> Result<()> {
    let b = Bundle {
        version: BUNDLE_VERSION,
        n: inst.n(),
        p: inst.p(),
        x: (0..inst.n()).map(|i| inst.x.row(i).iter().copied().collect()).collect(),
        y: inst.y.iter().copied().collect(),
        beta_star: inst.truth.as_ref().map(|t| t.beta_star.iter().copied().collect()),
        sigma_star: inst.truth.as_ref().map(|t| t.sigma_star),
        xi_star: inst.truth.as_ref().map(|t| t.xi_star.members().iter().map(|j| j + 1).collect()),
        seed: inst.seed,
        design: inst.design,
    };
    serde_json::to_writer_pretty(out, &b)?;
    Ok(())
}

pub fn read_bundle<R: Read>(input: R) -> Result<ProblemInstance> {
    let b: Bundle = serde_json::from_reader(input)?;
    if b.version != BUNDLE_VERSION {
        return Err(Error::Parse(format!("unsupported bundle version {}", b.version)));
    }
    if b.x.len() != b.n || b.x.iter().any(|r| r.len() != b.p) {
        return Err(Error::Parse(format!("x is not {}x{}", b.n, b.p)));
    }
    let flat: Vec<f64> = b.x.into_iter().flatten().collect();
    let x = DMatrix::from_row_slice(b.n, b.p, &flat);
    let y = DVector::from_vec(b.y);
    let truth = match (b.beta_star, b.sigma_star, b.xi_star) {
        (None, None, None) => None,
        (Some(beta), Some(sigma_star), Some(xi)) => Some(GroundTruth {
            beta_star: DVector::from_vec(beta),
            sigma_star,
            xi_star: ModelIndex::from_one_based(&xi)?,
        }),
        _ => return Err(Error::Parse("ground truth needs beta_star, sigma_star and xi_star together".into())),
    };
    let mut inst = ProblemInstance::new(x, y, truth)?;
    inst.seed = b.seed;
    inst.design = b.design;
    Ok(inst)
}

pub fn load_bundle(path: &Path) -> Result<ProblemInstance> {
    read_bundle(BufReader::new(File::open(path)?))
}

pub fn save_bundle(inst: &ProblemInstance, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_bundle(inst, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::instance::{generate_instance, CoefficientSpec};

    #[test]
    fn matrix_round_trip_is_exact() {
        let m = DMatrix::from_fn(4, 3, |i, j| (i as f64 + 0.1).powf(j as f64 + 0.37) - 1.0 / 3.0);
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x1,x2,x3\n"));
        assert_eq!(read_matrix_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn malformed_matrix_is_a_parse_error() {
        assert!(matches!(read_matrix_csv("a,b\n1,x\n".as_bytes()), Err(Error::Parse(_))));
        assert!(read_matrix_csv("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn bundle_round_trip_is_exact() {
        let sig = CoefficientSpec::ConstantRandomSign { magnitude: 1.5 };
        let inst = generate_instance(15, 6, 2, &sig, 0.7, DesignSpec::Equicorrelated { rho: 0.3 }, 5).unwrap();
        let mut buf = Vec::new();
        write_bundle(&inst, &mut buf).unwrap();
        assert_eq!(read_bundle(buf.as_slice()).unwrap(), inst);
    }
}
