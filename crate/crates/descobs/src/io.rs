//! File formats: system descriptions and realizations as JSON, simulation
//! traces as CSV.
//!
//! A system file declares its dimensions up front and stores each matrix as
//! nested rows, so empty dimensions stay unambiguous. A realization file
//! stores every matrix with explicit shape (rows, cols, flat row-major
//! data) because certificate shapes cannot be reconstructed from a zero-row
//! nested array. Numbers go through serde_json's shortest-roundtrip
//! printing, so save/load is bitwise faithful.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DescriptorSystem, TolerancePolicy};
use crate::numkit::Matrix;
use crate::simulation::SimulationResult;
use crate::synthesis::{Certificates, ObserverRealization};

fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, label: &str) -> Result<Matrix> {
    if nrows == 0 || ncols == 0 {
        // accept both [] and a list of empty rows for degenerate shapes
        let row_count_ok = rows.is_empty() || rows.len() == nrows;
        if !row_count_ok || rows.iter().any(|r| !r.is_empty()) {
            return Err(Error::DimensionMismatch(format!(
                "{label}: expected {nrows}x{ncols}, got {} rows",
                rows.len()
            )));
        }
        return Ok(Matrix::zeros(nrows, ncols));
    }
    if rows.len() != nrows {
        return Err(Error::DimensionMismatch(format!(
            "{label}: expected {nrows} rows, got {}",
            rows.len()
        )));
    }
    let mut out = Matrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::DimensionMismatch(format!(
                "{label}: row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct SystemFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    m: usize,
    n: usize,
    l: usize,
    p: usize,
    r: usize,
    #[serde(rename = "E")]
    e: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
}

/// Parses a system from its JSON text.
pub fn system_from_json_str(text: &str) -> Result<DescriptorSystem> {
    let file: SystemFile =
        serde_json::from_str(text).map_err(|e| Error::ParseError(format!("system JSON: {e}")))?;
    DescriptorSystem::new(
        file.name,
        rows_to_matrix(&file.e, file.m, file.n, "E")?,
        rows_to_matrix(&file.a, file.m, file.n, "A")?,
        rows_to_matrix(&file.b, file.m, file.l, "B")?,
        rows_to_matrix(&file.c, file.p, file.n, "C")?,
        rows_to_matrix(&file.k, file.r, file.n, "K")?,
    )
}

/// Serializes a system to pretty JSON.
pub fn system_to_json_string(sys: &DescriptorSystem) -> Result<String> {
    let file = SystemFile {
        name: sys.name.clone(),
        m: sys.m(),
        n: sys.n(),
        l: sys.l(),
        p: sys.p(),
        r: sys.r(),
        e: matrix_to_rows(&sys.e),
        a: matrix_to_rows(&sys.a),
        b: matrix_to_rows(&sys.b),
        c: matrix_to_rows(&sys.c),
        k: matrix_to_rows(&sys.k),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::ParseError(format!("serialize: {e}")))
}

pub fn load_system(path: &Path) -> Result<DescriptorSystem> {
    system_from_json_str(&fs::read_to_string(path)?)
}

pub fn save_system(path: &Path, sys: &DescriptorSystem) -> Result<()> {
    fs::write(path, system_to_json_string(sys)? + "\n")?;
    Ok(())
}

/// Shape-explicit matrix for the realization file.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixRepr {
    fn from_matrix(m: &Matrix) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn to_matrix(&self, label: &str) -> Result<Matrix> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{label}: {}x{} needs {} entries, got {}",
                self.rows,
                self.cols,
                self.rows * self.cols,
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Matrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Serialize, Deserialize)]
struct CertificatesFile {
    #[serde(rename = "T")]
    t: MatrixRepr,
    #[serde(rename = "Mbar")]
    mbar: MatrixRepr,
    #[serde(rename = "Q")]
    qmat: MatrixRepr,
    #[serde(rename = "L")]
    l: MatrixRepr,
    #[serde(rename = "Z")]
    z: MatrixRepr,
    #[serde(rename = "P")]
    p: MatrixRepr,
    residual_a: f64,
    residual_b: f64,
    #[serde(rename = "eigs_N")]
    eigs_n: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct ConditionsFile {
    h1: bool,
    h2: bool,
    static_shortcut: bool,
}

#[derive(Serialize, Deserialize)]
struct ObserverFile {
    q: usize,
    #[serde(rename = "N")]
    n: MatrixRepr,
    #[serde(rename = "H")]
    h: MatrixRepr,
    #[serde(rename = "R")]
    r: MatrixRepr,
    #[serde(rename = "M")]
    m: MatrixRepr,
    conditions: ConditionsFile,
    tolerance: TolerancePolicy,
    certificates: CertificatesFile,
}

/// Serializes a realization (with the policy it was built under) to JSON.
pub fn observer_to_json_string(obs: &ObserverRealization, tol: &TolerancePolicy) -> Result<String> {
    let cert = &obs.certificates;
    let file = ObserverFile {
        q: obs.q,
        n: MatrixRepr::from_matrix(&obs.n),
        h: MatrixRepr::from_matrix(&obs.h),
        r: MatrixRepr::from_matrix(&obs.r),
        m: MatrixRepr::from_matrix(&obs.m),
        conditions: ConditionsFile {
            h1: true,
            h2: true,
            static_shortcut: obs.q == 0,
        },
        tolerance: tol.clone(),
        certificates: CertificatesFile {
            t: MatrixRepr::from_matrix(&cert.t),
            mbar: MatrixRepr::from_matrix(&cert.mbar),
            qmat: MatrixRepr::from_matrix(&cert.qmat),
            l: MatrixRepr::from_matrix(&cert.l),
            z: MatrixRepr::from_matrix(&cert.z),
            p: MatrixRepr::from_matrix(&cert.p),
            residual_a: cert.residual_a,
            residual_b: cert.residual_b,
            eigs_n: cert.eigs_n.iter().map(|c| [c.re, c.im]).collect(),
        },
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::ParseError(format!("serialize: {e}")))
}

/// Parses a realization and the policy it was saved with.
pub fn observer_from_json_str(text: &str) -> Result<(ObserverRealization, TolerancePolicy)> {
    let file: ObserverFile = serde_json::from_str(text)
        .map_err(|e| Error::ParseError(format!("realization JSON: {e}")))?;
    let n = file.n.to_matrix("N")?;
    let h = file.h.to_matrix("H")?;
    let r = file.r.to_matrix("R")?;
    let m = file.m.to_matrix("M")?;
    if n.nrows() != file.q || !n.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "N must be {q}x{q}, got {}x{}",
            n.nrows(),
            n.ncols(),
            q = file.q
        )));
    }
    if h.nrows() != file.q
        || r.ncols() != file.q
        || m.nrows() != r.nrows()
        || m.ncols() != h.ncols()
    {
        return Err(Error::DimensionMismatch(
            "H, R, M shapes disagree with q and each other".into(),
        ));
    }
    let cert = &file.certificates;
    let obs = ObserverRealization {
        q: file.q,
        n,
        h,
        r,
        m,
        certificates: Certificates {
            t: cert.t.to_matrix("T")?,
            mbar: cert.mbar.to_matrix("Mbar")?,
            qmat: cert.qmat.to_matrix("Q")?,
            l: cert.l.to_matrix("L")?,
            z: cert.z.to_matrix("Z")?,
            p: cert.p.to_matrix("P")?,
            residual_a: cert.residual_a,
            residual_b: cert.residual_b,
            eigs_n: cert
                .eigs_n
                .iter()
                .map(|&[re, im]| Complex::new(re, im))
                .collect(),
        },
    };
    file.tolerance.validate()?;
    Ok((obs, file.tolerance))
}

pub fn load_observer(path: &Path) -> Result<(ObserverRealization, TolerancePolicy)> {
    observer_from_json_str(&fs::read_to_string(path)?)
}

pub fn save_observer(path: &Path, obs: &ObserverRealization, tol: &TolerancePolicy) -> Result<()> {
    fs::write(path, observer_to_json_string(obs, tol)? + "\n")?;
    Ok(())
}

/// Writes a trace as CSV: time, true functional, estimate, error,
/// constraint residual. Floats print in shortest-roundtrip form, so equal
/// runs produce identical bytes.
pub fn write_simulation_csv<W: Write>(out: &mut W, res: &SimulationResult) -> Result<()> {
    let r = res.z.first().map(|z| z.len()).unwrap_or(0);
    let mut header = String::from("t");
    for i in 1..=r {
        header.push_str(&format!(",z_{i}"));
    }
    for i in 1..=r {
        header.push_str(&format!(",zhat_{i}"));
    }
    for i in 1..=r {
        header.push_str(&format!(",e_{i}"));
    }
    header.push_str(",constraint_residual");
    writeln!(out, "{header}")?;
    for (idx, &t) in res.times.iter().enumerate() {
        let mut line = format!("{t}");
        for v in res.z[idx].iter() {
            line.push_str(&format!(",{v}"));
        }
        for v in res.zhat[idx].iter() {
            line.push_str(&format!(",{v}"));
        }
        for v in res.e[idx].iter() {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(",{}", res.constraint_residual[idx]));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Signal;
    use crate::numkit::Vector;
    use crate::simulation::{simulate, SimulationConfig};
    use crate::synthesis::{synthesize, synthesize_with_details, verify_observer};
    use proptest::prelude::*;

    fn demo_system() -> DescriptorSystem {
        DescriptorSystem::new(
            Some("demo".into()),
            Matrix::from_row_slice(
                4,
                4,
                &[
                    1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                ],
            ),
            Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 1.0, -1.0, 1.0])),
            Matrix::from_row_slice(4, 1, &[0.0, 0.0, 1.0, 0.0]),
            Matrix::from_row_slice(1, 4, &[0.0, 1.0, 0.0, 0.0]),
            Matrix::from_row_slice(1, 4, &[1.0, 0.0, 1.0, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn system_round_trip_is_bitwise_exact() {
        let sys = demo_system();
        let text = system_to_json_string(&sys).unwrap();
        let back = system_from_json_str(&text).unwrap();
        assert_eq!(back.name.as_deref(), Some("demo"));
        assert_eq!(sys.e, back.e);
        assert_eq!(sys.a, back.a);
        assert_eq!(sys.b, back.b);
        assert_eq!(sys.c, back.c);
        assert_eq!(sys.k, back.k);
    }

    #[test]
    fn system_files_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sys.json");
        let sys = demo_system();
        save_system(&path, &sys).unwrap();
        let back = load_system(&path).unwrap();
        assert_eq!(sys.e, back.e);
        assert_eq!(sys.k, back.k);
    }

    #[test]
    fn system_parser_rejects_defects() {
        assert!(matches!(
            system_from_json_str("not json"),
            Err(Error::ParseError(_))
        ));
        let make = |k_row: &str, r: usize| {
            format!(
                r#"{{"m":1,"n":2,"l":0,"p":1,"r":{r},
                   "E":[[1.0,0.0]],"A":[[0.0,1.0]],"B":[[]],
                   "C":[[1.0,0.0]],"K":[{k_row}]}}"#
            )
        };
        let ragged_err = system_from_json_str(&make("[1.0]", 1)).unwrap_err();
        assert!(
            matches!(ragged_err, Error::DimensionMismatch(_)),
            "{ragged_err:?}"
        );
        let wrong_dim = system_from_json_str(&make("[1.0,0.0]", 2)).unwrap_err();
        assert!(
            matches!(wrong_dim, Error::DimensionMismatch(_)),
            "{wrong_dim:?}"
        );
        assert!(system_from_json_str(&make("[1.0,0.0]", 1)).is_ok());
    }

    #[test]
    fn observer_round_trip_preserves_everything() {
        let sys = demo_system();
        let tol = TolerancePolicy::default();
        let obs = synthesize(&sys, &tol, None).unwrap();
        let text = observer_to_json_string(&obs, &tol).unwrap();
        let (back, tol_back) = observer_from_json_str(&text).unwrap();
        assert_eq!(obs.q, back.q);
        assert_eq!(obs.n, back.n);
        assert_eq!(obs.h, back.h);
        assert_eq!(obs.r, back.r);
        assert_eq!(obs.m, back.m);
        assert_eq!(obs.certificates.t, back.certificates.t);
        assert_eq!(obs.certificates.p, back.certificates.p);
        assert_eq!(
            obs.certificates.residual_a.to_bits(),
            back.certificates.residual_a.to_bits()
        );
        assert_eq!(tol.residual_tol, tol_back.residual_tol);
        assert!(verify_observer(&sys, &back, &tol).unwrap().ok());
    }

    #[test]
    fn static_observer_with_empty_order_round_trips() {
        let sys = DescriptorSystem::new(
            None,
            Matrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            Matrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            Matrix::from_row_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]),
            Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            Matrix::from_row_slice(2, 3, &[-1.0, 1.0, 0.0, 0.0, 1.0, 0.0]),
        )
        .unwrap();
        let tol = TolerancePolicy::default();
        let obs = synthesize(&sys, &tol, None).unwrap();
        assert_eq!(obs.q, 0);
        let text = observer_to_json_string(&obs, &tol).unwrap();
        let (back, _) = observer_from_json_str(&text).unwrap();
        assert_eq!(back.q, 0);
        assert_eq!(back.n.shape(), (0, 0));
        assert_eq!(back.m, obs.m);
        assert_eq!(back.certificates.t.shape(), obs.certificates.t.shape());
        assert!(verify_observer(&sys, &back, &tol).unwrap().ok());
    }

    #[test]
    fn observer_parser_rejects_shape_lies() {
        let sys = demo_system();
        let tol = TolerancePolicy::default();
        let obs = synthesize(&sys, &tol, None).unwrap();
        let text = observer_to_json_string(&obs, &tol).unwrap();
        let bad = text.replace("\"q\": 1", "\"q\": 2");
        assert!(matches!(
            observer_from_json_str(&bad),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn csv_layout_and_determinism() {
        let sys = demo_system();
        let tol = TolerancePolicy::default();
        let d = synthesize_with_details(&sys, &tol, None).unwrap();
        let cfg = SimulationConfig {
            t_end: 0.5,
            dt: 0.1,
            x_k0: Vector::from_vec(vec![0.0, 2.0]),
            w0: Vector::from_vec(vec![3.0]),
            u: Signal::new(vec![crate::model::ScalarSignal::Sine { omega: 1.0 }]),
            free_mode: None,
            project_ic: true,
        };
        let res = simulate(&d.reduced, &d.observer, &cfg, &tol).unwrap();
        let mut buf1 = Vec::new();
        write_simulation_csv(&mut buf1, &res).unwrap();
        let text = String::from_utf8(buf1.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,z_1,zhat_1,e_1,constraint_residual"
        );
        assert_eq!(text.lines().count(), 1 + res.times.len());
        let res2 = simulate(&d.reduced, &d.observer, &cfg, &tol).unwrap();
        let mut buf2 = Vec::new();
        write_simulation_csv(&mut buf2, &res2).unwrap();
        assert_eq!(buf1, buf2, "identical runs must produce identical bytes");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn random_systems_round_trip(seed in 0u64..1_000_000) {
            // deterministic pseudo-random entries from the seed
            let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1);
            let mut next = move || {
                state ^= state >> 12;
                state ^= state << 25;
                state ^= state >> 27;
                (state.wrapping_mul(0x2545_f491_4f6c_dd1d) >> 11) as f64
                    / (1u64 << 53) as f64 * 2000.0 - 1000.0
            };
            let (m, n, l, p, r) = (3, 4, 2, 1, 2);
            let sys = DescriptorSystem::new(
                None,
                Matrix::from_fn(m, n, |_, _| next()),
                Matrix::from_fn(m, n, |_, _| next()),
                Matrix::from_fn(m, l, |_, _| next()),
                Matrix::from_fn(p, n, |_, _| next()),
                Matrix::from_fn(r, n, |_, _| next()),
            ).unwrap();
            let back = system_from_json_str(&system_to_json_string(&sys).unwrap()).unwrap();
            prop_assert_eq!(sys.e, back.e);
            prop_assert_eq!(sys.a, back.a);
            prop_assert_eq!(sys.b, back.b);
            prop_assert_eq!(sys.c, back.c);
            prop_assert_eq!(sys.k, back.k);
        }
    }
}
