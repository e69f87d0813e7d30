//! File output: RFC-4180 CSV tables, legacy-VTK ASCII fields, coordinate
//! matrix dumps, and the plain-text shape file format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::Error;
use crate::fem::FemSpace;
use crate::geometry::Mesh;
use crate::sparse::CsrMat;

/// 17 significant digits: enough for bitwise f64 round trips through text.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes an RFC-4180 table (CRLF line endings, comma separators).
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), Error> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "{}\r\n", header.join(","))?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        write!(out, "{}\r\n", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Legacy-VTK unstructured grid of the triangulation alone.
pub fn write_mesh_vtk(path: &Path, mesh: &Mesh) -> Result<(), Error> {
    let mut out = BufWriter::new(File::create(path)?);
    write_vtk_grid(&mut out, "slipflow mesh", mesh)?;
    out.flush()?;
    Ok(())
}

/// Legacy-VTK unstructured grid with the velocity (vertex values of the P2
/// field) and pressure attached as point data.
pub fn write_solution_vtk(
    path: &Path,
    space: &FemSpace,
    velocity: &[f64],
    pressure: &[f64],
) -> Result<(), Error> {
    let mesh = &space.mesh;
    let n = mesh.vertices.len();
    let mut out = BufWriter::new(File::create(path)?);
    write_vtk_grid(&mut out, "slipflow solution", mesh)?;
    writeln!(out, "POINT_DATA {n}")?;
    writeln!(out, "VECTORS velocity double")?;
    for v in 0..n {
        writeln!(
            out,
            "{} {} 0",
            fmt_f64(velocity[2 * v]),
            fmt_f64(velocity[2 * v + 1])
        )?;
    }
    writeln!(out, "SCALARS pressure double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for v in 0..n {
        writeln!(out, "{}", fmt_f64(pressure[v]))?;
    }
    out.flush()?;
    Ok(())
}

fn write_vtk_grid<W: Write>(out: &mut W, title: &str, mesh: &Mesh) -> Result<(), Error> {
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.vertices.len())?;
    for v in &mesh.vertices {
        writeln!(out, "{} {} 0", fmt_f64(v[0]), fmt_f64(v[1]))?;
    }
    writeln!(
        out,
        "CELLS {} {}",
        mesh.triangles.len(),
        4 * mesh.triangles.len()
    )?;
    for t in &mesh.triangles {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {}", mesh.triangles.len())?;
    for _ in &mesh.triangles {
        writeln!(out, "5")?;
    }
    Ok(())
}

/// Coordinate-format dump `i j value` per line, for debugging.
pub fn write_matrix_coo(path: &Path, mat: &CsrMat) -> Result<(), Error> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {} {}", mat.nrows, mat.ncols, mat.nnz())?;
    for (r, c, v) in mat.iter() {
        writeln!(out, "{r} {c} {}", fmt_f64(v))?;
    }
    out.flush()?;
    Ok(())
}

/// Shape file: `omega <value>`, `controls <m>`, then `x alpha` per line.
pub fn write_shape_file(path: &Path, omega: f64, controls: &[(f64, f64)]) -> Result<(), Error> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "omega {}", fmt_f64(omega))?;
    writeln!(out, "controls {}", controls.len())?;
    for (x, v) in controls {
        writeln!(out, "{} {}", fmt_f64(*x), fmt_f64(*v))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_shape_file(path: &Path) -> Result<(f64, Vec<(f64, f64)>), Error> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let bad = |msg: &str| {
        Error::Config(crate::error::ConfigError::InvalidValue {
            key: "shape file".into(),
            message: msg.into(),
        })
    };
    let omega_line = lines.next().ok_or_else(|| bad("missing omega line"))??;
    let omega = omega_line
        .strip_prefix("omega")
        .and_then(|s| s.trim().parse::<f64>().ok())
        .ok_or_else(|| bad("first line must be `omega <value>`"))?;
    let count_line = lines.next().ok_or_else(|| bad("missing controls line"))??;
    let m = count_line
        .strip_prefix("controls")
        .and_then(|s| s.trim().parse::<usize>().ok())
        .ok_or_else(|| bad("second line must be `controls <m>`"))?;
    let mut controls = Vec::with_capacity(m);
    for _ in 0..m {
        let line = lines
            .next()
            .ok_or_else(|| bad("truncated control list"))??;
        let mut it = line.split_whitespace();
        let x = it
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| bad("control lines must be `x alpha`"))?;
        let v = it
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| bad("control lines must be `x alpha`"))?;
        controls.push((x, v));
    }
    Ok((omega, controls))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_text_round_trip_is_exact() {
        for &x in &[1.0, -3.0 / 7.0, 1e-300, std::f64::consts::PI, 6.02214076e23] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "through `{s}`");
        }
    }

    #[test]
    fn matrix_dump_lists_every_entry() {
        let mut coo = crate::sparse::CooMat::new(2, 2);
        coo.push(0, 0, 1.5);
        coo.push(1, 0, -2.0);
        let csr = coo.to_csr();
        let dir = std::env::temp_dir().join("slipflow-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("matrix.txt");
        write_matrix_coo(&path, &csr).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "2 2 2");
        assert!(lines[1].starts_with("0 0 "));
        assert!(lines[2].starts_with("1 0 "));
    }

    #[test]
    fn mesh_vtk_export_has_cells() {
        let shape = crate::geometry::validate_shape(
            crate::geometry::ShapeProfile::constant(0.5),
            &crate::geometry::AdmissibleSetParams::default(),
        )
        .unwrap();
        let mesh = crate::geometry::build_mesh(&shape, 3, 2).unwrap();
        let dir = std::env::temp_dir().join("slipflow-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mesh.vtk");
        write_mesh_vtk(&path, &mesh).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("POINTS 12 double"));
        assert!(text.contains("CELLS 12 48"));
        assert!(text.contains("CELL_TYPES 12"));
    }

    #[test]
    fn shape_file_round_trip() {
        let dir = std::env::temp_dir().join("slipflow-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("shape.txt");
        let controls: Vec<(f64, f64)> = (0..5)
            .map(|i| (i as f64 / 4.0, 0.5 + 0.01 * i as f64))
            .collect();
        write_shape_file(&path, 1.5, &controls).unwrap();
        let (omega, read) = read_shape_file(&path).unwrap();
        assert_eq!(omega, 1.5);
        assert_eq!(read, controls);
    }
}
