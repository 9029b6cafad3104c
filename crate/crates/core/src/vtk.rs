//! Minimal legacy ASCII VTK (version 3.0) unstructured grid writer.

use std::io::Write;

use crate::error::{Error, Result};

const VTK_QUAD: u8 = 9;

pub struct VtkWriter<W: Write> {
    out: W,
    n_cells: Option<usize>,
}

impl<W: Write> VtkWriter<W> {
    pub fn new(out: W) -> Self {
        VtkWriter { out, n_cells: None }
    }

    pub fn header(&mut self, title: &str) -> Result<()> {
        // the title line is limited to 256 characters and must not contain a newline
        let title: String = title.chars().filter(|&c| c != '\n').take(255).collect();
        writeln!(self.out, "# vtk DataFile Version 3.0")?;
        writeln!(self.out, "{title}")?;
        writeln!(self.out, "ASCII")?;
        writeln!(self.out, "DATASET UNSTRUCTURED_GRID")?;
        Ok(())
    }

    pub fn quads(&mut self, points: &[[f64; 3]], quads: &[[usize; 4]]) -> Result<()> {
        writeln!(self.out, "POINTS {} double", points.len())?;
        for p in points {
            writeln!(self.out, "{:e} {:e} {:e}", p[0], p[1], p[2])?;
        }
        writeln!(self.out, "CELLS {} {}", quads.len(), 5 * quads.len())?;
        for q in quads {
            if q.iter().any(|&n| n >= points.len()) {
                return Err(Error::Data("cell references a missing point".into()));
            }
            writeln!(self.out, "4 {} {} {} {}", q[0], q[1], q[2], q[3])?;
        }
        writeln!(self.out, "CELL_TYPES {}", quads.len())?;
        for _ in quads {
            writeln!(self.out, "{VTK_QUAD}")?;
        }
        self.n_cells = Some(quads.len());
        Ok(())
    }

    pub fn cell_scalars(&mut self, n_cells: usize, fields: &[(&str, &[f64])]) -> Result<()> {
        if self.n_cells != Some(n_cells) {
            return Err(Error::Data("cell data written before matching cells".into()));
        }
        writeln!(self.out, "CELL_DATA {n_cells}")?;
        for (name, values) in fields {
            if values.len() != n_cells {
                return Err(Error::Data(format!("field {name} has {} values for {n_cells} cells", values.len())));
            }
            writeln!(self.out, "SCALARS {name} double 1")?;
            writeln!(self.out, "LOOKUP_TABLE default")?;
            for v in values.iter() {
                writeln!(self.out, "{v:e}")?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_one_quad() {
        let mut buf = Vec::new();
        let mut w = VtkWriter::new(&mut buf);
        w.header("test").unwrap();
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        w.quads(&pts, &[[0, 1, 2, 3]]).unwrap();
        w.cell_scalars(1, &[("j_norm", &[0.5])]).unwrap();
        w.finish().unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("# vtk DataFile Version 3.0\ntest\nASCII\nDATASET UNSTRUCTURED_GRID\n"));
        assert!(s.contains("CELL_TYPES 1\n9\n"));
        assert!(s.contains("SCALARS j_norm double 1\nLOOKUP_TABLE default\n5e-1\n"));
    }

    #[test]
    fn rejects_mismatched_data() {
        let mut buf = Vec::new();
        let mut w = VtkWriter::new(&mut buf);
        w.header("x").unwrap();
        assert!(w.cell_scalars(1, &[("a", &[1.0])]).is_err());
        w.quads(&[[0.0; 3]; 4], &[[0, 1, 2, 3]]).unwrap();
        assert!(w.cell_scalars(1, &[("a", &[1.0, 2.0])]).is_err());
        assert!(w.quads(&[[0.0; 3]; 2], &[[0, 1, 2, 3]]).is_err());
    }
}
