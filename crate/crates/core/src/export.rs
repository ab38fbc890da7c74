//! Label map renderings: PPM images and CSV tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dataset::Grid;
use crate::error::{Error, Result};
use crate::labeling::LabelMap;
use crate::sampling::{csv_error, csv_file};

/// Colors for labels 1..=16; label `l` uses entry `(l - 1) % 16` and label 0
/// is black.
pub const PALETTE: [[u8; 3]; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

pub fn color(label: u32) -> [u8; 3] {
    if label == 0 {
        [0, 0, 0]
    } else {
        PALETTE[((label - 1) % 16) as usize]
    }
}

fn check_len(grid: Grid, len: usize) -> Result<()> {
    if grid.len() != len {
        return Err(Error::Shape(format!("{len} labels for a {}x{} grid", grid.height, grid.width)));
    }
    Ok(())
}

/// Binary PPM (P6), one pixel per label.
pub fn write_ppm(path: &Path, grid: Grid, labels: &[u32]) -> Result<()> {
    check_len(grid, labels.len())?;
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::at_path(path, e))?);
    write!(w, "P6\n{} {}\n255\n", grid.width, grid.height)?;
    for &l in labels {
        w.write_all(&color(l))?;
    }
    w.flush()?;
    Ok(())
}

/// `row,col,label,provenance` for every pixel.
pub fn write_label_csv(path: &Path, grid: Grid, map: &LabelMap) -> Result<()> {
    check_len(grid, map.len())?;
    let mut w = csv_file(path)?;
    w.write_record(["row", "col", "label", "provenance"]).map_err(csv_error)?;
    for (i, (&l, p)) in map.labels().iter().zip(map.provenance()).enumerate() {
        let (row, col) = grid.coord(i);
        w.serialize((row, col, l, p.as_str())).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// A per-pixel real field as an `(height, width)` float64 NPY array.
pub fn write_npy_field(path: &Path, grid: Grid, values: &[f64]) -> Result<()> {
    check_len(grid, values.len())?;
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::at_path(path, e))?);
    crate::npy::write_f64(&mut w, &[grid.height, grid.width], values)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityProfile;
    use crate::labeling::{two_stage_label, Consensus};
    use crate::sampling::LabeledSet;
    use crate::spectral::Embedding;

    #[test]
    fn ppm_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        write_ppm(&path, Grid::new(2, 3), &[0, 1, 2, 16, 17, 3]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P6\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        assert_eq!(px.len(), 18);
        assert_eq!(&px[0..3], &[0, 0, 0]);
        assert_eq!(&px[3..6], &PALETTE[0]);
        assert_eq!(&px[9..12], &PALETTE[15]);
        assert_eq!(&px[12..15], &PALETTE[0]);
        assert!(write_ppm(&path, Grid::new(2, 2), &[1, 2, 3]).is_err());
    }

    #[test]
    fn palette_colors_are_distinct() {
        for i in 0..16 {
            for j in 0..i {
                assert_ne!(PALETTE[i], PALETTE[j]);
            }
            assert_ne!(PALETTE[i], [0, 0, 0]);
        }
    }

    #[test]
    fn label_csv_rows() {
        let e = Embedding::from_coords(vec![0.0, 1.0], 1, 0).unwrap();
        let p = DensityProfile::from_unnormalized(vec![2.0, 1.0], 1.0, 1).unwrap();
        let seeds = LabeledSet::new(vec![(0, 5)]).unwrap();
        let map = two_stage_label(&seeds, &p, &e, &Consensus::Off).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_label_csv(&path, Grid::new(1, 2), &map).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "row,col,label,provenance\n0,0,5,seed\n0,1,5,stage1\n"
        );
    }
}
