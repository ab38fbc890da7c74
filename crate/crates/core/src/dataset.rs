//! Image cubes, ground truth maps, and the grid/point-cloud correspondence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npy;

/// Noise variance used during preprocessing unless overridden.
pub const DEFAULT_NOISE_VARIANCE: f64 = 1e-4;

/// Spatial layout of an `height x width` image in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
}

impl Grid {
    pub fn new(height: usize, width: usize) -> Self {
        Grid { height, width }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(row, col)` of flat point index `i`.
    #[inline]
    pub fn coord(&self, i: usize) -> (usize, usize) {
        (i / self.width, i % self.width)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }
}

/// An `n1 x n2 x D` image flattened into `n = n1 * n2` points of dimension `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCube {
    grid: Grid,
    bands: usize,
    values: Vec<f64>,
}

impl ImageCube {
    /// Builds a cube from row-major values, checking the size and finiteness.
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::Shape(format!(
                "cube dimensions must be positive, got {height}x{width}x{bands}"
            )));
        }
        if values.len() != height * width * bands {
            return Err(Error::Shape(format!(
                "expected {} values for a {height}x{width}x{bands} cube, got {}",
                height * width * bands,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let point = pos / bands;
            return Err(Error::Data(format!(
                "non-finite value {} at flat index {pos} (pixel {point}, band {})",
                values[pos],
                pos % bands
            )));
        }
        Ok(ImageCube {
            grid: Grid::new(height, width),
            bands,
            values,
        })
    }

    /// A cube of `n` points laid out as a single image row.
    pub fn from_points(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "{} values cannot be split into points of dimension {dim}",
                points.len()
            )));
        }
        Self::new(1, points.len() / dim, dim, points)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    /// Spectral (ambient) dimension.
    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Spectrum of point `i`.
    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.bands..(i + 1) * self.bands]
    }

    /// Row-major `n x D` view of the point cloud.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` to every value, keeping the layout.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.grid.height,
            self.grid.width,
            self.bands,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Per-pixel class labels; 0 marks pixels without ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    grid: Grid,
    labels: Vec<u32>,
}

impl GroundTruth {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Shape(format!(
                "expected {} labels for a {height}x{width} map, got {}",
                height * width,
                labels.len()
            )));
        }
        if labels.iter().all(|&l| l == 0) {
            return Err(Error::Data("ground truth has no labeled pixels".into()));
        }
        Ok(GroundTruth {
            grid: Grid::new(height, width),
            labels,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Distinct positive class ids, ascending.
    pub fn classes(&self) -> Vec<u32> {
        let mut classes: Vec<u32> = self.labels.iter().copied().filter(|&l| l > 0).collect();
        classes.sort_unstable();
        classes.dedup();
        classes
    }

    /// Indices of pixels that carry a ground-truth label.
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] > 0).collect()
    }

    pub fn check_matches(&self, cube: &ImageCube) -> Result<()> {
        if self.grid != cube.grid() {
            return Err(Error::Shape(format!(
                "ground truth is {}x{} but cube is {}x{}",
                self.grid.height,
                self.grid.width,
                cube.height(),
                cube.width()
            )));
        }
        Ok(())
    }
}

/// Loads an `(n1, n2, D)` real-valued array as an image cube.
pub fn load_npy_cube(path: &Path) -> Result<ImageCube> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| Error::at_path(path, e))?);
    let (shape, values) = npy::read_f64(&mut reader)?;
    if shape.len() != 3 {
        return Err(Error::Shape(format!(
            "cube file must have rank 3 (n1, n2, D), found shape {shape:?}"
        )));
    }
    ImageCube::new(shape[0], shape[1], shape[2], values)
}

/// Loads an `(n1, n2)` integer array as ground truth.
pub fn load_npy_ground_truth(path: &Path) -> Result<GroundTruth> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| Error::at_path(path, e))?);
    let (shape, values) = npy::read_i64(&mut reader)?;
    if shape.len() != 2 {
        return Err(Error::Shape(format!(
            "ground truth file must have rank 2 (n1, n2), found shape {shape:?}"
        )));
    }
    let labels = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            u32::try_from(v).map_err(|_| Error::Data(format!("invalid label {v} at flat index {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    GroundTruth::new(shape[0], shape[1], labels)
}

pub fn write_npy_cube(path: &Path, cube: &ImageCube) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path).map_err(|e| Error::at_path(path, e))?);
    npy::write_f64(
        &mut writer,
        &[cube.height(), cube.width(), cube.bands()],
        cube.values(),
    )?;
    writer.flush()?;
    Ok(())
}

/// Writes a `(n1, n2)` label array; used for ground truth and predicted maps alike.
pub fn write_npy_labels(path: &Path, grid: Grid, labels: &[u32]) -> Result<()> {
    let data: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    let mut writer = BufWriter::new(File::create(path).map_err(|e| Error::at_path(path, e))?);
    npy::write_i64(&mut writer, &[grid.height, grid.width], &data)?;
    writer.flush()?;
    Ok(())
}

/// Adds i.i.d. zero-mean Gaussian noise of the given variance to every value.
pub fn inject_noise(cube: &ImageCube, variance: f64, seed: u64) -> Result<ImageCube> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::param(format!("noise variance must be >= 0, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(cube.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt())
        .map_err(|e| Error::param(format!("invalid noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = cube.values().iter().map(|&v| v + normal.sample(&mut rng)).collect();
    ImageCube::new(cube.height(), cube.width(), cube.bands(), values)
}

/// Random class means rescaled so the closest pair sits `separation` apart.
pub(crate) fn class_means<R: Rng>(classes: usize, bands: usize, separation: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let mut means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..bands).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut min_gap = f64::INFINITY;
    for a in 0..classes {
        for b in a + 1..classes {
            min_gap = min_gap.min(euclidean(&means[a], &means[b]));
        }
    }
    if !(min_gap > 0.0) {
        return Err(Error::Numerical("degenerate class means; try another seed".into()));
    }
    let scale = separation / min_gap;
    for m in &mut means {
        for v in m.iter_mut() {
            *v *= scale;
        }
    }
    Ok(means)
}

/// Parameters for [`synthesize_scene`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub classes: usize,
    /// Minimum Euclidean distance between any two class means, in units of the
    /// per-band noise standard deviation (which is 1).
    pub separation: f64,
    /// Number of Voronoi seeds per class.
    pub smoothness: usize,
    pub seed: u64,
}

/// Generates a piecewise-constant scene with Gaussian spectral noise.
///
/// The grid is partitioned into the Voronoi cells, under 4-adjacency path
/// length, of `classes * smoothness` distinct seed pixels (seed `s` belongs to
/// class `s % classes + 1`). Each pixel
/// is its class mean plus standard normal noise in every band. Class means are
/// random directions rescaled so the closest pair sits exactly `separation`
/// apart.
pub fn synthesize_scene(spec: &SceneSpec) -> Result<(ImageCube, GroundTruth)> {
    let SceneSpec {
        height,
        width,
        bands,
        classes,
        separation,
        smoothness,
        seed,
    } = *spec;
    let n = height * width;
    if classes < 2 {
        return Err(Error::param(format!("scene needs at least 2 classes, got {classes}")));
    }
    if classes > n {
        return Err(Error::param(format!("{classes} classes do not fit in {n} pixels")));
    }
    if !(separation > 0.0) || !separation.is_finite() {
        return Err(Error::param(format!("separation must be > 0, got {separation}")));
    }
    if smoothness == 0 || bands == 0 {
        return Err(Error::param("smoothness and band count must be positive"));
    }
    let n_seeds = classes * smoothness;
    if n_seeds > n {
        return Err(Error::param(format!(
            "{n_seeds} Voronoi seeds do not fit in {n} pixels; lower smoothness"
        )));
    }
    let grid = Grid::new(height, width);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let seed_pixels = rand::seq::index::sample(&mut rng, n, n_seeds).into_vec();
    // Multi-source breadth-first growth: each pixel joins the cell of the seed
    // that reaches it first, so every cell is 4-connected.
    let mut owner = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::with_capacity(n);
    for (s, &p) in seed_pixels.iter().enumerate() {
        owner[p] = s;
        queue.push_back(p);
    }
    while let Some(p) = queue.pop_front() {
        let (r, c) = grid.coord(p);
        let candidates = [
            (r > 0).then(|| grid.index(r - 1, c)),
            (c > 0).then(|| grid.index(r, c - 1)),
            (c + 1 < width).then(|| grid.index(r, c + 1)),
            (r + 1 < height).then(|| grid.index(r + 1, c)),
        ];
        for q in candidates.into_iter().flatten() {
            if owner[q] == usize::MAX {
                owner[q] = owner[p];
                queue.push_back(q);
            }
        }
    }
    let labels: Vec<u32> = owner.iter().map(|&s| (s % classes) as u32 + 1).collect();

    let means = class_means(classes, bands, separation, &mut rng)?;

    let mut values = Vec::with_capacity(n * bands);
    for &label in &labels {
        for &mu in &means[label as usize - 1] {
            values.push(mu + rng.sample::<f64, _>(StandardNormal));
        }
    }

    Ok((
        ImageCube::new(height, width, bands, values)?,
        GroundTruth::new(height, width, labels)?,
    ))
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}
