//! Vector-valued functions sampled on geometric time grids.

use thiserror::Error;

use crate::linalg::Vector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs 0 < start < end, got [{start}, {end}]")]
    BadRange { start: f64, end: f64 },
    #[error("grid is not strictly increasing at node {index}")]
    NotIncreasing { index: usize },
    #[error("grid ratio is not constant at node {index}")]
    NotGeometric { index: usize },
    #[error("{values} values for {nodes} grid nodes")]
    LengthMismatch { nodes: usize, values: usize },
    #[error("value at node {index} has length {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
}

/// Geometric nodes `start·ρ^i` covering `[start, end]` with at least
/// `points_per_decade` intervals per factor of ten. The last node is `end`.
pub fn geometric_grid(
    start: f64,
    end: f64,
    points_per_decade: usize,
) -> Result<Vec<f64>, GridError> {
    if !(start > 0.0 && end > start && end.is_finite()) {
        return Err(GridError::BadRange { start, end });
    }
    let decades = (end / start).log10();
    let intervals = ((decades * points_per_decade.max(1) as f64).ceil() as usize).max(1);
    let log_ratio = (end / start).ln() / intervals as f64;
    let mut nodes: Vec<f64> = (0..intervals)
        .map(|i| start * (log_ratio * i as f64).exp())
        .collect();
    nodes.push(end);
    Ok(nodes)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Vec<f64>,
    values: Vec<Vector>,
    log_start: f64,
    log_step: f64,
}

impl GridFunction {
    pub fn new(grid: Vec<f64>, values: Vec<Vector>) -> Result<Self, GridError> {
        if grid.len() != values.len() {
            return Err(GridError::LengthMismatch {
                nodes: grid.len(),
                values: values.len(),
            });
        }
        if grid.is_empty() || grid[0] <= 0.0 {
            return Err(GridError::BadRange {
                start: grid.first().copied().unwrap_or(0.0),
                end: grid.last().copied().unwrap_or(0.0),
            });
        }
        for i in 1..grid.len() {
            if !(grid[i] > grid[i - 1]) {
                return Err(GridError::NotIncreasing { index: i });
            }
        }
        let ratio = if grid.len() > 1 { grid[1] / grid[0] } else { 1.0 };
        for i in 2..grid.len() {
            if ((grid[i] / grid[i - 1]) / ratio - 1.0).abs() > 1e-12 {
                return Err(GridError::NotGeometric { index: i });
            }
        }
        let dim = values[0].len();
        for (index, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(GridError::DimensionMismatch {
                    index,
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        Ok(GridFunction {
            log_start: grid[0].ln(),
            log_step: ratio.ln(),
            grid,
            values,
        })
    }

    pub fn from_fn<E>(
        grid: Vec<f64>,
        mut f: impl FnMut(f64) -> Result<Vector, E>,
    ) -> Result<Self, E>
    where
        E: From<GridError>,
    {
        let values = grid.iter().map(|t| f(*t)).collect::<Result<Vec<_>, E>>()?;
        Ok(GridFunction::new(grid, values)?)
    }

    pub fn zeros(grid: Vec<f64>, dim: usize) -> Result<Self, GridError> {
        let values = vec![Vector::zeros(dim); grid.len()];
        GridFunction::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<Vector>) -> Result<Self, GridError> {
        GridFunction::new(self.grid.clone(), values)
    }

    pub fn map(&self, mut f: impl FnMut(f64, &Vector) -> Vector) -> GridFunction {
        let values = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(t, v)| f(*t, v))
            .collect();
        GridFunction {
            grid: self.grid.clone(),
            values,
            log_start: self.log_start,
            log_step: self.log_step,
        }
    }

    /// Four interpolation nodes and their weights for time `t`; `None`
    /// outside the grid. At a node the stencil is that node with weight 1.
    pub fn stencil(&self, t: f64) -> Option<Stencil> {
        let m = self.grid.len() - 1;
        if !(t >= self.grid[0] && t <= self.grid[m]) {
            return None;
        }
        if m == 0 {
            return Some(Stencil::node(0));
        }
        let u = t.ln();
        let pos = ((u - self.log_start) / self.log_step).floor();
        let i = (pos.max(0.0) as usize).min(m - 1);
        for j in [i, i + 1] {
            if self.grid[j] == t {
                return Some(Stencil::node(j));
            }
        }
        let lo = i.saturating_sub(1).min(m.saturating_sub(3));
        let hi = (lo + 3).min(m);
        let mut stencil = Stencil {
            index: [0; 4],
            weight: [0.0; 4],
            len: hi - lo + 1,
        };
        for (slot, j) in (lo..=hi).enumerate() {
            let uj = self.grid[j].ln();
            let mut w = 1.0;
            for k in lo..=hi {
                if k != j {
                    let uk = self.grid[k].ln();
                    w *= (u - uk) / (uj - uk);
                }
            }
            stencil.index[slot] = j;
            stencil.weight[slot] = w;
        }
        Some(stencil)
    }

    /// Cubic interpolation in `log t`; exact at nodes.
    pub fn eval(&self, t: f64) -> Option<Vector> {
        self.stencil(t).map(|s| s.apply(&self.values))
    }
}

/// Interpolation weights against a grid's node values.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    index: [usize; 4],
    weight: [f64; 4],
    len: usize,
}

impl Stencil {
    fn node(i: usize) -> Stencil {
        Stencil {
            index: [i, 0, 0, 0],
            weight: [1.0, 0.0, 0.0, 0.0],
            len: 1,
        }
    }

    pub fn apply(&self, values: &[Vector]) -> Vector {
        if self.len == 1 {
            return values[self.index[0]].clone();
        }
        let mut out = Vector::zeros(values[0].len());
        for k in 0..self.len {
            out.axpy(self.weight[k], &values[self.index[k]], 1.0);
        }
        out
    }
}
