use crate::error::{PricerError, Result};

/// Partition `0 = t₀ < t₁ < … < tₙ = T` of the trading horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(PricerError::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(PricerError::invalid("n_steps must be positive"));
        }
        let dt = horizon / n_steps as f64;
        let mut nodes: Vec<f64> = (0..n_steps).map(|i| i as f64 * dt).collect();
        nodes.push(horizon);
        Ok(TimeGrid { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(PricerError::invalid("a time grid needs at least two nodes"));
        }
        if nodes[0] != 0.0 {
            return Err(PricerError::invalid(format!("first grid node must be 0, got {}", nodes[0])));
        }
        if nodes.iter().any(|t| !t.is_finite()) {
            return Err(PricerError::invalid("grid nodes must be finite"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PricerError::invalid("grid nodes must be strictly increasing"));
        }
        Ok(TimeGrid { nodes })
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().expect("grid has nodes")
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn dt(&self, step: usize) -> f64 {
        self.nodes[step + 1] - self.nodes[step]
    }

    /// Index of the interval `[tᵢ, tᵢ₊₁)` containing `t`; `T` maps to the last interval.
    pub fn interval_index(&self, t: f64) -> usize {
        let n = self.n_steps();
        match self.nodes.partition_point(|&s| s <= t) {
            0 => 0,
            k if k > n => n - 1,
            k => k - 1,
        }
    }

    /// Union of the breakpoints of two grids on the same horizon.
    pub fn merge(&self, other: &TimeGrid) -> Result<TimeGrid> {
        let tol = 1e-12 * self.horizon().max(1.0);
        if (self.horizon() - other.horizon()).abs() > tol {
            return Err(PricerError::Dimension(format!(
                "grids have different horizons {} and {}",
                self.horizon(),
                other.horizon()
            )));
        }
        let mut all: Vec<f64> = self.nodes.iter().chain(other.nodes.iter()).copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
        let mut nodes: Vec<f64> = Vec::with_capacity(all.len());
        for t in all {
            match nodes.last() {
                Some(&last) if t - last <= tol => {}
                _ => nodes.push(t),
            }
        }
        // Keep the exact horizon of `self` as the final node.
        let last = nodes.len() - 1;
        nodes[last] = self.horizon();
        TimeGrid::from_nodes(nodes)
    }
}

/// Piecewise-constant function of time with a `rows × cols` block on each
/// grid interval. Vectors have `cols == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    grid: TimeGrid,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl StepFunction {
    /// Vector-valued step function; `values[i]` is the value on interval `i`.
    pub fn vector(grid: TimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != grid.n_steps() {
            return Err(PricerError::Dimension(format!(
                "step function has {} blocks for {} intervals",
                values.len(),
                grid.n_steps()
            )));
        }
        let rows = values[0].len();
        if rows == 0 || values.iter().any(|v| v.len() != rows) {
            return Err(PricerError::Dimension("inconsistent vector lengths across intervals".into()));
        }
        let flat: Vec<f64> = values.into_iter().flatten().collect();
        Self::from_flat(grid, rows, 1, flat)
    }

    /// Matrix-valued step function; `values[i][r][c]` is entry `(r, c)` on interval `i`.
    pub fn matrix(grid: TimeGrid, values: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if values.len() != grid.n_steps() {
            return Err(PricerError::Dimension(format!(
                "step function has {} blocks for {} intervals",
                values.len(),
                grid.n_steps()
            )));
        }
        let rows = values[0].len();
        let cols = values[0].first().map_or(0, |r| r.len());
        if rows == 0 || cols == 0 {
            return Err(PricerError::Dimension("empty matrix block".into()));
        }
        if values.iter().any(|m| m.len() != rows || m.iter().any(|r| r.len() != cols)) {
            return Err(PricerError::Dimension("inconsistent matrix shapes across intervals".into()));
        }
        let flat: Vec<f64> = values.into_iter().flatten().flatten().collect();
        Self::from_flat(grid, rows, cols, flat)
    }

    pub fn constant_vector(horizon: f64, value: Vec<f64>) -> Result<Self> {
        Self::vector(TimeGrid::uniform(horizon, 1)?, vec![value])
    }

    pub fn constant_matrix(horizon: f64, value: Vec<Vec<f64>>) -> Result<Self> {
        Self::matrix(TimeGrid::uniform(horizon, 1)?, vec![value])
    }

    fn from_flat(grid: TimeGrid, rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PricerError::invalid("step function values must be finite"));
        }
        Ok(StepFunction { grid, rows, cols, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_vector(&self) -> bool {
        self.cols == 1
    }

    fn block_len(&self) -> usize {
        self.rows * self.cols
    }

    /// Value block on interval `i`, row-major.
    pub fn block(&self, i: usize) -> &[f64] {
        let len = self.block_len();
        &self.values[i * len..(i + 1) * len]
    }

    /// Value block in force at time `t` (right-continuous).
    pub fn value_at(&self, t: f64) -> &[f64] {
        self.block(self.grid.interval_index(t))
    }

    pub fn is_constant(&self) -> bool {
        let first = self.block(0);
        (1..self.grid.n_steps()).all(|i| self.block(i) == first)
    }

    /// Re-expresses this function on a finer grid containing all of its breakpoints.
    pub fn refine(&self, grid: &TimeGrid) -> StepFunction {
        let mut values = Vec::with_capacity(grid.n_steps() * self.block_len());
        for i in 0..grid.n_steps() {
            let mid = 0.5 * (grid.nodes()[i] + grid.nodes()[i + 1]);
            values.extend_from_slice(self.value_at(mid));
        }
        StepFunction {
            grid: grid.clone(),
            rows: self.rows,
            cols: self.cols,
            values,
        }
    }

    /// `∫₀ᵀ φₜ'χₜ dt` for two vector step functions of the same dimension, exact.
    pub fn inner(&self, other: &StepFunction) -> Result<f64> {
        if !self.is_vector() || !other.is_vector() || self.rows != other.rows {
            return Err(PricerError::Dimension(format!(
                "inner product needs vectors of equal length, got {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let grid = self.grid.merge(&other.grid)?;
        let mut total = 0.0;
        for i in 0..grid.n_steps() {
            let mid = 0.5 * (grid.nodes()[i] + grid.nodes()[i + 1]);
            let a = self.value_at(mid);
            let b = other.value_at(mid);
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            total += dot * grid.dt(i);
        }
        Ok(total)
    }

    /// `∫₀ᵀ |φₜ|² dt` (Frobenius norm for matrices).
    pub fn norm_sq(&self) -> f64 {
        (0..self.grid.n_steps())
            .map(|i| self.block(i).iter().map(|x| x * x).sum::<f64>() * self.grid.dt(i))
            .sum()
    }

    /// `∫₀ᵀ φₜ dt` componentwise.
    pub fn integral(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.block_len()];
        for i in 0..self.grid.n_steps() {
            let dt = self.grid.dt(i);
            for (o, v) in out.iter_mut().zip(self.block(i)) {
                *o += v * dt;
            }
        }
        out
    }

    /// Linear combination `Σ cⱼ φⱼ` on the merged grid.
    pub fn linear_combination(terms: &[(f64, &StepFunction)]) -> Result<StepFunction> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| PricerError::invalid("empty linear combination"))?;
        let mut grid = first.grid.clone();
        for (_, f) in &terms[1..] {
            if f.rows != first.rows || f.cols != first.cols {
                return Err(PricerError::Dimension("linear combination of differently shaped step functions".into()));
            }
            grid = grid.merge(&f.grid)?;
        }
        let len = first.block_len();
        let mut values = vec![0.0; grid.n_steps() * len];
        for (c, f) in terms {
            let refined = f.refine(&grid);
            for (o, v) in values.iter_mut().zip(&refined.values) {
                *o += c * v;
            }
        }
        Ok(StepFunction {
            grid,
            rows: first.rows,
            cols: first.cols,
            values,
        })
    }

    pub fn scaled(&self, c: f64) -> StepFunction {
        StepFunction {
            values: self.values.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }

    /// Column `j` of a matrix step function as a vector step function.
    pub fn column(&self, j: usize) -> Result<StepFunction> {
        if j >= self.cols {
            return Err(PricerError::Dimension(format!("column {j} out of range for {} columns", self.cols)));
        }
        let values = (0..self.grid.n_steps())
            .flat_map(|i| {
                let b = self.block(i);
                (0..self.rows).map(move |r| b[r * self.cols + j])
            })
            .collect();
        Ok(StepFunction {
            grid: self.grid.clone(),
            rows: self.rows,
            cols: 1,
            values,
        })
    }

    /// Pointwise matrix-vector product `φₜ q` for a constant vector `q`.
    pub fn mat_vec(&self, q: &[f64]) -> Result<StepFunction> {
        if q.len() != self.cols {
            return Err(PricerError::Dimension(format!("vector of length {} against {} columns", q.len(), self.cols)));
        }
        let values = (0..self.grid.n_steps())
            .flat_map(|i| {
                let b = self.block(i);
                (0..self.rows).map(move |r| (0..self.cols).map(|c| b[r * self.cols + c] * q[c]).sum::<f64>())
            })
            .collect();
        Ok(StepFunction {
            grid: self.grid.clone(),
            rows: self.rows,
            cols: 1,
            values,
        })
    }

    /// Applies a per-block map producing vectors of length `rows_out`.
    pub fn map_blocks(&self, rows_out: usize, mut f: impl FnMut(usize, &[f64]) -> Result<Vec<f64>>) -> Result<StepFunction> {
        let mut values = Vec::with_capacity(self.grid.n_steps() * rows_out);
        for i in 0..self.grid.n_steps() {
            let out = f(i, self.block(i))?;
            if out.len() != rows_out {
                return Err(PricerError::Dimension("block map returned wrong length".into()));
            }
            values.extend(out);
        }
        Self::from_flat(self.grid.clone(), rows_out, 1, values)
    }
}
