use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::engine::path_rng;
use super::expr::compile::Program;
use super::expr::PayoffExpr;
use super::grid::TimeGrid;
use crate::error::{PricerError, Result};

/// Brownian increments `ΔBⁱ` on a time grid for a batch of paths.
#[derive(Debug, Clone)]
pub struct PathBatch {
    grid: TimeGrid,
    dim: usize,
    paths: usize,
    // [path][step][coord]
    increments: Vec<f64>,
}

/// Draws `paths` independent `d`-dimensional Brownian paths on `grid`.
/// Path `k` uses generator stream `k`, so results do not depend on thread count.
pub fn sample_paths(grid: &TimeGrid, dim: usize, paths: usize, seed: u64) -> Result<PathBatch> {
    if dim == 0 || paths == 0 {
        return Err(PricerError::invalid("path sampling needs positive dimension and path count"));
    }
    let n = grid.n_steps();
    let base = ChaCha8Rng::seed_from_u64(seed);
    let sd: Vec<f64> = (0..n).map(|i| grid.dt(i).sqrt()).collect();
    let increments: Vec<f64> = (0..paths)
        .into_par_iter()
        .flat_map_iter(|p| {
            let mut rng = path_rng(&base, p as u64);
            let sd = &sd;
            (0..n * dim).map(move |k| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * sd[k / dim]
            })
        })
        .collect();
    Ok(PathBatch {
        grid: grid.clone(),
        dim,
        paths,
        increments,
    })
}

impl PathBatch {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn increment(&self, path: usize, step: usize) -> &[f64] {
        let n = self.grid.n_steps();
        let start = (path * n + step) * self.dim;
        &self.increments[start..start + self.dim]
    }

    /// `B_{t_k}` for `k = 0..=n` on one path.
    pub fn positions(&self, path: usize) -> Vec<Vec<f64>> {
        let n = self.grid.n_steps();
        let mut b = vec![0.0; self.dim];
        let mut out = Vec::with_capacity(n + 1);
        out.push(b.clone());
        for k in 0..n {
            for (x, d) in b.iter_mut().zip(self.increment(path, k)) {
                *x += d;
            }
            out.push(b.clone());
        }
        out
    }

    pub fn terminal(&self, path: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.dim];
        for k in 0..self.grid.n_steps() {
            for (x, d) in b.iter_mut().zip(self.increment(path, k)) {
                *x += d;
            }
        }
        b
    }

    /// Same paths on the grid of every second node (increments summed pairwise).
    pub fn coarsen(&self) -> Result<PathBatch> {
        let n = self.grid.n_steps();
        if n % 2 != 0 {
            return Err(PricerError::invalid("coarsening needs an even number of steps"));
        }
        let nodes: Vec<f64> = self.grid.nodes().iter().step_by(2).copied().collect();
        let grid = TimeGrid::from_nodes(nodes)?;
        let mut increments = Vec::with_capacity(self.increments.len() / 2);
        for p in 0..self.paths {
            for k in 0..n / 2 {
                let a = self.increment(p, 2 * k);
                let b = self.increment(p, 2 * k + 1);
                increments.extend(a.iter().zip(b).map(|(x, y)| x + y));
            }
        }
        Ok(PathBatch {
            grid,
            dim: self.dim,
            paths: self.paths,
            increments,
        })
    }

    /// Pathwise value of each expression. Stochastic integrals use left-point
    /// sums, exact when the integrand's breakpoints lie on the path grid.
    pub fn evaluate(&self, exprs: &[&PayoffExpr]) -> Result<Vec<Vec<f64>>> {
        let program = Program::new(exprs)?;
        if let Some(space) = program.space {
            if space.dim != self.dim {
                return Err(PricerError::Dimension(format!(
                    "expression dimension {} vs path dimension {}",
                    space.dim, self.dim
                )));
            }
            if (space.horizon - self.grid.horizon()).abs() > 1e-12 * space.horizon.max(1.0) {
                return Err(PricerError::Dimension("expression horizon differs from path grid".into()));
            }
        }
        let n = self.grid.n_steps();
        let integrands: Vec<Vec<Vec<f64>>> = program
            .functionals
            .iter()
            .map(|phi| (0..n).map(|k| phi.value_at(self.grid.nodes()[k]).to_vec()).collect())
            .collect();
        let rows: Vec<Vec<f64>> = (0..self.paths)
            .into_par_iter()
            .map(|p| {
                let g: Vec<f64> = integrands
                    .iter()
                    .map(|phi| {
                        (0..n)
                            .map(|k| phi[k].iter().zip(self.increment(p, k)).map(|(a, b)| a * b).sum::<f64>())
                            .sum()
                    })
                    .collect();
                let mut scratch = Vec::new();
                program.ops.iter().map(|op| op.eval(&g, &mut scratch)).collect()
            })
            .collect();
        let mut out = vec![Vec::with_capacity(self.paths); exprs.len()];
        for row in rows {
            for (o, v) in out.iter_mut().zip(row) {
                o.push(v);
            }
        }
        Ok(out)
    }
}
