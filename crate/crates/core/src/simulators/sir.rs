use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::Observable;

pub const SIR_SIZE: usize = 50;
pub const SIR_STEPS: usize = 100;
pub const SIR_INITIAL_INFECTED: usize = 3;
const DT: f64 = 0.1;

const S: u8 = 0;
const I: u8 = 1;
const R: u8 = 2;

/// Full trajectory of a grid epidemic; `states[0]` is the initial grid.
#[derive(Debug, Clone)]
pub struct SirRun {
    pub states: Vec<Vec<u8>>,
}

impl SirRun {
    pub fn snapshot(&self) -> &[u8] {
        self.states.last().expect("at least the initial state")
    }
}

fn step(grid: &[u8], beta: f64, gamma: f64, rng: &mut RngStream) -> Vec<u8> {
    let n = SIR_SIZE;
    let mut next = grid.to_vec();
    for r in 0..n {
        for c in 0..n {
            if grid[r * n + c] != I {
                continue;
            }
            let neighbors = [
                (r > 0).then(|| (r - 1) * n + c),
                (r + 1 < n).then(|| (r + 1) * n + c),
                (c > 0).then(|| r * n + c - 1),
                (c + 1 < n).then(|| r * n + c + 1),
            ];
            for j in neighbors.into_iter().flatten() {
                if grid[j] == S && rng.random::<f64>() < beta * DT {
                    next[j] = I;
                }
            }
            if rng.random::<f64>() < gamma * DT {
                next[r * n + c] = R;
            }
        }
    }
    next
}

/// Runs the grid epidemic and keeps every intermediate state.
pub fn spatial_sir_run(theta: &[f64], rng: &mut RngStream) -> Result<SirRun> {
    if theta.len() != 2 {
        return Err(Error::ShapeMismatch {
            expected: 2,
            got: theta.len(),
        });
    }
    let (beta, gamma) = (theta[0], theta[1]);
    if !(0.0..=1.0).contains(&beta) || !(0.0..=1.0).contains(&gamma) {
        return Err(Error::OutOfSupport {
            benchmark: "sir".into(),
            theta: theta.to_vec(),
        });
    }
    let cells = SIR_SIZE * SIR_SIZE;
    let mut grid = vec![S; cells];
    let mut placed = 0;
    while placed < SIR_INITIAL_INFECTED {
        let k = rng.random_range(0..cells);
        if grid[k] == S {
            grid[k] = I;
            placed += 1;
        }
    }
    let mut states = Vec::with_capacity(SIR_STEPS + 1);
    states.push(grid);
    for _ in 0..SIR_STEPS {
        let next = step(states.last().unwrap(), beta, gamma, rng);
        states.push(next);
    }
    Ok(SirRun { states })
}

/// Final grid, S/I/R encoded as 0/1/2 and flattened row-major.
pub fn spatial_sir_simulate(theta: &[f64], rng: &mut RngStream) -> Result<Observable> {
    let run = spatial_sir_run(theta, rng)?;
    Observable::new(run.snapshot().iter().map(|v| f64::from(*v)).collect())
}
