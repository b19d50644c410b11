//! Linear reservoirs: random topologies, modal decomposition, simulation
//! and analytic steady-state responses.

mod response;
mod simulate;
mod topology;

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::MultiSineSignal;

pub use response::{steady_state_series, transfer_response, FrequencyResponse};
pub use simulate::{simulate, Activation, Drive, Integrator, ReservoirRef, SimulationOptions};
pub use topology::{
    decouple, generate_echo_state_topology, generate_random_topology, max_eigenvalue,
    random_orthogonal, recouple, ModalReservoir, ReservoirTopology, TopologyDoc,
};

/// Uniform output grid. The state is initialised at `t0` and rows are
/// recorded at `t0 + tau, t0 + 2 tau, ..., t0 + steps * tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub tau: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, tau: f64, steps: usize) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {tau}")));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("grid needs at least one step".into()));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidArgument("grid start must be finite".into()));
        }
        Ok(Self { t0, tau, steps })
    }

    pub fn row_time(&self, row: usize) -> f64 {
        self.t0 + (row + 1) as f64 * self.tau
    }

    pub fn end(&self) -> f64 {
        self.row_time(self.steps - 1)
    }

    /// The window of equal length that directly follows this one.
    pub fn continuation(&self) -> Self {
        Self {
            t0: self.t0 + self.steps as f64 * self.tau,
            ..*self
        }
    }

    /// Drop the first `rows` rows.
    pub fn skip(&self, rows: usize) -> Self {
        Self {
            t0: self.t0 + rows as f64 * self.tau,
            tau: self.tau,
            steps: self.steps.saturating_sub(rows),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.steps).map(|r| self.row_time(r)).collect()
    }

    /// Signal values at the row times.
    pub fn sample(&self, signal: &MultiSineSignal) -> Vec<f64> {
        (0..self.steps).map(|r| signal.eval(self.row_time(r))).collect()
    }
}

/// Reservoir states, one row per grid time, optionally followed by a
/// constant bias column.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    pub states: DMatrix<f64>,
    pub grid: TimeGrid,
    pub bias_column: bool,
}

impl StateMatrix {
    /// Wraps raw states (no bias column yet) and appends one if asked.
    pub fn new(states: DMatrix<f64>, grid: TimeGrid, bias_column: bool) -> Self {
        let m = Self {
            states,
            grid,
            bias_column: false,
        };
        if bias_column {
            m.with_bias()
        } else {
            m
        }
    }

    pub fn rows(&self) -> usize {
        self.states.nrows()
    }

    pub fn n_states(&self) -> usize {
        self.states.ncols() - usize::from(self.bias_column)
    }

    pub fn with_bias(self) -> Self {
        if self.bias_column {
            return self;
        }
        let n = self.states.ncols();
        let states = self.states.insert_column(n, 1.0);
        Self {
            states,
            grid: self.grid,
            bias_column: true,
        }
    }

    pub fn without_bias(self) -> Self {
        if !self.bias_column {
            return self;
        }
        let n = self.states.ncols();
        Self {
            states: self.states.remove_column(n - 1),
            grid: self.grid,
            bias_column: false,
        }
    }

    /// Discard the first `rows` rows (washout).
    pub fn skip_rows(&self, rows: usize) -> Result<Self> {
        if rows >= self.rows() {
            return Err(Error::InvalidArgument(format!(
                "washout of {rows} rows leaves nothing of {}",
                self.rows()
            )));
        }
        Ok(Self {
            states: self.states.rows(rows, self.rows() - rows).into_owned(),
            grid: self.grid.skip(rows),
            bias_column: self.bias_column,
        })
    }

    /// Rows `start..start + len`, with the grid moved to match.
    pub fn rows_range(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.rows() {
            return Err(Error::InvalidArgument(format!(
                "rows {start}..{} out of range for {} rows",
                start + len,
                self.rows()
            )));
        }
        Ok(Self {
            states: self.states.rows(start, len).into_owned(),
            grid: TimeGrid::new(self.grid.t0 + start as f64 * self.grid.tau, self.grid.tau, len)?,
            bias_column: self.bias_column,
        })
    }

    /// CSV with header `r_1..r_N[,bias]`, values in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header: Vec<String> = (1..=self.n_states()).map(|i| format!("r_{i}")).collect();
        if self.bias_column {
            header.push("bias".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for row in self.states.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_times_and_continuation() {
        let g = TimeGrid::new(0.0, 0.5, 4).unwrap();
        assert_eq!(g.times(), vec![0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.continuation().times(), vec![2.5, 3.0, 3.5, 4.0]);
        assert_eq!(g.skip(1).times(), vec![1.0, 1.5, 2.0]);
        assert!(TimeGrid::new(0.0, 0.0, 3).is_err());
        assert!(TimeGrid::new(0.0, 0.1, 0).is_err());
    }

    #[test]
    fn bias_column_layout_and_csv() {
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let m = StateMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.1, 4.0]), g, true);
        assert_eq!(m.n_states(), 2);
        assert!(m.states.column(2).iter().all(|&x| x == 1.0));
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "r_1,r_2,bias\n1.0,2.0,1.0\n0.1,4.0,1.0\n");
        let tail = m.skip_rows(1).unwrap();
        assert_eq!(tail.rows(), 1);
        assert_eq!(tail.grid.times(), vec![2.0]);
        assert!(m.skip_rows(2).is_err());
        assert_eq!(m.clone().without_bias().states.ncols(), 2);
    }
}
