//! Fixed-step explicit ODE solvers over an abstract state.
//!
//! The same stepping code drives both plain `f64` systems and the tape-backed
//! augmented state of the forecaster, so the solver under test is the one the
//! model uses.

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Euler,
    Rk4,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Euler => "euler",
            Solver::Rk4 => "rk4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euler" => Some(Solver::Euler),
            "rk4" => Some(Solver::Rk4),
            _ => None,
        }
    }
}

pub trait OdeSystem {
    type State;
    type Error;

    fn derivative(&mut self, t: f64, state: &Self::State) -> Result<Self::State, Self::Error>;

    /// `state + h · direction`
    fn axpy(&mut self, state: &Self::State, h: f64, direction: &Self::State) -> Result<Self::State, Self::Error>;
}

pub fn euler_step<S: OdeSystem>(sys: &mut S, t: f64, y: &S::State, h: f64) -> Result<S::State, S::Error> {
    let k1 = sys.derivative(t, y)?;
    sys.axpy(y, h, &k1)
}

pub fn rk4_step<S: OdeSystem>(sys: &mut S, t: f64, y: &S::State, h: f64) -> Result<S::State, S::Error> {
    let k1 = sys.derivative(t, y)?;
    let y2 = sys.axpy(y, 0.5 * h, &k1)?;
    let k2 = sys.derivative(t + 0.5 * h, &y2)?;
    let y3 = sys.axpy(y, 0.5 * h, &k2)?;
    let k3 = sys.derivative(t + 0.5 * h, &y3)?;
    let y4 = sys.axpy(y, h, &k3)?;
    let k4 = sys.derivative(t + h, &y4)?;
    let acc = sys.axpy(y, h / 6.0, &k1)?;
    let acc = sys.axpy(&acc, h / 3.0, &k2)?;
    let acc = sys.axpy(&acc, h / 3.0, &k3)?;
    sys.axpy(&acc, h / 6.0, &k4)
}

pub fn step<S: OdeSystem>(solver: Solver, sys: &mut S, t: f64, y: &S::State, h: f64) -> Result<S::State, S::Error> {
    match solver {
        Solver::Euler => euler_step(sys, t, y, h),
        Solver::Rk4 => rk4_step(sys, t, y, h),
    }
}

/// Integrates from `t0` over `steps` steps of size `h`, calling `inspect`
/// after each step with `(step_index, t, state)`.
pub fn integrate<S, I>(
    solver: Solver,
    sys: &mut S,
    t0: f64,
    y0: S::State,
    h: f64,
    steps: usize,
    mut inspect: I,
) -> Result<S::State, S::Error>
where
    S: OdeSystem,
    I: FnMut(usize, f64, &S::State) -> Result<(), S::Error>,
{
    let mut y = y0;
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        y = step(solver, sys, t, &y, h)?;
        inspect(k, t + h, &y)?;
    }
    Ok(y)
}

/// Plain vector system `dy/dt = f(t, y)`.
pub struct VecSystem<F>(pub F);

impl<F> OdeSystem for VecSystem<F>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    type State = Vec<f64>;
    type Error = core::convert::Infallible;

    fn derivative(&mut self, t: f64, state: &Vec<f64>) -> Result<Vec<f64>, Self::Error> {
        Ok((self.0)(t, state))
    }

    fn axpy(&mut self, state: &Vec<f64>, h: f64, direction: &Vec<f64>) -> Result<Vec<f64>, Self::Error> {
        Ok(state.iter().zip(direction).map(|(y, d)| y + h * d).collect())
    }
}
