//! The DG-NCDE forecaster.
//!
//! Two coupled controlled differential equations are integrated jointly
//! over each window:
//!
//! ```text
//! dH/dt = g(H) · dX̃/dt          g: graph convolution over a learned adjacency
//! dZ/dt = f(Z) · (g(H) · dX̃/dt)  f: one fully connected stack per node
//! ```
//!
//! with `H(0) = FC(X̃(0))`, `Z(0) = FC(H(0))` and the forecast
//! `ŷ_i = FC_i(Z_i(τ))`.
//!
//! Batched tensors are laid out node-major: row `i·B + b` holds node `i` of
//! window `b`. A per-node field output of shape `out × in` is stored
//! row-major in one row of width `out·in`.

mod params;

pub use params::{FcStack, Linear, Parameters};

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::series::Window;
use crate::solver::{self, OdeSystem, Solver};
use crate::spline::{build_window_path, WindowPath};

/// Above this many channels the temporal stacks may be shared.
pub const SHARED_TEMPORAL_SUGGESTED_ABOVE: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_channels: usize,
    pub window: usize,
    pub hidden_h: usize,
    pub hidden_z: usize,
    pub fc_hidden: usize,
    pub fc_layers: usize,
    pub embed_dim: usize,
    pub solver: Solver,
    pub steps_per_unit: usize,
    pub include_time_channel: bool,
    /// One temporal stack shared by all nodes instead of one per node.
    pub shared_temporal: bool,
}

impl ModelConfig {
    pub fn new(n_channels: usize) -> Self {
        Self {
            n_channels,
            window: 5,
            hidden_h: 32,
            hidden_z: 32,
            fc_hidden: 128,
            fc_layers: 3,
            embed_dim: 10,
            solver: Solver::Rk4,
            steps_per_unit: 2,
            include_time_channel: true,
            shared_temporal: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_channels", self.n_channels),
            ("hidden_h", self.hidden_h),
            ("hidden_z", self.hidden_z),
            ("fc_hidden", self.fc_hidden),
            ("embed_dim", self.embed_dim),
            ("steps_per_unit", self.steps_per_unit),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::arg(format!("{name} must be at least 1")));
            }
        }
        if self.window < 2 {
            return Err(Error::arg("window must be at least 2"));
        }
        Ok(())
    }

    /// Per-node control width: the observation plus the optional time channel.
    pub fn control_dim(&self) -> usize {
        1 + usize::from(self.include_time_channel)
    }

    pub fn temporal_stacks(&self) -> usize {
        if self.shared_temporal {
            1
        } else {
            self.n_channels
        }
    }

    pub fn solver_steps(&self) -> usize {
        (self.window - 1) * self.steps_per_unit
    }

    pub fn step_size(&self) -> f64 {
        1.0 / self.steps_per_unit as f64
    }
}

/// Hidden state at the end of a window, node-major (`N × d_h`, `N × d_z`).
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Matrix,
    pub z: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgNcdeModel {
    config: ModelConfig,
    params: Parameters<Matrix>,
}

impl DgNcdeModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = Parameters::init(&config, seed);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Parameters<Matrix>) -> Result<Self> {
        config.validate()?;
        let flat: Vec<Matrix> = params.iter().cloned().collect();
        let params = Parameters::from_flat(&config, flat)?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Parameters<Matrix> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters<Matrix> {
        &mut self.params
    }

    /// Registers every parameter on `tape`, trainable or constant.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Parameters<Var> {
        self.params.map(|m| tape.leaf(m.clone(), trainable))
    }

    /// `D̂^{-1/2}(ReLU(E·Eᵀ) + I)D̂^{-1/2}`.
    pub fn learned_adjacency(&self) -> Matrix {
        learned_adjacency_matrix(&self.params.node_embeddings)
    }

    pub fn path(&self, window: &Window) -> Result<WindowPath> {
        if window.n_channels() != self.config.n_channels || window.len() != self.config.window {
            return Err(Error::Shape {
                op: "window",
                lhs: window.values.shape(),
                rhs: (self.config.window, self.config.n_channels),
            });
        }
        Ok(build_window_path(window, self.config.include_time_channel))
    }

    /// Spatial field at `h` (`N × d_h`); returns `N × (d_h·d_x)`.
    pub fn spatial_field(&self, h: &Matrix) -> Result<Matrix> {
        self.check_state("spatial_field", h, self.config.hidden_h)?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let adj = learned_adjacency(&mut tape, p.node_embeddings)?;
        let hv = tape.constant(h.clone());
        let out = spatial_field(&mut tape, &p, adj, hv, 1)?;
        Ok(tape.value(out).clone())
    }

    /// Temporal field at `z` (`N × d_z`); returns `N × (d_z·d_h)`.
    pub fn temporal_field(&self, z: &Matrix) -> Result<Matrix> {
        self.check_state("temporal_field", z, self.config.hidden_z)?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let out = temporal_field(&mut tape, &p, &self.config, zv, 1)?;
        Ok(tape.value(out).clone())
    }

    fn check_state(&self, op: &'static str, m: &Matrix, width: usize) -> Result<()> {
        if m.shape() != (self.config.n_channels, width) {
            return Err(Error::Shape { op, lhs: m.shape(), rhs: (self.config.n_channels, width) });
        }
        Ok(())
    }

    /// Final hidden state for one window path.
    pub fn integrate(&self, path: &WindowPath) -> Result<HiddenState> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let (h, z) = integrate_batch(&mut tape, &p, &self.config, core::slice::from_ref(path))?;
        Ok(HiddenState { h: tape.value(h).clone(), z: tape.value(z).clone() })
    }

    pub fn forecast(&self, window: &Window) -> Result<Vec<f64>> {
        let path = self.path(window)?;
        Ok(self.forecast_paths(core::slice::from_ref(&path))?.remove(0))
    }

    /// One forecast per window, computed in batches.
    pub fn forecast_batch(&self, windows: &[Window]) -> Result<Vec<Vec<f64>>> {
        let paths = windows.iter().map(|w| self.path(w)).collect::<Result<Vec<_>>>()?;
        self.forecast_paths(&paths)
    }

    pub fn forecast_paths(&self, paths: &[WindowPath]) -> Result<Vec<Vec<f64>>> {
        const CHUNK: usize = 128;
        let n = self.config.n_channels;
        let mut out = Vec::with_capacity(paths.len());
        for chunk in paths.chunks(CHUNK) {
            let mut tape = Tape::new();
            let p = self.bind(&mut tape, false);
            let y = forward(&mut tape, &p, &self.config, chunk)?;
            let y = tape.value(y);
            let b = chunk.len();
            for w in 0..b {
                out.push((0..n).map(|i| y.as_slice()[i * b + w]).collect());
            }
        }
        Ok(out)
    }
}

/// Normalized learned adjacency of an embedding matrix.
pub fn learned_adjacency_matrix(embeddings: &Matrix) -> Matrix {
    let mut tape = Tape::new();
    let e = tape.constant(embeddings.clone());
    let a = learned_adjacency(&mut tape, e).expect("shapes derive from one matrix");
    tape.value(a).clone()
}

pub fn learned_adjacency(tape: &mut Tape, embeddings: Var) -> Result<Var> {
    let et = tape.transpose(embeddings);
    let gram = tape.matmul(embeddings, et)?;
    let a = tape.relu(gram);
    let n = tape.value(a).rows();
    let eye = tape.constant(Matrix::identity(n));
    let a_hat = tape.add(a, eye)?;
    tape.sym_normalize(a_hat)
}

fn linear(tape: &mut Tape, l: &Linear<Var>, x: Var) -> Result<Var> {
    let y = tape.matmul(x, l.weight)?;
    tape.add_bias(y, l.bias)
}

pub fn fc_stack(tape: &mut Tape, stack: &FcStack<Var>, x: Var) -> Result<Var> {
    let mut h = x;
    let last = stack.layers.len() - 1;
    for (i, l) in stack.layers.iter().enumerate() {
        h = linear(tape, l, h)?;
        if i < last {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// `FC⁽¹⁾(Â_norm · ReLU(FC⁽⁰⁾(H)) · W_s)` for `batch` windows stacked
/// node-major in `h`.
pub fn spatial_field(tape: &mut Tape, p: &Parameters<Var>, adj: Var, h: Var, batch: usize) -> Result<Var> {
    let n = tape.value(adj).rows();
    let dh = tape.value(h).cols();
    let h0 = fc_stack(tape, &p.spatial_in, h)?;
    let h0 = tape.relu(h0);
    let width = tape.value(h0).cols();
    // (N·B)×w and N×(B·w) share their row-major layout.
    let by_node = tape.reshape(h0, n, batch * width)?;
    let mixed = tape.matmul(adj, by_node)?;
    let mixed = tape.reshape(mixed, n * batch, width)?;
    let mixed = tape.matmul(mixed, p.spatial_mix)?;
    let out = fc_stack(tape, &p.spatial_out, mixed)?;
    debug_assert_eq!(tape.value(out).cols() % dh, 0);
    Ok(out)
}

/// Per-node fully connected field on `z`, concatenated node-major.
pub fn temporal_field(tape: &mut Tape, p: &Parameters<Var>, cfg: &ModelConfig, z: Var, batch: usize) -> Result<Var> {
    if cfg.shared_temporal {
        return fc_stack(tape, &p.temporal[0], z);
    }
    let parts = (0..cfg.n_channels)
        .map(|i| {
            let zi = tape.slice_rows(z, i * batch, batch)?;
            fc_stack(tape, &p.temporal[i], zi)
        })
        .collect::<Result<Vec<_>>>()?;
    tape.concat_rows(&parts)
}

/// Node-major control rows at `t`: `[x_i(t), τ(t)]` (or its derivative).
fn control_matrix(paths: &[WindowPath], n: usize, dx: usize, t: f64, derivative: bool) -> Matrix {
    let b = paths.len();
    let mut m = Matrix::zeros(n * b, dx);
    for (w, path) in paths.iter().enumerate() {
        let v = if derivative { path.eval_derivative(t) } else { path.eval(t) };
        let time = if dx > 1 { v[n] } else { 0.0 };
        for i in 0..n {
            let row = m.row_mut(i * b + w);
            row[0] = v[i];
            if dx > 1 {
                row[1] = time;
            }
        }
    }
    m
}

struct Augmented<'a> {
    tape: &'a mut Tape,
    params: &'a Parameters<Var>,
    config: &'a ModelConfig,
    paths: &'a [WindowPath],
    adj: Var,
}

impl OdeSystem for Augmented<'_> {
    type State = (Var, Var);
    type Error = Error;

    fn derivative(&mut self, t: f64, &(h, z): &(Var, Var)) -> Result<(Var, Var)> {
        let b = self.paths.len();
        let control = control_matrix(self.paths, self.config.n_channels, self.config.control_dim(), t, true);
        let control = self.tape.constant(control);
        let g = spatial_field(self.tape, self.params, self.adj, h, b)?;
        let dh = self.tape.row_contract(g, control)?;
        let f = temporal_field(self.tape, self.params, self.config, z, b)?;
        let dz = self.tape.row_contract(f, dh)?;
        Ok((dh, dz))
    }

    fn axpy(&mut self, &(h, z): &(Var, Var), step: f64, &(dh, dz): &(Var, Var)) -> Result<(Var, Var)> {
        let sh = self.tape.scale(dh, step);
        let sz = self.tape.scale(dz, step);
        Ok((self.tape.add(h, sh)?, self.tape.add(z, sz)?))
    }
}

/// Integrates the augmented system over `[0, w_s - 1]` for every path.
/// Returns node-major `(H(τ), Z(τ))`.
pub fn integrate_batch(
    tape: &mut Tape,
    p: &Parameters<Var>,
    cfg: &ModelConfig,
    paths: &[WindowPath],
) -> Result<(Var, Var)> {
    let n = cfg.n_channels;
    if paths.iter().any(|path| path.n_channels() != n) {
        return Err(Error::arg("path channel count differs from model"));
    }
    let x0 = tape.constant(control_matrix(paths, n, cfg.control_dim(), 0.0, false));
    let h0 = linear(tape, &p.init_hidden, x0)?;
    let z0 = linear(tape, &p.init_temporal, h0)?;
    let adj = learned_adjacency(tape, p.node_embeddings)?;
    let mut sys = Augmented { tape, params: p, config: cfg, paths, adj };
    let h = cfg.step_size();
    let mut state = (h0, z0);
    for k in 0..cfg.solver_steps() {
        let t = k as f64 * h;
        state = solver::step(cfg.solver, &mut sys, t, &state, h)?;
        if !sys.tape.value(state.0).is_finite() || !sys.tape.value(state.1).is_finite() {
            return Err(Error::Divergence { step: k, time: t + h });
        }
    }
    Ok(state)
}

/// Forecasts for a batch of paths, node-major `(N·B) × 1`.
pub fn forward(tape: &mut Tape, p: &Parameters<Var>, cfg: &ModelConfig, paths: &[WindowPath]) -> Result<Var> {
    let b = paths.len();
    let (_, z) = integrate_batch(tape, p, cfg, paths)?;
    let parts = (0..cfg.n_channels)
        .map(|i| {
            let zi = tape.slice_rows(z, i * b, b)?;
            linear(tape, &p.head[i], zi)
        })
        .collect::<Result<Vec<_>>>()?;
    tape.concat_rows(&parts)
}

#[cfg(test)]
mod tests;
