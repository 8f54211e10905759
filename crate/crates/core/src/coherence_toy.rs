//! Two-world block density matrix under a Hamiltonian that couples the worlds.
//!
//! The state splits into a large world `L` and a small world `s`:
//! `rho = [[rho_LL, rho_Ls], [rho_sL, rho_ss]]`, with `|rho_ss| = delta^2 |rho_LL|`
//! and residual coherence `|rho_Ls| = epsilon delta |rho_LL|`. Evolution is
//! `d rho / dt = -i [H, rho]` written out block by block.

use std::io::Write;

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex<f64>>;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-9;
/// Largest accepted `dt * ||H||` for the fixed-step integrator.
pub const MAX_STEP_NORM: f64 = 1.0;
/// Default allowed ratio between the largest and smallest Hamiltonian block norms.
pub const DEFAULT_NORM_BAND: f64 = 2.0;

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

fn hermitian_gap(m: &CMatrix) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn adjoint_gap(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn real_trace(m: &CMatrix) -> f64 {
    m.trace().re
}

fn compose_blocks(ll: &CMatrix, ls: &CMatrix, sl: &CMatrix, ss: &CMatrix) -> CMatrix {
    let (dl, ds) = (ll.nrows(), ss.nrows());
    let mut full = CMatrix::zeros(dl + ds, dl + ds);
    full.view_mut((0, 0), (dl, dl)).copy_from(ll);
    full.view_mut((0, dl), (dl, ds)).copy_from(ls);
    full.view_mut((dl, 0), (ds, dl)).copy_from(sl);
    full.view_mut((dl, dl), (ds, ds)).copy_from(ss);
    full
}

fn split_blocks(full: &CMatrix, d_large: usize) -> Result<[CMatrix; 4]> {
    let n = full.nrows();
    if full.ncols() != n || d_large == 0 || d_large >= n {
        return Err(Error::InvalidParameter(format!(
            "cannot split a {}x{} matrix with a large block of size {d_large}",
            full.nrows(),
            full.ncols()
        )));
    }
    let ds = n - d_large;
    Ok([
        full.view((0, 0), (d_large, d_large)).into_owned(),
        full.view((0, d_large), (d_large, ds)).into_owned(),
        full.view((d_large, 0), (ds, d_large)).into_owned(),
        full.view((d_large, d_large), (ds, ds)).into_owned(),
    ])
}

fn check_shapes(ll: &CMatrix, ls: &CMatrix, sl: &CMatrix, ss: &CMatrix) -> Result<()> {
    let (dl, ds) = (ll.nrows(), ss.nrows());
    if dl == 0 || ds == 0 || ll.shape() != (dl, dl) || ss.shape() != (ds, ds) || ls.shape() != (dl, ds) || sl.shape() != (ds, dl) {
        return Err(Error::InvalidParameter(format!(
            "block shapes {:?} {:?} {:?} {:?} are not conformable",
            ll.shape(),
            ls.shape(),
            sl.shape(),
            ss.shape()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    pub block_ll: CMatrix,
    pub block_ls: CMatrix,
    pub block_sl: CMatrix,
    pub block_ss: CMatrix,
}

impl BlockState {
    /// Checks shapes, Hermiticity and unit trace.
    pub fn new(block_ll: CMatrix, block_ls: CMatrix, block_sl: CMatrix, block_ss: CMatrix) -> Result<BlockState> {
        check_shapes(&block_ll, &block_ls, &block_sl, &block_ss)?;
        let gap = hermitian_gap(&block_ll)
            .max(hermitian_gap(&block_ss))
            .max(adjoint_gap(&block_sl, &block_ls));
        if gap > HERMITIAN_TOL {
            return Err(Error::InvalidParameter(format!("state is not Hermitian (gap {gap:e})")));
        }
        let state = BlockState {
            block_ll,
            block_ls,
            block_sl,
            block_ss,
        };
        let trace = state.trace_ll() + state.trace_ss();
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidParameter(format!("state has trace {trace}, not 1")));
        }
        Ok(state)
    }

    pub fn from_full(full: &CMatrix, d_large: usize) -> Result<BlockState> {
        let [ll, ls, sl, ss] = split_blocks(full, d_large)?;
        BlockState::new(ll, ls, sl, ss)
    }

    pub fn compose(&self) -> CMatrix {
        compose_blocks(&self.block_ll, &self.block_ls, &self.block_sl, &self.block_ss)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.block_ll.nrows(), self.block_ss.nrows())
    }

    /// `|rho_LL|`.
    pub fn trace_ll(&self) -> f64 {
        real_trace(&self.block_ll)
    }

    /// `|rho_ss|`.
    pub fn trace_ss(&self) -> f64 {
        real_trace(&self.block_ss)
    }

    /// `|rho_Ls|`, the largest singular value of the coherence block.
    pub fn offdiag_norm(&self) -> f64 {
        spectral_norm(&self.block_ls)
    }

    /// Largest entry-wise distance to the other state.
    pub fn max_entry_diff(&self, other: &BlockState) -> f64 {
        (self.compose() - other.compose()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockHamiltonian {
    pub h_ll: CMatrix,
    pub h_ls: CMatrix,
    pub h_sl: CMatrix,
    pub h_ss: CMatrix,
}

impl BlockHamiltonian {
    pub fn new(h_ll: CMatrix, h_ls: CMatrix, h_sl: CMatrix, h_ss: CMatrix) -> Result<BlockHamiltonian> {
        BlockHamiltonian::with_norm_band(h_ll, h_ls, h_sl, h_ss, DEFAULT_NORM_BAND)
    }

    /// As [`BlockHamiltonian::new`], requiring nonzero block spectral norms within a factor `band`.
    /// A zero coupling block is allowed and exempt from the band.
    pub fn with_norm_band(
        h_ll: CMatrix,
        h_ls: CMatrix,
        h_sl: CMatrix,
        h_ss: CMatrix,
        band: f64,
    ) -> Result<BlockHamiltonian> {
        check_shapes(&h_ll, &h_ls, &h_sl, &h_ss)?;
        if !(band >= 1.0) {
            return Err(Error::InvalidParameter(format!("norm band {band} must be at least 1")));
        }
        let gap = hermitian_gap(&h_ll).max(hermitian_gap(&h_ss)).max(adjoint_gap(&h_sl, &h_ls));
        if gap > HERMITIAN_TOL {
            return Err(Error::InvalidParameter(format!("Hamiltonian is not Hermitian (gap {gap:e})")));
        }
        let norms: Vec<f64> = [&h_ll, &h_ls, &h_ss]
            .iter()
            .map(|m| spectral_norm(m))
            .filter(|&n| n > 0.0)
            .collect();
        let (lo, hi) = norms
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &n| (lo.min(n), hi.max(n)));
        if !norms.is_empty() && hi > band * lo {
            return Err(Error::InvalidParameter(format!(
                "Hamiltonian block norms span [{lo:e}, {hi:e}], beyond a factor {band}"
            )));
        }
        Ok(BlockHamiltonian { h_ll, h_ls, h_sl, h_ss })
    }

    pub fn compose(&self) -> CMatrix {
        compose_blocks(&self.h_ll, &self.h_ls, &self.h_sl, &self.h_ss)
    }

    pub fn spectral_norm(&self) -> f64 {
        spectral_norm(&self.compose())
    }

    /// Same blocks with the coupling between the worlds removed.
    pub fn decoupled(&self) -> BlockHamiltonian {
        BlockHamiltonian {
            h_ll: self.h_ll.clone(),
            h_ls: CMatrix::zeros(self.h_ls.nrows(), self.h_ls.ncols()),
            h_sl: CMatrix::zeros(self.h_sl.nrows(), self.h_sl.ncols()),
            h_ss: self.h_ss.clone(),
        }
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

fn random_unit_vector(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    loop {
        let v = gaussian_matrix(rng, d, 1);
        let n = v.norm();
        if n > 1e-12 {
            return v / Complex::from(n);
        }
    }
}

fn check_dims(d_large: usize, d_small: usize) -> Result<()> {
    if d_large == 0 || d_small == 0 {
        return Err(Error::InvalidParameter(format!(
            "block dimensions must be positive, got {d_large} and {d_small}"
        )));
    }
    Ok(())
}

/// Two decohered worlds in random pure states `psi`, `phi` with
/// `|rho_ss| / |rho_LL| = delta^2`, unit total trace, and coherence block
/// `epsilon sqrt(|rho_LL| |rho_ss|) e^{i theta} psi phi^dagger`.
/// The state is positive semidefinite, and pure when `epsilon = 1`.
pub fn init_two_worlds(d_large: usize, d_small: usize, delta: f64, epsilon: f64, seed: u64) -> Result<BlockState> {
    check_dims(d_large, d_small)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta} outside (0, 1)")));
    }
    if !(epsilon >= 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = random_unit_vector(&mut rng, d_large);
    let phi = random_unit_vector(&mut rng, d_small);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);

    let a = 1.0 / (1.0 + delta * delta);
    let b = delta * delta * a;
    let c = Complex::from_polar(epsilon * (a * b).sqrt(), theta);
    let ll = &psi * psi.adjoint() * Complex::from(a);
    let ss = &phi * phi.adjoint() * Complex::from(b);
    let ls = &psi * phi.adjoint() * c;
    let sl = ls.adjoint();
    BlockState::new(ll, ls, sl, ss)
}

/// `(G + G^dagger) / 2` from complex Gaussian `G`, each block rescaled to unit spectral norm.
pub fn random_hamiltonian(d_large: usize, d_small: usize, seed: u64) -> Result<BlockHamiltonian> {
    check_dims(d_large, d_small)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let n = d_large + d_small;
    let g = gaussian_matrix(&mut rng, n, n);
    let h = (&g + g.adjoint()) * Complex::from(0.5);
    let [ll, ls, _, ss] = split_blocks(&h, d_large)?;
    let unit = |m: CMatrix| {
        let norm = spectral_norm(&m);
        if norm > 0.0 {
            m / Complex::from(norm)
        } else {
            m
        }
    };
    let (ll, ls, ss) = (unit(ll), unit(ls), unit(ss));
    let sl = ls.adjoint();
    BlockHamiltonian::new(ll, ls, sl, ss)
}

type Blocks = [CMatrix; 4];

/// `-i` times the four block commutator equations.
fn block_derivative(h: &BlockHamiltonian, r: &Blocks) -> Blocks {
    let [ll, ls, sl, ss] = r;
    let minus_i = Complex::new(0.0, -1.0);
    [
        (&h.h_ll * ll + &h.h_ls * sl - ll * &h.h_ll - ls * &h.h_sl) * minus_i,
        (&h.h_ll * ls + &h.h_ls * ss - ll * &h.h_ls - ls * &h.h_ss) * minus_i,
        (&h.h_sl * ll + &h.h_ss * sl - sl * &h.h_ll - ss * &h.h_sl) * minus_i,
        (&h.h_sl * ls + &h.h_ss * ss - sl * &h.h_ls - ss * &h.h_ss) * minus_i,
    ]
}

fn axpy(base: &Blocks, k: &Blocks, scale: f64) -> Blocks {
    let s = Complex::from(scale);
    [0, 1, 2, 3].map(|i| &base[i] + &k[i] * s)
}

fn rk4_step(h: &BlockHamiltonian, r: &Blocks, dt: f64) -> Blocks {
    let k1 = block_derivative(h, r);
    let k2 = block_derivative(h, &axpy(r, &k1, 0.5 * dt));
    let k3 = block_derivative(h, &axpy(r, &k2, 0.5 * dt));
    let k4 = block_derivative(h, &axpy(r, &k3, dt));
    let sixth = Complex::from(dt / 6.0);
    let two = Complex::from(2.0);
    [0, 1, 2, 3].map(|i| &r[i] + (&k1[i] + &k2[i] * two + &k3[i] * two + &k4[i]) * sixth)
}

fn check_step(state: &BlockState, h: &BlockHamiltonian, dt: f64) -> Result<()> {
    let (dl, ds) = state.dims();
    if h.h_ll.nrows() != dl || h.h_ss.nrows() != ds {
        return Err(Error::InvalidParameter(format!(
            "Hamiltonian blocks {}+{} do not match state blocks {dl}+{ds}",
            h.h_ll.nrows(),
            h.h_ss.nrows()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let product = dt * h.spectral_norm();
    if product > MAX_STEP_NORM {
        return Err(Error::Stability {
            product,
            limit: MAX_STEP_NORM,
        });
    }
    Ok(())
}

/// Fixed-step fourth-order Runge-Kutta over `steps` steps of `dt`; `observe`
/// sees the state after every step.
pub fn evolve_with(
    state: &BlockState,
    h: &BlockHamiltonian,
    dt: f64,
    steps: usize,
    mut observe: impl FnMut(usize, &BlockState),
) -> Result<BlockState> {
    check_step(state, h, dt)?;
    let mut r: Blocks = [
        state.block_ll.clone(),
        state.block_ls.clone(),
        state.block_sl.clone(),
        state.block_ss.clone(),
    ];
    let mut current = state.clone();
    for step in 1..=steps {
        r = rk4_step(h, &r, dt);
        current = BlockState {
            block_ll: r[0].clone(),
            block_ls: r[1].clone(),
            block_sl: r[2].clone(),
            block_ss: r[3].clone(),
        };
        observe(step, &current);
    }
    Ok(current)
}

pub fn evolve(state: &BlockState, h: &BlockHamiltonian, dt: f64, steps: usize) -> Result<BlockState> {
    evolve_with(state, h, dt, steps, |_, _| {})
}

/// Cross-world drive relative to own-world drive, for the large world and the small world.
///
/// Large: `||H_Ls rho_sL - rho_Ls H_sL|| / ||[H_LL, rho_LL]||`, expected near `epsilon delta`.
/// Small: `||H_sL rho_Ls - rho_sL H_Ls|| / ||[H_ss, rho_ss]||`, expected near `epsilon / delta`.
pub fn influence_ratios(state: &BlockState, h: &BlockHamiltonian) -> Result<(f64, f64)> {
    let (dl, ds) = state.dims();
    if h.h_ll.nrows() != dl || h.h_ss.nrows() != ds {
        return Err(Error::InvalidParameter("Hamiltonian and state blocks differ in size".into()));
    }
    let own_l = spectral_norm(&(&h.h_ll * &state.block_ll - &state.block_ll * &h.h_ll));
    let own_s = spectral_norm(&(&h.h_ss * &state.block_ss - &state.block_ss * &h.h_ss));
    let cross_l = spectral_norm(&(&h.h_ls * &state.block_sl - &state.block_ls * &h.h_sl));
    let cross_s = spectral_norm(&(&h.h_sl * &state.block_ls - &state.block_sl * &h.h_ls));
    let floor_l = 1e-12 * spectral_norm(&h.h_ll) * state.trace_ll();
    let floor_s = 1e-12 * spectral_norm(&h.h_ss) * state.trace_ss();
    for (own, floor, name) in [(own_l, floor_l, "large"), (own_s, floor_s, "small")] {
        if own <= floor || own == 0.0 {
            return Err(Error::Indeterminate(format!(
                "the {name} world commutes with its own Hamiltonian block"
            )));
        }
    }
    Ok((cross_l / own_l, cross_s / own_s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyRow {
    pub step: usize,
    pub trace_ll: f64,
    pub trace_ss: f64,
    pub offdiag_norm: f64,
    /// NaN where a world commutes with its own Hamiltonian block.
    pub ratio_l: f64,
    pub ratio_s: f64,
}

fn toy_row(step: usize, state: &BlockState, h: &BlockHamiltonian) -> ToyRow {
    let (ratio_l, ratio_s) = influence_ratios(state, h).unwrap_or((f64::NAN, f64::NAN));
    ToyRow {
        step,
        trace_ll: state.trace_ll(),
        trace_ss: state.trace_ss(),
        offdiag_norm: state.offdiag_norm(),
        ratio_l,
        ratio_s,
    }
}

/// Rows for step 0 and every `every`-th step.
pub fn toy_trajectory(
    state: &BlockState,
    h: &BlockHamiltonian,
    dt: f64,
    steps: usize,
    every: usize,
) -> Result<Vec<ToyRow>> {
    let every = every.max(1);
    let mut rows = vec![toy_row(0, state, h)];
    evolve_with(state, h, dt, steps, |step, s| {
        if step % every == 0 || step == steps {
            rows.push(toy_row(step, s, h));
        }
    })?;
    Ok(rows)
}

pub fn write_toy_csv<W: Write>(rows: &[ToyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "trace_LL", "trace_ss", "offdiag_norm", "ratio_L", "ratio_s"])?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            format!("{:.15e}", r.trace_ll),
            format!("{:.15e}", r.trace_ss),
            format!("{:.15e}", r.offdiag_norm),
            format!("{:.15e}", r.ratio_l),
            format!("{:.15e}", r.ratio_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}
