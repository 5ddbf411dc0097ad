//! Time propagation of the reduced density matrix.
//!
//! The primary propagator integrates the convolutionless master equation with
//! auxiliary operators: for every site n with coupling operator
//! L_n = |n><n| and bath expansion alpha_n(tau) = sum_j p_nj exp(z_nj tau),
//!
//!   d rho /dt = -i [H, rho]
//!             + sum_n ( [L_n, rho Obar_n^dag] + [Obar_n rho, L_n^dag] ),
//!   d O_nj/dt = p_nj L_n + z_nj O_nj + [ -iH - sum_m L_m^dag Obar_m , O_nj ],
//!
//! with Obar_n = sum_j O_nj and O_nj(0) = 0. Everything is integrated with a
//! fixed-step classical Runge-Kutta scheme; the density matrix is
//! re-symmetrized every step (recording the defect it had first), the trace
//! is recorded but never renormalized, and drift beyond a tolerance aborts
//! the run.
//!
//! A memoryless (Lindblad) propagator with pure-dephasing jump operators and
//! a unitary limit share the same driver for comparison runs.

use num_complex::Complex;

use crate::bath::BathExpansion;
use crate::linalg::{hermitian_eigvals, mul_into, mul_sub, CMat};
use crate::model::{TrimerHamiltonian, N_SITES};
use crate::{Error, Real, Result};

#[derive(Clone, Debug)]
pub struct PropagationOptions<T> {
    /// Integrator step in femtoseconds.
    pub dt_fs: T,
    /// Total propagation time in picoseconds.
    pub t_max_ps: T,
    /// Record every k-th step (the initial and final states always record).
    pub record_every: usize,
    /// Abort when |tr rho - 1| exceeds this.
    pub trace_tol: T,
    /// Track the smallest eigenvalue of rho along the run (costs one small
    /// eigensolve per recorded sample).
    pub track_spectrum: bool,
    /// Coherence matrix elements (row, col) to record along the run.
    pub watch: Vec<(usize, usize)>,
}

impl<T: Real> Default for PropagationOptions<T> {
    fn default() -> Self {
        PropagationOptions {
            dt_fs: T::of(0.5),
            t_max_ps: T::of(1.0),
            record_every: 1,
            trace_tol: T::of(1e-4),
            track_spectrum: false,
            watch: Vec::new(),
        }
    }
}

/// Recorded history of one propagation.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub times_ps: Vec<T>,
    /// Site populations (diagonal of rho) per recorded sample.
    pub populations: Vec<[T; N_SITES]>,
    /// |tr rho - 1| per recorded sample.
    pub trace_err: Vec<T>,
    /// One series per watched coherence element, in watch-list order;
    /// `coherence[k][i]` is element k at recorded sample i.
    pub coherence: Vec<Vec<Complex<T>>>,
    /// Largest Hermiticity defect seen before the per-step re-symmetrization.
    pub max_herm_defect: T,
    /// Smallest eigenvalue of rho along the run, when tracked.
    pub min_population_eigenvalue: Option<T>,
    /// Number of integrator steps taken.
    pub n_steps: usize,
}

impl<T: Real> Trajectory<T> {
    /// Population history of one site.
    pub fn site_population(&self, site: usize) -> Vec<T> {
        self.populations.iter().map(|p| p[site]).collect()
    }

    /// Total population of the eight sites of a monomer at one sample.
    pub fn monomer_population(&self, monomer: crate::model::Monomer, sample: usize) -> T {
        let off = monomer.offset();
        let mut s = T::zero();
        for k in 0..crate::model::N_PER_MONOMER {
            s += self.populations[sample][off + k];
        }
        s
    }

    /// Index of the recorded sample nearest to a time in ps.
    pub fn sample_at(&self, t_ps: T) -> usize {
        let mut best = 0;
        let mut dist = T::infinity();
        for (i, &t) in self.times_ps.iter().enumerate() {
            let d = (t - t_ps).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }
}

fn validate_watch<T: Real>(opts: &PropagationOptions<T>) -> Result<()> {
    for &(r, c) in &opts.watch {
        if r >= N_SITES || c >= N_SITES {
            return Err(Error::Config(format!(
                "watched coherence element ({r}, {c}) is outside the {N_SITES}-site space"
            )));
        }
    }
    Ok(())
}

fn validate_density<T: Real>(rho: &CMat<T>) -> Result<()> {
    if rho.nrows() != N_SITES || rho.ncols() != N_SITES {
        return Err(Error::Config(format!(
            "density matrix must be {N_SITES}x{N_SITES}"
        )));
    }
    let tol = T::of(1e-8);
    if (rho.trace().re - T::one()).abs() > tol || rho.trace().im.abs() > tol {
        return Err(Error::Config("initial state must have unit trace".into()));
    }
    if rho.herm_defect() > tol {
        return Err(Error::Config("initial state must be Hermitian".into()));
    }
    Ok(())
}

struct Stepping<T> {
    dt_ps: T,
    n_steps: usize,
}

fn stepping<T: Real>(opts: &PropagationOptions<T>) -> Result<Stepping<T>> {
    if !(opts.dt_fs > T::zero()) || !(opts.t_max_ps > T::zero()) {
        return Err(Error::Config("dt and t_max must be positive".into()));
    }
    if opts.record_every == 0 {
        return Err(Error::Config("record_every must be >= 1".into()));
    }
    let dt_ps = opts.dt_fs * T::of(1e-3);
    let steps_f = (opts.t_max_ps / dt_ps).round();
    let n_steps = steps_f
        .to_usize()
        .filter(|&n| n >= 1 && n <= 100_000_000)
        .ok_or_else(|| Error::Config("t_max / dt must give between 1 and 1e8 steps".into()))?;
    let covered = dt_ps * T::of(n_steps as f64);
    if (covered - opts.t_max_ps).abs() > dt_ps * T::of(0.5) + T::of(1e-12) {
        return Err(Error::Config("dt must divide t_max to within half a step".into()));
    }
    Ok(Stepping { dt_ps, n_steps })
}

/// Expand a shared-or-per-site slice to a per-site view.
fn per_site<'a, V>(values: &'a [V], what: &str) -> Result<Vec<&'a V>> {
    match values.len() {
        1 => Ok((0..N_SITES).map(|_| &values[0]).collect()),
        N_SITES => Ok(values.iter().collect()),
        n => Err(Error::Config(format!(
            "{what}: expected 1 shared entry or {N_SITES} per-site entries, got {n}"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Generic fixed-step integration of a single matrix-valued state.
// ---------------------------------------------------------------------------

/// Classical Runge-Kutta on one complex matrix. `rhs(y, dy)` must overwrite
/// `dy`; `per_step(step_index, y)` runs after each completed step.
pub fn rk4_matrix<T: Real>(
    rho: &mut CMat<T>,
    dt: T,
    n_steps: usize,
    mut rhs: impl FnMut(&CMat<T>, &mut CMat<T>),
    mut per_step: impl FnMut(usize, &mut CMat<T>) -> Result<()>,
) -> Result<()> {
    let (n, m) = (rho.nrows(), rho.ncols());
    let mut k1 = CMat::zeros(n, m);
    let mut k2 = CMat::zeros(n, m);
    let mut k3 = CMat::zeros(n, m);
    let mut k4 = CMat::zeros(n, m);
    let mut tmp = CMat::zeros(n, m);
    let half = Complex::new(dt * T::of(0.5), T::zero());
    let full = Complex::new(dt, T::zero());
    let sixth = Complex::new(dt / T::of(6.0), T::zero());
    let third = Complex::new(dt / T::of(3.0), T::zero());

    for step in 1..=n_steps {
        rhs(rho, &mut k1);
        tmp.copy_from(rho);
        tmp.axpy(half, &k1);
        rhs(&tmp, &mut k2);
        tmp.copy_from(rho);
        tmp.axpy(half, &k2);
        rhs(&tmp, &mut k3);
        tmp.copy_from(rho);
        tmp.axpy(full, &k3);
        rhs(&tmp, &mut k4);
        rho.axpy(sixth, &k1);
        rho.axpy(third, &k2);
        rho.axpy(third, &k3);
        rho.axpy(sixth, &k4);
        per_step(step, rho)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Auxiliary-operator propagation.
// ---------------------------------------------------------------------------

struct ZofeState<T> {
    rho: CMat<T>,
    aux: Vec<CMat<T>>,
}

impl<T: Real> ZofeState<T> {
    fn zeros(n_aux: usize) -> Self {
        ZofeState {
            rho: CMat::zeros(N_SITES, N_SITES),
            aux: (0..n_aux).map(|_| CMat::zeros(N_SITES, N_SITES)).collect(),
        }
    }

    fn copy_from(&mut self, src: &ZofeState<T>) {
        self.rho.copy_from(&src.rho);
        for (a, b) in self.aux.iter_mut().zip(&src.aux) {
            a.copy_from(b);
        }
    }

    fn axpy(&mut self, a: T, x: &ZofeState<T>) {
        let a = Complex::new(a, T::zero());
        self.rho.axpy(a, &x.rho);
        for (m, xm) in self.aux.iter_mut().zip(&x.aux) {
            m.axpy(a, xm);
        }
    }
}

struct ZofeSystem<T> {
    h_rad: CMat<T>,
    /// Flattened auxiliary bookkeeping: aux k belongs to site `site[k]` with
    /// expansion coefficients (`p[k]`, `z[k]`).
    site: Vec<usize>,
    p: Vec<Complex<T>>,
    z: Vec<Complex<T>>,
    // Workspaces, reused across derivative evaluations.
    obar: Vec<CMat<T>>,
    m_eff: CMat<T>,
    tmp: CMat<T>,
}

impl<T: Real> ZofeSystem<T> {
    fn new(h_rad: CMat<T>, baths: &[&BathExpansion<T>]) -> Self {
        let mut site = Vec::new();
        let mut p = Vec::new();
        let mut z = Vec::new();
        for (n, bath) in baths.iter().enumerate() {
            for &(pj, zj) in bath.terms() {
                site.push(n);
                p.push(pj);
                z.push(zj);
            }
        }
        ZofeSystem {
            h_rad,
            site,
            p,
            z,
            obar: (0..N_SITES).map(|_| CMat::zeros(N_SITES, N_SITES)).collect(),
            m_eff: CMat::zeros(N_SITES, N_SITES),
            tmp: CMat::zeros(N_SITES, N_SITES),
        }
    }

    fn n_aux(&self) -> usize {
        self.site.len()
    }

    fn derivative(&mut self, y: &ZofeState<T>, out: &mut ZofeState<T>) {
        let minus_i = Complex::new(T::zero(), -T::one());

        // Obar_n = sum_j O_nj.
        for o in &mut self.obar {
            o.fill_zero();
        }
        for (k, o) in y.aux.iter().enumerate() {
            self.obar[self.site[k]].add_assign(o);
        }

        // M = -iH - sum_m L_m^dag Obar_m. The sum is row extraction: row m of
        // it equals row m of Obar_m.
        for r in 0..N_SITES {
            for c in 0..N_SITES {
                let v = minus_i * self.h_rad.get(r, c) - self.obar[r].get(r, c);
                self.m_eff.set(r, c, v);
            }
        }

        // Unitary part of the density matrix: -i [H, rho].
        mul_into(&self.h_rad, &y.rho, &mut self.tmp);
        mul_sub(&y.rho, &self.h_rad, &mut self.tmp);
        out.rho.fill_zero();
        out.rho.axpy(minus_i, &self.tmp);

        // Dissipator. With L_n = |n><n| only row n and column n of
        // B_n = rho Obar_n^dag and C_n = Obar_n rho are needed:
        //   [L_n, B_n]:  row n gains B_n[n][*], column n loses B_n[*][n];
        //   [C_n, L_n]:  column n gains C_n[*][n], row n loses C_n[n][*];
        // the two (n, n) contributions cancel identically.
        for n in 0..N_SITES {
            let ob = &self.obar[n];
            for c in 0..N_SITES {
                // B_n[n][c] - C_n[n][c]
                let mut b = Complex::new(T::zero(), T::zero());
                let mut cc = Complex::new(T::zero(), T::zero());
                for k in 0..N_SITES {
                    b += y.rho.get(n, k) * ob.get(c, k).conj();
                    cc += ob.get(n, k) * y.rho.get(k, c);
                }
                out.rho.add_at(n, c, b - cc);
            }
            for r in 0..N_SITES {
                // C_n[r][n] - B_n[r][n]
                let mut b = Complex::new(T::zero(), T::zero());
                let mut cc = Complex::new(T::zero(), T::zero());
                for k in 0..N_SITES {
                    b += y.rho.get(r, k) * ob.get(n, k).conj();
                    cc += ob.get(r, k) * y.rho.get(k, n);
                }
                out.rho.add_at(r, n, cc - b);
            }
        }

        // Auxiliary operators: dO = p L_n + z O + M O - O M.
        for (k, o) in y.aux.iter().enumerate() {
            let dst = &mut out.aux[k];
            mul_into(&self.m_eff, o, dst);
            mul_sub(o, &self.m_eff, dst);
            dst.axpy(self.z[k], o);
            dst.add_at(self.site[k], self.site[k], self.p[k]);
        }
    }
}

/// Propagate with the auxiliary-operator master equation. `baths` holds one
/// shared expansion or one per site.
pub fn zofe_propagate<T: Real>(
    h: &TrimerHamiltonian<T>,
    baths: &[BathExpansion<T>],
    rho0: &CMat<T>,
    opts: &PropagationOptions<T>,
) -> Result<Trajectory<T>> {
    validate_density(rho0)?;
    validate_watch(opts)?;
    let plan = stepping(opts)?;
    let baths = per_site(baths, "bath expansions")?;
    let mut sys = ZofeSystem::new(h.in_angular_freq(), &baths);
    let n_aux = sys.n_aux();

    let mut y = ZofeState::zeros(n_aux);
    y.rho.copy_from(rho0);
    let mut k1 = ZofeState::zeros(n_aux);
    let mut k2 = ZofeState::zeros(n_aux);
    let mut k3 = ZofeState::zeros(n_aux);
    let mut k4 = ZofeState::zeros(n_aux);
    let mut tmp = ZofeState::zeros(n_aux);

    let mut rec = Recorder::new(opts, plan.n_steps);
    rec.record(T::zero(), &mut y.rho)?;

    let dt = plan.dt_ps;
    let half = dt * T::of(0.5);
    for step in 1..=plan.n_steps {
        sys.derivative(&y, &mut k1);
        tmp.copy_from(&y);
        tmp.axpy(half, &k1);
        sys.derivative(&tmp, &mut k2);
        tmp.copy_from(&y);
        tmp.axpy(half, &k2);
        sys.derivative(&tmp, &mut k3);
        tmp.copy_from(&y);
        tmp.axpy(dt, &k3);
        sys.derivative(&tmp, &mut k4);
        y.axpy(dt / T::of(6.0), &k1);
        y.axpy(dt / T::of(3.0), &k2);
        y.axpy(dt / T::of(3.0), &k3);
        y.axpy(dt / T::of(6.0), &k4);

        if step % opts.record_every == 0 || step == plan.n_steps {
            rec.record(dt * T::of(step as f64), &mut y.rho)?;
        } else {
            rec.maintain(&mut y.rho, dt * T::of(step as f64))?;
        }
    }
    Ok(rec.finish(plan.n_steps))
}

/// Propagate with the memoryless master equation: pure-dephasing jump
/// operators L_n = |n><n| with site rates `rates` (1/ps; one shared value or
/// one per site). The dissipator acts elementwise,
/// rho_ab -> -(rate_a + rate_b)/2 * rho_ab off the diagonal. Zero rates give
/// plain unitary evolution.
pub fn lindblad_propagate<T: Real>(
    h: &TrimerHamiltonian<T>,
    rates: &[T],
    rho0: &CMat<T>,
    opts: &PropagationOptions<T>,
) -> Result<Trajectory<T>> {
    validate_density(rho0)?;
    validate_watch(opts)?;
    let plan = stepping(opts)?;
    let rates: Vec<T> = per_site(rates, "dephasing rates")?
        .into_iter()
        .copied()
        .collect();
    if rates.iter().any(|r| !(*r >= T::zero())) {
        return Err(Error::Config("dephasing rates must be >= 0".into()));
    }
    let h_rad = h.in_angular_freq();
    let mut tmp = CMat::<T>::zeros(N_SITES, N_SITES);
    let minus_i = Complex::new(T::zero(), -T::one());
    let half = T::of(0.5);

    let mut rho = rho0.clone();
    let mut rec = Recorder::new(opts, plan.n_steps);
    rec.record(T::zero(), &mut rho)?;

    let record_every = opts.record_every;
    let n_steps = plan.n_steps;
    let dt = plan.dt_ps;
    let mut rhs = |y: &CMat<T>, dy: &mut CMat<T>| {
        mul_into(&h_rad, y, &mut tmp);
        mul_sub(y, &h_rad, &mut tmp);
        dy.fill_zero();
        dy.axpy(minus_i, &tmp);
        for r in 0..N_SITES {
            for c in 0..N_SITES {
                if r != c {
                    let g = (rates[r] + rates[c]) * half;
                    dy.add_at(r, c, y.get(r, c) * Complex::new(-g, T::zero()));
                }
            }
        }
    };
    rk4_matrix(&mut rho, dt, n_steps, &mut rhs, |step, y| {
        if step % record_every == 0 || step == n_steps {
            rec.record(dt * T::of(step as f64), y)
        } else {
            rec.maintain(y, dt * T::of(step as f64))
        }
    })?;
    Ok(rec.finish(plan.n_steps))
}

/// Per-step bookkeeping shared by the propagators: re-symmetrization, trace
/// watch-dog, and sample recording.
struct Recorder<T> {
    times_ps: Vec<T>,
    populations: Vec<[T; N_SITES]>,
    trace_err: Vec<T>,
    coherence: Vec<Vec<Complex<T>>>,
    max_herm_defect: T,
    min_eig: Option<T>,
    trace_tol: T,
    track_spectrum: bool,
    watch: Vec<(usize, usize)>,
}

impl<T: Real> Recorder<T> {
    fn new(opts: &PropagationOptions<T>, n_steps: usize) -> Self {
        let cap = n_steps / opts.record_every + 2;
        Recorder {
            times_ps: Vec::with_capacity(cap),
            populations: Vec::with_capacity(cap),
            trace_err: Vec::with_capacity(cap),
            coherence: vec![Vec::with_capacity(cap); opts.watch.len()],
            max_herm_defect: T::zero(),
            min_eig: opts.track_spectrum.then(|| T::infinity()),
            trace_tol: opts.trace_tol,
            track_spectrum: opts.track_spectrum,
            watch: opts.watch.clone(),
        }
    }

    /// Clean up and check the state without storing a sample.
    fn maintain(&mut self, rho: &mut CMat<T>, t_ps: T) -> Result<()> {
        let defect = rho.herm_defect();
        if defect > self.max_herm_defect {
            self.max_herm_defect = defect;
        }
        rho.hermitize();
        let err = (rho.trace().re - T::one()).abs();
        if err > self.trace_tol {
            return Err(Error::Numerics(format!(
                "trace drifted by {err:e} at t = {t_ps} ps (tolerance {:e}); reduce dt",
                self.trace_tol
            )));
        }
        Ok(())
    }

    fn record(&mut self, t_ps: T, rho: &mut CMat<T>) -> Result<()> {
        self.maintain(rho, t_ps)?;
        let err = (rho.trace().re - T::one()).abs();
        let mut pops = [T::zero(); N_SITES];
        for (n, p) in pops.iter_mut().enumerate() {
            *p = rho.get(n, n).re;
        }
        self.times_ps.push(t_ps);
        self.populations.push(pops);
        self.trace_err.push(err);
        for (k, &(r, c)) in self.watch.iter().enumerate() {
            self.coherence[k].push(rho.get(r, c));
        }
        if self.track_spectrum {
            let low = hermitian_eigvals(rho)[0];
            if let Some(cur) = self.min_eig {
                if low < cur {
                    self.min_eig = Some(low);
                }
            }
        }
        Ok(())
    }

    fn finish(self, n_steps: usize) -> Trajectory<T> {
        Trajectory {
            times_ps: self.times_ps,
            populations: self.populations,
            trace_err: self.trace_err,
            coherence: self.coherence,
            max_herm_defect: self.max_herm_defect,
            min_population_eigenvalue: self.min_eig,
            n_steps,
        }
    }
}
