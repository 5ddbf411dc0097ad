//! Independent reference solutions used to validate the propagators. Each
//! oracle is derived by a route that shares no code with the production
//! integrator: closed-form two-level dynamics, an exactly solvable dephasing
//! model, and a damped-mode (pseudomode) construction that reproduces a
//! single-exponential bath correlation exactly at zero temperature.

use num_complex::Complex;

use crate::bath::BathExpansion;
use crate::linalg::{mul_adj_rhs_into, mul_into, mul_sub, CMat};
use crate::model::cm_to_angular_freq;
use crate::propagator::rk4_matrix;
use crate::{Error, Real, Result};

/// Population of site 1 of an isolated two-level system that starts fully on
/// site 1, with site-energy gap `delta_cm` and coupling `j_cm` (both 1/cm):
/// P1(t) = 1 - (4J^2 / (D^2 + 4J^2)) sin^2(sqrt(D^2 + 4J^2) t / 2),
/// everything converted to rad/ps.
pub fn rabi_population<T: Real>(delta_cm: T, j_cm: T, t_ps: T) -> T {
    let d = cm_to_angular_freq(delta_cm);
    let j = cm_to_angular_freq(j_cm);
    let four = T::of(4.0);
    let omega2 = d * d + four * j * j;
    if omega2 == T::zero() {
        return T::one();
    }
    let omega = omega2.sqrt();
    let s = (omega * t_ps * T::of(0.5)).sin();
    T::one() - (four * j * j / omega2) * s * s
}

/// Decoherence exponent of the exactly solvable dephasing model for one site
/// with expansion alpha(tau) = sum_j p_j exp(z_j tau):
/// Phi(t) = sum_j (p_j / z_j^2)(e^{z_j t} - 1) - (p_j / z_j) t.
fn dephasing_exponent<T: Real>(bath: &BathExpansion<T>, t_ps: T) -> Complex<T> {
    let mut phi = Complex::new(T::zero(), T::zero());
    for &(p, z) in bath.terms() {
        let e = (z * t_ps).exp();
        phi += p / (z * z) * (e - Complex::new(T::one(), T::zero())) - (p / z) * t_ps;
    }
    phi
}

/// Coherence ratio rho_12(t) / rho_12(0) for two uncoupled sites with energy
/// gap `delta_rad` (rad/ps), site 1 coupled to `bath1` and site 2 to `bath2`:
/// exp(-i delta t) exp(-Phi_1(t) - conj(Phi_2(t))).
pub fn pure_dephasing_coherence<T: Real>(
    delta_rad: T,
    bath1: &BathExpansion<T>,
    bath2: &BathExpansion<T>,
    t_ps: T,
) -> Complex<T> {
    let phase = Complex::new(T::zero(), -delta_rad * t_ps).exp();
    let exponent = -dephasing_exponent(bath1, t_ps) - dephasing_exponent(bath2, t_ps).conj();
    phase * exponent.exp()
}

// ---------------------------------------------------------------------------
// Pseudomode construction.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct PseudomodeOptions<T> {
    pub dt_fs: T,
    pub t_max_ps: T,
    /// Initial Fock-space truncation; raised automatically (twice per retry)
    /// until the top level stays essentially unoccupied.
    pub fock_levels: usize,
    /// Acceptable occupation of the highest Fock level.
    pub occupancy_tol: T,
    pub record_every: usize,
    /// Optionally record the reduced-system coherence between two sites
    /// (mode traced out) alongside the populations.
    pub watch_coherence: Option<(usize, usize)>,
}

impl<T: Real> Default for PseudomodeOptions<T> {
    fn default() -> Self {
        PseudomodeOptions {
            dt_fs: T::of(0.5),
            t_max_ps: T::of(1.0),
            fock_levels: 8,
            occupancy_tol: T::of(1e-6),
            record_every: 1,
            watch_coherence: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PseudomodeRun<T> {
    pub times_ps: Vec<T>,
    /// System-site populations per recorded sample.
    pub site_populations: Vec<Vec<T>>,
    /// Watched reduced coherence per recorded sample (empty when unwatched).
    pub coherence: Vec<Complex<T>>,
    /// Fock truncation the run converged at.
    pub fock_levels: usize,
    /// Largest occupation the top Fock level reached.
    pub max_top_occupancy: T,
}

/// Exact open-system reference for a bath correlation function
/// alpha(tau) = p exp(z tau) (p >= 0, Re z < 0) at zero temperature, coupled
/// to one system site: the site couples with strength sqrt(p) to a harmonic
/// mode of frequency -Im z whose amplitude decays at rate -Re z (the mode is
/// damped by a Lindblad term with kappa = -2 Re z). Tracing the mode out of
/// the joint unitary-plus-damped evolution reproduces exactly that
/// correlation function, so this shares no approximation with the
/// auxiliary-operator propagator.
///
/// `h_sys_rad` is the system Hamiltonian in rad/ps; `psi0` the initial system
/// state (the mode starts in its ground state).
pub fn pseudomode_dynamics<T: Real>(
    h_sys_rad: &CMat<T>,
    site: usize,
    p: T,
    z: Complex<T>,
    psi0: &[Complex<T>],
    opts: &PseudomodeOptions<T>,
) -> Result<PseudomodeRun<T>> {
    let n_sys = h_sys_rad.nrows();
    if h_sys_rad.ncols() != n_sys || site >= n_sys || psi0.len() != n_sys {
        return Err(Error::Config("inconsistent pseudomode system dimensions".into()));
    }
    if !(p >= T::zero()) {
        return Err(Error::Config("pseudomode coupling weight p must be >= 0".into()));
    }
    if !(z.re < T::zero()) {
        return Err(Error::Config("pseudomode rate z must have Re z < 0".into()));
    }
    let norm2: T = psi0.iter().map(|a| a.norm_sqr()).sum();
    if (norm2 - T::one()).abs() > T::of(1e-10) {
        return Err(Error::Config("pseudomode initial state must be normalized".into()));
    }
    if !(opts.dt_fs > T::zero()) || !(opts.t_max_ps > T::zero()) || opts.record_every == 0 {
        return Err(Error::Config("pseudomode stepping must be positive".into()));
    }
    if let Some((r, c)) = opts.watch_coherence {
        if r >= n_sys || c >= n_sys {
            return Err(Error::Config("watched coherence indices out of range".into()));
        }
    }

    let omega_mode = -z.im;
    let g = p.sqrt();
    let kappa = -T::of(2.0) * z.re;
    let dt_ps = opts.dt_fs * T::of(1e-3);
    let n_steps = (opts.t_max_ps / dt_ps)
        .round()
        .to_usize()
        .filter(|&n| (1..=10_000_000).contains(&n))
        .ok_or_else(|| Error::Config("pseudomode step count out of range".into()))?;

    let mut fock = opts.fock_levels.max(4);
    for _attempt in 0..6 {
        let run = pseudomode_once(
            h_sys_rad, site, g, omega_mode, kappa, psi0, fock, dt_ps, n_steps, opts.record_every,
            opts.watch_coherence,
        )?;
        if run.max_top_occupancy < opts.occupancy_tol {
            return Ok(run);
        }
        fock += 2;
    }
    Err(Error::Numerics(format!(
        "pseudomode Fock truncation did not converge below occupancy {:e} even at {fock} levels",
        opts.occupancy_tol
    )))
}

#[allow(clippy::too_many_arguments)]
fn pseudomode_once<T: Real>(
    h_sys_rad: &CMat<T>,
    site: usize,
    g: T,
    omega_mode: T,
    kappa: T,
    psi0: &[Complex<T>],
    fock: usize,
    dt_ps: T,
    n_steps: usize,
    record_every: usize,
    watch: Option<(usize, usize)>,
) -> Result<PseudomodeRun<T>> {
    let n_sys = h_sys_rad.nrows();
    let dim = n_sys * fock;
    let idx = |s: usize, m: usize| s * fock + m;

    // Joint Hamiltonian and the mode lowering operator.
    let mut h = CMat::<T>::zeros(dim, dim);
    let mut a_op = CMat::<T>::zeros(dim, dim);
    for s in 0..n_sys {
        for sp in 0..n_sys {
            for m in 0..fock {
                h.add_at(idx(s, m), idx(sp, m), h_sys_rad.get(s, sp));
            }
        }
        for m in 0..fock {
            h.add_at(
                idx(s, m),
                idx(s, m),
                Complex::new(omega_mode * T::of(m as f64), T::zero()),
            );
            if m + 1 < fock {
                let root = T::of(((m + 1) as f64).sqrt());
                a_op.set(idx(s, m), idx(s, m + 1), Complex::new(root, T::zero()));
                // Coupling g |site><site| (a + a^dag).
                if s == site {
                    let gv = Complex::new(g * root, T::zero());
                    h.add_at(idx(s, m), idx(s, m + 1), gv);
                    h.add_at(idx(s, m + 1), idx(s, m), gv);
                }
            }
        }
    }

    // rho(0) = |psi0><psi0| (x) |0><0|.
    let mut rho = CMat::<T>::zeros(dim, dim);
    for s in 0..n_sys {
        for sp in 0..n_sys {
            rho.set(idx(s, 0), idx(sp, 0), psi0[s] * psi0[sp].conj());
        }
    }

    let mut tmp1 = CMat::<T>::zeros(dim, dim);
    let mut tmp2 = CMat::<T>::zeros(dim, dim);
    let minus_i = Complex::new(T::zero(), -T::one());
    let half_kappa = kappa * T::of(0.5);
    let number_of = |k: usize| T::of((k % fock) as f64);

    let mut times = Vec::new();
    let mut pops = Vec::new();
    let mut coherence = Vec::new();
    let mut max_top = T::zero();

    let record = |t: T,
                  rho: &CMat<T>,
                  times: &mut Vec<T>,
                  pops: &mut Vec<Vec<T>>,
                  coherence: &mut Vec<Complex<T>>| {
        times.push(t);
        let mut row = vec![T::zero(); n_sys];
        for s in 0..n_sys {
            for m in 0..fock {
                row[s] += rho.get(idx(s, m), idx(s, m)).re;
            }
        }
        pops.push(row);
        if let Some((r, c)) = watch {
            let mut v = Complex::new(T::zero(), T::zero());
            for m in 0..fock {
                v += rho.get(idx(r, m), idx(c, m));
            }
            coherence.push(v);
        }
    };
    record(T::zero(), &rho, &mut times, &mut pops, &mut coherence);

    let mut rhs = |y: &CMat<T>, dy: &mut CMat<T>| {
        // -i [H, rho]
        mul_into(&h, y, &mut tmp1);
        mul_sub(y, &h, &mut tmp1);
        dy.fill_zero();
        dy.axpy(minus_i, &tmp1);
        // kappa ( a rho a^dag - (N rho + rho N)/2 ), N diagonal.
        mul_into(&a_op, y, &mut tmp1);
        mul_adj_rhs_into(&tmp1, &a_op, &mut tmp2);
        dy.axpy(Complex::new(kappa, T::zero()), &tmp2);
        for r in 0..dim {
            for c in 0..dim {
                let f = half_kappa * (number_of(r) + number_of(c));
                dy.add_at(r, c, y.get(r, c) * Complex::new(-f, T::zero()));
            }
        }
    };

    rk4_matrix(&mut rho, dt_ps, n_steps, &mut rhs, |step, y| {
        y.hermitize();
        let mut top = T::zero();
        for s in 0..n_sys {
            top += y.get(idx(s, fock - 1), idx(s, fock - 1)).re;
        }
        if top > max_top {
            max_top = top;
        }
        let err = (y.trace().re - T::one()).abs();
        if err > T::of(1e-4) {
            return Err(Error::Numerics(format!(
                "pseudomode trace drifted by {err:e} at step {step}"
            )));
        }
        if step % record_every == 0 || step == n_steps {
            record(
                dt_ps * T::of(step as f64),
                y,
                &mut times,
                &mut pops,
                &mut coherence,
            );
        }
        Ok(())
    })?;

    Ok(PseudomodeRun {
        times_ps: times,
        site_populations: pops,
        coherence,
        fock_levels: fock,
        max_top_occupancy: max_top,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::BathExpansion;
    use crate::model::{Monomer, StateSpec, TrimerHamiltonian};
    use crate::propagator::{zofe_propagate, PropagationOptions};
    use crate::quad::integrate;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn rabi_formula_basics() {
        // Starts at 1, returns to 1 after a full period, dips to the expected
        // depth half way.
        assert_eq!(rabi_population(0.0, -80.3, 0.0), 1.0);
        let j_rad = cm_to_angular_freq(80.3);
        let period = std::f64::consts::PI / j_rad;
        assert!((period - 0.2077).abs() < 1e-3);
        assert!((rabi_population(0.0, -80.3, period) - 1.0).abs() < 1e-12);
        assert!(rabi_population(0.0, -80.3, period / 2.0) < 1e-12);
        // Detuning limits the transfer: depth 4J^2/(D^2+4J^2).
        let depth = 1.0 - rabi_population(100.0, 30.0, 0.0_f64.max(1.0)) as f64;
        let d: f64 = cm_to_angular_freq(100.0);
        let j: f64 = cm_to_angular_freq(30.0);
        assert!(depth <= 4.0 * j * j / (d * d + 4.0 * j * j) + 1e-12);
    }

    #[test]
    fn dephasing_exponent_matches_double_quadrature() {
        // Phi(t) = int_0^t ds int_0^s alpha(tau) dtau, evaluated numerically
        // with the generic quadrature as an independent route.
        let bath = BathExpansion::new(vec![
            (c(10.0, 5.0), c(-20.0, 12.0)),
            (c(4.0, -2.0), c(-60.0, -25.0)),
        ])
        .unwrap();
        for t in [0.05, 0.3, 1.0] {
            let closed = dephasing_exponent(&bath, t);
            let quad = integrate(
                |s: f64| {
                    integrate(|tau: f64| bath.evaluate(tau), 0.0, s, 1e-12).unwrap()
                },
                0.0,
                t,
                1e-10,
            )
            .unwrap();
            assert!(
                (closed - quad).norm() < 1e-8,
                "t {t}: closed {closed}, quadrature {quad}"
            );
        }
    }

    #[test]
    fn dephasing_modulus_single_real_term() {
        // For one real term (p, -gamma) the coherence modulus is
        // exp(-(p/gamma^2)(e^{-gamma t} - 1 + gamma t)); at p = 10,
        // gamma = 20, t = 1 that is e^{-0.475} = 0.6218851.
        let bath = BathExpansion::new(vec![(c(10.0, 0.0), c(-20.0, 0.0))]).unwrap();
        let empty = BathExpansion::new(vec![]).unwrap();
        let ratio = pure_dephasing_coherence(0.0, &bath, &empty, 1.0);
        assert!((ratio.norm() - 0.621_885_1).abs() < 1e-5, "got {}", ratio.norm());
        // With the gap restored only the phase changes.
        let with_gap = pure_dephasing_coherence(30.0, &bath, &empty, 1.0);
        assert!((with_gap.norm() - ratio.norm()).abs() < 1e-12);
    }

    #[test]
    fn pseudomode_without_coupling_is_unitary() {
        let delta = 100.0;
        let j = 20.0;
        let h = CMat::from_fn(2, 2, |r, cc| {
            let v = match (r, cc) {
                (0, 0) => cm_to_angular_freq(delta),
                (0, 1) | (1, 0) => cm_to_angular_freq(j),
                _ => 0.0,
            };
            c(v, 0.0)
        });
        let psi0 = [c(1.0, 0.0), c(0.0, 0.0)];
        let opts = PseudomodeOptions {
            t_max_ps: 0.4,
            fock_levels: 2,
            ..Default::default()
        };
        let run = pseudomode_dynamics(&h, 0, 0.0, c(-20.0, 0.0), &psi0, &opts).unwrap();
        for (i, &t) in run.times_ps.iter().enumerate() {
            let expect = rabi_population(delta, j, t);
            assert!(
                (run.site_populations[i][0] - expect).abs() < 1e-8,
                "t {t}: got {}, expected {expect}",
                run.site_populations[i][0]
            );
        }
    }

    #[test]
    fn pseudomode_truncation_is_converged() {
        let h = CMat::from_fn(2, 2, |r, cc| {
            let v = match (r, cc) {
                (0, 0) => cm_to_angular_freq(100.0),
                (0, 1) | (1, 0) => cm_to_angular_freq(20.0),
                _ => 0.0,
            };
            c(v, 0.0)
        });
        let psi0 = [c(1.0, 0.0), c(0.0, 0.0)];
        let p = 131.86;
        let z = c(-20.0, 0.0);
        let base = PseudomodeOptions { t_max_ps: 0.5, ..Default::default() };
        let run = pseudomode_dynamics(&h, 0, p, z, &psi0, &base).unwrap();
        assert!(run.max_top_occupancy < 1e-6);
        let bigger = PseudomodeOptions {
            fock_levels: run.fock_levels + 2,
            ..base
        };
        let run2 = pseudomode_dynamics(&h, 0, p, z, &psi0, &bigger).unwrap();
        let end = run.site_populations.len() - 1;
        for s in 0..2 {
            assert!(
                (run.site_populations[end][s] - run2.site_populations[end][s]).abs() < 1e-6,
                "site {s} moved when widening the mode space"
            );
        }
    }

    /// Worst absolute deviation between the full 24-site auxiliary-operator
    /// propagator (bath of weight `p` on site A1 only, A2 clean, rest inert)
    /// and the exact damped-mode reference on the embedded two-level system.
    fn dimer_deviation_from_exact(p: f64) -> f64 {
        let delta = 100.0;
        let j = 20.0;
        let z = c(-20.0, 0.0);

        let mut intra = [[0.0; 8]; 8];
        intra[0][1] = j;
        intra[1][0] = j;
        let zero8 = [[0.0; 8]; 8];
        let mut energies = [0.0; 8];
        energies[0] = delta;
        let h_full = TrimerHamiltonian::new(&energies, &intra, &zero8);

        let empty = BathExpansion::new(vec![]).unwrap();
        let mut baths: Vec<BathExpansion<f64>> = (0..24).map(|_| empty.clone()).collect();
        baths[0] = BathExpansion::new(vec![(c(p, 0.0), z)]).unwrap();
        let rho0 = StateSpec::single(Monomer::A, 1).density_matrix();
        let opts = PropagationOptions { t_max_ps: 1.0, ..Default::default() };
        let full = zofe_propagate(&h_full, &baths, &rho0, &opts).unwrap();

        let h_sub = CMat::from_fn(2, 2, |r, cc| {
            let v = match (r, cc) {
                (0, 0) => cm_to_angular_freq(delta),
                (0, 1) | (1, 0) => cm_to_angular_freq(j),
                _ => 0.0,
            };
            c(v, 0.0)
        });
        let psi0 = [c(1.0, 0.0), c(0.0, 0.0)];
        let pm_opts = PseudomodeOptions { t_max_ps: 1.0, ..Default::default() };
        let reference = pseudomode_dynamics(&h_sub, 0, p, z, &psi0, &pm_opts).unwrap();

        assert_eq!(full.times_ps.len(), reference.times_ps.len());
        let mut worst = 0.0f64;
        for i in 0..full.times_ps.len() {
            let d = (full.populations[i][0] - reference.site_populations[i][0]).abs();
            worst = worst.max(d);
        }
        worst
    }

    #[test]
    fn pseudomode_bounds_auxiliary_propagator_dimer_error() {
        // The damped-mode construction is exact for a single-exponential bath
        // at zero temperature, so it measures the convolutionless closure's
        // genuine method error on a dimer. The closure is exact through
        // second order in the system-bath coupling, which shows up as a
        // quadratic falloff of the deviation with the bath weight; a linear
        // falloff (ratio ~4 under a 4x weight cut) would indicate an
        // implementation defect at leading order.
        //
        // Full default weight p = lambda*gamma = 131.86 (rad/ps)^2 puts the
        // reorganization weight (35 1/cm) above the inter-site coupling
        // (20 1/cm) - not weak coupling; measured deviation there is ~0.048.
        // At a quarter weight (8.75 1/cm, comfortably weak) it is ~0.004.
        let full_weight = 131.86;
        let weak = dimer_deviation_from_exact(full_weight / 4.0);
        let strong = dimer_deviation_from_exact(full_weight);
        assert!(weak < 0.02, "weak-coupling deviation {weak}");
        assert!(
            strong / weak > 8.0,
            "expected quadratic error falloff, got {strong} vs {weak}"
        );
        assert!(strong < 0.08, "full-weight deviation {strong}");
    }

    #[test]
    fn pseudomode_matches_dephasing_closed_form_at_zero_coupling() {
        // With J = 0 the model is exactly solvable; the damped-mode coherence
        // must reproduce the independent-boson closed form. This pins the
        // coupling normalization sqrt(p) and the damping convention -2 Re z
        // against an analytic result the mode construction never touches.
        let delta = 100.0;
        let p = 131.86;
        let z = c(-20.0, 0.0);
        let h = CMat::from_fn(2, 2, |r, cc| match (r, cc) {
            (0, 0) => c(cm_to_angular_freq(delta), 0.0),
            _ => c(0.0, 0.0),
        });
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi0 = [c(s, 0.0), c(s, 0.0)];
        let opts = PseudomodeOptions {
            t_max_ps: 1.0,
            watch_coherence: Some((0, 1)),
            record_every: 40,
            ..Default::default()
        };
        let run = pseudomode_dynamics(&h, 0, p, z, &psi0, &opts).unwrap();
        let bath = BathExpansion::new(vec![(c(p, 0.0), z)]).unwrap();
        let empty = BathExpansion::new(vec![]).unwrap();
        let rho01_0 = 0.5;
        for (i, &t) in run.times_ps.iter().enumerate() {
            let expect =
                pure_dephasing_coherence(cm_to_angular_freq(delta), &bath, &empty, t) * rho01_0;
            let got = run.coherence[i];
            assert!(
                (got - expect).norm() < 1e-5,
                "t {t}: pseudomode {got}, closed form {expect}"
            );
        }
    }

    #[test]
    fn pseudomode_rejects_bad_input() {
        let h = CMat::from_fn(2, 2, |_, _| c(0.0, 0.0));
        let psi0 = [c(1.0, 0.0), c(0.0, 0.0)];
        let opts = PseudomodeOptions::<f64>::default();
        assert!(pseudomode_dynamics(&h, 5, 1.0, c(-1.0, 0.0), &psi0, &opts).is_err());
        assert!(pseudomode_dynamics(&h, 0, -1.0, c(-1.0, 0.0), &psi0, &opts).is_err());
        assert!(pseudomode_dynamics(&h, 0, 1.0, c(1.0, 0.0), &psi0, &opts).is_err());
        let unnorm = [c(2.0, 0.0), c(0.0, 0.0)];
        assert!(pseudomode_dynamics(&h, 0, 1.0, c(-1.0, 0.0), &unnorm, &opts).is_err());
    }
}
