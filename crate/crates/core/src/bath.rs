//! The vibrational environment: an overdamped (Drude-Lorentz) spectral
//! density, its finite-temperature correlation function, and the fit of that
//! correlation function by a short sum of complex exponentials
//! `alpha(tau) ~ sum_j p_j exp(z_j tau)` with `Re z_j < 0`, which is the form
//! the auxiliary-operator propagator consumes.
//!
//! Unit conventions: spectral-density parameters are stored in 1/cm, the
//! correlation function and expansion coefficients are in angular-frequency
//! units (p in rad^2/ps^2, z in rad/ps), and time is in ps.

use num_complex::Complex;

use crate::linalg::{hermitian_eig, qr_least_squares, small_eigenvalues, CMat};
use crate::model::{cm_to_angular_freq, format_numeric_table, parse_numeric_table, thermal_energy_cm};
use crate::quad::integrate_real;
use crate::{Error, Real, Result};

/// One overdamped term of the spectral density, parameterized by its
/// reorganization energy and inverse correlation time, both in 1/cm.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DrudeLorentzTerm<T> {
    pub lambda_cm: T,
    pub gamma_cm: T,
}

impl<T: Real> DrudeLorentzTerm<T> {
    pub fn lambda_rad(&self) -> T {
        cm_to_angular_freq(self.lambda_cm)
    }

    pub fn gamma_rad(&self) -> T {
        cm_to_angular_freq(self.gamma_cm)
    }
}

/// Spectral density J(w) = scale * sum_k 2 lambda_k gamma_k w / (w^2 + gamma_k^2).
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDensity<T> {
    pub terms: Vec<DrudeLorentzTerm<T>>,
    pub scale: T,
}

/// Default per-site bath: reorganization energy 35 1/cm, correlation time
/// 1/gamma of about 50 fs (gamma = 106.18 1/cm is 20.0 rad/ps).
pub const DEFAULT_LAMBDA_CM: f64 = 35.0;
pub const DEFAULT_GAMMA_CM: f64 = 106.18;

impl<T: Real> Default for SpectralDensity<T> {
    fn default() -> Self {
        SpectralDensity {
            terms: vec![DrudeLorentzTerm {
                lambda_cm: T::of(DEFAULT_LAMBDA_CM),
                gamma_cm: T::of(DEFAULT_GAMMA_CM),
            }],
            scale: T::one(),
        }
    }
}

impl<T: Real> SpectralDensity<T> {
    pub fn with_scale(scale: T) -> Self {
        SpectralDensity {
            scale,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Config("spectral density needs at least one term".into()));
        }
        if !(self.scale >= T::zero()) || !self.scale.is_finite() {
            return Err(Error::Config("spectral density scale must be finite and >= 0".into()));
        }
        for t in &self.terms {
            if !(t.lambda_cm >= T::zero()) || !(t.gamma_cm > T::zero()) {
                return Err(Error::Config(
                    "each spectral-density term needs lambda >= 0 and gamma > 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// J(w) in 1/cm for w in 1/cm. Odd in w.
    pub fn evaluate(&self, omega_cm: T) -> T {
        let two = T::of(2.0);
        let mut s = T::zero();
        for t in &self.terms {
            s += two * t.lambda_cm * t.gamma_cm * omega_cm
                / (omega_cm * omega_cm + t.gamma_cm * t.gamma_cm);
        }
        s * self.scale
    }

    /// Same spectral density expressed on the angular-frequency axis:
    /// J_rad(w_rad) in rad/ps for w_rad in rad/ps.
    fn evaluate_rad(&self, omega_rad: T) -> T {
        let two = T::of(2.0);
        let mut s = T::zero();
        for t in &self.terms {
            let l = t.lambda_rad();
            let g = t.gamma_rad();
            s += two * l * g * omega_rad / (omega_rad * omega_rad + g * g);
        }
        s * self.scale
    }

    /// Reorganization energy (1/pi) int_0^inf J(w)/w dw in 1/cm, evaluated in
    /// closed form: each term contributes scale * lambda.
    pub fn reorganization_energy(&self) -> T {
        let mut s = T::zero();
        for t in &self.terms {
            s += t.lambda_cm;
        }
        s * self.scale
    }

    /// Reorganization energy by adaptive quadrature. The integrand falls off
    /// as 1/w^2, so a finite upper limit far above every gamma suffices; the
    /// truncated tail is bounded by 2 scale sum(lambda gamma) / (pi W).
    pub fn reorganization_energy_quadrature(&self) -> Result<T> {
        let gmax = self
            .terms
            .iter()
            .map(|t| t.gamma_cm)
            .fold(T::zero(), T::max);
        let upper = gmax * T::of(4000.0);
        let tol = T::of(1e-6) * (T::one() + self.reorganization_energy().abs());
        let v = integrate_real(
            |w: T| {
                let mut s = T::zero();
                let two = T::of(2.0);
                for t in &self.terms {
                    s += two * t.lambda_cm * t.gamma_cm / (w * w + t.gamma_cm * t.gamma_cm);
                }
                s * self.scale
            },
            T::zero(),
            upper,
            tol,
        )?;
        Ok(v / T::PI())
    }

    /// Largest gamma in rad/ps; sets the integration cutoff scale.
    fn gamma_max_rad(&self) -> T {
        self.terms
            .iter()
            .map(|t| t.gamma_rad())
            .fold(T::zero(), T::max)
    }
}

/// Controls for the correlation-function quadrature.
///
/// The thermally weighted integrand J(w) coth(w / 2 kT) tends to a constant
/// at large w, so the zero-time value diverges logarithmically without an
/// ultraviolet cutoff. We integrate to `cutoff_mult * max(gamma)` and fade
/// the integrand with a smooth half-cosine-squared window over the upper half
/// of that range; the window keeps the truncation from ringing at late times.
///
/// The default multiplier of 16 keeps the tapered profile within 1% of the
/// untapered value (relative to alpha(0)) for every delay beyond 0.05 ps
/// while discarding only a few percent of the total coupling weight; the
/// remaining short-delay softening is the accepted price of a finite cutoff.
#[derive(Copy, Clone, Debug)]
pub struct CorrelationSettings<T> {
    /// Integration cutoff as a multiple of the largest gamma.
    pub cutoff_mult: T,
    /// Absolute quadrature tolerance in rad^2/ps^2.
    pub quad_tol: T,
}

impl<T: Real> Default for CorrelationSettings<T> {
    fn default() -> Self {
        CorrelationSettings {
            cutoff_mult: T::of(16.0),
            quad_tol: T::of(1e-6),
        }
    }
}

fn taper<T: Real>(omega: T, cutoff: T) -> T {
    let half = cutoff * T::of(0.5);
    if omega <= half {
        T::one()
    } else if omega >= cutoff {
        T::zero()
    } else {
        let x = (omega - half) / half;
        let c = (T::of(std::f64::consts::FRAC_PI_2) * x).cos();
        c * c
    }
}

/// Bath correlation function alpha(tau) in rad^2/ps^2 for tau >= 0.
///
/// The real (temperature-dependent) part is computed by regularized
/// quadrature, see [`CorrelationSettings`]. The imaginary part has a closed
/// form for this spectral density and is temperature independent:
/// Im alpha(tau) = -scale * sum_k lambda_k gamma_k exp(-gamma_k tau).
pub fn thermal_correlation<T: Real>(
    j: &SpectralDensity<T>,
    temperature_k: T,
    tau_ps: T,
    settings: &CorrelationSettings<T>,
) -> Result<Complex<T>> {
    j.validate()?;
    if temperature_k < T::zero() {
        return Err(Error::Config("temperature must be >= 0 K".into()));
    }
    if tau_ps < T::zero() {
        return Err(Error::Config("correlation time argument must be >= 0".into()));
    }
    let cutoff = settings.cutoff_mult * j.gamma_max_rad();
    let theta = cm_to_angular_freq(thermal_energy_cm(temperature_k)); // kT in rad/ps
    let two = T::of(2.0);

    let re = integrate_real(
        |w: T| {
            let occ = if theta > T::zero() {
                let x = w / (two * theta);
                // coth(x), stable for small x via the explicit limit of
                // J(w) coth(w/2kT): J ~ w near zero keeps the product finite.
                if x > T::of(20.0) {
                    T::one()
                } else {
                    x.cosh() / x.sinh()
                }
            } else {
                T::one()
            };
            j.evaluate_rad(w) * occ * (w * tau_ps).cos() * taper(w, cutoff)
        },
        T::zero(),
        cutoff,
        settings.quad_tol,
    )? / T::PI();

    let mut im = T::zero();
    for t in &j.terms {
        let l = t.lambda_rad();
        let g = t.gamma_rad();
        im -= j.scale * l * g * (-g * tau_ps).exp();
    }
    Ok(Complex::new(re, im))
}

// ---------------------------------------------------------------------------
// Exponential-sum representation.
// ---------------------------------------------------------------------------

/// alpha(tau) ~ sum_j p_j exp(z_j tau), all Re z_j < 0.
#[derive(Clone, Debug, PartialEq)]
pub struct BathExpansion<T> {
    terms: Vec<(Complex<T>, Complex<T>)>, // (p, z)
}

impl<T: Real> BathExpansion<T> {
    pub fn new(terms: Vec<(Complex<T>, Complex<T>)>) -> Result<Self> {
        for (_, z) in &terms {
            if !(z.re < T::zero()) {
                return Err(Error::Config(format!(
                    "expansion rate {z} must have a negative real part"
                )));
            }
        }
        Ok(BathExpansion { terms })
    }

    pub fn terms(&self) -> &[(Complex<T>, Complex<T>)] {
        &self.terms
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn evaluate(&self, tau_ps: T) -> Complex<T> {
        let mut s = Complex::new(T::zero(), T::zero());
        for &(p, z) in &self.terms {
            s += p * (z * tau_ps).exp();
        }
        s
    }

    /// Site dephasing rate of the memoryless limit, 1/ps:
    /// Gamma = 2 Re int_0^inf alpha(tau) dtau = -2 Re sum_j p_j / z_j.
    pub fn markovian_dephasing_rate(&self) -> T {
        let mut s = T::zero();
        for &(p, z) in &self.terms {
            s -= T::of(2.0) * (p / z).re;
        }
        s
    }

    /// Serialize as a checksummed plain-text table, one `p_re p_im z_re z_im`
    /// row per term.
    pub fn export_table(&self) -> String {
        let rows: Vec<Vec<T>> = self
            .terms
            .iter()
            .map(|&(p, z)| vec![p.re, p.im, z.re, z.im])
            .collect();
        format_numeric_table(
            "Bath correlation expansion: alpha(tau) = sum_j p_j exp(z_j tau).\n\
             Columns: p_re p_im z_re z_im; p in rad^2/ps^2, z in rad/ps.",
            &rows,
        )
    }

    pub fn import_table(text: &str) -> Result<Self> {
        let rows = parse_numeric_table::<T>(text, false)?;
        let mut terms = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != 4 {
                return Err(Error::Config(format!(
                    "expansion row {}: expected 4 columns p_re p_im z_re z_im",
                    i + 1
                )));
            }
            terms.push((Complex::new(row[0], row[1]), Complex::new(row[2], row[3])));
        }
        BathExpansion::new(terms)
    }
}

/// Uniform fit window for correlation functions: [0, 1] ps, 2000 samples.
pub const FIT_WINDOW_PS: f64 = 1.0;
pub const FIT_SAMPLES: usize = 2000;

/// A fitted expansion together with its relative L2 residual on the fit grid.
#[derive(Clone, Debug)]
pub struct CorrelationFit<T> {
    pub expansion: BathExpansion<T>,
    pub relative_residual: T,
}

/// Sample the correlation function on the fit window and fit it with at most
/// `n_terms` exponentials. Fails if the best achievable residual exceeds
/// `residual_tol`.
pub fn expand_correlation<T: Real>(
    j: &SpectralDensity<T>,
    temperature_k: T,
    n_terms: usize,
    residual_tol: T,
    settings: &CorrelationSettings<T>,
) -> Result<CorrelationFit<T>> {
    let dt = T::of(FIT_WINDOW_PS / (FIT_SAMPLES as f64 - 1.0));
    let mut samples = Vec::with_capacity(FIT_SAMPLES);
    for i in 0..FIT_SAMPLES {
        let tau = dt * T::of(i as f64);
        samples.push(thermal_correlation(j, temperature_k, tau, settings)?);
    }
    let (expansion, relative_residual) = fit_exponentials(&samples, dt, n_terms, residual_tol)?;
    Ok(CorrelationFit {
        expansion,
        relative_residual,
    })
}

/// Fit uniformly sampled data y_i = y(i dt) with at most `max_terms` decaying
/// complex exponentials. Returns the expansion and its relative L2 residual;
/// errors if that residual exceeds `residual_tol`.
///
/// Pole estimates come from a matrix-pencil analysis run over several
/// deterministic sampling configurations (full window at a few decimations to
/// resolve slow rates, plus the early window at full rate for the sharp
/// short-time structure); prefactors come from linear least squares, and both
/// are polished jointly by a damped Gauss-Newton pass.
pub fn fit_exponentials<T: Real>(
    samples: &[Complex<T>],
    dt: T,
    max_terms: usize,
    residual_tol: T,
) -> Result<(BathExpansion<T>, T)> {
    if samples.len() < 8 || max_terms == 0 {
        return Err(Error::Config(
            "exponential fit needs >= 8 samples and >= 1 term".into(),
        ));
    }
    let y_norm = {
        let mut s = T::zero();
        for y in samples {
            s += y.norm_sqr();
        }
        s.sqrt()
    };
    if y_norm == T::zero() {
        // Identically zero data: represent it exactly with a single dead term.
        let exp = BathExpansion::new(vec![(
            Complex::new(T::zero(), T::zero()),
            Complex::new(-T::one(), T::zero()),
        )])?;
        return Ok((exp, T::zero()));
    }

    let n = samples.len();
    // (decimation, fraction of the window), in the order tried.
    let configs: [(usize, f64); 6] = [
        (10, 1.0),
        (4, 1.0),
        (25, 1.0),
        (2, 0.5),
        (1, 0.2),
        (1, 0.05),
    ];

    let mut best: Option<(BathExpansion<T>, T)> = None;
    let mut pooled: Vec<Complex<T>> = Vec::new();

    let consider = |zs: Vec<Complex<T>>, best: &mut Option<(BathExpansion<T>, T)>| {
        if zs.is_empty() {
            return;
        }
        if let Ok((exp, res)) = solve_amplitudes_and_polish(samples, dt, &zs, max_terms, y_norm) {
            if best.as_ref().map_or(true, |(_, b)| res < *b) {
                *best = Some((exp, res));
            }
        }
    };

    for (dec, frac) in configs {
        let span = ((n as f64) * frac) as usize;
        let m = span / dec;
        if m < 2 * max_terms + 4 {
            continue;
        }
        let series: Vec<Complex<T>> = (0..m).map(|i| samples[i * dec]).collect();
        let delta = dt * T::of(dec as f64);
        let zs = pencil_rates(&series, delta, max_terms);
        for z in &zs {
            if !pooled.iter().any(|w| (*w - *z).norm() < T::of(1e-6) * (T::one() + z.norm())) {
                pooled.push(*z);
            }
        }
        consider(zs, &mut best);
        if let Some((_, r)) = &best {
            if *r <= residual_tol * T::of(0.25) {
                break;
            }
        }
    }
    // A final attempt with the pooled rate candidates from every window,
    // which lets a slow rate from a decimated pass combine with a fast one
    // seen only at full sampling.
    consider(pooled, &mut best);

    match best {
        Some((exp, res)) if res <= residual_tol => Ok((exp, res)),
        Some((_, res)) => Err(Error::Numerics(format!(
            "exponential fit did not reach tolerance {residual_tol:e}: best relative residual {res:e} with {max_terms} terms"
        ))),
        None => Err(Error::Numerics("exponential fit produced no candidates".into())),
    }
}

/// Matrix-pencil rate estimates for a uniformly sampled series: builds the
/// shifted Hankel grams G0, G1, projects onto the dominant `order`-dimensional
/// signal subspace of G0, and reads the poles off the reduced pencil.
fn pencil_rates<T: Real>(series: &[Complex<T>], delta: T, order: usize) -> Vec<Complex<T>> {
    let m = series.len();
    let l = (m / 2).min(24).max(order + 2);
    if l + 2 > m {
        return Vec::new();
    }
    let rows = m - l;
    let mut g0 = CMat::<T>::zeros(l, l);
    let mut g1 = CMat::<T>::zeros(l, l);
    for a in 0..l {
        for b in 0..l {
            let mut s0 = Complex::new(T::zero(), T::zero());
            let mut s1 = Complex::new(T::zero(), T::zero());
            for i in 0..rows {
                let ya = series[i + a].conj();
                s0 += ya * series[i + b];
                s1 += ya * series[i + b + 1];
            }
            g0.set(a, b, s0);
            g1.set(a, b, s1);
        }
    }

    let (vals, vecs) = hermitian_eig(&g0);
    let vmax = vals.last().copied().unwrap_or(T::zero());
    if !(vmax > T::zero()) {
        return Vec::new();
    }
    // Dominant subspace: the top `order` eigenpairs above a noise floor.
    let mut idx: Vec<usize> = (0..l).collect();
    idx.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let floor = vmax * T::of(1e-24);
    let keep: Vec<usize> = idx
        .into_iter()
        .take(order)
        .filter(|&i| vals[i] > floor)
        .collect();
    let k = keep.len();
    if k == 0 {
        return Vec::new();
    }

    // F = Sigma^-2 V^H G1 V restricted to the kept columns.
    let vk = CMat::from_fn(l, k, |i, j| vecs.get(i, keep[j]));
    let mut g1v = CMat::<T>::zeros(l, k);
    crate::linalg::mul_into(&g1, &vk, &mut g1v);
    let mut f = CMat::<T>::zeros(k, k);
    crate::linalg::mul_adj_lhs_into(&vk, &g1v, &mut f);
    for i in 0..k {
        let inv = vals[keep[i]].recip();
        for jc in 0..k {
            let v = f.get(i, jc);
            f.set(i, jc, v * inv);
        }
    }

    let Ok(mu) = small_eigenvalues(&f) else {
        return Vec::new();
    };
    let mut zs = Vec::new();
    for m in mu {
        let r = m.norm();
        if !(r > T::zero()) || !r.is_finite() {
            continue;
        }
        let z = Complex::new(r.ln() / delta, m.im.atan2(m.re) / delta);
        // Keep decaying, resolvable rates: not growing, not so fast the pole
        // is invisible after one sample.
        if z.re < T::zero() && z.re * delta > T::of(-15.0) && z.re.is_finite() && z.im.is_finite()
        {
            zs.push(z);
        }
    }
    zs
}

/// Linear least squares for the prefactors given candidate rates, trimming to
/// `max_terms` by amplitude, followed by a damped Gauss-Newton polish of both
/// prefactors and rates. Returns the expansion and relative L2 residual.
fn solve_amplitudes_and_polish<T: Real>(
    samples: &[Complex<T>],
    dt: T,
    rates: &[Complex<T>],
    max_terms: usize,
    y_norm: T,
) -> Result<(BathExpansion<T>, T)> {
    let n = samples.len();
    let design = |zs: &[Complex<T>]| {
        CMat::from_fn(n, zs.len(), |i, j| (zs[j] * dt * T::of(i as f64)).exp())
    };

    let mut zs: Vec<Complex<T>> = rates.to_vec();
    let mut ps = qr_least_squares(&design(&zs), samples)?;
    if zs.len() > max_terms {
        let mut idx: Vec<usize> = (0..zs.len()).collect();
        idx.sort_by(|&a, &b| ps[b].norm().partial_cmp(&ps[a].norm()).unwrap());
        idx.truncate(max_terms);
        idx.sort_unstable();
        zs = idx.iter().map(|&i| zs[i]).collect();
        ps = qr_least_squares(&design(&zs), samples)?;
    }

    let residual_of = |ps: &[Complex<T>], zs: &[Complex<T>]| {
        let mut s = T::zero();
        for i in 0..n {
            let t = dt * T::of(i as f64);
            let mut v = Complex::new(T::zero(), T::zero());
            for (p, z) in ps.iter().zip(zs) {
                v += *p * (*z * t).exp();
            }
            s += (v - samples[i]).norm_sqr();
        }
        s.sqrt() / y_norm
    };

    let mut res = residual_of(&ps, &zs);
    let k = zs.len();
    let mut damping = T::of(1e-3);

    for _iter in 0..60 {
        // Residual vector and Jacobian [d/dp_j, d/dz_j] at the current point.
        let rows = n + 2 * k;
        let mut jac = CMat::<T>::zeros(rows, 2 * k);
        let mut rhs = vec![Complex::new(T::zero(), T::zero()); rows];
        for i in 0..n {
            let t = dt * T::of(i as f64);
            let mut v = Complex::new(T::zero(), T::zero());
            for j in 0..k {
                let e = (zs[j] * t).exp();
                jac.set(i, j, e);
                jac.set(i, k + j, ps[j] * e * t);
                v += ps[j] * e;
            }
            rhs[i] = samples[i] - v;
        }
        let sq = damping.sqrt();
        for j in 0..2 * k {
            jac.set(n + j, j, Complex::new(sq, T::zero()));
        }

        let Ok(step) = qr_least_squares(&jac, &rhs) else {
            break;
        };
        let new_ps: Vec<Complex<T>> = (0..k).map(|j| ps[j] + step[j]).collect();
        let new_zs: Vec<Complex<T>> = (0..k).map(|j| zs[j] + step[k + j]).collect();
        let admissible = new_zs
            .iter()
            .all(|z| z.re < T::zero() && z.re.is_finite() && z.im.is_finite());
        let new_res = if admissible {
            residual_of(&new_ps, &new_zs)
        } else {
            T::infinity()
        };
        if new_res < res {
            let improved = res - new_res;
            ps = new_ps;
            zs = new_zs;
            res = new_res;
            damping = (damping * T::of(0.3)).max(T::of(1e-12));
            if improved < res * T::of(1e-12) + T::of(1e-15) {
                break;
            }
        } else {
            damping *= T::of(10.0);
            if damping > T::of(1e8) {
                break;
            }
        }
    }

    let exp = BathExpansion::new(ps.into_iter().zip(zs).collect())?;
    Ok((exp, res))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn default_j() -> SpectralDensity<f64> {
        SpectralDensity::default()
    }

    /// Independent closed form for the real part of the correlation function
    /// of an overdamped spectral density: the pole expansion
    /// Re alpha(tau) = scale * [ lambda gamma cot(beta gamma / 2) e^{-gamma tau}
    ///   + (4 lambda gamma / beta) sum_k nu_k e^{-nu_k tau} / (nu_k^2 - gamma^2) ]
    /// with nu_k = 2 pi k / beta, everything in rad/ps. Valid for tau > 0;
    /// truncated at `kmax` ladder terms.
    fn pole_expansion_re(j: &SpectralDensity<f64>, temp_k: f64, tau: f64, kmax: usize) -> f64 {
        let theta = cm_to_angular_freq(thermal_energy_cm(temp_k));
        let beta = 1.0 / theta;
        let mut total = 0.0;
        for t in &j.terms {
            let l = t.lambda_rad();
            let g = t.gamma_rad();
            let x: f64 = 0.5 * beta * g;
            total += l * g * (x.cos() / x.sin()) * (-g * tau).exp();
            for k in 1..=kmax {
                let nu = 2.0 * std::f64::consts::PI * (k as f64) / beta;
                total += (4.0 * l * g / beta) * nu * (-nu * tau).exp() / (nu * nu - g * g);
            }
        }
        total * j.scale
    }

    #[test]
    fn spectral_density_peak_and_oddness() {
        let j = default_j();
        // J peaks at w = gamma where it equals scale * lambda per term.
        assert!((j.evaluate(DEFAULT_GAMMA_CM) - 35.0).abs() < 1e-12);
        assert!(j.evaluate(DEFAULT_GAMMA_CM) > j.evaluate(DEFAULT_GAMMA_CM * 1.1));
        assert!(j.evaluate(DEFAULT_GAMMA_CM) > j.evaluate(DEFAULT_GAMMA_CM * 0.9));
        assert_eq!(j.evaluate(-50.0), -j.evaluate(50.0));
        assert_eq!(j.evaluate(0.0), 0.0);
    }

    #[test]
    fn reorganization_energy_both_routes() {
        let j = default_j();
        assert_eq!(j.reorganization_energy(), 35.0);
        let by_quad = j.reorganization_energy_quadrature().unwrap();
        assert!((by_quad - 35.0).abs() < 0.5, "quadrature gave {by_quad}");
        // Linear in the overall scale.
        let j4 = SpectralDensity::with_scale(4.0);
        assert_eq!(j4.reorganization_energy(), 140.0);
        let by_quad4: f64 = j4.reorganization_energy_quadrature().unwrap();
        assert!((by_quad4 - 140.0).abs() < 2.0);
    }

    #[test]
    fn imaginary_part_is_temperature_independent_and_analytic() {
        let j = default_j();
        let s = CorrelationSettings::default();
        for tau in [0.0, 0.02, 0.1, 0.5] {
            let a77 = thermal_correlation(&j, 77.0, tau, &s).unwrap();
            let a300 = thermal_correlation(&j, 300.0, tau, &s).unwrap();
            assert_eq!(a77.im, a300.im);
            let l = j.terms[0].lambda_rad();
            let g = j.terms[0].gamma_rad();
            let expect = -l * g * (-g * tau).exp();
            assert!((a77.im - expect).abs() < 1e-9 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn real_part_matches_pole_expansion_at_high_cutoff() {
        // Validates the quadrature machinery itself: pushing the ultraviolet
        // cutoff far out, the result must converge onto the independent pole
        // expansion tightly at every sampled delay.
        let j = default_j();
        let s = CorrelationSettings {
            cutoff_mult: 40.0,
            quad_tol: 1e-8,
        };
        for temp in [77.0, 300.0] {
            let a0 = thermal_correlation(&j, temp, 0.0, &s).unwrap().re;
            for tau in [0.02, 0.05, 0.1, 0.2, 0.4] {
                let got = thermal_correlation(&j, temp, tau, &s).unwrap().re;
                let want = pole_expansion_re(&j, temp, tau, 2000);
                assert!(
                    (got - want).abs() < 0.005 * a0.abs(),
                    "tau {tau} at {temp} K: quadrature {got}, pole expansion {want}, alpha(0) {a0}"
                );
            }
        }
    }

    #[test]
    fn default_cutoff_matches_pole_expansion_beyond_memory_time() {
        // At the default cutoff the taper reshapes the short-delay spike (a
        // few percent of alpha(0) at 0.02 ps); past the ~50 fs bath memory
        // the regularized profile must track the pole expansion closely.
        let j = default_j();
        let s = CorrelationSettings::default();
        for temp in [77.0, 300.0] {
            let a0 = thermal_correlation(&j, temp, 0.0, &s).unwrap().re;
            for tau in [0.05, 0.1, 0.2, 0.4] {
                let got = thermal_correlation(&j, temp, tau, &s).unwrap().re;
                let want = pole_expansion_re(&j, temp, tau, 2000);
                assert!(
                    (got - want).abs() < 0.01 * a0.abs(),
                    "tau {tau} at {temp} K: quadrature {got}, pole expansion {want}, alpha(0) {a0}"
                );
            }
        }
    }

    #[test]
    fn zero_time_value_grows_with_temperature() {
        let j = default_j();
        let s = CorrelationSettings::default();
        let a0 = thermal_correlation(&j, 0.0, 0.0, &s).unwrap().re;
        let a77 = thermal_correlation(&j, 77.0, 0.0, &s).unwrap().re;
        let a150 = thermal_correlation(&j, 150.0, 0.0, &s).unwrap().re;
        let a300 = thermal_correlation(&j, 300.0, 0.0, &s).unwrap().re;
        assert!(a0 > 0.0);
        assert!(a0 < a77 && a77 < a150 && a150 < a300);
    }

    #[test]
    fn correlation_decays_over_the_fit_window() {
        let j = default_j();
        let s = CorrelationSettings::default();
        for temp in [77.0, 300.0] {
            let a0 = thermal_correlation(&j, temp, 0.0, &s).unwrap().norm();
            let a1 = thermal_correlation(&j, temp, 1.0, &s).unwrap().norm();
            assert!(
                a1 < 1e-3 * a0,
                "temperature {temp}: |alpha(1 ps)| = {a1} vs |alpha(0)| = {a0}"
            );
        }
    }

    #[test]
    fn quadrature_tolerance_refinement_is_stable() {
        let j = default_j();
        let coarse = CorrelationSettings { quad_tol: 1e-5, ..Default::default() };
        let fine = CorrelationSettings { quad_tol: 1e-9, ..Default::default() };
        for tau in [0.0, 0.03, 0.3] {
            let a = thermal_correlation(&j, 77.0, tau, &coarse).unwrap();
            let b = thermal_correlation(&j, 77.0, tau, &fine).unwrap();
            assert!((a - b).norm() <= 1e-4 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn fit_recovers_single_exponential() {
        let p = c(2.0, -1.0);
        let z = c(-15.0, 8.0);
        let dt = 1.0 / 1999.0;
        let samples: Vec<_> = (0..2000).map(|i| p * (z * (dt * i as f64)).exp()).collect();
        let (exp, res) = fit_exponentials(&samples, dt, 1, 1e-8).unwrap();
        assert!(res < 1e-10);
        assert_eq!(exp.n_terms(), 1);
        let (pf, zf) = exp.terms()[0];
        assert!((pf - p).norm() < 1e-6);
        assert!((zf - z).norm() < 1e-6);
    }

    #[test]
    fn fit_recovers_two_well_separated_exponentials() {
        let terms = [(c(3.0, 0.5), c(-5.0, 2.0)), (c(-1.0, 0.2), c(-60.0, -30.0))];
        let dt = 1.0 / 1999.0;
        let samples: Vec<_> = (0..2000)
            .map(|i| {
                let t = dt * i as f64;
                terms.iter().map(|(p, z)| p * (z * t).exp()).sum()
            })
            .collect();
        let (exp, res) = fit_exponentials(&samples, dt, 2, 1e-6).unwrap();
        assert!(res < 1e-8, "residual {res}");
        for (p, z) in terms {
            let best = exp
                .terms()
                .iter()
                .map(|(pf, zf)| (pf - p).norm() + (zf - z).norm())
                .fold(f64::MAX, f64::min);
            assert!(best < 1e-5, "term ({p}, {z}) missed by {best}");
        }
    }

    #[test]
    fn fit_reports_unreachable_tolerance() {
        // A power law is not a short exponential sum; demanding an absurd
        // tolerance with one term must fail with the achieved residual.
        let dt = 1.0 / 1999.0;
        let samples: Vec<_> = (0..2000)
            .map(|i| c(1.0 / (1.0 + 50.0 * dt * i as f64), 0.0))
            .collect();
        let err = fit_exponentials(&samples, dt, 1, 1e-12).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("best relative residual"), "{msg}");
    }

    #[test]
    fn four_term_expansion_fits_cold_bath() {
        let fit = expand_correlation(
            &default_j(),
            77.0,
            4,
            0.02,
            &CorrelationSettings::default(),
        )
        .unwrap();
        assert!(
            fit.relative_residual <= 0.02,
            "residual {}",
            fit.relative_residual
        );
        assert!(fit.expansion.n_terms() <= 4);
        assert!(fit.expansion.markovian_dephasing_rate() > 0.0);
    }

    #[test]
    fn four_term_expansion_fits_warm_bath() {
        let fit = expand_correlation(
            &default_j(),
            300.0,
            4,
            0.02,
            &CorrelationSettings::default(),
        )
        .unwrap();
        assert!(
            fit.relative_residual <= 0.02,
            "residual {}",
            fit.relative_residual
        );
    }

    #[test]
    fn markovian_rate_grows_with_temperature_and_matches_low_frequency_limit() {
        let j = default_j();
        let s = CorrelationSettings::default();
        let cold = expand_correlation(&j, 77.0, 4, 0.02, &s).unwrap();
        let warm = expand_correlation(&j, 300.0, 4, 0.02, &s).unwrap();
        let g_cold = cold.expansion.markovian_dephasing_rate();
        let g_warm = warm.expansion.markovian_dephasing_rate();
        assert!(g_warm > 1.5 * g_cold, "cold {g_cold}, warm {g_warm}");

        // Independent estimate: Gamma = lim_{w->0} J(w) coth(w/2kT)
        //                             = 4 scale lambda kT / gamma (rad/ps).
        for (temp, got) in [(77.0, g_cold), (300.0, g_warm)] {
            let theta = cm_to_angular_freq(thermal_energy_cm(temp));
            let t0 = &j.terms[0];
            let expect = 4.0 * j.scale * t0.lambda_rad() * theta / t0.gamma_rad();
            assert!(
                (got - expect).abs() < 0.2 * expect,
                "temperature {temp}: fit rate {got}, low-frequency limit {expect}"
            );
        }
    }

    #[test]
    fn expansion_export_import_round_trip() {
        let fit = expand_correlation(
            &default_j(),
            77.0,
            4,
            0.02,
            &CorrelationSettings::default(),
        )
        .unwrap();
        let text = fit.expansion.export_table();
        let back = BathExpansion::<f64>::import_table(&text).unwrap();
        assert_eq!(back, fit.expansion);
    }

    #[test]
    fn import_rejects_growing_rates() {
        let text = "1.0 0.0 0.5 0.0\n";
        assert!(BathExpansion::<f64>::import_table(text).is_err());
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let mut j = default_j();
        j.scale = -1.0;
        assert!(j.validate().is_err());
        let j2 = SpectralDensity::<f64> { terms: vec![], scale: 1.0 };
        assert!(j2.validate().is_err());
        let j3 = SpectralDensity::<f64> {
            terms: vec![DrudeLorentzTerm { lambda_cm: 35.0, gamma_cm: 0.0 }],
            scale: 1.0,
        };
        assert!(j3.validate().is_err());
        assert!(thermal_correlation(&default_j(), -5.0, 0.0, &CorrelationSettings::default()).is_err());
    }
}
