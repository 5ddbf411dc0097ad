//! The electronic model: one excitation shared by the 24 bacteriochlorophyll
//! (BChl) sites of the FMO trimer. Site energies and couplings are read from
//! checksummed plain-text tables embedded in the crate, the 24x24 one-exciton
//! Hamiltonian is assembled from them, and initial states are parsed from a
//! small textual grammar.
//!
//! Conventions used throughout the crate:
//! * energies and couplings are stored in 1/cm and converted to angular
//!   frequency (rad/ps) exactly once, at propagation time;
//! * sites are indexed 0..24 as monomer A = 0..8, B = 8..16, C = 16..24,
//!   with BChl `n` of a monomer at offset `n - 1`;
//! * the threefold rotation sends A to B, B to C, C to A.

use num_complex::Complex;

use crate::linalg::{hermitian_eigvals, CMat};
use crate::{Error, Real, Result};

pub const N_PER_MONOMER: usize = 8;
pub const N_MONOMERS: usize = 3;
pub const N_SITES: usize = N_PER_MONOMER * N_MONOMERS;

/// Speed of light in cm/ps; converts 1/cm to cycles/ps.
pub const SPEED_OF_LIGHT_CM_PER_PS: f64 = 0.029_979_245_8;
/// Boltzmann constant in 1/cm per kelvin.
pub const BOLTZMANN_CM_PER_K: f64 = 0.695_034_8;

/// Energy in 1/cm to angular frequency in rad/ps (hbar = 1).
pub fn cm_to_angular_freq<T: Real>(energy_cm: T) -> T {
    energy_cm * T::of(std::f64::consts::TAU * SPEED_OF_LIGHT_CM_PER_PS)
}

/// Thermal energy k_B T in 1/cm for a temperature in kelvin.
pub fn thermal_energy_cm<T: Real>(temperature_k: T) -> T {
    temperature_k * T::of(BOLTZMANN_CM_PER_K)
}

const INTRA_TABLE: &str = include_str!("../data/intra_couplings.txt");
const INTER_TABLE: &str = include_str!("../data/inter_couplings.txt");
const ENERGIES_OLB: &str = include_str!("../data/site_energies_olb.txt");
const ENERGIES_SAB: &str = include_str!("../data/site_energies_sab.txt");

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Monomer {
    A,
    B,
    C,
}

impl Monomer {
    pub const ALL: [Monomer; 3] = [Monomer::A, Monomer::B, Monomer::C];

    pub fn offset(self) -> usize {
        match self {
            Monomer::A => 0,
            Monomer::B => N_PER_MONOMER,
            Monomer::C => 2 * N_PER_MONOMER,
        }
    }

    /// Next monomer in the cyclic order of the threefold rotation.
    pub fn next(self) -> Monomer {
        match self {
            Monomer::A => Monomer::B,
            Monomer::B => Monomer::C,
            Monomer::C => Monomer::A,
        }
    }

    pub fn label(self) -> char {
        match self {
            Monomer::A => 'A',
            Monomer::B => 'B',
            Monomer::C => 'C',
        }
    }

    pub fn from_label(c: char) -> Option<Monomer> {
        match c.to_ascii_uppercase() {
            'A' => Some(Monomer::A),
            'B' => Some(Monomer::B),
            'C' => Some(Monomer::C),
            _ => None,
        }
    }
}

/// Flat site index of BChl `bchl` (1-based, 1..=8) in `monomer`.
pub fn site_index(monomer: Monomer, bchl: usize) -> usize {
    assert!((1..=N_PER_MONOMER).contains(&bchl), "BChl index {bchl} out of 1..=8");
    monomer.offset() + bchl - 1
}

/// Monomer containing a flat site index.
pub fn monomer_of(site: usize) -> Monomer {
    assert!(site < N_SITES);
    Monomer::ALL[site / N_PER_MONOMER]
}

/// 1-based BChl number of a flat site index within its monomer.
pub fn bchl_of(site: usize) -> usize {
    assert!(site < N_SITES);
    site % N_PER_MONOMER + 1
}

/// Human-readable site label, "A1" .. "C8".
pub fn site_label(site: usize) -> String {
    format!("{}{}", monomer_of(site).label(), bchl_of(site))
}

/// The site permutation of the threefold rotation: site `i` is carried to
/// `perm[i]`. Invariance of an operator M reads M[perm[i]][perm[j]] = M[i][j].
pub fn c3_permutation() -> [usize; N_SITES] {
    let mut perm = [0usize; N_SITES];
    for m in Monomer::ALL {
        for b in 1..=N_PER_MONOMER {
            perm[site_index(m, b)] = site_index(m.next(), b);
        }
    }
    perm
}

/// Apply a site permutation to a density matrix: out[p[i]][p[j]] = rho[i][j].
pub fn permute_density<T: Real>(rho: &CMat<T>, perm: &[usize; N_SITES]) -> CMat<T> {
    debug_assert_eq!(rho.nrows(), N_SITES);
    let mut out = CMat::zeros(N_SITES, N_SITES);
    for i in 0..N_SITES {
        for j in 0..N_SITES {
            out.set(perm[i], perm[j], rho.get(i, j));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Checksummed plain-text numeric tables.
// ---------------------------------------------------------------------------

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn table_checksum(tokens: &[&str]) -> u64 {
    fnv1a64(tokens.join(" ").as_bytes())
}

/// Parse a whitespace-separated numeric table. Lines starting with '#' are
/// comments; a comment of the form `# checksum: fnv1a64:<16 hex digits>` is
/// verified against the FNV-1a64 hash of all data tokens joined by single
/// spaces. Trailing '#' comments on data lines are stripped.
pub fn parse_numeric_table<T: Real>(text: &str, require_checksum: bool) -> Result<Vec<Vec<T>>> {
    let mut rows: Vec<Vec<T>> = Vec::new();
    let mut tokens: Vec<&str> = Vec::new();
    let mut expected: Option<u64> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(rest) = comment.strip_prefix("checksum:") {
                let rest = rest.trim();
                let hex = rest.strip_prefix("fnv1a64:").ok_or_else(|| {
                    Error::Config(format!("line {}: unsupported checksum kind {rest:?}", lineno + 1))
                })?;
                let value = u64::from_str_radix(hex.trim(), 16).map_err(|_| {
                    Error::Config(format!("line {}: malformed checksum {hex:?}", lineno + 1))
                })?;
                if expected.replace(value).is_some() {
                    return Err(Error::Config("table has more than one checksum line".into()));
                }
            }
            continue;
        }
        let data = line.split('#').next().unwrap_or("").trim();
        if data.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in data.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::Config(format!("line {}: {tok:?} is not a number", lineno + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Config(format!("line {}: {tok:?} is not finite", lineno + 1)));
            }
            row.push(T::of(v));
            tokens.push(tok);
        }
        rows.push(row);
    }

    match expected {
        Some(want) => {
            let got = table_checksum(&tokens);
            if got != want {
                return Err(Error::Config(format!(
                    "table checksum mismatch: file says fnv1a64:{want:016x}, contents hash to fnv1a64:{got:016x}"
                )));
            }
        }
        None if require_checksum => {
            return Err(Error::Config("table is missing its checksum line".into()));
        }
        None => {}
    }
    Ok(rows)
}

/// Render rows as a table in the format `parse_numeric_table` reads, with a
/// leading comment block and a checksum line. Values print in Rust's shortest
/// round-trip form so a write/read cycle is lossless.
pub fn format_numeric_table<T: Real>(comment: &str, rows: &[Vec<T>]) -> String {
    let rendered: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().map(|v| format!("{v}")).collect())
        .collect();
    let tokens: Vec<&str> = rendered.iter().flatten().map(|s| s.as_str()).collect();
    let sum = table_checksum(&tokens);
    let mut out = String::new();
    for line in comment.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(&format!("# checksum: fnv1a64:{sum:016x}\n"));
    for row in &rendered {
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn parse_8x8<T: Real>(text: &str, what: &str) -> Result<[[T; 8]; 8]> {
    let rows = parse_numeric_table::<T>(text, true)?;
    if rows.len() != 8 || rows.iter().any(|r| r.len() != 8) {
        return Err(Error::Config(format!("{what}: expected an 8x8 table")));
    }
    let mut out = [[T::zero(); 8]; 8];
    for (i, row) in rows.iter().enumerate() {
        out[i].copy_from_slice(row);
    }
    Ok(out)
}

fn parse_energy_row<T: Real>(text: &str, require_checksum: bool) -> Result<[T; 8]> {
    let rows = parse_numeric_table::<T>(text, require_checksum)?;
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    if flat.len() != 8 {
        return Err(Error::Config(format!(
            "site energies: expected 8 values, found {}",
            flat.len()
        )));
    }
    let mut out = [T::zero(); 8];
    out.copy_from_slice(&flat);
    Ok(out)
}

/// Intra-monomer coupling matrix (8x8, symmetric, zero diagonal), 1/cm.
pub fn intra_couplings<T: Real>() -> [[T; 8]; 8] {
    parse_8x8(INTRA_TABLE, "intra-monomer couplings").expect("embedded table is valid")
}

/// Inter-monomer coupling matrix w (8x8), 1/cm: w[i][j] couples BChl i+1 of a
/// monomer to BChl j+1 of the next monomer in cyclic order.
pub fn inter_couplings<T: Real>() -> [[T; 8]; 8] {
    parse_8x8(INTER_TABLE, "inter-monomer couplings").expect("embedded table is valid")
}

/// Built-in site-energy sets.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum EnergySet {
    /// Lower-energy arrangement with a pronounced BChl 7 outlier.
    Olb,
    /// More uniform, higher-lying arrangement.
    Sab,
}

impl EnergySet {
    pub fn name(self) -> &'static str {
        match self {
            EnergySet::Olb => "olb",
            EnergySet::Sab => "sab",
        }
    }
}

/// Built-in site energies for one monomer, 1/cm, lowest value at zero.
pub fn builtin_site_energies<T: Real>(set: EnergySet) -> [T; 8] {
    let text = match set {
        EnergySet::Olb => ENERGIES_OLB,
        EnergySet::Sab => ENERGIES_SAB,
    };
    parse_energy_row(text, true).expect("embedded table is valid")
}

/// Parse a user-supplied site-energy table (8 values; checksum line optional).
/// Energies are shifted so the lowest is zero; a uniform shift only changes a
/// global phase of the dynamics, and the shifted form matches the built-ins.
pub fn parse_site_energies<T: Real>(text: &str) -> Result<[T; 8]> {
    let mut e = parse_energy_row::<T>(text, false)?;
    let min = e.iter().copied().fold(T::infinity(), T::min);
    for v in &mut e {
        *v -= min;
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Hamiltonians.
// ---------------------------------------------------------------------------

/// 8x8 one-exciton Hamiltonian of an isolated monomer, 1/cm: site energies on
/// the diagonal, intra-monomer couplings off it.
pub fn monomer_hamiltonian<T: Real>(energies: &[T; 8], intra: &[[T; 8]; 8]) -> CMat<T> {
    CMat::from_fn(8, 8, |i, j| {
        let v = if i == j { energies[i] } else { intra[i][j] };
        Complex::new(v, T::zero())
    })
}

/// 24x24 one-exciton Hamiltonian of the trimer, 1/cm, real symmetric and
/// exactly invariant under the threefold rotation.
#[derive(Clone, Debug)]
pub struct TrimerHamiltonian<T> {
    matrix: CMat<T>,
}

impl<T: Real> TrimerHamiltonian<T> {
    /// Assemble from explicit tables. Diagonal blocks are the monomer
    /// Hamiltonian; the block coupling a monomer to the next one in cyclic
    /// order is the inter-monomer matrix w, and the reverse block is w
    /// transposed, which is the unique completion that is both symmetric and
    /// threefold-invariant.
    pub fn new(energies: &[T; 8], intra: &[[T; 8]; 8], inter: &[[T; 8]; 8]) -> Self {
        let mut h = CMat::zeros(N_SITES, N_SITES);
        for m in Monomer::ALL {
            let off = m.offset();
            let noff = m.next().offset();
            for i in 0..8 {
                for j in 0..8 {
                    let intra_v = if i == j { energies[i] } else { intra[i][j] };
                    h.set(off + i, off + j, Complex::new(intra_v, T::zero()));
                    h.set(off + i, noff + j, Complex::new(inter[i][j], T::zero()));
                    h.set(noff + j, off + i, Complex::new(inter[i][j], T::zero()));
                }
            }
        }
        TrimerHamiltonian { matrix: h }
    }

    /// Assemble from the embedded tables and a built-in energy set.
    pub fn builtin(set: EnergySet) -> Self {
        Self::new(
            &builtin_site_energies(set),
            &intra_couplings(),
            &inter_couplings(),
        )
    }

    /// Assemble from the embedded coupling tables and explicit site energies.
    pub fn with_energies(energies: &[T; 8]) -> Self {
        Self::new(energies, &intra_couplings(), &inter_couplings())
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.matrix
    }

    /// Matrix element in 1/cm between flat site indices.
    pub fn element_cm(&self, i: usize, j: usize) -> T {
        self.matrix.get(i, j).re
    }

    /// The Hamiltonian converted to angular frequency (rad/ps).
    pub fn in_angular_freq(&self) -> CMat<T> {
        let mut h = self.matrix.clone();
        h.scale(Complex::new(
            T::of(std::f64::consts::TAU * SPEED_OF_LIGHT_CM_PER_PS),
            T::zero(),
        ));
        h
    }

    /// Exciton (eigenstate) energies in 1/cm, ascending.
    pub fn exciton_energies(&self) -> Vec<T> {
        hermitian_eigvals(&self.matrix)
    }
}

// ---------------------------------------------------------------------------
// Initial states.
// ---------------------------------------------------------------------------

/// Parse a site label like `A1` or `c8` (monomer letter + BChl number) into a
/// site index.
pub fn parse_site_label(label: &str) -> Result<usize> {
    let label = label.trim();
    let mut chars = label.chars();
    let mono = chars
        .next()
        .and_then(Monomer::from_label)
        .ok_or_else(|| Error::Config(format!("site {label:?} must start with A, B or C")))?;
    let bchl: usize = chars
        .as_str()
        .parse()
        .map_err(|_| Error::Config(format!("site {label:?}: bad BChl number {:?}", chars.as_str())))?;
    if !(1..=N_PER_MONOMER).contains(&bchl) {
        return Err(Error::Config(format!(
            "site {label:?}: BChl number must be 1..=8"
        )));
    }
    Ok(site_index(mono, bchl))
}

/// The `fnv1a64:<hex>` checksum recorded inside each bundled data table,
/// keyed by table name (for provenance metadata next to emitted results).
pub fn builtin_table_checksums() -> Vec<(&'static str, String)> {
    let extract = |text: &str| -> String {
        text.lines()
            .find_map(|l| l.trim().strip_prefix("# checksum:").map(|v| v.trim().to_string()))
            .expect("embedded table carries a checksum line")
    };
    vec![
        ("intra_couplings", extract(INTRA_TABLE)),
        ("inter_couplings", extract(INTER_TABLE)),
        ("site_energies_olb", extract(ENERGIES_OLB)),
        ("site_energies_sab", extract(ENERGIES_SAB)),
    ]
}

/// A pure initial state given as a superposition of site excitations. Parsed
/// from the grammar `SITE:AMP[@PHASE_DEG]`, comma-separated, e.g.
/// `A1:1`, `A1:0.7,B1:0.7`, `A1:1,B1:1@90`. Amplitudes are non-negative
/// magnitudes with optional phases in degrees; the state is normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpec<T> {
    components: Vec<(usize, Complex<T>)>,
}

impl<T: Real> StateSpec<T> {
    /// Excitation fully on one BChl.
    pub fn single(monomer: Monomer, bchl: usize) -> Self {
        StateSpec {
            components: vec![(site_index(monomer, bchl), Complex::new(T::one(), T::zero()))],
        }
    }

    pub fn parse(spec: &str) -> Result<Self> {
        let mut components: Vec<(usize, Complex<T>)> = Vec::new();
        for part in spec.split(',') {
            let part = part.trim();
            if part.is_empty() {
                return Err(Error::Config(format!("initial state {spec:?}: empty component")));
            }
            let (site_s, rest) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("initial state component {part:?}: expected SITE:AMP")))?;
            let site = parse_site_label(site_s).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("initial state component {part:?}: {m}")),
                other => other,
            })?;

            let (amp_s, phase_s) = match rest.split_once('@') {
                Some((a, p)) => (a.trim(), Some(p.trim())),
                None => (rest.trim(), None),
            };
            let amp: f64 = amp_s
                .parse()
                .map_err(|_| Error::Config(format!("{part:?}: bad amplitude {amp_s:?}")))?;
            if !amp.is_finite() || amp < 0.0 {
                return Err(Error::Config(format!(
                    "{part:?}: amplitude must be a finite non-negative magnitude"
                )));
            }
            let phase_deg: f64 = match phase_s {
                Some(p) => p
                    .parse()
                    .map_err(|_| Error::Config(format!("{part:?}: bad phase {p:?}")))?,
                None => 0.0,
            };
            if !phase_deg.is_finite() {
                return Err(Error::Config(format!("{part:?}: phase must be finite")));
            }
            if components.iter().any(|(s, _)| *s == site) {
                return Err(Error::Config(format!(
                    "initial state {spec:?}: site {} appears twice",
                    site_label(site)
                )));
            }
            let phase = phase_deg.to_radians();
            let a = Complex::new(T::of(amp * phase.cos()), T::of(amp * phase.sin()));
            components.push((site, a));
        }

        let norm2: T = components.iter().map(|(_, a)| a.norm_sqr()).sum();
        if !(norm2 > T::zero()) {
            return Err(Error::Config(format!(
                "initial state {spec:?} has zero norm"
            )));
        }
        let inv = norm2.sqrt().recip();
        for (_, a) in &mut components {
            *a = *a * inv;
        }
        components.sort_by_key(|(s, _)| *s);
        Ok(StateSpec { components })
    }

    pub fn components(&self) -> &[(usize, Complex<T>)] {
        &self.components
    }

    /// Density matrix |psi><psi| on the 24-site space.
    pub fn density_matrix(&self) -> CMat<T> {
        let mut rho = CMat::zeros(N_SITES, N_SITES);
        for &(i, a) in &self.components {
            for &(j, b) in &self.components {
                rho.set(i, j, a * b.conj());
            }
        }
        rho
    }

    /// The same state with every site carried through a permutation.
    pub fn permuted(&self, perm: &[usize; N_SITES]) -> Self {
        let mut components: Vec<_> = self
            .components
            .iter()
            .map(|&(s, a)| (perm[s], a))
            .collect();
        components.sort_by_key(|(s, _)| *s);
        StateSpec { components }
    }

    /// All population on monomer A (used by leakage checks).
    pub fn is_confined_to(&self, monomer: Monomer) -> bool {
        self.components.iter().all(|&(s, _)| monomer_of(s) == monomer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_conversions() {
        assert!((cm_to_angular_freq(1.0f64) - 0.188_365_156_7).abs() < 1e-9);
        assert!((thermal_energy_cm(1.0f64) - 0.695_034_8).abs() < 1e-12);
        // 77 K and 300 K thermal energies used by the bath module.
        assert!((thermal_energy_cm(77.0f64) - 53.517_68).abs() < 1e-4);
        assert!((thermal_energy_cm(300.0f64) - 208.510_44).abs() < 1e-4);
    }

    #[test]
    fn site_indexing_round_trips() {
        for m in Monomer::ALL {
            for b in 1..=8 {
                let s = site_index(m, b);
                assert_eq!(monomer_of(s), m);
                assert_eq!(bchl_of(s), b);
            }
        }
        assert_eq!(site_label(0), "A1");
        assert_eq!(site_label(8), "B1");
        assert_eq!(site_label(23), "C8");
    }

    #[test]
    fn c3_permutation_has_order_three() {
        let p = c3_permutation();
        for i in 0..N_SITES {
            assert_eq!(p[p[p[i]]], i);
            assert_ne!(p[i], i);
        }
        assert_eq!(p[site_index(Monomer::A, 1)], site_index(Monomer::B, 1));
        assert_eq!(p[site_index(Monomer::C, 5)], site_index(Monomer::A, 5));
    }

    #[test]
    fn embedded_tables_parse_and_validate() {
        let intra = intra_couplings::<f64>();
        for i in 0..8 {
            assert_eq!(intra[i][i], 0.0);
            for j in 0..8 {
                assert_eq!(intra[i][j], intra[j][i]);
            }
        }
        assert_eq!(intra[0][1], -80.3);
        assert_eq!(intra[3][6], -42.2);
        assert_eq!(intra[4][5], 55.8);
        assert_eq!(intra[0][7], 21.0);

        let inter = inter_couplings::<f64>();
        assert_eq!(inter[0][4], 2.3);
        assert_eq!(inter[7][4], 4.0);
        assert_eq!(inter[1][4], 7.4);
        assert_eq!(inter[7][7], 3.6);

        assert_eq!(builtin_site_energies::<f64>(EnergySet::Olb), [186.0, 81.0, 0.0, 113.0, 65.0, 89.0, 492.0, 218.0]);
        assert_eq!(builtin_site_energies::<f64>(EnergySet::Sab), [310.0, 230.0, 0.0, 180.0, 405.0, 320.0, 270.0, 505.0]);
    }

    #[test]
    fn checksum_mismatch_is_rejected() {
        let tampered = INTRA_TABLE.replace("-80.3", "-80.4");
        let err = parse_numeric_table::<f64>(&tampered, true).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("checksum mismatch"));
    }

    #[test]
    fn missing_checksum_policy() {
        let plain = "1 2 3\n4 5 6\n";
        assert!(parse_numeric_table::<f64>(plain, true).is_err());
        let rows = parse_numeric_table::<f64>(plain, false).unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
    }

    #[test]
    fn format_parse_round_trip() {
        let rows = vec![vec![0.1f64, -2.5e-3], vec![1.0 / 3.0, 42.0]];
        let text = format_numeric_table("demo table", &rows);
        let back = parse_numeric_table::<f64>(&text, true).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn custom_energies_are_shifted_to_zero_floor() {
        let e = parse_site_energies::<f64>("100 150 120 300 100 101 102 103\n").unwrap();
        assert_eq!(e[0], 0.0);
        assert_eq!(e[3], 200.0);
        assert_eq!(e.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
    }

    #[test]
    fn monomer_hamiltonian_layout() {
        let h = monomer_hamiltonian(
            &builtin_site_energies::<f64>(EnergySet::Olb),
            &intra_couplings(),
        );
        assert_eq!(h.get(0, 0).re, 186.0);
        assert_eq!(h.get(6, 6).re, 492.0);
        assert_eq!(h.get(0, 1).re, -80.3);
        assert_eq!(h.herm_defect(), 0.0);
    }

    #[test]
    fn trimer_printed_values() {
        let h = TrimerHamiltonian::<f64>::builtin(EnergySet::Olb);
        let s = site_index;
        use Monomer::*;
        // Diagonal blocks.
        assert_eq!(h.element_cm(s(A, 1), s(A, 2)), -80.3);
        assert_eq!(h.element_cm(s(B, 1), s(B, 2)), -80.3);
        assert_eq!(h.element_cm(s(C, 4), s(C, 7)), -42.2);
        assert_eq!(h.element_cm(s(A, 7), s(A, 7)), 492.0);
        // Cyclic off-diagonal blocks carry the table as printed.
        assert_eq!(h.element_cm(s(A, 1), s(B, 5)), 2.3);
        assert_eq!(h.element_cm(s(B, 1), s(C, 5)), 2.3);
        assert_eq!(h.element_cm(s(C, 1), s(A, 5)), 2.3);
        assert_eq!(h.element_cm(s(A, 8), s(B, 5)), 4.0);
        assert_eq!(h.element_cm(s(A, 2), s(B, 5)), 7.4);
        // Anti-cyclic blocks are the transpose.
        assert_eq!(h.element_cm(s(B, 5), s(A, 1)), 2.3);
        assert_eq!(h.element_cm(s(A, 5), s(C, 8)), 4.0);
        assert_eq!(h.element_cm(s(A, 8), s(C, 5)), 1.3);
    }

    #[test]
    fn trimer_is_symmetric_and_c3_invariant() {
        for set in [EnergySet::Olb, EnergySet::Sab] {
            let h = TrimerHamiltonian::<f64>::builtin(set);
            assert_eq!(h.matrix().herm_defect(), 0.0);
            let p = c3_permutation();
            for i in 0..N_SITES {
                for j in 0..N_SITES {
                    assert_eq!(
                        h.element_cm(i, j),
                        h.element_cm(p[i], p[j]),
                        "threefold invariance broken at ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn olb_energies_without_bchl7_span_about_220() {
        let e = builtin_site_energies::<f64>(EnergySet::Olb);
        let spread = e
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 6)
            .map(|(_, v)| *v)
            .fold(0.0f64, f64::max);
        assert!((spread - 220.0).abs() < 10.0, "spread {spread}");
    }

    #[test]
    fn exciton_energies_match_diagonal_limit() {
        // With couplings zeroed the exciton energies are the site energies,
        // each three-fold degenerate across the monomers.
        let zero = [[0.0f64; 8]; 8];
        let e = builtin_site_energies::<f64>(EnergySet::Olb);
        let h = TrimerHamiltonian::new(&e, &zero, &zero);
        let eigs = h.exciton_energies();
        let mut expect: Vec<f64> = e.iter().flat_map(|&v| [v, v, v]).collect();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in eigs.iter().zip(&expect) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn exciton_energies_are_triply_degenerate() {
        // Threefold symmetry makes the 24 levels come in A/B/C-related sets;
        // full spectrum must be invariant under rebuilding from permuted data.
        let h = TrimerHamiltonian::<f64>::builtin(EnergySet::Olb);
        let eigs = h.exciton_energies();
        assert_eq!(eigs.len(), 24);
        for w in eigs.windows(2) {
            assert!(w[0] <= w[1]);
        }
        // Every eigenvalue of the monomer-with-couplings problem appears; the
        // trimer couplings are weak, so levels group within a few 1/cm.
        let mono = monomer_hamiltonian(
            &builtin_site_energies::<f64>(EnergySet::Olb),
            &intra_couplings(),
        );
        let mono_eigs = hermitian_eigvals(&mono);
        for me in &mono_eigs {
            let nearest = eigs.iter().map(|e| (e - me).abs()).fold(f64::MAX, f64::min);
            assert!(nearest < 20.0, "monomer level {me} far from trimer spectrum");
        }
    }

    #[test]
    fn state_spec_parses_singles_and_superpositions() {
        let s = StateSpec::<f64>::parse("A1:1").unwrap();
        assert_eq!(s, StateSpec::single(Monomer::A, 1));
        let rho = s.density_matrix();
        assert_eq!(rho.get(0, 0).re, 1.0);
        assert!((rho.trace().re - 1.0).abs() < 1e-15);

        let s = StateSpec::<f64>::parse("A1:1,B1:1@90").unwrap();
        let c = s.components();
        assert_eq!(c.len(), 2);
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c[0].1.re - inv).abs() < 1e-12);
        assert!((c[1].1.im - inv).abs() < 1e-12);
        assert!((c[1].1.re).abs() < 1e-12);

        // Unequal weights normalize to unit trace.
        let s = StateSpec::<f64>::parse("a3:3, c8:4").unwrap();
        let rho = s.density_matrix();
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!((rho.get(2, 2).re - 9.0 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn state_spec_rejects_malformed_input() {
        for bad in [
            "", "A1", "A1:", "D1:1", "A0:1", "A9:1", "A1:x", "A1:-1", "A1:1@x",
            "A1:1,A1:1", "A1:0,A2:0",
        ] {
            assert!(
                StateSpec::<f64>::parse(bad).is_err(),
                "{bad:?} should be rejected"
            );
        }
    }

    #[test]
    fn permuted_state_matches_permuted_density() {
        let s = StateSpec::<f64>::parse("A1:0.6,A2:0.8@45").unwrap();
        let p = c3_permutation();
        let direct = s.permuted(&p).density_matrix();
        let via_density = permute_density(&s.density_matrix(), &p);
        for i in 0..N_SITES {
            for j in 0..N_SITES {
                assert!((direct.get(i, j) - via_density.get(i, j)).norm() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn prop_state_spec_normalizes(amps in proptest::collection::vec(0.01f64..10.0, 1..6),
                                      phases in proptest::collection::vec(-360.0f64..360.0, 6)) {
            let sites = ["A1", "B3", "C8", "A5", "B7", "C2"];
            let spec: Vec<String> = amps
                .iter()
                .enumerate()
                .map(|(k, a)| format!("{}:{}@{}", sites[k], a, phases[k]))
                .collect();
            let s = StateSpec::<f64>::parse(&spec.join(",")).unwrap();
            let rho = s.density_matrix();
            prop_assert!((rho.trace().re - 1.0).abs() < 1e-12);
            prop_assert!(rho.herm_defect() < 1e-15);
            // Rank one: frobenius norm equals trace for a pure projector.
            prop_assert!((rho.frob_norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn prop_trimer_invariance_under_random_energies(e in proptest::collection::vec(0.0f64..600.0, 8)) {
            let mut energies = [0.0f64; 8];
            energies.copy_from_slice(&e);
            let h = TrimerHamiltonian::with_energies(&energies);
            prop_assert_eq!(h.matrix().herm_defect(), 0.0);
            let p = c3_permutation();
            for i in 0..N_SITES {
                for j in 0..N_SITES {
                    prop_assert_eq!(h.element_cm(i, j), h.element_cm(p[i], p[j]));
                }
            }
        }
    }
}
