//! Model systems used by the demonstrations: two coupled spins and a
//! transmon coupled to a resonator.

use crate::error::{Error, Result};
use crate::heom::SystemSpec;
use crate::linalg::{self, CMat};
use num_complex::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn sigma_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn sigma_y() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn sigma_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

/// Pauli operator `p` (x, y or z) acting on spin `site` (0 or 1) of a pair.
pub fn two_spin_pauli(p: char, site: usize) -> Result<CMat> {
    let s = match p {
        'x' => sigma_x(),
        'y' => sigma_y(),
        'z' => sigma_z(),
        _ => return Err(Error::Domain(format!("unknown Pauli component {p:?}"))),
    };
    let id = CMat::identity(2, 2);
    match site {
        0 => Ok(linalg::kron(&s, &id)),
        1 => Ok(linalg::kron(&id, &s)),
        _ => Err(Error::Domain(format!("spin index {site} out of range"))),
    }
}

/// H_S = (ω₁/2)σ_z¹ + (ω₂/2)σ_z² + g σ_x¹σ_x², V_S = σ_x¹ + σ_x² (ħ = 1).
pub fn two_spin(omega1: f64, omega2: f64, g: f64) -> Result<SystemSpec> {
    let (z1, z2) = (two_spin_pauli('z', 0)?, two_spin_pauli('z', 1)?);
    let (x1, x2) = (two_spin_pauli('x', 0)?, two_spin_pauli('x', 1)?);
    let h = z1 * c(0.5 * omega1, 0.0) + z2 * c(0.5 * omega2, 0.0) + (&x1 * &x2) * c(g, 0.0);
    let mut sys = SystemSpec::new(h, x1 + x2)?;
    sys.labels = ["uu", "ud", "du", "dd"].iter().map(|s| s.to_string()).collect();
    Ok(sys)
}

/// Extra Fock levels used to evaluate X², Y² and cos(√ε X) before cutting
/// them down to the working space.
const AUX_LEVELS: usize = 60;

fn annihilation(n: usize) -> CMat {
    CMat::from_fn(n, n, |r, col| if col == r + 1 { c((col as f64).sqrt(), 0.0) } else { c(0.0, 0.0) })
}

/// Single-mode operators on `levels` Fock states. Squares and the transmon
/// cosine are the exact operators' matrix elements, not functions of the
/// truncated X and Y.
#[derive(Debug, Clone)]
pub struct ModeOperators {
    pub x: CMat,
    pub y: CMat,
    pub n: CMat,
    pub x2: CMat,
    pub y2: CMat,
}

impl ModeOperators {
    pub fn new(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::Domain("a mode needs at least two Fock levels".into()));
        }
        let big = levels + AUX_LEVELS;
        let a = annihilation(big);
        let ad = a.adjoint();
        let x = &a + &ad;
        let y = (&ad - &a) * c(0.0, 1.0);
        let cut = |m: &CMat| m.view((0, 0), (levels, levels)).into_owned();
        Ok(ModeOperators { x: cut(&x), y: cut(&y), n: cut(&(&ad * &a)), x2: cut(&(&x * &x)), y2: cut(&(&y * &y)) })
    }

    pub fn levels(&self) -> usize {
        self.x.nrows()
    }

    /// ⟨m|cos(k X)|n⟩ on the working space.
    pub fn cos_x(&self, k: f64) -> CMat {
        let levels = self.levels();
        let big = levels + AUX_LEVELS;
        let a = annihilation(big);
        let x = &a + a.adjoint();
        let (vals, vecs) = linalg::eigh(&x);
        let f = CMat::from_diagonal(&nalgebra::DVector::from_iterator(big, vals.iter().map(|v| c((k * v).cos(), 0.0))));
        let full = &vecs * f * vecs.adjoint();
        full.view((0, 0), (levels, levels)).into_owned()
    }
}

/// Transmon-resonator operators in the product basis |n_t m_r⟩.
#[derive(Debug, Clone)]
pub struct TransmonResonator {
    pub system: SystemSpec,
    pub levels: usize,
    pub x2_t: CMat,
    pub y2_t: CMat,
    pub n_t: CMat,
    pub x2_r: CMat,
    pub y2_r: CMat,
    pub n_r: CMat,
    /// Projectors onto the highest transmon and resonator Fock level.
    pub top_t: CMat,
    pub top_r: CMat,
}

/// H_S = (ω_t/4)[Y_t² − (2/ε)cos(√ε X_t)] + ω_r N_r + g Y_t Y_r, V_S = Y_r.
pub fn transmon_resonator(omega_t: f64, omega_r: f64, g: f64, eps: f64, levels: usize) -> Result<TransmonResonator> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("anharmonicity must be positive, got {eps}")));
    }
    let m = ModeOperators::new(levels)?;
    let id = CMat::identity(levels, levels);
    let h_t = (&m.y2 - m.cos_x(eps.sqrt()) * c(2.0 / eps, 0.0)) * c(omega_t / 4.0, 0.0);
    let h = linalg::kron(&h_t, &id) + linalg::kron(&id, &m.n) * c(omega_r, 0.0) + linalg::kron(&m.y, &m.y) * c(g, 0.0);
    let mut system = SystemSpec::new(h, linalg::kron(&id, &m.y))?;
    system.labels = (0..levels * levels).map(|i| format!("{}{}", i / levels, i % levels)).collect();
    let mut top = CMat::zeros(levels, levels);
    top[(levels - 1, levels - 1)] = c(1.0, 0.0);
    Ok(TransmonResonator {
        system,
        levels,
        x2_t: linalg::kron(&m.x2, &id),
        y2_t: linalg::kron(&m.y2, &id),
        n_t: linalg::kron(&m.n, &id),
        x2_r: linalg::kron(&id, &m.x2),
        y2_r: linalg::kron(&id, &m.y2),
        n_r: linalg::kron(&id, &m.n),
        top_t: linalg::kron(&top, &id),
        top_r: linalg::kron(&id, &top),
    })
}

/// A harmonic oscillator with counter term, written in the Fock basis of its
/// renormalized mode: H = ħΩ₀ b†b, V = v₀ q with q = √(ω₀/Ω₀)(b + b†)/√2.
pub fn renormalized_oscillator(omega0: f64, v0: f64, lambda: f64, hbar: f64, levels: usize) -> Result<SystemSpec> {
    if !(omega0 > 0.0) || levels < 2 {
        return Err(Error::Domain("oscillator needs omega0 > 0 and at least two levels".into()));
    }
    let big = renormalized_frequency(omega0, v0, lambda, hbar);
    let b = annihilation(levels);
    let n = b.adjoint() * &b;
    let q = (&b + b.adjoint()) * c((omega0 / big).sqrt() / 2f64.sqrt(), 0.0);
    SystemSpec::new(n * c(hbar * big, 0.0), q * c(v0, 0.0))
}

/// Ω₀ = ω₀√(1 + 2λv₀²/(ħω₀)).
pub fn renormalized_frequency(omega0: f64, v0: f64, lambda: f64, hbar: f64) -> f64 {
    omega0 * (1.0 + 2.0 * lambda * v0 * v0 / (hbar * omega0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_identities() {
        let m = ModeOperators::new(5).unwrap();
        // N = (X² + Y² − 2)/4 holds exactly for the exact squares
        let lhs = (&m.x2 + &m.y2 - CMat::identity(5, 5) * c(2.0, 0.0)) * c(0.25, 0.0);
        assert!((lhs - &m.n).norm() < 1e-12);
        // cos(0·X) = 1
        assert!((m.cos_x(0.0) - CMat::identity(5, 5)).norm() < 1e-10);
    }

    #[test]
    fn two_spin_is_hermitian() {
        let s = two_spin(1.2, 0.8, 0.4).unwrap();
        assert_eq!(s.dim(), 4);
    }
}
