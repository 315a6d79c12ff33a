//! Closed-form potentials and the default initial datum.

use crate::grid::Grid;

/// `-depth * sech²(x)`. Bound states at `-(s - n)²` for `s(s + 1) = depth`.
pub fn sech2(grid: &Grid, depth: f64) -> Vec<f64> {
    sech2_shifted(grid, depth, 0.0)
}

/// `-depth * sech²(x - center)`.
pub fn sech2_shifted(grid: &Grid, depth: f64, center: f64) -> Vec<f64> {
    grid.sample(|x| {
        let c = (x - center).cosh();
        -depth / (c * c)
    })
}

/// `s` with `s(s + 1) = depth`; integer values mark zero-energy resonances.
pub fn poschl_teller_s(depth: f64) -> f64 {
    0.5 * ((1.0 + 4.0 * depth).sqrt() - 1.0)
}

/// Exact ground-state energy of `-d²/dx² - depth * sech²(x)` on the line.
pub fn poschl_teller_ground_energy(depth: f64) -> f64 {
    let s = poschl_teller_s(depth);
    -s * s
}

/// The validated initial datum: one bound state, no resonance.
#[derive(Debug, Clone)]
pub struct InitialDatum {
    pub phi0: Vec<f64>,
    pub phi_dot0: Vec<f64>,
    pub mass: f64,
}

/// `phi0 = -depth sech²(x)`, `phi_dot0 = 0.2 x exp(-x²)`, unit mass.
pub fn poschl_teller_preset(grid: &Grid, depth: f64) -> InitialDatum {
    InitialDatum {
        phi0: sech2(grid, depth),
        phi_dot0: grid.sample(|x| 0.2 * x * (-x * x).exp()),
        mass: 1.0,
    }
}

pub const DEFAULT_DEPTH: f64 = 1.5;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_energies() {
        let s = (7f64.sqrt() - 1.0) / 2.0;
        assert!((poschl_teller_ground_energy(1.5) + s * s).abs() < 1e-15);
        assert!((poschl_teller_ground_energy(2.0) + 1.0).abs() < 1e-15);
        assert!((poschl_teller_s(6.0) - 2.0).abs() < 1e-15);
    }
}
