//! Centroid-based transformations over complex agent positions.
//!
//! A transformation Φ maps positions `z ∈ ℂⁿ` to `ξ = Φz`, whose first
//! `n − 1` entries describe the formation shape and whose last entry is the
//! (mass-weighted) centroid.

use serde::{Deserialize, Serialize};

use crate::error::{FormationError, Result};
use crate::linalg::{c, checked_inverse, CMatrix, CVector, C64};

/// Inverse verification tolerance (max-abs entry of `ΦΦ⁻¹ − I`).
pub const INVERSE_TOL: f64 = 1e-10;
/// Minors at or below this magnitude count as zero.
pub const MINOR_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    masses: Vec<f64>,
}

impl AgentConfig {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.len() < 2 {
            return Err(FormationError::InvalidConfig(format!(
                "need at least 2 agents, got {}",
                masses.len()
            )));
        }
        if let Some((i, m)) = masses
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m > 0.0))
        {
            return Err(FormationError::InvalidConfig(format!(
                "mass {i} must be positive, got {m}"
            )));
        }
        Ok(Self { masses })
    }

    pub fn unit(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn n(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// How each Jacobi shape row is scaled by its reduced mass μᵢ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobiScaling {
    /// Row i scaled by √μᵢ (the canonical Jacobi vectors).
    #[default]
    RootReducedMass,
    /// Row i scaled by μᵢ itself.
    ReducedMass,
}

/// A transformation with its verified inverse and the leading principal
/// minors of the inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformPair {
    forward: CMatrix,
    inverse: CMatrix,
    minors: Vec<C64>,
}

impl TransformPair {
    pub fn new(forward: CMatrix) -> Result<Self> {
        let inverse = checked_inverse(&forward, INVERSE_TOL)?;
        let minors = leading_minors(&inverse);
        Ok(Self {
            forward,
            inverse,
            minors,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(CMatrix::identity(n, n)).expect("identity is invertible")
    }

    pub fn n(&self) -> usize {
        self.forward.nrows()
    }

    pub fn forward(&self) -> &CMatrix {
        &self.forward
    }

    pub fn inverse(&self) -> &CMatrix {
        &self.inverse
    }

    /// Leading principal minors of Φ⁻¹.
    pub fn minors(&self) -> &[C64] {
        &self.minors
    }

    /// First minor of Φ⁻¹ whose magnitude is at or below [`MINOR_THRESHOLD`],
    /// as a 1-based index.
    pub fn vanishing_minor(&self) -> Option<usize> {
        self.minors
            .iter()
            .position(|m| m.norm() <= MINOR_THRESHOLD)
            .map(|k| k + 1)
    }

    pub fn is_stabilizable(&self) -> bool {
        self.vanishing_minor().is_none()
    }

    pub fn map_points(&self, v: &CVector, direction: Direction) -> Result<CVector> {
        if v.len() != self.n() {
            return Err(FormationError::DimensionMismatch {
                expected: self.n(),
                actual: v.len(),
            });
        }
        Ok(match direction {
            Direction::Forward => &self.forward * v,
            Direction::Inverse => &self.inverse * v,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `ξ = Φz`
    Forward,
    /// `z = Φ⁻¹ξ`
    Inverse,
}

/// Complex diagonal weighting `W = diag(wᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    weights: Vec<C64>,
}

impl WeightMatrix {
    pub fn new(weights: Vec<C64>) -> Result<Self> {
        if weights.iter().any(|w| w.norm() == 0.0) {
            return Err(FormationError::SingularTransform {
                residual: f64::INFINITY,
            });
        }
        Ok(Self { weights })
    }

    pub fn ones(n: usize) -> Self {
        Self {
            weights: vec![c(1.0, 0.0); n],
        }
    }

    pub fn weights(&self) -> &[C64] {
        &self.weights
    }
}

/// Reduced masses μ₁ … μ_{n−1}: `1/μᵢ = 1/(m₁+…+mᵢ) + 1/m_{i+1}`.
pub fn reduced_masses(config: &AgentConfig) -> Vec<f64> {
    let m = config.masses();
    let mut prefix = 0.0;
    (0..m.len() - 1)
        .map(|i| {
            prefix += m[i];
            1.0 / (1.0 / prefix + 1.0 / m[i + 1])
        })
        .collect()
}

/// Jacobi transformation: row i (i < n) is
/// `sᵢ·(z_{i+1} − Σ_{k≤i} m_k z_k / Σ_{k≤i} m_k)`, last row is the
/// mass-weighted centroid.
pub fn build_jacobi(config: &AgentConfig) -> Result<TransformPair> {
    build_jacobi_scaled(config, JacobiScaling::RootReducedMass)
}

pub fn build_jacobi_scaled(config: &AgentConfig, scaling: JacobiScaling) -> Result<TransformPair> {
    let n = config.n();
    let m = config.masses();
    let mu = reduced_masses(config);
    let mut phi = CMatrix::zeros(n, n);
    let mut prefix = 0.0;
    for i in 0..n - 1 {
        prefix += m[i];
        let s = match scaling {
            JacobiScaling::RootReducedMass => mu[i].sqrt(),
            JacobiScaling::ReducedMass => mu[i],
        };
        for k in 0..=i {
            phi[(i, k)] = c(-s * m[k] / prefix, 0.0);
        }
        phi[(i, i + 1)] = c(s, 0.0);
    }
    let total = config.total_mass();
    for k in 0..n {
        phi[(n - 1, k)] = c(m[k] / total, 0.0);
    }
    TransformPair::new(phi)
}

/// The fixed six-agent transformation used by the bundled hexagon
/// scenarios: three pair differences, a pair-of-pairs difference, a
/// four-versus-two difference, and the centroid.
pub fn hexagon_phi6() -> TransformPair {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let rows: [[f64; 6]; 6] = [
        [-h, h, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, h, -h, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, h, -h],
        [-0.5, -0.5, 0.5, 0.5, 0.0, 0.0],
        [0.25, 0.25, 0.25, 0.25, -0.5, -0.5],
        [1.0 / 6.0; 6],
    ];
    let phi = CMatrix::from_fn(6, 6, |i, j| c(rows[i][j], 0.0));
    TransformPair::new(phi).expect("fixed six-agent transform is invertible")
}

/// Closed-form inverse of a 3×3 centroid-based transform with `a₁₃ = 0`,
/// eliminating z₁ through the first row.
///
/// Rows 2 and 3 use the pivots
/// `A_{x₂} = a₃₃u − a₂₃v` and `A_{x₃} = −A_{x₂}` where
/// `u = a₂₂ − a₂₁a₁₂/a₁₁`, `v = a₃₂ − a₃₁a₁₂/a₁₁`; row 1 follows by back
/// substitution `A₁ⱼ = (δ₁ⱼ − a₁₂A₂ⱼ)/a₁₁`.
pub fn invert_3x3_closed_form(phi: &CMatrix) -> Result<CMatrix> {
    if phi.nrows() != 3 || phi.ncols() != 3 {
        return Err(FormationError::DimensionMismatch {
            expected: 3,
            actual: phi.nrows().max(phi.ncols()),
        });
    }
    let a = |i: usize, j: usize| phi[(i - 1, j - 1)];
    let check = |which: &'static str, v: C64| {
        if v.norm() < MINOR_THRESHOLD {
            Err(FormationError::DegenerateTransform {
                which,
                magnitude: v.norm(),
            })
        } else {
            Ok(v)
        }
    };
    if a(1, 3).norm() > MINOR_THRESHOLD {
        return Err(FormationError::DegenerateTransform {
            which: "a13 (closed form needs a13 = 0)",
            magnitude: a(1, 3).norm(),
        });
    }
    let a11 = check("a11", a(1, 1))?;
    let u = a(2, 2) - a(2, 1) * a(1, 2) / a11;
    let v = a(3, 2) - a(3, 1) * a(1, 2) / a11;
    let ax2 = check("A_x2", a(3, 3) * u - a(2, 3) * v)?;
    let ax3 = check("A_x3", a(2, 3) * v - a(3, 3) * u)?;

    let mut inv = CMatrix::zeros(3, 3);
    inv[(1, 0)] = (a(2, 3) * a(3, 1) / a11 - a(3, 3) * a(2, 1) / a11) / ax2;
    inv[(1, 1)] = a(3, 3) / ax2;
    inv[(1, 2)] = -a(2, 3) / ax2;
    inv[(2, 0)] = (a(3, 1) / a11 * u - a(2, 1) / a11 * v) / ax3;
    inv[(2, 1)] = v / ax3;
    inv[(2, 2)] = -u / ax3;
    for j in 0..3 {
        let delta = if j == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) };
        inv[(0, j)] = (delta - a(1, 2) * inv[(1, j)]) / a11;
    }
    Ok(inv)
}

/// `Φ = W·T`, `Φ⁻¹ = T⁻¹·W⁻¹`.
pub fn apply_weight(t: &TransformPair, w: &WeightMatrix) -> Result<TransformPair> {
    let n = t.n();
    if w.weights.len() != n {
        return Err(FormationError::DimensionMismatch {
            expected: n,
            actual: w.weights.len(),
        });
    }
    let mut forward = t.forward.clone();
    let mut inverse = t.inverse.clone();
    for (i, &wi) in w.weights.iter().enumerate() {
        forward.row_mut(i).scale_mut_c(wi);
        inverse.column_mut(i).scale_mut_c(wi.inv());
    }
    let residual = crate::linalg::identity_residual(&(&forward * &inverse));
    if !(residual <= INVERSE_TOL) {
        return Err(FormationError::SingularTransform { residual });
    }
    let minors = leading_minors(&inverse);
    Ok(TransformPair {
        forward,
        inverse,
        minors,
    })
}

trait ScaleC {
    fn scale_mut_c(&mut self, s: C64);
}

impl<R: nalgebra::Dim, Cc: nalgebra::Dim, S: nalgebra::StorageMut<C64, R, Cc>> ScaleC
    for nalgebra::Matrix<C64, R, Cc, S>
{
    fn scale_mut_c(&mut self, s: C64) {
        for v in self.iter_mut() {
            *v *= s;
        }
    }
}

/// Determinants of the top-left k×k blocks, k = 1…n.
pub fn leading_minors(m: &CMatrix) -> Vec<C64> {
    (1..=m.nrows().min(m.ncols()))
        .map(|k| crate::linalg::leading_block(m, k).determinant())
        .collect()
}
