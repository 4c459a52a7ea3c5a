//! Pairwise collision-avoidance potential and the matrix of potential.
//!
//! For agents at distance d the pair potential is
//! `v = (min{0, (d² − R²)/(d² − r²)})²`, which is zero beyond the detection
//! radius R, grows without bound as d ↓ r, and is zero again inside r.
//! Its gradient with respect to zᵢ is `p·(zᵢ − zⱼ)` with
//! `p = 4(R² − r²)(d² − R²)/(d² − r²)³` on the band r < d < R.

use serde::{Deserialize, Serialize};

use crate::error::{FormationError, Result};
use crate::linalg::{c, CMatrix, CVector, C64};
use crate::shape::TransformPair;

pub const COINCIDENT_TOL: f64 = 1e-14;
pub const SINGULAR_BAND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    detection_radius: f64,
    avoidance_radius: f64,
}

impl PotentialParams {
    pub fn new(detection_radius: f64, avoidance_radius: f64) -> Result<Self> {
        if !(detection_radius > avoidance_radius && avoidance_radius > 0.0)
            || !detection_radius.is_finite()
        {
            return Err(FormationError::InvalidConfig(format!(
                "potential radii need R > r > 0, got R = {detection_radius}, r = {avoidance_radius}"
            )));
        }
        Ok(Self {
            detection_radius,
            avoidance_radius,
        })
    }

    /// R
    pub fn detection_radius(&self) -> f64 {
        self.detection_radius
    }

    /// r
    pub fn avoidance_radius(&self) -> f64 {
        self.avoidance_radius
    }

    fn validate(&self) -> Result<()> {
        Self::new(self.detection_radius, self.avoidance_radius).map(|_| ())
    }
}

fn checked_distance(zi: C64, zj: C64) -> Result<f64> {
    let d = (zi - zj).norm();
    if d < COINCIDENT_TOL {
        return Err(FormationError::CoincidentAgents { distance: d });
    }
    Ok(d)
}

fn check_band(d: f64, params: &PotentialParams) -> Result<()> {
    if (d - params.avoidance_radius).abs() < SINGULAR_BAND_TOL {
        return Err(FormationError::SingularBand { distance: d });
    }
    Ok(())
}

pub fn pair_potential(zi: C64, zj: C64, params: &PotentialParams) -> Result<f64> {
    let d = checked_distance(zi, zj)?;
    check_band(d, params)?;
    if d >= params.detection_radius {
        return Ok(0.0);
    }
    let (r2, big_r2, s) = (
        params.avoidance_radius.powi(2),
        params.detection_radius.powi(2),
        d * d,
    );
    let ratio = (s - big_r2) / (s - r2);
    Ok(ratio.min(0.0).powi(2))
}

/// Gradient coefficient p with `∇_{zᵢ} v = p·(zᵢ − zⱼ)`; zero outside the
/// band r < d < R.
pub fn pair_gradient_coeff(zi: C64, zj: C64, params: &PotentialParams) -> Result<f64> {
    let d = checked_distance(zi, zj)?;
    check_band(d, params)?;
    if d >= params.detection_radius || d < params.avoidance_radius {
        return Ok(0.0);
    }
    let (r2, big_r2, s) = (
        params.avoidance_radius.powi(2),
        params.detection_radius.powi(2),
        d * d,
    );
    Ok(4.0 * (big_r2 - r2) * (s - big_r2) / (s - r2).powi(3))
}

/// Sum of pair potentials over unordered pairs.
pub fn total_potential(z: &CVector, params: &PotentialParams) -> Result<f64> {
    let n = z.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += pair_potential(z[i], z[j], params).map_err(|e| pair_err(i, j, e))?;
        }
    }
    Ok(total)
}

fn pair_err(i: usize, j: usize, e: FormationError) -> FormationError {
    FormationError::Pair {
        i,
        j,
        source: Box::new(e),
    }
}

/// Matrix of potential P_z: off-diagonal `−p_ij`, diagonal `Σ_{j≠i} p_ij`,
/// so that `P_z·z` stacks the gradients of every agent's total potential.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialMatrix {
    entries: CMatrix,
    params: PotentialParams,
}

impl PotentialMatrix {
    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn params(&self) -> &PotentialParams {
        &self.params
    }

    /// Largest |row sum|. Off-diagonal entries are summed in column order
    /// before the diagonal is added, mirroring how the diagonal was
    /// accumulated.
    pub fn row_sum_residual(&self) -> f64 {
        let n = self.entries.nrows();
        (0..n)
            .map(|i| {
                let off: C64 = (0..n).filter(|&j| j != i).map(|j| self.entries[(i, j)]).sum();
                (off + self.entries[(i, i)]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Largest |P_ij − P_ji|.
    pub fn symmetry_residual(&self) -> f64 {
        crate::linalg::max_abs(&(&self.entries - self.entries.transpose()))
    }

    /// `P_z·z`, evaluated as `Σ_j p_ij·(zᵢ − zⱼ)` so that large
    /// coefficients near the avoidance radius do not swamp the cancellation.
    pub fn gradient(&self, z: &CVector) -> CVector {
        let n = z.len();
        CVector::from_fn(n, |i, _| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| -self.entries[(i, j)] * (z[i] - z[j]))
                .sum()
        })
    }
}

pub fn potential_matrix(z: &CVector, params: &PotentialParams) -> Result<PotentialMatrix> {
    params.validate()?;
    let n = z.len();
    let mut entries = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let p = pair_gradient_coeff(z[i], z[j], params).map_err(|e| pair_err(i, j, e))?;
            if p != 0.0 {
                entries[(i, j)] = c(-p, 0.0);
                entries[(j, i)] = c(-p, 0.0);
                entries[(i, i)] += p;
                entries[(j, j)] += p;
            }
        }
    }
    Ok(PotentialMatrix {
        entries,
        params: *params,
    })
}

/// `Φ·P_z·Φ⁻¹`, the matrix of potential acting on transformed coordinates.
pub fn transformed_potential(pz: &PotentialMatrix, t: &TransformPair) -> Result<CMatrix> {
    if pz.entries.nrows() != t.n() {
        return Err(FormationError::DimensionMismatch {
            expected: t.n(),
            actual: pz.entries.nrows(),
        });
    }
    Ok(t.forward() * &pz.entries * t.inverse())
}

/// Distance between agents i and j read directly from transformed
/// coordinates: `|(row_i − row_j of Φ⁻¹)·ξ|`.
pub fn distance_in_xi(xi: &CVector, t: &TransformPair, i: usize, j: usize) -> Result<f64> {
    let n = t.n();
    if xi.len() != n {
        return Err(FormationError::DimensionMismatch {
            expected: n,
            actual: xi.len(),
        });
    }
    if i >= n || j >= n {
        return Err(FormationError::DimensionMismatch {
            expected: n,
            actual: i.max(j) + 1,
        });
    }
    if i == j {
        return Ok(0.0);
    }
    let inv = t.inverse();
    let diff: C64 = (0..n).map(|k| (inv[(i, k)] - inv[(j, k)]) * xi[k]).sum();
    Ok(diff.norm())
}

/// Smallest pairwise distance and the pair achieving it.
pub fn min_pairwise_distance(z: &CVector) -> (f64, usize, usize) {
    let mut best = (f64::INFINITY, 0, 0);
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            let d = (z[i] - z[j]).norm();
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    best
}
