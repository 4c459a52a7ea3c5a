//! Diagonal stabilizer synthesis (multiplicative inverse eigenvalue problem).
//!
//! Given Φ⁻¹ with nonzero leading principal minors, the gains are fixed one
//! at a time: `d₁ = λ′₁/φ₁₁`, then each `d_{i+1}` is chosen so that every
//! eigenvalue of the leading block `M(d_{i+1}) = D_{i+1}Φ⁻¹_{i+1}` sits in
//! the open right half-plane. The eigenvalues of each candidate block come
//! from the Schur-complement factorization of its characteristic polynomial,
//! which needs only one polynomial root solve per candidate once the
//! already-fixed prefix is known.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FormationError, Result};
use crate::linalg::{
    self, c, diag, eigenvalues, leading_block, min_real, permute_symmetric, CMatrix, C64,
};
use crate::poly;
use crate::shape::{leading_minors, MINOR_THRESHOLD};

/// Tolerance when comparing two eigenvalue computations of the same matrix.
pub const EIGEN_COMPARE_TOL: f64 = 1e-8;
/// Relative score difference below which two candidates tie.
const TIE_EPS: f64 = 1e-9;
const SMALL_GAIN_DECADES: i32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchPolicy {
    /// λ′₁ > 0, fixes `d₁ = λ′₁/φ₁₁`.
    pub seed_eigenvalue: f64,
    pub candidate_magnitudes: Vec<f64>,
    pub candidate_phases: Vec<f64>,
    pub max_refinements: usize,
    /// Also try the phase that makes the new small-gain eigenvalue
    /// `d·det(Φ⁻¹_{i+1})/det(Φ⁻¹_i)` real and positive.
    pub align_with_minor_ratio: bool,
    /// Double-integrator only: on exhaustion retry with γ multiplied by
    /// `gamma_growth`, up to this many times.
    pub gamma_retries: usize,
    pub gamma_growth: f64,
}

impl Default for SearchPolicy {
    fn default() -> Self {
        Self {
            seed_eigenvalue: 1.0,
            candidate_magnitudes: (-10..=10).map(|k| 10f64.powf(k as f64 / 5.0)).collect(),
            candidate_phases: (0..16).map(|k| 2.0 * PI * k as f64 / 16.0).collect(),
            max_refinements: 8,
            align_with_minor_ratio: true,
            gamma_retries: 0,
            gamma_growth: 4.0,
        }
    }
}

impl SearchPolicy {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(FormationError::InvalidConfig(msg.to_string()));
        if !(self.seed_eigenvalue > 0.0 && self.seed_eigenvalue.is_finite()) {
            return bad("seed_eigenvalue must be positive");
        }
        if self.candidate_magnitudes.is_empty()
            || self.candidate_magnitudes.iter().any(|m| !(*m > 0.0 && m.is_finite()))
        {
            return bad("candidate_magnitudes must be a nonempty set of positive reals");
        }
        if self.candidate_phases.is_empty()
            || self
                .candidate_phases
                .iter()
                .any(|p| !(0.0..2.0 * PI).contains(p))
        {
            return bad("candidate_phases must be a nonempty subset of [0, 2π)");
        }
        if !(self.gamma_growth > 1.0) {
            return bad("gamma_growth must exceed 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizerResult {
    /// Diagonal of D.
    pub d: Vec<C64>,
    /// Spectrum of D·Φ⁻¹ from the dense eigensolver.
    pub achieved_eigs: Vec<C64>,
    /// Minimum real part of `achieved_eigs`.
    pub margin: f64,
    /// Score of the accepted gain at each step (index 0 is `d₁`).
    pub step_margins: Vec<f64>,
    /// Symmetric permutation the search ran on (identity when unpivoted).
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleStabilizerResult {
    pub d1: Vec<C64>,
    pub d2: Vec<C64>,
    pub gamma: f64,
    /// Spectrum of D₁Φ⁻¹.
    pub sigma: Vec<C64>,
    /// Spectrum of the 2n×2n block system matrix.
    pub block_eigs: Vec<C64>,
    /// `−max Re(block_eigs)`.
    pub margin: f64,
    pub step_margins: Vec<f64>,
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfPlane {
    Right,
    Left,
}

/// Precomputed Schur-complement factorization for one step of the search.
///
/// With `A = D_ii Φ_ii`, `B = D_ii Φ_i1`, `C = Φ_1i` and corner `φ`,
/// `det(λI − M(d)) = det(λI − A)(λ − dφ) − d·C adj(λI − A) B`,
/// so only the scalar d changes between candidates.
#[derive(Debug, Clone)]
pub struct SchurStep {
    prefix_poly: Vec<C64>,
    coupling: Vec<C64>,
    corner: C64,
}

impl SchurStep {
    pub fn new(d_prefix: &[C64], block: &CMatrix) -> Result<Self> {
        let i = d_prefix.len();
        if block.nrows() != i + 1 || block.ncols() != i + 1 {
            return Err(FormationError::DimensionMismatch {
                expected: i + 1,
                actual: block.nrows(),
            });
        }
        let dm = diag(d_prefix);
        let a = &dm * block.view((0, 0), (i, i));
        let det = if i == 0 { c(1.0, 0.0) } else { a.determinant() };
        if det.norm() < MINOR_THRESHOLD {
            return Err(FormationError::SingularBlock {
                magnitude: det.norm(),
            });
        }
        let b = &dm * block.view((0, i), (i, 1));
        let row = block.view((i, 0), (1, i));
        let cp = poly::faddeev_leverrier(&a);
        let coupling = cp
            .adjugate
            .iter()
            .map(|bk| (row * bk * &b)[(0, 0)])
            .collect();
        Ok(Self {
            prefix_poly: cp.coeffs,
            coupling,
            corner: block[(i, i)],
        })
    }

    /// Characteristic polynomial of `M(candidate)`, descending powers.
    pub fn char_poly(&self, candidate: C64) -> Vec<C64> {
        let lead = poly::mul(&self.prefix_poly, &[c(1.0, 0.0), -candidate * self.corner]);
        let tail: Vec<C64> = self.coupling.iter().map(|q| q * candidate).collect();
        if tail.is_empty() {
            lead
        } else {
            poly::sub(&lead, &tail)
        }
    }

    pub fn eigenvalues(&self, candidate: C64) -> Vec<C64> {
        let mut r = poly::roots(&self.char_poly(candidate));
        linalg::sort_spectrum(&mut r);
        r
    }
}

/// Eigenvalues of `M(d_{i+1})` with `d₁₁ = candidate`, via the
/// Schur-complement characteristic polynomial.
pub fn schur_eig_step(d_prefix: &[C64], block: &CMatrix, candidate: C64) -> Result<Vec<C64>> {
    Ok(SchurStep::new(d_prefix, block)?.eigenvalues(candidate))
}

/// The block matrix `M(d_{i+1})` assembled explicitly.
pub fn assemble_step_matrix(d_prefix: &[C64], block: &CMatrix, candidate: C64) -> CMatrix {
    let mut d = d_prefix.to_vec();
    d.push(candidate);
    diag(&d) * block
}

/// Checks that every eigenvalue of `diag(d)·phi_inv` lies strictly inside
/// the requested half-plane. The margin is the worst signed distance from
/// the imaginary axis (positive means inside).
pub fn verify_half_plane(d: &[C64], phi_inv: &CMatrix, side: HalfPlane) -> Result<(bool, f64)> {
    if d.len() != phi_inv.nrows() {
        return Err(FormationError::DimensionMismatch {
            expected: phi_inv.nrows(),
            actual: d.len(),
        });
    }
    let eigs = eigenvalues(&(diag(d) * phi_inv))?;
    let margin = match side {
        HalfPlane::Right => min_real(&eigs),
        HalfPlane::Left => -linalg::max_real(&eigs),
    };
    Ok((margin > 0.0, margin))
}

/// Roots of `λ² + γσλ + σ` and whether both have negative real part.
pub fn complex_quadratic_roots(sigma: C64, gamma: f64) -> ([C64; 2], bool) {
    let b = sigma * gamma;
    let disc = (b * b - sigma * 4.0).sqrt();
    // pick the sign that avoids cancellation, then use Vieta for the other root
    let s = if (b + disc).norm() >= (b - disc).norm() {
        b + disc
    } else {
        b - disc
    };
    let roots = if s.norm() == 0.0 {
        [c(0.0, 0.0), c(0.0, 0.0)]
    } else {
        let r1 = -s / 2.0;
        [r1, sigma / r1]
    };
    let stable = roots.iter().all(|r| r.re < 0.0);
    (roots, stable)
}

/// `−max Re` of the two quadratic roots; positive iff the pair is Hurwitz.
pub fn quadratic_margin(sigma: C64, gamma: f64) -> f64 {
    let (r, _) = complex_quadratic_roots(sigma, gamma);
    -r[0].re.max(r[1].re)
}

/// The reduced-order inequality `Re(σ)³ / (Im(σ)²·(1 − Re(σ))) > 1/γ²`,
/// evaluated literally. Diagnostic only: root computation decides stability.
pub fn reduced_order_condition(sigma: C64, gamma: f64) -> Result<bool> {
    let denom = sigma.im * sigma.im * (1.0 - sigma.re);
    if sigma.im.abs() < 1e-15 || (1.0 - sigma.re).abs() < 1e-15 {
        return Err(FormationError::DegenerateCondition {
            re: sigma.re,
            im: sigma.im,
        });
    }
    Ok(sigma.re.powi(3) / denom > 1.0 / (gamma * gamma))
}

/// `[[0, I], [−D₁Φ⁻¹, −D₂Φ⁻¹]]`.
pub fn double_integrator_block(d1: &[C64], d2: &[C64], phi_inv: &CMatrix) -> CMatrix {
    let n = phi_inv.nrows();
    let mut a = CMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n))
        .copy_from(&CMatrix::identity(n, n));
    a.view_mut((n, 0), (n, n)).copy_from(&(-(diag(d1) * phi_inv)));
    a.view_mut((n, n), (n, n)).copy_from(&(-(diag(d2) * phi_inv)));
    a
}

/// Union over σ of the roots of `λ² + γσλ + σ`.
pub fn quadratic_spectrum(sigma: &[C64], gamma: f64) -> Vec<C64> {
    let mut out: Vec<C64> = sigma
        .iter()
        .flat_map(|&s| complex_quadratic_roots(s, gamma).0)
        .collect();
    linalg::sort_spectrum(&mut out);
    out
}

fn check_minors(phi_inv: &CMatrix) -> Result<()> {
    if !phi_inv.is_square() || phi_inv.nrows() == 0 {
        return Err(FormationError::DimensionMismatch {
            expected: phi_inv.nrows(),
            actual: phi_inv.ncols(),
        });
    }
    for (k, m) in leading_minors(phi_inv).iter().enumerate() {
        if m.norm() <= MINOR_THRESHOLD {
            return Err(FormationError::NonstabilizableMinor {
                index: k + 1,
                magnitude: m.norm(),
            });
        }
    }
    Ok(())
}

fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Runs the gain-by-gain search, scoring each candidate spectrum with
/// `score` (positive means acceptable). Returns the gains and per-step scores.
fn search_gains<F>(phi_inv: &CMatrix, policy: &SearchPolicy, score: F) -> Result<(Vec<C64>, Vec<f64>)>
where
    F: Fn(&[C64]) -> f64,
{
    policy.validate()?;
    check_minors(phi_inv)?;
    let n = phi_inv.nrows();
    let minors = leading_minors(phi_inv);

    let d1 = c(policy.seed_eigenvalue, 0.0) / phi_inv[(0, 0)];
    let mut d = vec![d1];
    let mut step_margins = vec![score(&[d1 * phi_inv[(0, 0)]])];

    let mut mags = policy.candidate_magnitudes.clone();
    mags.sort_by(f64::total_cmp);
    mags.dedup();
    let mag_ratio = if mags.len() > 1 {
        (mags[mags.len() - 1] / mags[0]).powf(1.0 / (mags.len() - 1) as f64)
    } else {
        2.0
    };
    let phase_step = 2.0 * PI / policy.candidate_phases.len() as f64;

    for i in 1..n {
        let step = SchurStep::new(&d, &leading_block(phi_inv, i + 1))?;
        let evaluate = |cand: C64| score(&step.eigenvalues(cand));

        let mut phases = policy.candidate_phases.clone();
        if policy.align_with_minor_ratio {
            phases.push(wrap_phase(-(minors[i] / minors[i - 1]).arg()));
        }
        phases.sort_by(f64::total_cmp);
        phases.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

        let mut best: Option<(f64, f64, f64)> = None; // (score, magnitude, phase)
        for &m in &mags {
            for &p in &phases {
                let s = evaluate(C64::from_polar(m, p));
                if best.is_none_or(|(bs, _, _)| s > bs + TIE_EPS * (1.0 + bs.abs())) {
                    best = Some((s, m, p));
                }
            }
        }
        let (mut bs, mut bm, mut bp) = best.expect("nonempty candidate grid");

        let (lo, hi) = (mags[0], mags[mags.len() - 1]);
        for r in 0..policy.max_refinements {
            let f = mag_ratio.powf(1.0 / 2f64.powi(r as i32 + 1));
            let dp = phase_step / 2f64.powi(r as i32 + 1);
            let (cm, cp) = (bm, bp);
            for k in -2..=2 {
                for l in -2..=2 {
                    if k == 0 && l == 0 {
                        continue;
                    }
                    let m = cm * f.powi(k);
                    if m < lo || m > hi {
                        continue;
                    }
                    let p = wrap_phase(cp + dp * l as f64);
                    let s = evaluate(C64::from_polar(m, p));
                    if s > bs + TIE_EPS * (1.0 + bs.abs()) {
                        (bs, bm, bp) = (s, m, p);
                    }
                }
            }
        }

        if !(bs > 0.0) && policy.align_with_minor_ratio {
            // Small-gain continuation: for |d| → 0 along the aligned phase the
            // new eigenvalue is ≈ d·det(Φ⁻¹_{i+1})/det(Φ⁻¹_i) > 0 while the
            // others move by O(|d|), so shrinking |d| must eventually succeed
            // whenever the previous step left a positive margin.
            let aligned = wrap_phase(-(minors[i] / minors[i - 1]).arg());
            for k in 1..=SMALL_GAIN_DECADES {
                let m = lo * 10f64.powi(-k);
                let s = evaluate(C64::from_polar(m, aligned));
                if s > bs {
                    (bs, bm, bp) = (s, m, aligned);
                }
                if bs > 0.0 {
                    break;
                }
            }
        }

        if !(bs > 0.0) {
            return Err(FormationError::SearchExhausted {
                step: i + 1,
                best_margin: bs,
            });
        }
        log::debug!("step {}: |d| = {bm:.4e}, arg d = {bp:.4}, score {bs:.4e}", i + 1);
        d.push(C64::from_polar(bm, bp));
        step_margins.push(bs);
    }
    Ok((d, step_margins))
}

/// Single-integrator stabilizer: diagonal D with every eigenvalue of DΦ⁻¹
/// in the open right half-plane.
pub fn stabilize_single(phi_inv: &CMatrix, policy: &SearchPolicy) -> Result<StabilizerResult> {
    let (d, step_margins) = search_gains(phi_inv, policy, min_real)?;
    let achieved_eigs = eigenvalues(&(diag(&d) * phi_inv))?;
    let margin = min_real(&achieved_eigs);
    if !(margin > 0.0) {
        return Err(FormationError::SearchExhausted {
            step: d.len(),
            best_margin: margin,
        });
    }
    Ok(StabilizerResult {
        d,
        achieved_eigs,
        margin,
        step_margins,
        permutation: (0..phi_inv.nrows()).collect(),
    })
}

fn sigma_score(gamma: f64) -> impl Fn(&[C64]) -> f64 {
    move |sig: &[C64]| {
        sig.iter()
            .map(|&s| quadratic_margin(s, gamma))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Double-integrator stabilizer: D₁ = D, D₂ = γD with the block system
/// matrix Hurwitz.
pub fn stabilize_double(
    phi_inv: &CMatrix,
    policy: &SearchPolicy,
    gamma: f64,
) -> Result<DoubleStabilizerResult> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(FormationError::InvalidConfig(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let mut g = gamma;
    let mut attempt = 0;
    loop {
        match double_once(phi_inv, policy, g) {
            Err(FormationError::SearchExhausted { .. }) if attempt < policy.gamma_retries => {
                log::info!("gamma {g} exhausted, retrying with {}", g * policy.gamma_growth);
                g *= policy.gamma_growth;
                attempt += 1;
            }
            other => return other,
        }
    }
}

fn double_once(phi_inv: &CMatrix, policy: &SearchPolicy, gamma: f64) -> Result<DoubleStabilizerResult> {
    let (d1, step_margins) = search_gains(phi_inv, policy, sigma_score(gamma))?;
    let d2: Vec<C64> = d1.iter().map(|d| d * gamma).collect();
    let sigma = eigenvalues(&(diag(&d1) * phi_inv))?;
    let block_eigs = eigenvalues(&double_integrator_block(&d1, &d2, phi_inv))?;
    let margin = -linalg::max_real(&block_eigs);
    if !(margin > 0.0) {
        return Err(FormationError::SearchExhausted {
            step: d1.len(),
            best_margin: margin,
        });
    }
    Ok(DoubleStabilizerResult {
        d1,
        d2,
        gamma,
        sigma,
        block_eigs,
        margin,
        step_margins,
        permutation: (0..phi_inv.nrows()).collect(),
    })
}

/// A symmetric permutation under which every leading principal minor is
/// nonzero. Identity when it already qualifies; otherwise greedy on the
/// largest next minor, falling back to exhaustive search for n ≤ 8.
pub fn find_symmetric_pivot(m: &CMatrix) -> Option<Vec<usize>> {
    let n = m.nrows();
    let qualifies = |p: &[usize]| -> f64 {
        leading_minors(&permute_symmetric(m, p))
            .iter()
            .map(|x| x.norm())
            .fold(f64::INFINITY, f64::min)
    };
    let ident: Vec<usize> = (0..n).collect();
    if qualifies(&ident) > MINOR_THRESHOLD {
        return Some(ident);
    }

    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    while chosen.len() < n {
        let next = (0..n)
            .filter(|j| !chosen.contains(j))
            .map(|j| {
                let mut trial = chosen.clone();
                trial.push(j);
                let sub = CMatrix::from_fn(trial.len(), trial.len(), |a, b| m[(trial[a], trial[b])]);
                (j, sub.determinant().norm())
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match next {
            Some((j, mag)) if mag > MINOR_THRESHOLD => chosen.push(j),
            _ => break,
        }
    }
    if chosen.len() == n {
        return Some(chosen);
    }
    if n > 8 {
        return None;
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut p = ident;
    heap_permutations(&mut p, n, &mut |perm| {
        let q = qualifies(perm);
        if q > MINOR_THRESHOLD && best.as_ref().is_none_or(|(bq, _)| q > *bq) {
            best = Some((q, perm.to_vec()));
        }
    });
    best.map(|(_, p)| p)
}

fn heap_permutations(p: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        visit(p);
        return;
    }
    for i in 0..k - 1 {
        heap_permutations(p, k - 1, visit);
        if k.is_multiple_of(2) {
            p.swap(i, k - 1);
        } else {
            p.swap(0, k - 1);
        }
    }
    heap_permutations(p, k - 1, visit);
}

fn pivot_or_error(phi_inv: &CMatrix) -> Result<Vec<usize>> {
    find_symmetric_pivot(phi_inv).ok_or_else(|| match check_minors(phi_inv) {
        Err(e) => e,
        Ok(()) => FormationError::NonstabilizableMinor {
            index: 0,
            magnitude: 0.0,
        },
    })
}

fn unpermute(values: &[C64], p: &[usize]) -> Vec<C64> {
    let mut out = vec![c(0.0, 0.0); values.len()];
    for (k, &v) in values.iter().enumerate() {
        out[p[k]] = v;
    }
    out
}

/// [`stabilize_single`] on a symmetrically permuted Φ⁻¹ when the original
/// ordering has a vanishing leading minor. The returned D is in the
/// original agent ordering.
pub fn stabilize_single_pivoted(phi_inv: &CMatrix, policy: &SearchPolicy) -> Result<StabilizerResult> {
    let p = pivot_or_error(phi_inv)?;
    let inner = stabilize_single(&permute_symmetric(phi_inv, &p), policy)?;
    let d = unpermute(&inner.d, &p);
    let achieved_eigs = eigenvalues(&(diag(&d) * phi_inv))?;
    let margin = min_real(&achieved_eigs);
    Ok(StabilizerResult {
        d,
        achieved_eigs,
        margin,
        step_margins: inner.step_margins,
        permutation: p,
    })
}

pub fn stabilize_double_pivoted(
    phi_inv: &CMatrix,
    policy: &SearchPolicy,
    gamma: f64,
) -> Result<DoubleStabilizerResult> {
    let p = pivot_or_error(phi_inv)?;
    let inner = stabilize_double(&permute_symmetric(phi_inv, &p), policy, gamma)?;
    let d1 = unpermute(&inner.d1, &p);
    let d2 = unpermute(&inner.d2, &p);
    let sigma = eigenvalues(&(diag(&d1) * phi_inv))?;
    let block_eigs = eigenvalues(&double_integrator_block(&d1, &d2, phi_inv))?;
    let margin = -linalg::max_real(&block_eigs);
    Ok(DoubleStabilizerResult {
        d1,
        d2,
        gamma: inner.gamma,
        sigma,
        block_eigs,
        margin,
        step_margins: inner.step_margins,
        permutation: p,
    })
}
