//! Type grids, population/welfare measures over types and hazard-rate checks.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::report::{AssumptionReport, CheckBuilder};

/// Survival values at or below this are treated as the right endpoint.
pub const SURVIVAL_FLOOR: f64 = 1e-14;

/// Absolute tolerance for the analytic assumption checks.
pub const ASSUMPTION_TOL: f64 = 1e-10;

/// Uniform grid of type nodes including both endpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeGrid {
    theta_lo: f64,
    theta_hi: f64,
    nodes: Vec<f64>,
}

impl TypeGrid {
    /// A full synthesis grid; needs at least three nodes.
    pub fn new(theta_lo: f64, theta_hi: f64, count: usize) -> Result<Self> {
        if count < 3 {
            return Err(Error::InvalidGrid(format!(
                "type grid needs at least 3 nodes, got {count}"
            )));
        }
        Self::coarse(theta_lo, theta_hi, count)
    }

    /// A grid for small enumeration instances; one or two nodes are allowed.
    /// A single node sits at `theta_lo` and carries all of the mass.
    pub fn coarse(theta_lo: f64, theta_hi: f64, count: usize) -> Result<Self> {
        if !(theta_lo.is_finite() && theta_hi.is_finite() && theta_lo < theta_hi) {
            return Err(Error::InvalidGrid(format!(
                "need finite theta_lo < theta_hi, got [{theta_lo}, {theta_hi}]"
            )));
        }
        if count == 0 {
            return Err(Error::InvalidGrid(
                "type grid needs at least one node".into(),
            ));
        }
        let nodes = if count == 1 {
            vec![theta_lo]
        } else {
            let span = theta_hi - theta_lo;
            let last = (count - 1) as f64;
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        theta_hi
                    } else {
                        theta_lo + span * (i as f64) / last
                    }
                })
                .collect()
        };
        Ok(Self {
            theta_lo,
            theta_hi,
            nodes,
        })
    }

    pub fn theta_lo(&self) -> f64 {
        self.theta_lo
    }

    pub fn theta_hi(&self) -> f64 {
        self.theta_hi
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node spacing; zero for a single-node grid.
    pub fn spacing(&self) -> f64 {
        if self.nodes.len() < 2 {
            0.0
        } else {
            (self.theta_hi - self.theta_lo) / (self.nodes.len() - 1) as f64
        }
    }

    /// Midpoints between consecutive nodes (the dual-cell boundaries).
    pub fn midpoints(&self) -> Vec<f64> {
        let h = self.spacing();
        self.nodes[..self.nodes.len().saturating_sub(1)]
            .iter()
            .map(|t| t + 0.5 * h)
            .collect()
    }

    /// Probability mass of each node's dual cell `[θ_i - h/2, θ_i + h/2] ∩ [lo, hi]`.
    /// The masses sum to one up to rounding; for a uniform density they are the
    /// trapezoid weights.
    pub fn masses(&self, dist: &dyn TypeDensity) -> Vec<f64> {
        let n = self.nodes.len();
        if n == 1 {
            return vec![1.0];
        }
        let mids = self.midpoints();
        let mut out = Vec::with_capacity(n);
        let mut prev = 0.0;
        for m in &mids {
            let c = dist.cdf(*m);
            out.push(c - prev);
            prev = c;
        }
        out.push(dist.survival(mids[n - 2]));
        out
    }

    /// Same endpoints and node count.
    pub fn same_shape(&self, other: &TypeGrid) -> bool {
        self.theta_lo == other.theta_lo
            && self.theta_hi == other.theta_hi
            && self.nodes.len() == other.nodes.len()
    }
}

/// A distribution over types given by closed-form density, cdf and survival.
///
/// Used both for the population measure μ and for the welfare weight η.
pub trait TypeDensity: Send + Sync + fmt::Debug {
    fn support(&self) -> (f64, f64);
    fn density(&self, theta: f64) -> f64;
    fn cdf(&self, theta: f64) -> f64;
    fn survival(&self, theta: f64) -> f64 {
        1.0 - self.cdf(theta)
    }
}

/// Alias used where a density plays the role of the population measure.
pub type TypeDistribution = dyn TypeDensity;
/// Alias used where a density plays the role of the welfare weight.
pub type WeightMeasure = dyn TypeDensity;

/// Density proportional to `(θ - lo)^k` on `[lo, hi]`, or `(hi - θ)^k` when
/// reflected. `k = 0` is the uniform distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerDensity {
    lo: f64,
    hi: f64,
    exponent: f64,
    reflected: bool,
}

impl PowerDensity {
    pub fn new(lo: f64, hi: f64, exponent: f64, reflected: bool) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "density support must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        if !(exponent.is_finite() && exponent >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "density exponent must be finite and >= 0, got {exponent}"
            )));
        }
        Ok(Self {
            lo,
            hi,
            exponent,
            reflected,
        })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, 0.0, false)
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn reflected(&self) -> bool {
        self.reflected
    }

    fn span(&self) -> f64 {
        self.hi - self.lo
    }

    /// Normalized coordinate measured from the end where the density vanishes.
    fn u(&self, theta: f64) -> f64 {
        let th = theta.clamp(self.lo, self.hi);
        let u = if self.reflected {
            (self.hi - th) / self.span()
        } else {
            (th - self.lo) / self.span()
        };
        u.clamp(0.0, 1.0)
    }

    /// `u^(k+1)`, the mass between the vanishing end and θ.
    fn lower_mass(&self, u: f64) -> f64 {
        if self.exponent == 0.0 {
            u
        } else {
            u.powf(self.exponent + 1.0)
        }
    }

    /// `1 - u^(k+1)` without cancellation near u = 1.
    fn upper_mass(&self, u: f64) -> f64 {
        if self.exponent == 0.0 {
            1.0 - u
        } else if u <= 0.0 {
            1.0
        } else {
            -((self.exponent + 1.0) * u.ln()).exp_m1()
        }
    }
}

impl TypeDensity for PowerDensity {
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn density(&self, theta: f64) -> f64 {
        if theta < self.lo || theta > self.hi {
            return 0.0;
        }
        let u = self.u(theta);
        let k = self.exponent;
        let core = if k == 0.0 { 1.0 } else { u.powf(k) };
        (k + 1.0) * core / self.span()
    }

    fn cdf(&self, theta: f64) -> f64 {
        if theta <= self.lo {
            return 0.0;
        }
        if theta >= self.hi {
            return 1.0;
        }
        let u = self.u(theta);
        if self.reflected {
            self.upper_mass(u)
        } else {
            self.lower_mass(u)
        }
    }

    fn survival(&self, theta: f64) -> f64 {
        if theta <= self.lo {
            return 1.0;
        }
        if theta >= self.hi {
            return 0.0;
        }
        let u = self.u(theta);
        if self.reflected {
            self.lower_mass(u)
        } else {
            self.upper_mass(u)
        }
    }
}

/// Hazard rate `q(θ) / Q̄(θ)`.
pub fn hazard_rate(dist: &dyn TypeDensity, theta: f64) -> Result<f64> {
    let s = dist.survival(theta);
    if s <= SURVIVAL_FLOOR {
        return Err(Error::DegenerateSurvival { theta, survival: s });
    }
    Ok(dist.density(theta) / s)
}

/// `Q̄_η(θ) / Q̄(θ)`, replaced by the density ratio `q_η(θ̄)/q(θ̄)` where the
/// population survival has vanished. Returns NaN if that limit is 0/0.
pub fn survival_ratio(eta: &dyn TypeDensity, mu: &dyn TypeDensity, theta: f64) -> f64 {
    let s_mu = mu.survival(theta);
    if s_mu <= SURVIVAL_FLOOR {
        let (_, hi) = mu.support();
        let q = mu.density(hi);
        if q <= 0.0 {
            return f64::NAN;
        }
        return eta.density(hi) / q;
    }
    eta.survival(theta) / s_mu
}

/// Hazard-rate ordering of η below μ at the interior nodes, plus the implied
/// monotone survival ratio and the endpoint density ratio being at least one.
pub fn check_hazard_dominance(
    mu: &dyn TypeDensity,
    eta: &dyn TypeDensity,
    grid: &TypeGrid,
) -> AssumptionReport {
    let nodes = grid.nodes();
    let n = nodes.len();
    let mut hazard = CheckBuilder::new("hazard_dominance", true, ASSUMPTION_TOL);
    for &th in nodes.iter().take(n.saturating_sub(1)).skip(1) {
        match (hazard_rate(mu, th), hazard_rate(eta, th)) {
            (Ok(hm), Ok(he)) => hazard.observe(hm - he, &[th]),
            _ => hazard.observe(f64::NAN, &[th]),
        }
    }

    let mut mono = CheckBuilder::new("survival_ratio_monotone", false, ASSUMPTION_TOL);
    let ratios: Vec<f64> = nodes.iter().map(|&t| survival_ratio(eta, mu, t)).collect();
    for w in 0..ratios.len().saturating_sub(1) {
        mono.observe(ratios[w + 1] - ratios[w], &[nodes[w + 1]]);
    }

    let mut endpoint = CheckBuilder::new("endpoint_density_ratio", false, ASSUMPTION_TOL);
    let hi = grid.theta_hi();
    let q = mu.density(hi);
    let ratio = if q > 0.0 {
        eta.density(hi) / q
    } else {
        f64::NAN
    };
    endpoint.observe(ratio - 1.0, &[hi]);

    AssumptionReport::from_checks(vec![hazard.finish(), mono.finish(), endpoint.finish()])
}

/// `q(θ̄) / (q_η(θ̄) + q(θ̄))`, the welfare weight separating the fully layered
/// regime from the pooling regime.
pub fn boundary_alpha(mu: &dyn TypeDensity, eta: &dyn TypeDensity) -> Result<f64> {
    let (_, hi) = mu.support();
    let q = mu.density(hi);
    if !(q > 0.0) {
        return Err(Error::DegenerateDensity(q));
    }
    Ok(q / (eta.density(hi) + q))
}

/// Largest gap between the supplied cdf and composite Simpson quadrature of
/// the density, over the nodes of `grid`.
pub fn cdf_quadrature_gap(dist: &dyn TypeDensity, grid: &TypeGrid) -> f64 {
    const PANELS: usize = 256;
    let nodes = grid.nodes();
    let mut acc = 0.0;
    let mut worst = (dist.cdf(nodes[0]) - 0.0).abs();
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = (b - a) / PANELS as f64;
        let mut s = dist.density(a) + dist.density(b);
        for k in 1..PANELS {
            let x = a + h * k as f64;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * dist.density(x);
        }
        acc += s * h / 3.0;
        worst = worst.max((acc - dist.cdf(b)).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_uniform() -> PowerDensity {
        PowerDensity::uniform(0.0, 1.0).unwrap()
    }

    fn s2_eta() -> PowerDensity {
        PowerDensity::new(0.0, 1.0, 1.0, false).unwrap()
    }

    #[test]
    fn grid_endpoints_and_validation() {
        let g = TypeGrid::new(0.0, 1.0, 41).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(*g.nodes().last().unwrap(), 1.0);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(TypeGrid::new(0.0, 1.0, 2).is_err());
        assert!(TypeGrid::new(1.0, 1.0, 5).is_err());
        assert_eq!(TypeGrid::coarse(0.0, 1.0, 1).unwrap().nodes(), &[0.0]);
    }

    #[test]
    fn masses_sum_to_one_and_match_trapezoid_for_uniform() {
        let g = TypeGrid::new(0.0, 1.0, 11).unwrap();
        let w = g.masses(&unit_uniform());
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((w[0] - 0.05).abs() < 1e-15);
        assert!((w[5] - 0.1).abs() < 1e-15);
        let w2 = g.masses(&s2_eta());
        assert!((w2.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hazard_rate_examples() {
        let u = unit_uniform();
        assert!((hazard_rate(&u, 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!((hazard_rate(&u, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((hazard_rate(&s2_eta(), 0.5).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        assert!(matches!(
            hazard_rate(&u, 1.0),
            Err(Error::DegenerateSurvival { .. })
        ));
    }

    #[test]
    fn survival_ratio_examples() {
        let u = unit_uniform();
        assert_eq!(survival_ratio(&u, &u, 0.3), 1.0);
        assert!((survival_ratio(&s2_eta(), &u, 0.5) - 1.5).abs() < 1e-14);
        assert!((survival_ratio(&s2_eta(), &u, 1.0) - 2.0).abs() < 1e-14);
        assert!((survival_ratio(&s2_eta(), &u, 0.0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn hazard_dominance_examples() {
        let g = TypeGrid::new(0.0, 1.0, 41).unwrap();
        let u = unit_uniform();
        assert!(check_hazard_dominance(&u, &u, &g).passed);
        let r = check_hazard_dominance(&u, &s2_eta(), &g);
        assert!(r.passed);
        assert!(r.check("survival_ratio_monotone").unwrap().passed);
        assert!(r.check("endpoint_density_ratio").unwrap().passed);

        // q_η = 2(1-θ): its hazard 2/(1-θ) exceeds the uniform hazard 1/(1-θ).
        let falling = PowerDensity::new(0.0, 1.0, 1.0, true).unwrap();
        let bad = check_hazard_dominance(&u, &falling, &g);
        assert!(!bad.passed);
        let hm = hazard_rate(&u, 0.1).unwrap();
        let he = hazard_rate(&falling, 0.1).unwrap();
        assert!(he > hm);
        assert!(bad.check("hazard_dominance").unwrap().violating_points[0][0] <= 0.1);
    }

    #[test]
    fn boundary_alpha_examples() {
        let u = unit_uniform();
        assert_eq!(boundary_alpha(&u, &u).unwrap(), 0.5);
        assert!((boundary_alpha(&u, &s2_eta()).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        // q_η(θ̄) = 3 with q(θ̄) = 1.
        let steep = PowerDensity::new(0.0, 1.0, 2.0, false).unwrap();
        assert!((boundary_alpha(&u, &steep).unwrap() - 0.25).abs() < 1e-15);
        // Density vanishing at the top.
        let falling = PowerDensity::new(0.0, 1.0, 1.0, true).unwrap();
        assert!(matches!(
            boundary_alpha(&falling, &u),
            Err(Error::DegenerateDensity(_))
        ));
    }

    #[test]
    fn cdf_matches_quadrature() {
        let g = TypeGrid::new(0.0, 1.0, 41).unwrap();
        for d in [
            unit_uniform(),
            s2_eta(),
            PowerDensity::new(0.0, 1.0, 3.0, true).unwrap(),
            PowerDensity::new(-1.0, 2.0, 2.0, false).unwrap(),
        ] {
            let gg = TypeGrid::new(d.support().0, d.support().1, 41).unwrap();
            assert!(cdf_quadrature_gap(&d, &gg) < 1e-8, "{d:?}");
            for &t in g.nodes() {
                assert!((d.cdf(t) + d.survival(t) - 1.0).abs() <= 1e-12);
            }
        }
    }
}
