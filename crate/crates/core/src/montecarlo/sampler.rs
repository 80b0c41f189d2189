//! Random draws: tilted initial velocities, transverse velocities and
//! diffuse re-emission.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{Family, Kernel};

/// Inverse-CDF sampler for a piecewise-linear density given at `nodes`.
#[derive(Debug, Clone)]
pub struct TableSampler {
    nodes: Vec<f64>,
    dens: Vec<f64>,
    /// Cumulative mass at each node.
    cum: Vec<f64>,
}

impl TableSampler {
    pub fn new(nodes: Vec<f64>, dens: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != dens.len() {
            return Err(Error::Domain("sampler table needs at least two nodes".into()));
        }
        let mut cum = Vec::with_capacity(nodes.len());
        cum.push(0.0);
        for i in 0..nodes.len() - 1 {
            let h = nodes[i + 1] - nodes[i];
            if !(h > 0.0) || dens[i] < 0.0 || !dens[i].is_finite() {
                return Err(Error::Domain(format!("bad sampler node {i}")));
            }
            cum.push(cum[i] + 0.5 * h * (dens[i] + dens[i + 1]));
        }
        let total = *cum.last().expect("nonempty");
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain(format!("density not normalizable (mass {total})")));
        }
        Ok(Self { nodes, dens, cum })
    }

    /// Mass of the tabulated density.
    pub fn total(&self) -> f64 {
        *self.cum.last().expect("nonempty")
    }

    /// Point with cumulative fraction `p` in `[0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let target = p * self.total();
        let i = self.cum.partition_point(|&c| c <= target).clamp(1, self.cum.len() - 1) - 1;
        let h = self.nodes[i + 1] - self.nodes[i];
        let (a, b) = (self.dens[i], self.dens[i + 1]);
        let m = target - self.cum[i];
        // solve a x + (b - a) x^2 / (2h) = m on [0, h]
        let s = (b - a) / h;
        let x = if s.abs() * h <= 1e-12 * a.max(b) {
            if a > 0.0 { m / a } else { 0.5 * h }
        } else {
            let disc = (a * a + 2.0 * s * m).max(0.0);
            2.0 * m / (a + disc.sqrt())
        };
        self.nodes[i] + x.clamp(0.0, h)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Half-width of the sampled horizontal velocity range.
pub fn velocity_cutoff(kernel: &Kernel) -> f64 {
    let s = kernel.spec();
    match s.family {
        // a0 below 1e-20 of its peak
        Family::Tabulated => 10f64.powf(20.0 / s.m).max(4.0),
        _ => (46.0 / s.alpha).sqrt(),
    }
}

/// Nodes on `[-cut, cut]`: uniform on the core, geometric beyond, with the
/// given kinks inserted.
pub fn velocity_nodes(cut: f64, core: f64, kinks: &[f64]) -> Vec<f64> {
    let core = core.min(cut);
    let n = 40_000;
    let mut v: Vec<f64> = (0..=n).map(|i| -core + 2.0 * core * i as f64 / n as f64).collect();
    let mut x = core;
    while x < cut {
        x = (x * 1.001).min(cut);
        v.push(x);
        v.push(-x);
    }
    v.extend(kinks.iter().copied().filter(|k| k.abs() < cut));
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    v
}

/// Draws `u_perp` from `b(u) A(u)` with `A(u) = |D| + P |u| T`: the disk area
/// `|D|` (interval length in 2-D) plus the perimeter sweep of a trajectory of
/// length `|u| T`. Returns the drawn vector (unused components zero).
#[derive(Debug, Clone, Copy)]
pub struct TransverseMixture {
    pub dim: u8,
    /// Probability of the plain `b` component.
    pub p_core: f64,
    /// `int b A`.
    pub total: f64,
}

impl TransverseMixture {
    pub fn new(dim: u8, radius: f64, t_max: f64) -> Self {
        match dim {
            1 => Self { dim, p_core: 1.0, total: 1.0 },
            2 => {
                let core = 2.0 * radius;
                let total = core + t_max * (2.0 / std::f64::consts::PI).sqrt();
                Self { dim, p_core: core / total, total }
            }
            _ => {
                let core = std::f64::consts::PI * radius * radius;
                let total = core + 2.0 * radius * t_max * (std::f64::consts::PI / 2.0).sqrt();
                Self { dim, p_core: core / total, total }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match self.dim {
            1 => [0.0, 0.0],
            2 => {
                if rng.random::<f64>() < self.p_core {
                    [rng.sample(StandardNormal), 0.0]
                } else {
                    let r = (-2.0 * (1.0 - rng.random::<f64>()).ln()).sqrt();
                    [if rng.random::<bool>() { r } else { -r }, 0.0]
                }
            }
            _ => {
                if rng.random::<f64>() < self.p_core {
                    [rng.sample(StandardNormal), rng.sample(StandardNormal)]
                } else {
                    let r = ChiSquared::<f64>::new(3.0).expect("valid").sample(rng).sqrt();
                    let th = std::f64::consts::TAU * rng.random::<f64>();
                    [r * th.cos(), r * th.sin()]
                }
            }
        }
    }
}

/// Plain draw from `b`.
pub fn sample_b<R: Rng + ?Sized>(dim: u8, rng: &mut R) -> [f64; 2] {
    match dim {
        1 => [0.0, 0.0],
        2 => [rng.sample(StandardNormal), 0.0],
        _ => [rng.sample(StandardNormal), rng.sample(StandardNormal)],
    }
}

/// Outgoing horizontal velocity after a hit on a face moving at `v_body`.
///
/// The emitted relative speed has the flux-weighted density
/// `v k(v, u) / |u|`, which integrates to one by mass conservation. For the
/// built-in kernels `k(v, u) = amp(u) exp(-rate(u) v^2)`, so the speed is
/// `sqrt(-ln(1 - U) / rate(u))`. The sign points away from the face.
pub fn reflect<R: Rng + ?Sized>(kernel: &Kernel, v_body: f64, u_in: f64, rng: &mut R) -> f64 {
    let u_rel = u_in - v_body;
    let speed = emission_speed(kernel, u_rel, rng.random::<f64>());
    // hit on the left face (u_rel > 0) sends the particle back to the left
    v_body - u_rel.signum() * speed
}

/// Inverse CDF of the emitted relative speed at cumulative fraction `p`.
pub fn emission_speed(kernel: &Kernel, u_rel: f64, p: f64) -> f64 {
    (-(-p).ln_1p() / kernel.rate(u_rel.abs())).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::quad::{self, Tolerance};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn inverse_cdf_closed_form() {
        let k = Kernel::new(KernelSpec::gaussian_flux(1.0, 1.0, 1.0, 3)).unwrap();
        let p = 1.0 - (-0.25f64).exp();
        assert_abs_diff_eq!(emission_speed(&k, 0.7, p), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn emission_matches_rejection_sampler() {
        // independent oracle: rejection from a uniform envelope on [0, 6]
        let k = Kernel::new(KernelSpec::gaussian_flux(1.0, 1.0, 1.0, 3)).unwrap();
        let mut r = rng();
        let n = 200_000;
        let q = |v: f64| v * k.k(v, 0.8) / 0.8;
        let top = 0.9;
        let mut rej = Vec::with_capacity(n);
        while rej.len() < n {
            let v = 6.0 * r.random::<f64>();
            if r.random::<f64>() * top < q(v) {
                rej.push(v);
            }
        }
        let inv: Vec<f64> = (0..n).map(|_| (0.7 - reflect(&k, 0.7, 1.5, &mut r)).abs()).collect();
        let m = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        assert_abs_diff_eq!(m(&rej), m(&inv), epsilon = 5.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn outgoing_points_away() {
        let k = Kernel::new(KernelSpec::width_coupled(1.0, 1.0, 3)).unwrap();
        let mut r = rng();
        for i in 0..100_000 {
            let v_body = 0.3;
            let u_in = if i % 2 == 0 { 1.0 + (i as f64) * 1e-5 } else { -0.4 - (i as f64) * 1e-5 };
            let out = reflect(&k, v_body, u_in, &mut r);
            assert!((out - v_body) * (u_in - v_body) < 0.0);
        }
    }

    #[test]
    fn emitted_speed_moments() {
        let mut r = rng();
        for spec in [KernelSpec::gaussian_flux(1.0, 2.0, 1.0, 3), KernelSpec::power_family(0.5, 1.0, 3)] {
            let k = Kernel::new(spec).unwrap();
            let u = 0.6;
            let n = 100_000;
            let v: Vec<f64> = (0..n).map(|_| reflect(&k, 0.0, u, &mut r).abs()).collect();
            let check = |xs: Vec<f64>, exact: f64| {
                let mean = xs.iter().sum::<f64>() / n as f64;
                let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
                assert!((mean - exact).abs() <= 3.0 * sd / (n as f64).sqrt(), "{mean} vs {exact}");
            };
            // E v = m2(u) / |u| under the flux-weighted law
            check(v.clone(), k.m2_quad(u, Tolerance::abs(1e-13)).unwrap() / u);
            let third = quad::integrate_half_line(|x| x.powi(3) * k.k(x, u), 0.0, Tolerance::abs(1e-13)).unwrap();
            check(v.iter().map(|x| x * x).collect(), third.value / u);
        }
    }

    #[test]
    fn kolmogorov_smirnov_flux_law() {
        let beta = 1.3;
        let k = Kernel::new(KernelSpec::gaussian_flux(1.0, beta, 1.0, 3)).unwrap();
        let mut r = rng();
        let n = 100_000;
        let mut v: Vec<f64> = (0..n).map(|_| reflect(&k, 0.2, -0.5, &mut r) - 0.2).collect();
        v.sort_by(f64::total_cmp);
        let mut d = 0.0f64;
        for (i, x) in v.iter().enumerate() {
            let f = 1.0 - (-beta * x * x).exp();
            d = d.max((f - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - f).abs());
        }
        assert!(d < 1.6276 / (n as f64).sqrt(), "KS statistic {d}");
    }

    #[test]
    fn table_quantiles_invert_cdf() {
        let nodes: Vec<f64> = (0..=100).map(|i| i as f64 * 0.05).collect();
        let dens: Vec<f64> = nodes.iter().map(|x| 1.0 + x).collect();
        let t = TableSampler::new(nodes, dens).unwrap();
        assert_abs_diff_eq!(t.total(), 5.0 + 12.5, epsilon = 1e-12);
        for p in [0.0, 0.1, 0.5, 0.93] {
            let x = t.quantile(p);
            assert_abs_diff_eq!(x + 0.5 * x * x, p * 17.5, epsilon = 1e-10);
        }
        assert!(TableSampler::new(vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn gaussian_velocity_moments() {
        let k = Kernel::new(KernelSpec::gaussian_flux(1.0, 1.0, 1.0, 3)).unwrap();
        let cut = velocity_cutoff(&k);
        let nodes = velocity_nodes(cut, cut, &[]);
        let dens: Vec<f64> = nodes.iter().map(|&u| k.a0(u)).collect();
        let t = TableSampler::new(nodes, dens).unwrap();
        assert_abs_diff_eq!(t.total(), k.a0_mass(), epsilon = 1e-8);
        let mut r = rng();
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| t.sample(&mut r)).collect();
        let m1 = xs.iter().sum::<f64>() / n as f64;
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let se1 = (0.5f64 / n as f64).sqrt();
        assert!(m1.abs() < 3.0 * se1);
        // Var(u^2) = 2 sigma^4 with sigma^2 = 1 / (2 alpha)
        assert!((m2 - 0.5).abs() < 3.0 * (2.0 * 0.25 / n as f64).sqrt());
    }

    #[test]
    fn transverse_mixture_weights() {
        let r = 0.5;
        let t = 3.0;
        let m3 = TransverseMixture::new(3, r, t);
        let exact3 = quad::integrate_half_line(
            |s| 2.0 * std::f64::consts::PI * s * (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI)
                * (std::f64::consts::PI * r * r + 2.0 * r * s * t),
            0.0,
            Tolerance::abs(1e-13),
        )
        .unwrap();
        assert_abs_diff_eq!(m3.total, exact3.value, epsilon = 1e-10);
        let mut g = rng();
        let n = 200_000;
        let mean_abs: f64 = (0..n).map(|_| m3.sample(&mut g)).map(|u| u[0].hypot(u[1])).sum::<f64>() / n as f64;
        // E|u| under b A / total
        let num = quad::integrate_half_line(
            |s| s * s * (-0.5 * s * s).exp() * (std::f64::consts::PI * r * r + 2.0 * r * s * t),
            0.0,
            Tolerance::abs(1e-13),
        )
        .unwrap()
        .value;
        assert_abs_diff_eq!(mean_abs, num / exact3.value, epsilon = 0.01);
        let m2 = TransverseMixture::new(2, r, t);
        assert_abs_diff_eq!(m2.total, 2.0 * r + t * (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-15);
    }
}
