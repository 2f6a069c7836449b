use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SystemConfig;
use crate::numerics::{ComplexMatrix, NumericsError, SimRng};

/// Response of a half-wavelength uniform planar array.
///
/// Entry `(n_x, n_y)` is `exp(jπ(n_x sinθ sinφ + n_y cosφ)) / √(NxNy)`,
/// flattened with `n_x` running fastest.
pub fn steering_vector(theta: f64, phi: f64, nx: usize, ny: usize) -> ComplexMatrix {
    assert!(nx >= 1 && ny >= 1, "array dimensions must be positive");
    let scale = 1.0 / ((nx * ny) as f64).sqrt();
    let horiz = theta.sin() * phi.sin();
    let vert = phi.cos();
    let mut entries = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let phase = PI * (ix as f64 * horiz + iy as f64 * vert);
            entries.push(Complex64::from_polar(scale, phase));
        }
    }
    ComplexMatrix::column(entries)
}

/// One propagation path of the BS-RIS channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsRisPath {
    pub gain: Complex64,
    pub arrival_azimuth: f64,
    pub arrival_elevation: f64,
    pub departure_azimuth: f64,
    pub departure_elevation: f64,
}

/// One propagation path of a RIS-UE channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: Complex64,
    pub azimuth: f64,
    pub elevation: f64,
    pub doppler_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

fn uniform_angle(rng: &mut SimRng) -> f64 {
    rng.uniform_range(0.0, 2.0 * PI)
}

/// Saleh-Valenzuela BS-RIS channel `G` (M×N) and its path parameters.
pub fn gen_bs_ris_channel(cfg: &SystemConfig, rng: &mut SimRng) -> (ComplexMatrix, Vec<BsRisPath>) {
    let m = cfg.antennas;
    let n = cfg.ris_elements();
    let lg = cfg.paths_bs_ris;
    let scale = ((m * n) as f64 / lg as f64).sqrt();
    let mut g = ComplexMatrix::zeros(m, n);
    let mut paths = Vec::with_capacity(lg);
    for _ in 0..lg {
        let path = BsRisPath {
            gain: rng.complex_normal(1.0),
            arrival_azimuth: uniform_angle(rng),
            arrival_elevation: uniform_angle(rng),
            departure_azimuth: uniform_angle(rng),
            departure_elevation: uniform_angle(rng),
        };
        let ar = steering_vector(path.arrival_azimuth, path.arrival_elevation, cfg.bs_mx, cfg.bs_my);
        let at = steering_vector(path.departure_azimuth, path.departure_elevation, cfg.ris_nx, cfg.ris_ny);
        let weight = path.gain * scale;
        for r in 0..m {
            for c in 0..n {
                g[(r, c)] += weight * ar[(r, 0)] * at[(c, 0)].conj();
            }
        }
        paths.push(path);
    }
    (g, paths)
}

/// Draws the `L_k` paths of one RIS-UE channel; Doppler shifts are uniform
/// on `[0, f_max]`.
pub fn gen_ris_ue_paths(cfg: &SystemConfig, rng: &mut SimRng) -> PathSet {
    let f_max = cfg.max_doppler_hz();
    let paths = (0..cfg.paths_ris_ue)
        .map(|_| Path {
            gain: rng.complex_normal(1.0),
            azimuth: uniform_angle(rng),
            elevation: uniform_angle(rng),
            doppler_hz: f_max * rng.uniform(),
        })
        .collect();
    PathSet { paths }
}

/// RIS-UE channel `h(s)` (N×1) at step `s`.
pub fn eval_ris_ue_channel(paths: &PathSet, s: usize, cfg: &SystemConfig) -> ComplexMatrix {
    let n = cfg.ris_elements();
    let scale = (n as f64 / paths.paths.len() as f64).sqrt();
    let t = cfg.step_duration_s() * s as f64;
    let mut h = ComplexMatrix::zeros(n, 1);
    for path in &paths.paths {
        let rotation = Complex64::from_polar(1.0, 2.0 * PI * path.doppler_hz * t);
        let weight = path.gain * rotation * scale;
        let a = steering_vector(path.azimuth, path.elevation, cfg.ris_nx, cfg.ris_ny);
        for i in 0..n {
            h[(i, 0)] += weight * a[(i, 0)];
        }
    }
    h
}

/// Cascaded channel `G·diag(h)`.
pub fn cascade(g: &ComplexMatrix, h: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    if h.cols() != 1 || h.rows() != g.cols() {
        return Err(NumericsError::InvalidDimension(format!(
            "cascade of {}x{} with {}x{}",
            g.rows(),
            g.cols(),
            h.rows(),
            h.cols()
        )));
    }
    let mut out = g.clone();
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            out[(r, c)] = g[(r, c)] * h[(c, 0)];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SystemConfig {
        SystemConfig::desk()
    }

    #[test]
    fn steering_trivial_cases() {
        let a = steering_vector(0.0, PI / 2.0, 2, 2);
        for z in a.iter() {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
        let single = steering_vector(1.3, 0.2, 1, 1);
        assert_eq!(single.as_slice(), &[Complex64::new(1.0, 0.0)]);
    }

    #[test]
    fn steering_unit_norm_and_constant_modulus() {
        let mut rng = SimRng::new(1);
        for _ in 0..50 {
            let theta = rng.uniform_range(0.0, 2.0 * PI);
            let phi = rng.uniform_range(0.0, 2.0 * PI);
            let a = steering_vector(theta, phi, 8, 5);
            assert!((a.frobenius_norm() - 1.0).abs() < 1e-12);
            for z in a.iter() {
                assert!((z.norm() - 1.0 / 40f64.sqrt()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn steering_index_order_has_nx_fastest() {
        let theta = 0.7;
        let phi = 1.1;
        let a = steering_vector(theta, phi, 3, 2);
        let expected = Complex64::from_polar(1.0 / 6f64.sqrt(), PI * (2.0 * theta.sin() * phi.sin() + phi.cos()));
        assert!((a[(5, 0)] - expected).norm() < 1e-15);
    }

    #[test]
    fn bs_ris_rank_bounded_by_paths() {
        let cfg = SystemConfig {
            paths_bs_ris: 1,
            ..SystemConfig::table3()
        };
        let mut rng = SimRng::new(4);
        let (g, _) = gen_bs_ris_channel(&cfg, &mut rng);
        // rank one: each column is a multiple of the first
        let c0 = g.col(0);
        for j in 1..g.cols() {
            let cj = g.col(j);
            let ratio = cj[(0, 0)] / c0[(0, 0)];
            assert!(cj.sub(&c0.scale(ratio)).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = cfg();
        let (a, _) = gen_bs_ris_channel(&cfg, &mut SimRng::new(9));
        let (b, _) = gen_bs_ris_channel(&cfg, &mut SimRng::new(9));
        assert_eq!(a, b);
    }

    #[test]
    fn doppler_range() {
        let cfg = SystemConfig::table3();
        let mut rng = SimRng::new(2);
        for _ in 0..200 {
            let set = gen_ris_ue_paths(&cfg, &mut rng);
            assert_eq!(set.paths.len(), cfg.paths_ris_ue);
            for p in &set.paths {
                assert!((0.0..=280.0).contains(&p.doppler_hz));
                assert!((0.0..2.0 * PI).contains(&p.azimuth));
                assert!((0.0..2.0 * PI).contains(&p.elevation));
            }
        }
        let still = SystemConfig {
            max_speed_mps: 0.0,
            ..cfg.clone()
        };
        let set = gen_ris_ue_paths(&still, &mut rng);
        assert!(set.paths.iter().all(|p| p.doppler_hz == 0.0));
    }

    #[test]
    fn static_channel_does_not_evolve() {
        let cfg = SystemConfig {
            max_speed_mps: 0.0,
            ..cfg()
        };
        let set = gen_ris_ue_paths(&cfg, &mut SimRng::new(3));
        let h1 = eval_ris_ue_channel(&set, 1, &cfg);
        for s in [0, 2, 17, 500] {
            assert_eq!(eval_ris_ue_channel(&set, s, &cfg), h1);
        }
    }

    #[test]
    fn single_path_rotates_by_doppler_phase() {
        let cfg = SystemConfig {
            paths_ris_ue: 1,
            ..SystemConfig::table3()
        };
        let mut rng = SimRng::new(12);
        for _ in 0..20 {
            let set = gen_ris_ue_paths(&cfg, &mut rng);
            let f = set.paths[0].doppler_hz;
            let step_phase = 2.0 * PI * f * cfg.step_duration_s();
            let rotor = Complex64::from_polar(1.0, step_phase);
            for s in [1usize, 5, 40] {
                let h0 = eval_ris_ue_channel(&set, s, &cfg);
                let h1 = eval_ris_ue_channel(&set, s + 1, &cfg);
                for i in 0..h0.rows() {
                    let expect = h0[(i, 0)] * rotor;
                    assert!((h1[(i, 0)] - expect).norm() < 1e-12 * h0[(i, 0)].norm().max(1.0));
                    let dphi = (h1[(i, 0)] / h0[(i, 0)]).arg();
                    let wrapped = (dphi - step_phase).rem_euclid(2.0 * PI);
                    assert!(wrapped < 1e-10 || 2.0 * PI - wrapped < 1e-10);
                }
            }
        }
    }

    #[test]
    fn energy_normalisation() {
        let cfg = cfg();
        let n = cfg.ris_elements();
        let m = cfg.antennas;
        let mut rng = SimRng::new(31);
        let draws = 10_000;
        let mut g_energy = 0.0;
        let mut h_energy = 0.0;
        for _ in 0..draws {
            let (g, _) = gen_bs_ris_channel(&cfg, &mut rng);
            g_energy += g.norm_sqr();
            let set = gen_ris_ue_paths(&cfg, &mut rng);
            h_energy += eval_ris_ue_channel(&set, 3, &cfg).norm_sqr();
        }
        let g_ratio = g_energy / draws as f64 / (m * n) as f64;
        let h_ratio = h_energy / draws as f64 / n as f64;
        assert!((0.97..=1.03).contains(&g_ratio), "G ratio {g_ratio}");
        assert!((0.97..=1.03).contains(&h_ratio), "h ratio {h_ratio}");
    }

    #[test]
    fn cascade_cases() {
        let mut rng = SimRng::new(6);
        let g = crate::numerics::sample_cn(3, 4, 1.0, &mut rng).unwrap();
        let ones = ComplexMatrix::column(vec![Complex64::new(1.0, 0.0); 4]);
        assert_eq!(cascade(&g, &ones).unwrap(), g);

        let h = crate::numerics::sample_cn(4, 1, 1.0, &mut rng).unwrap();
        let row_ones = ComplexMatrix::row(vec![Complex64::new(1.0, 0.0); 4]);
        assert_eq!(cascade(&row_ones, &h).unwrap(), h.transpose());

        let hc = cascade(&g, &h).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                assert!((hc[(r, c)] - g[(r, c)] * h[(c, 0)]).norm() <= 1e-15);
            }
        }
        assert!(cascade(&g, &ones.top_rows(3)).is_err());
    }
}
