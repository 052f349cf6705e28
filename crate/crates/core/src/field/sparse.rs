//! Thermal photon emission for long, sparse runs.
//!
//! When the photon rate is tiny compared to `1/τc`, materializing the field
//! at `dt ≤ τc/10` for the whole run is hopeless (a 200 s run at
//! `τc = 50 ps` would need ~10¹⁴ samples). The emitted process only depends
//! on the field at the photon times, so this sampler draws candidate times
//! from a homogeneous Poisson process at `bound·rate` and keeps each one with
//! probability `|E(t)|²/bound`. The field is synthesized lazily, and only
//! where candidates fall:
//!
//! * a candidate whose filter window does not overlap any other candidate's
//!   sees a field independent of everything else, `E ~ CN(0, 1)`, so its
//!   acceptance is a single Bernoulli draw with `p = (1 - e^-bound)/bound`;
//! * candidates with overlapping windows (a *cluster*) get their field values
//!   drawn jointly from the exact covariance of the filtered grid field;
//! * for the recursive (Lorentzian) filter the field is Markov, so it is
//!   propagated exactly from candidate to candidate and no clustering is
//!   needed.
//!
//! The only approximation beyond the dense model is the cap `|E|² ≤ bound`;
//! capped candidates are counted in [`SparseDiagnostics::exceedances`].

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Exp1, Gamma};

use super::synth::{check_sampling, complex_normal, field_seed, FieldFilter};
use super::{PhotonStream, SpectrumModel};
use crate::rng::{rng_from_seed, Rng};
use crate::units::{ps_to_fs, FS_PER_S};
use crate::{Error, Result};

pub const DEFAULT_INTENSITY_BOUND: f64 = 16.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SparseDiagnostics {
    pub candidates: u64,
    /// Candidates whose field had to be synthesized jointly with a neighbour.
    pub clustered: u64,
    /// Clustered candidates whose intensity exceeded the bound.
    pub exceedances: u64,
}

#[derive(Debug, Clone)]
pub struct SparseThermalSampler {
    filter: FieldFilter,
    dt_fs: i64,
    bound: f64,
}

impl SparseThermalSampler {
    pub fn new(spectrum: &SpectrumModel, dt_ps: f64, bound: f64) -> Result<Self> {
        let dt_fs = check_sampling(spectrum, dt_ps)?;
        if !(bound >= 1.0 && bound.is_finite()) {
            return Err(Error::param("intensity_bound", "must be finite and >= 1"));
        }
        Ok(SparseThermalSampler { filter: FieldFilter::for_spectrum(spectrum, dt_fs), dt_fs, bound })
    }

    pub fn dt_fs(&self) -> i64 {
        self.dt_fs
    }

    /// Emits photons over `[0, duration)` at mean rate `mean_rate` (events/s).
    pub fn emit(&self, duration_ps: f64, mean_rate: f64, seed: u64) -> Result<(PhotonStream, SparseDiagnostics)> {
        if !(mean_rate >= 0.0 && mean_rate.is_finite()) {
            return Err(Error::param("mean_rate", "must be finite and >= 0"));
        }
        let duration_fs = ps_to_fs(duration_ps);
        if duration_fs < 0 {
            return Err(Error::param("duration", "must be >= 0"));
        }
        let mut rng = rng_from_seed(field_seed(seed));
        let mut run = Run {
            rng: &mut rng,
            out: Vec::with_capacity((mean_rate * duration_fs as f64 / FS_PER_S * 1.05) as usize),
            diag: SparseDiagnostics::default(),
            last: i64::MIN,
        };
        if mean_rate > 0.0 {
            let mean_gap = FS_PER_S / (mean_rate * self.bound);
            match &self.filter {
                FieldFilter::Fir { taps, half } => self.emit_fir(&mut run, taps, *half, duration_fs, mean_gap),
                &FieldFilter::Ar1 { a, .. } => self.emit_markov(&mut run, a, duration_fs, mean_gap),
            }
        }
        let Run { out, diag, .. } = run;
        Ok((PhotonStream::from_parts_unchecked(out, duration_fs), diag))
    }

    // Candidate gaps are iid exponential. A gap is *long* when it exceeds
    // `reach`, the separation that guarantees disjoint filter supports; a
    // long gap is `reach + Exp` by memorylessness. Runs of long gaps are
    // skipped in bulk: interior candidates of a run are isolated and only the
    // accepted ones are placed, using gamma-distributed partial sums.
    fn emit_fir(&self, run: &mut Run<'_>, taps: &[f64], half: usize, duration_fs: i64, mean_gap: f64) {
        let reach = ((2 * half as i64 + 1) * self.dt_fs) as f64;
        let p_long = (-reach / mean_gap).exp();
        let p_accept = (1.0 - (-self.bound).exp()) / self.bound;
        let end = duration_fs as f64;
        let acf: Vec<f64> = (0..taps.len()).map(|k| self.filter.autocorrelation(k)).collect();
        let geometric = |rng: &mut Rng, p_stop: f64| -> u64 {
            // failures before the first success
            if p_stop >= 1.0 {
                return 0;
            }
            let u: f64 = 1.0 - rng.random::<f64>();
            (u.ln() / (1.0 - p_stop).ln()).floor().min(u64::MAX as f64 / 2.0) as u64
        };
        let gamma = |rng: &mut Rng, k: u64| -> f64 {
            if k == 1 {
                rng.sample::<f64, _>(Exp1)
            } else {
                rng.sample(Gamma::new(k as f64, 1.0).expect("positive shape"))
            }
        };

        let mut cluster: Vec<i64> = Vec::new();
        let mut t = mean_gap * run.rng.sample::<f64, _>(Exp1);
        if t >= end {
            return;
        }
        cluster.push(t as i64);
        loop {
            let longs = geometric(run.rng, 1.0 - p_long);
            if longs > 0 {
                self.flush(run, &mut cluster, &acf, p_accept);
                // interior candidates 1..longs-1 of the run are isolated
                let mut idx = 0u64;
                loop {
                    let j = 1 + geometric(run.rng, p_accept);
                    let step = if idx + j < longs { j } else { longs - idx };
                    t += step as f64 * reach + mean_gap * gamma(run.rng, step);
                    idx += step;
                    if t >= end {
                        run.diag.candidates += idx;
                        return;
                    }
                    if idx == longs {
                        break;
                    }
                    run.push(t as i64);
                }
                run.diag.candidates += longs - 1;
                cluster.push(t as i64);
            }
            let u: f64 = run.rng.random();
            t += -mean_gap * (u * (-reach / mean_gap).exp_m1()).ln_1p();
            if t >= end {
                self.flush(run, &mut cluster, &acf, p_accept);
                return;
            }
            cluster.push(t as i64);
        }
    }

    fn flush(&self, run: &mut Run<'_>, cluster: &mut Vec<i64>, acf: &[f64], p_accept: f64) {
        match cluster.len() {
            0 => {}
            1 => {
                run.diag.candidates += 1;
                if run.rng.random::<f64>() < p_accept {
                    run.push(cluster[0]);
                }
            }
            _ => self.resolve_cluster(run, cluster, acf),
        }
        cluster.clear();
    }

    fn resolve_cluster(&self, run: &mut Run<'_>, times: &[i64], acf: &[f64]) {
        // Cholesky factor of the grid covariance of the cluster's field values
        let n = times.len();
        let grid: Vec<i64> = times.iter().map(|t| t / self.dt_fs).collect();
        let cov = |i: usize, j: usize| acf.get(grid[i].abs_diff(grid[j]) as usize).copied().unwrap_or(0.0);
        let mut l = vec![0.0f64; n * n];
        for j in 0..n {
            let d = cov(j, j) - (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum::<f64>();
            let d = if d > 1e-12 { d.sqrt() } else { 0.0 };
            l[j * n + j] = d;
            for i in j + 1..n {
                let v = cov(i, j) - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
                l[i * n + j] = if d > 0.0 { v / d } else { 0.0 };
            }
        }
        let w: Vec<Complex64> = (0..n).map(|_| complex_normal(run.rng)).collect();
        for (i, &t) in times.iter().enumerate() {
            let e: Complex64 = (0..=i).map(|k| w[k] * l[i * n + k]).sum();
            run.accept(t, e.norm_sqr(), self.bound, true);
        }
    }

    fn emit_markov(&self, run: &mut Run<'_>, a: f64, duration_fs: i64, mean_gap: f64) {
        let mut t = 0.0f64;
        let mut state: Option<(i64, Complex64)> = None;
        loop {
            t += mean_gap * run.rng.sample::<f64, _>(Exp1);
            let ti = t as i64;
            if ti >= duration_fs {
                break;
            }
            let g = ti / self.dt_fs;
            let e = match state {
                None => complex_normal(run.rng),
                Some((g0, e0)) if g0 == g => e0,
                Some((g0, e0)) => {
                    let decay = a.powf((g - g0) as f64);
                    let w = complex_normal(run.rng);
                    e0 * decay + w * (1.0 - decay * decay).max(0.0).sqrt()
                }
            };
            state = Some((g, e));
            run.accept(ti, e.norm_sqr(), self.bound, false);
        }
    }
}

struct Run<'a> {
    rng: &'a mut Rng,
    out: Vec<i64>,
    diag: SparseDiagnostics,
    last: i64,
}

impl Run<'_> {
    fn push(&mut self, mut t: i64) {
        if t <= self.last {
            t = self.last + 1;
        }
        self.last = t;
        self.out.push(t);
    }

    fn accept(&mut self, t: i64, intensity: f64, bound: f64, clustered: bool) {
        self.diag.candidates += 1;
        if clustered {
            self.diag.clustered += 1;
        }
        if intensity > bound {
            self.diag.exceedances += 1;
        }
        if self.rng.random::<f64>() * bound < intensity {
            self.push(t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_rate_is_preserved() {
        for spectrum in [SpectrumModel::gaussian(50.0).unwrap(), SpectrumModel::lorentzian(50.0).unwrap()] {
            let sampler = SparseThermalSampler::new(&spectrum, 2.5, 16.0).unwrap();
            let (s, d) = sampler.emit(1e11, 1e6, 5).unwrap();
            let expect = 1e5;
            assert!((s.len() as f64 - expect).abs() < 5.0 * expect.sqrt() * 1.05, "{}", s.len());
            assert!(d.candidates > 15 * s.len() as u64);
            assert!(PhotonStream::new(s.arrivals().to_vec(), s.duration_fs()).is_ok());
        }
    }

    #[test]
    fn rejects_bad_bound() {
        let s = SpectrumModel::gaussian(50.0).unwrap();
        assert!(SparseThermalSampler::new(&s, 2.5, 0.5).is_err());
        assert!(SparseThermalSampler::new(&s, 10.0, 16.0).is_err());
    }
}
