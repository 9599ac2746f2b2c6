//! Walker ensembles driven by the short-step process
//! `dx = b dt + dw`, `<dw_a dw_b> = (eta/m_a) dt delta_ab`.
//!
//! Random numbers come from one ChaCha8 generator per (step, chunk of walkers):
//! the step selects the stream and the chunk a fixed word offset, so results do
//! not depend on the number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::calculus::normalize_density;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField, VectorPotential};
use crate::grid::{Boundary, ConfigSpace};
use crate::kernel::gaussian_step_moments;
use crate::params::PhysicalParams;

/// Walkers per random-number chunk.
pub const CHUNK: usize = 1024;

/// Cells with fewer samples are left out of pass/fail statistics.
pub const MIN_SAMPLES: usize = 20;

const CHUNK_WORDS: u32 = 40;

fn chunk_rng(seed: u64, stream: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((chunk as u128) << CHUNK_WORDS);
    rng
}

/// A population of walkers sharing one clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    space: ConfigSpace,
    /// Walker-major coordinates, `dim` per walker.
    positions: Vec<f64>,
    time: f64,
    dt: f64,
    seed: u64,
    steps: u64,
}

impl Ensemble {
    /// Positions are folded into the box.
    pub fn new(space: &ConfigSpace, positions: Vec<f64>, dt: f64, seed: u64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidTimeStep(dt));
        }
        let dim = space.dim();
        if positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::EnsembleMismatch(format!(
                "{} coordinates do not form whole {dim}-dimensional walkers",
                positions.len()
            )));
        }
        if let Some(index) = positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let positions = positions
            .chunks(dim)
            .flat_map(|p| p.iter().enumerate().map(|(a, x)| space.fold(a, *x)).collect::<Vec<_>>())
            .collect();
        Ok(Self {
            space: space.clone(),
            positions,
            time: 0.0,
            dt,
            seed,
            steps: 0,
        })
    }

    /// Draw `walkers` positions from `rho`: a cell by inverse CDF, then a
    /// uniform point inside it.
    pub fn sample(rho: &ScalarField, walkers: usize, dt: f64, seed: u64) -> Result<Self> {
        if walkers == 0 {
            return Err(Error::EnsembleMismatch("need at least one walker".into()));
        }
        let rho = normalize_density(rho)?;
        let space = rho.space();
        let mut cdf = Vec::with_capacity(space.len());
        let mut acc = 0.0;
        for v in rho.values() {
            acc += v;
            cdf.push(acc);
        }
        let total = acc;
        let dim = space.dim();
        let mut positions = vec![0.0; walkers * dim];
        positions
            .par_chunks_mut(CHUNK * dim)
            .enumerate()
            .for_each(|(chunk, block)| {
                let mut rng = chunk_rng(seed, u64::MAX, chunk);
                for walker in block.chunks_mut(dim) {
                    let u: f64 = rng.random::<f64>() * total;
                    let cell = cdf.partition_point(|c| *c <= u).min(space.len() - 1);
                    for (a, x) in walker.iter_mut().enumerate() {
                        let i = space.axis_index(cell, a);
                        let h = space.spacing(a);
                        *x = space.lower()[a] + h * (i as f64 + rng.random::<f64>());
                    }
                }
            });
        Self::new(space, positions, dt, seed)
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn walkers(&self) -> usize {
        self.positions.len() / self.space.dim()
    }

    pub fn position(&self, walker: usize) -> &[f64] {
        let d = self.space.dim();
        &self.positions[walker * d..(walker + 1) * d]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Coordinate `axis` of every walker.
    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        self.positions.iter().skip(axis).step_by(self.space.dim()).copied().collect()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_count(&self) -> u64 {
        self.steps
    }

    /// Rows `step,walker,x0,..` for the first `limit` walkers.
    pub fn trajectory_rows(&self, limit: usize) -> String {
        let mut out = String::new();
        for w in 0..limit.min(self.walkers()) {
            out.push_str(&format!("{},{w}", self.steps));
            for x in self.position(w) {
                out.push_str(&format!(",{x:.15e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn trajectory_header(&self) -> String {
        let mut out = String::from("step,walker");
        for a in 0..self.space.dim() {
            out.push_str(&format!(",x{a}"));
        }
        out
    }
}

/// Multilinear interpolation of cell-centred components at `x`.
fn interpolate(space: &ConfigSpace, field: &VectorField, x: &[f64], out: &mut [f64]) {
    let dim = space.dim();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..dim {
        let n = space.points()[a];
        let u = (x[a] - space.lower()[a]) / space.spacing(a) - 0.5;
        let i = u.floor();
        let f = u - i;
        let i = i as i64;
        match space.boundary() {
            Boundary::Periodic => {
                lo[a] = i.rem_euclid(n as i64) as usize;
                hi[a] = (i + 1).rem_euclid(n as i64) as usize;
                frac[a] = f;
            }
            Boundary::Reflecting => {
                let clamp = |j: i64| j.clamp(0, n as i64 - 1) as usize;
                lo[a] = clamp(i);
                hi[a] = clamp(i + 1);
                frac[a] = f;
            }
        }
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    for corner in 0..(1usize << dim) {
        let mut weight = 1.0;
        let mut flat = 0;
        for a in 0..dim {
            let upper = corner >> a & 1 == 1;
            weight *= if upper { frac[a] } else { 1.0 - frac[a] };
            flat += if upper { hi[a] } else { lo[a] } * space.stride(a);
        }
        if weight != 0.0 {
            for (o, c) in out.iter_mut().zip(field.components()) {
                *o += weight * c[flat];
            }
        }
    }
}

/// Advance every walker by `b dt + dw` and fold it back into the box.
pub fn step_ensemble(
    e: &Ensemble,
    entropy: &ScalarField,
    params: &PhysicalParams,
    potential: Option<&VectorPotential>,
) -> Result<Ensemble> {
    e.space.require_same(entropy.space())?;
    if let Some(a) = potential {
        e.space.require_same(a.space())?;
    }
    params.validate(&e.space)?;
    let drift = gaussian_step_moments(entropy, params, 1.0, potential)?.drift;
    let space = &e.space;
    let dim = space.dim();
    let dt = e.dt;
    let noise: Vec<f64> = (0..dim).map(|a| (params.diffusion(a) * dt).sqrt()).collect();
    let mut positions = e.positions.clone();
    positions
        .par_chunks_mut(CHUNK * dim)
        .enumerate()
        .for_each(|(chunk, block)| {
            let mut rng = chunk_rng(e.seed, e.steps, chunk);
            let mut b = vec![0.0; dim];
            for walker in block.chunks_mut(dim) {
                interpolate(space, &drift, walker, &mut b);
                for a in 0..dim {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    walker[a] = space.fold(a, walker[a] + b[a] * dt + noise[a] * g);
                }
            }
        });
    Ok(Ensemble {
        space: e.space.clone(),
        positions,
        time: (e.steps + 1) as f64 * dt,
        dt,
        seed: e.seed,
        steps: e.steps + 1,
    })
}

/// Run `steps` steps, keeping every `stride`-th ensemble (plus the first and last).
pub fn evolve_ensemble(
    e: &Ensemble,
    entropy: &ScalarField,
    params: &PhysicalParams,
    potential: Option<&VectorPotential>,
    steps: usize,
    stride: usize,
) -> Result<Vec<Ensemble>> {
    let stride = stride.max(1);
    let mut out = vec![e.clone()];
    let mut cur = e.clone();
    for n in 1..=steps {
        cur = step_ensemble(&cur, entropy, params, potential)?;
        if n % stride == 0 || n == steps {
            out.push(cur.clone());
        }
    }
    Ok(out)
}

/// Cell-count histogram normalized to unit integral.
pub fn estimate_density(e: &Ensemble) -> ScalarField {
    let space = &e.space;
    let mut counts = vec![0.0; space.len()];
    for w in e.positions.chunks(space.dim()) {
        counts[space.cell_of_point(w)] += 1.0;
    }
    let rho = ScalarField::from_raw(space.clone(), counts);
    normalize_density(&rho).expect("an ensemble has at least one walker")
}

/// Conditional mean step velocity in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDrift {
    pub mean: Vec<f64>,
    /// Standard error of the mean per axis; infinite with a single sample.
    pub stderr: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// On the cell of the earlier position.
    Earlier,
    /// On the cell of the later position.
    Later,
}

/// Per-cell drift estimate; cells without samples are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftEstimate {
    space: ConfigSpace,
    conditioning: Conditioning,
    cells: Vec<Option<CellDrift>>,
}

impl DriftEstimate {
    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    pub fn cells(&self) -> &[Option<CellDrift>] {
        &self.cells
    }

    pub fn cell(&self, k: usize) -> Option<&CellDrift> {
        self.cells[k].as_ref()
    }

    /// Cells with at least `min_samples` samples.
    pub fn well_sampled(&self, min_samples: usize) -> impl Iterator<Item = (usize, &CellDrift)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(k, c)| c.as_ref().filter(|c| c.samples >= min_samples).map(|c| (k, c)))
    }

    /// CSV `x0,..,b0,..,stderr0,..,samples` over sampled cells.
    pub fn to_csv(&self) -> String {
        let dim = self.space.dim();
        let mut out = String::new();
        let names = |p: &str| (0..dim).map(|a| format!("{p}{a}")).collect::<Vec<_>>().join(",");
        out.push_str(&format!("{},{},{},samples\n", names("x"), names("b"), names("stderr")));
        for (k, c) in self.cells.iter().enumerate() {
            if let Some(c) = c {
                let x = self.space.position(k);
                let row: Vec<String> = x
                    .iter()
                    .chain(&c.mean)
                    .chain(&c.stderr)
                    .map(|v| format!("{v:.15e}"))
                    .collect();
                out.push_str(&format!("{},{}\n", row.join(","), c.samples));
            }
        }
        out
    }
}

fn check_pair(before: &Ensemble, after: &Ensemble) -> Result<()> {
    before.space.require_same(&after.space)?;
    if before.walkers() != after.walkers() {
        return Err(Error::EnsembleMismatch(format!(
            "walker counts differ: {} vs {}",
            before.walkers(),
            after.walkers()
        )));
    }
    if after.steps != before.steps + 1 || before.seed != after.seed {
        return Err(Error::EnsembleMismatch("the later ensemble is not one step after the earlier".into()));
    }
    Ok(())
}

fn drift_estimate(before: &Ensemble, after: &Ensemble, conditioning: Conditioning) -> Result<DriftEstimate> {
    check_pair(before, after)?;
    let space = &before.space;
    let dim = space.dim();
    let dt = before.dt;
    let mut sum = vec![0.0; space.len() * dim];
    let mut sq = vec![0.0; space.len() * dim];
    let mut count = vec![0usize; space.len()];
    for (x0, x1) in before.positions.chunks(dim).zip(after.positions.chunks(dim)) {
        let cell = match conditioning {
            Conditioning::Earlier => space.cell_of_point(x0),
            Conditioning::Later => space.cell_of_point(x1),
        };
        count[cell] += 1;
        for a in 0..dim {
            let v = space.displacement(a, x0[a], x1[a]) / dt;
            sum[cell * dim + a] += v;
            sq[cell * dim + a] += v * v;
        }
    }
    let cells = (0..space.len())
        .map(|k| {
            let n = count[k];
            if n == 0 {
                return None;
            }
            let nf = n as f64;
            let mean: Vec<f64> = (0..dim).map(|a| sum[k * dim + a] / nf).collect();
            let stderr = (0..dim)
                .map(|a| {
                    if n < 2 {
                        f64::INFINITY
                    } else {
                        let var = (sq[k * dim + a] - nf * mean[a] * mean[a]).max(0.0) / (nf - 1.0);
                        (var / nf).sqrt()
                    }
                })
                .collect();
            Some(CellDrift { mean, stderr, samples: n })
        })
        .collect();
    Ok(DriftEstimate {
        space: space.clone(),
        conditioning,
        cells,
    })
}

/// Mean of `dx/dt` conditioned on the earlier cell.
pub fn empirical_forward_drift(before: &Ensemble, after: &Ensemble) -> Result<DriftEstimate> {
    drift_estimate(before, after, Conditioning::Earlier)
}

/// Mean of `dx/dt` conditioned on the later cell.
pub fn empirical_backward_drift(before: &Ensemble, after: &Ensemble) -> Result<DriftEstimate> {
    drift_estimate(before, after, Conditioning::Later)
}
