//! One Monte Carlo draw: network, activities, pilots, received signals, detector runs.
//!
//! Random streams: every draw `r` of an experiment with master seed `s` uses
//! `ChaCha8(s)` on stream `(r << 8) | purpose`, with purpose 0 for geometry
//! and activities, 1 for pilots and `2 + j` for the fading and noise at AP `j`.
//! Streams do not depend on the grid point or the detector line-up, so every
//! detector and every grid point sees the same underlying draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detect::{
    penalty_from_moments, run_detector, CellPrior, DetectionProblem, DetectionResult, DetectorConfig, Estimator, Mode,
    XPenalty,
};
use crate::error::{Error, Result};
use crate::geometry::{build_hex_layout, sample_cell_devices, sample_interferers, CellDevices, NetworkRealization};
use crate::harness::spec::{BaseParams, DetectorKind, PriorSpec};
use crate::priors::{interference_moments, ApMoments, MvbPrior};
use crate::signal::{gen_pilots, synthesize_ap, Observation, PilotSet};

pub const PURPOSE_WORLD: u64 = 0;
pub const PURPOSE_PILOTS: u64 = 1;

/// Stream purpose of AP `j`.
pub fn purpose_ap(j: usize) -> u64 {
    2 + j as u64
}

/// Child stream for `(realization, purpose)` under `seed`.
pub fn stream_rng(seed: u64, realization: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((realization << 8) | purpose);
    rng
}

/// Everything shared by all draws at one grid point.
#[derive(Debug, Clone)]
pub struct PointContext {
    pub base: BaseParams,
    pub prior: PriorSpec,
    /// Prior of the typical cell (`None` when `p_a` is 0 or 1).
    pub cell0_prior: Option<MvbPrior>,
    pub neighbor_prior: Option<MvbPrior>,
    pub moments_noncoop: ApMoments,
    /// Seven entries when cooperative detectors are present.
    pub moments_coop: Option<Vec<ApMoments>>,
}

impl PointContext {
    pub fn new(base: BaseParams, prior: PriorSpec, coop: bool) -> Result<Self> {
        base.validate()?;
        let interior = base.p_a > 0.0 && base.p_a < 1.0;
        let cell0_prior = if interior {
            Some(prior.build(base.n0, base.p_a)?)
        } else {
            None
        };
        let neighbor_prior = if interior && base.n_neighbor > 0 {
            Some(prior.build(base.n_neighbor, base.p_a)?)
        } else {
            None
        };
        let moments_noncoop = interference_moments(base.lambda, base.r, base.alpha, base.quad_tol, false)?.per_ap[0];
        let moments_coop = if coop {
            Some(interference_moments(base.lambda, base.r, base.alpha, base.quad_tol, true)?.per_ap)
        } else {
            None
        };
        Ok(PointContext {
            base,
            prior,
            cell0_prior,
            neighbor_prior,
            moments_noncoop,
            moments_coop,
        })
    }

    fn sample_activity(&self, prior: Option<&MvbPrior>, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
        match prior {
            Some(p) => p.sample(rng),
            None => Ok(vec![self.base.p_a >= 1.0; n]),
        }
    }

    /// Network and activities of draw `idx`.
    ///
    /// Neighbor cells hold `n_neighbor` devices each; the point process fills
    /// the disk of radius `r_max` outside every populated cell.
    pub fn draw_world(&self, seed: u64, idx: u64) -> Result<NetworkRealization> {
        let b = &self.base;
        let layout = build_hex_layout(b.r)?;
        let mut rng = stream_rng(seed, idx, PURPOSE_WORLD);
        let mut cells = Vec::with_capacity(7);
        let positions = sample_cell_devices(&mut rng, b.n0, 0, &layout);
        let active = self.sample_activity(self.cell0_prior.as_ref(), b.n0, &mut rng)?;
        cells.push(CellDevices { positions, active });
        for j in 1..7 {
            let positions = sample_cell_devices(&mut rng, b.n_neighbor, j, &layout);
            let active = if b.n_neighbor > 0 {
                self.sample_activity(self.neighbor_prior.as_ref(), b.n_neighbor, &mut rng)?
            } else {
                Vec::new()
            };
            cells.push(CellDevices { positions, active });
        }
        let exclusion: Vec<usize> = (0..7).filter(|&j| j == 0 || b.n_neighbor > 0).collect();
        let interferers = sample_interferers(&mut rng, b.lambda, &layout, &exclusion, b.r_max())?;
        Ok(NetworkRealization {
            layout,
            cells,
            interferers,
            alpha: b.alpha,
        })
    }
}

/// Signals of one draw.
#[derive(Debug, Clone)]
pub struct Draw {
    pub world: NetworkRealization,
    /// Pilots of every transmitter, interferers included.
    pub pilots: PilotSet,
    /// Observation per AP; only the APs requested are synthesized.
    pub observations: Vec<Option<Observation>>,
    /// `gains[j]`: path loss from every transmitter to AP `j` (requested APs only).
    pub gains: Vec<Option<Vec<f64>>>,
}

impl Draw {
    /// Activities of the typical cell.
    pub fn truth(&self) -> &[bool] {
        &self.world.cells[0].active
    }
}

/// Draws network, pilots and the received signals at the first `num_aps` APs.
pub fn draw(ctx: &PointContext, seed: u64, idx: u64, num_aps: usize) -> Result<Draw> {
    let world = ctx.draw_world(seed, idx)?;
    let mut prng = stream_rng(seed, idx, PURPOSE_PILOTS);
    let pilots = gen_pilots(&mut prng, ctx.base.l, world.num_total())?;
    let active: Vec<bool> = world.transmitters().map(|(_, a, _)| a).collect();
    let noise = ctx.base.noise_power();
    let mut observations = vec![None; 7];
    let mut gains = vec![None; 7];
    for j in 0..num_aps {
        let g = world.gains_to(j)?;
        let mut rng = stream_rng(seed, idx, purpose_ap(j));
        observations[j] = Some(synthesize_ap(&pilots, &g, &active, ctx.base.m, noise, false, &mut rng)?);
        gains[j] = Some(g);
    }
    Ok(Draw {
        world,
        pilots,
        observations,
        gains,
    })
}

/// Detection problem for one detector on one draw.
pub fn build_problem(ctx: &PointContext, kind: DetectorKind, d: &Draw) -> Result<DetectionProblem> {
    let b = &ctx.base;
    let (aps, n): (Vec<usize>, usize) = match kind.mode {
        Mode::Noncoop => (vec![0], b.n0),
        Mode::Coop => ((0..7).collect(), d.world.num_cell_devices()),
    };
    let cols: Vec<usize> = (0..n).collect();
    let mut gains = Vec::with_capacity(aps.len());
    let mut covs = Vec::with_capacity(aps.len());
    for &j in &aps {
        let g = d.gains[j]
            .as_ref()
            .ok_or_else(|| Error::InvalidInput(format!("AP {j} was not synthesized for this draw")))?;
        gains.push(g[..n].to_vec());
        covs.push(
            d.observations[j]
                .as_ref()
                .expect("observation present with gains")
                .cov
                .clone(),
        );
    }
    let mut priors = Vec::new();
    let mut x_priors = Vec::new();
    if kind.estimator == Estimator::Map {
        let p0 = ctx
            .cell0_prior
            .clone()
            .ok_or_else(|| Error::param("base.p_a", "MAP detection needs 0 < p_a < 1"))?;
        priors.push(CellPrior { offset: 0, prior: p0 });
        match kind.mode {
            Mode::Noncoop => x_priors.push(penalty_from_moments(&ctx.moments_noncoop, b.m)),
            Mode::Coop => {
                if let Some(np) = &ctx.neighbor_prior {
                    for j in 1..7 {
                        priors.push(CellPrior {
                            offset: d.world.cell_offset(j),
                            prior: np.clone(),
                        });
                    }
                }
                let mom = ctx
                    .moments_coop
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("cooperative moments were not computed".into()))?;
                x_priors.extend(mom.iter().map(|m| penalty_from_moments(m, b.m)));
            }
        }
    } else {
        x_priors = vec![XPenalty::NONE; aps.len()];
    }
    Ok(DetectionProblem {
        mode: kind.mode,
        estimator: kind.estimator,
        pilots: d.pilots.select(&cols),
        gains,
        covs,
        noise: b.noise_power(),
        m: b.m,
        priors,
        x_priors,
        freeze_x: kind.freeze_x,
    })
}

/// Soft activities of the typical cell from one detector run, or the abort reason.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutcome {
    pub soft: std::result::Result<Vec<f64>, String>,
    pub iterations: usize,
    pub converged: bool,
}

/// Ground truth plus one outcome per detector.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationOutcome {
    pub index: u64,
    pub truth: Vec<bool>,
    pub outcomes: Vec<DetectorOutcome>,
}

/// Runs every detector on draw `idx`; detector failures are recorded, not propagated.
pub fn run_realization(
    ctx: &PointContext,
    detectors: &[DetectorKind],
    cfg: &DetectorConfig,
    seed: u64,
    idx: u64,
) -> Result<RealizationOutcome> {
    let num_aps = if detectors.iter().any(|k| k.mode == Mode::Coop) {
        7
    } else {
        1
    };
    let d = draw(ctx, seed, idx, num_aps)?;
    let n0 = ctx.base.n0;
    let outcomes = detectors
        .iter()
        .map(|&kind| {
            let res: Result<DetectionResult> = build_problem(ctx, kind, &d).and_then(|p| run_detector(&p, cfg));
            match res {
                Ok(r) => DetectorOutcome {
                    soft: Ok(r.a[..n0].to_vec()),
                    iterations: r.iterations,
                    converged: r.converged,
                },
                Err(e) => {
                    log::warn!("realization {idx}, detector {kind}: {e}");
                    DetectorOutcome {
                        soft: Err(format!("realization {idx}, detector {kind}: {e}")),
                        iterations: 0,
                        converged: false,
                    }
                }
            }
        })
        .collect();
    Ok(RealizationOutcome {
        index: idx,
        truth: d.truth().to_vec(),
        outcomes,
    })
}
