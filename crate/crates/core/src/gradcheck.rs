//! Central finite-difference checks for reverse-mode gradients.

use rand::seq::index::sample;

use crate::autodiff::ParamSet;
use crate::decoupler::{Batch, DecouplerModel, LossValues, Objective};
use crate::error::{Error, Result};
use crate::math::RngStream;

/// Below this magnitude both gradients count as zero and the absolute
/// difference is reported instead of a relative one.
pub const ZERO_GRADIENT: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mismatch {
    /// Which parameter set (position in the checked list).
    pub set: usize,
    pub coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<Mismatch>,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale < ZERO_GRADIENT {
        diff
    } else {
        diff / scale
    }
}

/// Compares `analytic` with central differences of `f` on `coords` randomly
/// chosen distinct coordinates spread over all sets.
pub fn check<F>(
    params: &[ParamSet],
    analytic: &[ParamSet],
    mut f: F,
    coords: usize,
    h: f64,
    rng: &mut RngStream,
) -> Result<GradCheck>
where
    F: FnMut(&[ParamSet]) -> Result<f64>,
{
    if params.len() != analytic.len() || params.iter().zip(analytic).any(|(p, a)| !p.same_shape(a)) {
        return Err(Error::Shape("gradient sets do not match parameter sets".into()));
    }
    let sizes: Vec<usize> = params.iter().map(ParamSet::total_count).collect();
    let total: usize = sizes.iter().sum();
    let mut report = GradCheck::default();
    let mut work = params.to_vec();
    for flat in sample(rng, total, coords.min(total)).into_iter() {
        let (mut set, mut coordinate) = (0, flat);
        while coordinate >= sizes[set] {
            coordinate -= sizes[set];
            set += 1;
        }
        let original = *work[set].iter().nth(coordinate).expect("in range");
        *work[set].iter_mut().nth(coordinate).expect("in range") = original + h;
        let up = f(&work)?;
        *work[set].iter_mut().nth(coordinate).expect("in range") = original - h;
        let down = f(&work)?;
        *work[set].iter_mut().nth(coordinate).expect("in range") = original;
        let numeric = (up - down) / (2.0 * h);
        let a = *analytic[set].iter().nth(coordinate).expect("in range");
        let err = rel_error(a, numeric);
        report.checked += 1;
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some(Mismatch {
                set,
                coordinate,
                analytic: a,
                numeric,
            });
        }
    }
    Ok(report)
}

fn pick(values: &LossValues, objective: Objective) -> f64 {
    match objective {
        Objective::L1 => values.l1,
        Objective::L2 => values.l2,
        Objective::L3 => values.l3,
        Objective::L4 => values.l4,
        Objective::Joint => values.joint,
    }
}

/// Finite-difference check of one decoupler objective over the networks
/// it depends on. Sets are numbered encoder, decoder, aligner, adversary.
pub fn check_decoupler(
    model: &DecouplerModel,
    batch: &Batch<'_>,
    objective: Objective,
    coords: usize,
    h: f64,
    rng: &mut RngStream,
) -> Result<GradCheck> {
    let nets: &[usize] = match objective {
        Objective::L1 => &[0, 1],
        Objective::L2 => &[0, 2],
        Objective::L3 => &[0],
        Objective::L4 => &[0, 3],
        Objective::Joint => &[0, 1, 2, 3],
    };
    let (_, grads) = model.gradients(batch, objective)?;
    let p = &model.params;
    let all = [&p.encoder.params, &p.decoder.params, &p.aligner.params, &p.adversary.params];
    let params: Vec<ParamSet> = nets.iter().map(|&i| all[i].clone()).collect();
    let analytic: Vec<ParamSet> = nets.iter().map(|&i| grads[i].clone()).collect();
    let mut probe = model.clone();
    check(
        &params,
        &analytic,
        |ps| {
            for (&i, p) in nets.iter().zip(ps) {
                let slot = match i {
                    0 => &mut probe.params.encoder.params,
                    1 => &mut probe.params.decoder.params,
                    2 => &mut probe.params.aligner.params,
                    _ => &mut probe.params.adversary.params,
                };
                slot.clone_from(p);
            }
            Ok(pick(&probe.losses(batch)?, objective))
        },
        coords,
        h,
        rng,
    )
}
