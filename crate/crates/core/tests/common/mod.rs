//! Closed-form consumption oracle and random instances shared by the
//! integration tests.
//!
//! On a grid interval of length `d` with the control `u` held, `q' = u q`
//! and `f⁰ = (u − 1) q` integrate exactly, so the cost of any sampled
//! control can be evaluated without a time stepper.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tspmp_core::problem::CellKind;
use tspmp_core::timescale::Segment;
use tspmp_core::{ControlProblem, DVector, SampledControl, TimeScale, VariationRequest};

/// Exact `q⁰(b)` for the consumption dynamics from `q(a) = q_a`.
pub fn exact_cost(ctrl: &SampledControl, q_a: f64) -> f64 {
    exact_run(ctrl, q_a).1
}

/// Exact `(q(b), q⁰(b))`.
pub fn exact_run(ctrl: &SampledControl, q_a: f64) -> (f64, f64) {
    let nodes = &ctrl.mesh().nodes;
    let (mut q, mut cost) = (q_a, 0.0);
    for k in 0..nodes.len() - 1 {
        let u = ctrl.on_interval(k)[0];
        if nodes[k].class.is_scattered() {
            let mu = nodes[k].class.graininess;
            cost += mu * (u - 1.0) * q;
            q *= 1.0 + mu * u;
        } else {
            let d = nodes[k + 1].t - nodes[k].t;
            let grown = if u == 0.0 { d } else { (u * d).exp_m1() / u };
            cost += (u - 1.0) * q * grown;
            q *= (u * d).exp();
        }
    }
    (q, cost)
}

/// Copy of `base` with the value at the cell starting at `r` replaced.
pub fn with_cell_value(base: &SampledControl, problem: &ControlProblem, r: f64, v: f64) -> SampledControl {
    let mut out = base.clone();
    let c = base.mesh().cell_starting_at(r).expect("cell start");
    out.set_cell_value(c, &DVector::from_element(1, v), &problem.omega);
    out
}

/// `base` with a needle of value `z` on `[s, s + eps)`, realized on the
/// mesh of `base` refined by one extra node at `s + eps`.
pub fn with_needle(
    base: &SampledControl,
    problem: &ControlProblem,
    h: f64,
    s: f64,
    eps: f64,
    z: f64,
) -> SampledControl {
    let mut breaks: Vec<f64> = base.mesh().times().collect();
    breaks.push(s + eps);
    let mesh = problem.mesh(h, &breaks).unwrap();
    SampledControl::from_cells(mesh, &problem.omega, |cell| {
        if (cell.start - s).abs() < 1e-12 {
            DVector::from_element(1, z)
        } else {
            base.value_at(0.5 * (cell.start + cell.end)).unwrap().clone()
        }
    })
}

/// One-sided difference quotient with one Richardson step.
pub fn richardson<F: Fn(f64) -> f64>(f: F, step: f64) -> f64 {
    let f0 = f(0.0);
    let d1 = (f(step) - f0) / step;
    let d2 = (f(step / 2.0) - f0) / (step / 2.0);
    2.0 * d2 - d1
}

/// Step used by the random variation instances.
pub const H: f64 = 0.02;

pub fn dv(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> (ControlProblem, SampledControl) {
    let periods = [1.0, 2.0, 3.0, 4.0, 6.0];
    let family = rng.gen_range(0..3);
    let problem = match family {
        0 => ControlProblem::consumption(
            TimeScale::interval(0.0, 12.0).unwrap(),
            TimeScale::uniform(0.0, periods[rng.gen_range(0..5)], 12.0).unwrap(),
        ),
        1 => ControlProblem::consumption(
            TimeScale::integers(0, 12).unwrap(),
            TimeScale::uniform(0.0, periods[rng.gen_range(0..5)], 12.0).unwrap(),
        ),
        _ => ControlProblem::consumption(
            TimeScale::interval(0.0, 12.0).unwrap(),
            TimeScale::new(vec![
                Segment::new(0.0, 6.0),
                Segment::new(10.0, 10.0),
                Segment::new(11.5, 12.0),
            ])
            .unwrap(),
        ),
    }
    .unwrap();
    let mesh = problem.mesh(H, &[]).unwrap();
    let ctrl = SampledControl::from_cells(mesh, &problem.omega, |_| dv(rng.gen_range(0.05..0.95)));
    (problem, ctrl)
}

pub fn random_request(rng: &mut ChaCha8Rng, ctrl: &SampledControl) -> VariationRequest {
    let cells = &ctrl.mesh().cells;
    let pick = |rng: &mut ChaCha8Rng, kind: CellKind| {
        let idx: Vec<usize> = (0..cells.len()).filter(|&c| cells[c].kind == kind).collect();
        (!idx.is_empty()).then(|| idx[rng.gen_range(0..idx.len())])
    };
    let away_from = |rng: &mut ChaCha8Rng, u: f64| loop {
        let y: f64 = rng.gen_range(0.0..1.0);
        if (y - u).abs() > 0.1 {
            return y;
        }
    };
    match rng.gen_range(0..3) {
        0 => {
            if let Some(c) = pick(rng, CellKind::Dense) {
                let u = ctrl.cell_value(c)[0];
                return VariationRequest::Dense {
                    s: cells[c].start,
                    z: dv(away_from(rng, u)),
                };
            }
            VariationRequest::Initial {
                dq_a: dv(rng.gen_range(0.5..2.0)),
            }
        }
        1 => VariationRequest::Initial {
            dq_a: dv(rng.gen_range(0.5..2.0)),
        },
        _ => {
            let c = pick(rng, CellKind::Scattered).expect("every family has a scattered time");
            let u = ctrl.cell_value(c)[0];
            VariationRequest::Scattered {
                r: cells[c].start,
                y: dv(away_from(rng, u)),
            }
        }
    }
}

pub fn finite_difference(problem: &ControlProblem, ctrl: &SampledControl, req: &VariationRequest) -> f64 {
    match req {
        VariationRequest::Scattered { r, y } => {
            let u = ctrl.value_at(*r).unwrap()[0];
            richardson(
                |a| exact_cost(&with_cell_value(ctrl, problem, *r, u + a * (y[0] - u)), 1.0),
                1e-3,
            )
        }
        VariationRequest::Dense { s, z } => {
            richardson(
                |e| {
                    if e == 0.0 {
                        exact_cost(ctrl, 1.0)
                    } else {
                        exact_cost(&with_needle(ctrl, problem, H, *s, e, z[0]), 1.0)
                    }
                },
                1e-4,
            )
        }
        VariationRequest::Initial { dq_a } => richardson(|a| exact_cost(ctrl, 1.0 + a * dq_a[0]), 1e-3),
    }
}


/// A scale built from `(gap, is_point, length)` triples laid end to end.
pub fn scale_from_parts(parts: &[(f64, bool, f64)]) -> TimeScale {
    let mut t = 0.0;
    let mut segs = Vec::new();
    for (i, &(gap, point, len)) in parts.iter().enumerate() {
        if i > 0 {
            t += gap;
        }
        let hi = if point { t } else { t + len };
        segs.push(Segment::new(t, hi));
        t = hi;
    }
    TimeScale::new(segs).unwrap()
}

/// A controlling subscale of `ts` keeping its start: each segment is either
/// kept whole or reduced to the point at fraction `cut` of its length.
pub fn subscale(ts: &TimeScale, keep: &[bool], cut: &[f64]) -> TimeScale {
    let mut pieces = vec![Segment::new(ts.start(), ts.start())];
    for ((s, &k), &c) in ts.segments().iter().zip(keep).zip(cut) {
        if k {
            pieces.push(*s);
        } else {
            let x = s.lo + c * s.len();
            pieces.push(Segment::new(x, x));
        }
    }
    TimeScale::from_pieces(pieces).unwrap()
}

/// The point at fraction `frac` of the segment selected by `pick ∈ [0, 1)`.
pub fn point_in(ts: &TimeScale, pick: f64, frac: f64) -> f64 {
    let segs = ts.segments();
    let s = segs[((pick * segs.len() as f64) as usize).min(segs.len() - 1)];
    s.lo + frac * s.len()
}

pub fn cubic(t: f64) -> f64 {
    1.0 - 2.0 * t + 0.5 * t * t - 0.1 * t * t * t
}
