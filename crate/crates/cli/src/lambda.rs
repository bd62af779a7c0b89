//! Moving one extra sampling time `λ` through the window.

use std::fmt::Write as _;

use tspmp_core::scalar::bisect;
use tspmp_core::{ScaleGenerator, SolverKind};

use crate::error::{CliError, CliResult};
use crate::run::solve_one;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRow {
    pub lambda: f64,
    pub u_start: f64,
    pub u_lambda: f64,
    pub c: f64,
}

/// Which control is watched for saturation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Watched {
    Start,
    Lambda,
}

impl Watched {
    pub fn label(self) -> &'static str {
        match self {
            Watched::Start => "u(a)",
            Watched::Lambda => "u(lambda)",
        }
    }

    fn value(self, row: &LambdaRow) -> f64 {
        match self {
            Watched::Start => row.u_start,
            Watched::Lambda => row.u_lambda,
        }
    }
}

/// A value of `λ` at which the watched control enters or leaves a bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub watched: Watched,
    pub band: f64,
    pub lambda: f64,
    /// Whether the control is saturated just above `lambda`.
    pub saturated_above: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSweep {
    pub rows: Vec<LambdaRow>,
    pub thresholds: Vec<Threshold>,
}

impl LambdaSweep {
    pub fn table_csv(&self) -> String {
        let mut s = String::from("lambda,u_a,u_lambda,C\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                r.lambda, r.u_start, r.u_lambda, r.c
            );
        }
        s
    }

    pub fn thresholds_csv(&self) -> String {
        let mut s = String::from("control,band,lambda,saturated_above\n");
        for t in &self.thresholds {
            let _ = writeln!(
                s,
                "{},{:e},{:.10},{}",
                t.watched.label(),
                t.band,
                t.lambda,
                t.saturated_above
            );
        }
        s
    }

    pub fn threshold(&self, watched: Watched, band: f64) -> Vec<f64> {
        self.thresholds
            .iter()
            .filter(|t| t.watched == watched && t.band == band)
            .map(|t| t.lambda)
            .collect()
    }
}

/// Evenly spaced `λ` values from `from` to `to`, both included.
pub fn lambda_grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![from];
    }
    (0..steps)
        .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
        .collect()
}

struct Solver<'a> {
    base: &'a Scenario,
    h: Option<f64>,
}

impl Solver<'_> {
    fn row(&self, lambda: f64) -> CliResult<LambdaRow> {
        let mut sc = self.base.clone();
        sc.control_scale = ScaleGenerator::Union {
            parts: vec![
                self.base.control_scale.clone(),
                ScaleGenerator::Points {
                    values: vec![lambda],
                },
            ],
        };
        let err = |source| CliError::Solve {
            scenario: format!("{} with lambda = {lambda}", self.base.name),
            source,
        };
        let problem = sc.problem().map_err(err)?;
        let h = sc.step(&problem, self.h);
        let res = solve_one(&sc, &problem, SolverKind::Sweep, h).map_err(err)?;
        let at = |t| {
            res.control.value_at(t).map(|u| u[0]).map_err(err)
        };
        Ok(LambdaRow {
            lambda,
            u_start: at(problem.a)?,
            u_lambda: at(lambda)?,
            c: res.consumption_c,
        })
    }
}

fn saturated(u: f64, lo: f64, hi: f64, band: f64) -> bool {
    (u - lo).abs() <= band || (u - hi).abs() <= band
}

/// Solves the base scenario with `λ` added to the sampling times for every
/// grid value, then locates each saturation change to `1e-8` by bisection,
/// once per band in `bands`.
pub fn sweep_lambda(
    base: &Scenario,
    grid: &[f64],
    bands: &[f64],
    step_override: Option<f64>,
) -> CliResult<LambdaSweep> {
    if base.omega.dim() != 1 {
        return Err(CliError::InvalidArgument(
            "the lambda sweep needs a scalar control".into(),
        ));
    }
    let (lo, hi) = (base.omega.lo[0], base.omega.hi[0]);
    let solver = Solver {
        base,
        h: step_override,
    };
    let rows = grid
        .iter()
        .map(|&l| solver.row(l))
        .collect::<CliResult<Vec<_>>>()?;
    let mut thresholds = Vec::new();
    for &band in bands {
        for watched in [Watched::Start, Watched::Lambda] {
            for pair in rows.windows(2) {
                let s0 = saturated(watched.value(&pair[0]), lo, hi, band);
                let s1 = saturated(watched.value(&pair[1]), lo, hi, band);
                if s0 == s1 {
                    continue;
                }
                let mut failure = None;
                let indicator = |l: f64| match solver.row(l) {
                    Ok(r) if saturated(watched.value(&r), lo, hi, band) == s0 => -1.0,
                    Ok(_) => 1.0,
                    Err(e) => {
                        failure.get_or_insert(e);
                        1.0
                    }
                };
                let lambda = bisect(indicator, pair[0].lambda, pair[1].lambda, 1e-8);
                if let Some(e) = failure {
                    return Err(e);
                }
                thresholds.push(Threshold {
                    watched,
                    band,
                    lambda,
                    saturated_above: s1,
                });
            }
        }
    }
    Ok(LambdaSweep { rows, thresholds })
}
