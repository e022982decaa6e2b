//! Sensor positions from manual length/bearing surveys.
//!
//! Bearings are degrees clockwise from North with North = +y, so a bearing of
//! 90° points along +x. The reference node is pinned at the origin; absolute
//! bearings fix rotation, so the problem has no remaining gauge freedom.

use nalgebra::{DMatrix, DVector, Point2};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::{LinkKey, NodeId, NodeRecord};
use crate::error::{Result, RtiError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyMeasurement<T> {
    pub link: LinkKey,
    pub length: T,
    pub angle_deg: T,
}

impl<T: Scalar> SurveyMeasurement<T> {
    pub fn new(link: LinkKey, length: T, angle_deg: T) -> Result<Self> {
        if link.tx == link.rx {
            return Err(RtiError::InvalidParameter(format!(
                "survey link {link} has identical endpoints"
            )));
        }
        if !(length > T::zero()) || !length.is_finite_value() {
            return Err(RtiError::InvalidParameter(format!(
                "survey length for {link} must be positive"
            )));
        }
        Ok(Self {
            link,
            length,
            angle_deg: normalize_degrees(angle_deg),
        })
    }
}

/// Measurement variances of the survey process (m² and deg²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyNoiseConfig<T> {
    pub var_length: T,
    pub var_angle: T,
}

impl<T: Scalar> Default for SurveyNoiseConfig<T> {
    fn default() -> Self {
        Self {
            var_length: T::of(0.5),
            var_angle: T::of(5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub relative_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            relative_tolerance: 1e-9,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocateResult<T> {
    pub nodes: Vec<NodeRecord<T>>,
    /// Objective after the chained initial estimate and after every iteration.
    pub objective_history: Vec<T>,
    pub iterations: usize,
}

impl<T: Scalar> LocateResult<T> {
    pub fn position(&self, id: NodeId) -> Option<Point2<T>> {
        self.nodes.iter().find(|n| n.id == id).map(|n| n.position())
    }

    pub fn objective(&self) -> T {
        *self.objective_history.last().expect("history is never empty")
    }
}

/// Wraps an angle in degrees to `[0, 360)`.
pub fn normalize_degrees<T: Scalar>(deg: T) -> T {
    let full = T::of(360.0);
    let r = deg % full;
    if r < T::zero() {
        r + full
    } else {
        r
    }
}

/// Wraps an angle difference in degrees to `(-180, 180]`.
pub fn wrap_difference<T: Scalar>(deg: T) -> T {
    let half = T::of(180.0);
    let r = normalize_degrees(deg);
    if r > half {
        r - T::of(360.0)
    } else {
        r
    }
}

/// Bearing of `to` seen from `from`, degrees clockwise from +y.
pub fn bearing_deg<T: Scalar>(from: &Point2<T>, to: &Point2<T>) -> T {
    let d = to - from;
    normalize_degrees(d.x.atan2(d.y) * T::of(180.0) / T::pi())
}

/// Weighted sum of squared length and bearing residuals.
pub fn survey_objective<T: Scalar>(
    survey: &[SurveyMeasurement<T>],
    noise: &SurveyNoiseConfig<T>,
    positions: &BTreeMap<NodeId, Point2<T>>,
) -> T {
    let mut length_sum = T::zero();
    let mut angle_sum = T::zero();
    for m in survey {
        let (a, b) = (positions[&m.link.tx], positions[&m.link.rx]);
        let dl = m.length - nalgebra::distance(&a, &b);
        let da = wrap_difference(m.angle_deg - bearing_deg(&a, &b));
        length_sum += dl * dl;
        angle_sum += da * da;
    }
    length_sum / noise.var_length + angle_sum / noise.var_angle
}

/// Places every node by walking the survey in order from the reference node,
/// each measurement extending the placed set by at most one node.
pub fn chain_initial_positions<T: Scalar>(
    survey: &[SurveyMeasurement<T>],
    reference: NodeId,
    nodes: &BTreeSet<NodeId>,
) -> Result<BTreeMap<NodeId, Point2<T>>> {
    let mut placed = BTreeMap::new();
    placed.insert(reference, Point2::origin());
    loop {
        let mut progressed = false;
        for m in survey {
            let rad = m.angle_deg * T::pi() / T::of(180.0);
            let step = nalgebra::Vector2::new(rad.sin(), rad.cos()) * m.length;
            match (placed.get(&m.link.tx).copied(), placed.get(&m.link.rx).copied()) {
                (Some(a), None) => {
                    placed.insert(m.link.rx, a + step);
                    progressed = true;
                }
                (None, Some(b)) => {
                    placed.insert(m.link.tx, b - step);
                    progressed = true;
                }
                _ => {}
            }
        }
        if placed.len() == nodes.len() {
            return Ok(placed);
        }
        if !progressed {
            let missing = nodes.iter().filter(|n| !placed.contains_key(n)).copied().collect();
            return Err(RtiError::DisconnectedSurvey(missing));
        }
    }
}

/// Maximum-likelihood node positions from a length/bearing survey.
///
/// Initial estimates come from chaining the measurements outward from the
/// reference node; a damped Gauss–Newton refinement then uses every
/// measurement. Each accepted step never increases the objective.
pub fn estimate_node_positions<T: Scalar>(
    survey: &[SurveyMeasurement<T>],
    noise: &SurveyNoiseConfig<T>,
    reference: NodeId,
    options: &SolverOptions,
) -> Result<LocateResult<T>> {
    if !(noise.var_length > T::zero() && noise.var_angle > T::zero()) {
        return Err(RtiError::InvalidParameter(
            "survey variances must be positive".into(),
        ));
    }
    let nodes: BTreeSet<NodeId> = survey
        .iter()
        .flat_map(|m| [m.link.tx, m.link.rx])
        .chain(std::iter::once(reference))
        .collect();
    let mut positions = chain_initial_positions(survey, reference, &nodes)?;

    let free: Vec<NodeId> = nodes.iter().copied().filter(|&n| n != reference).collect();
    let column: BTreeMap<NodeId, usize> = free.iter().enumerate().map(|(i, &n)| (n, 2 * i)).collect();
    let sd = noise.var_length.sqrt();
    let sa = noise.var_angle.sqrt();
    let rad_to_deg = T::of(180.0) / T::pi();

    let mut objective = survey_objective(survey, noise, &positions);
    let mut history = vec![objective];
    let tiny = T::of(1e-24);

    for iteration in 1..=options.max_iterations {
        if objective <= tiny {
            return Ok(finish(positions, history, iteration - 1));
        }
        let rows = 2 * survey.len();
        let mut jac = DMatrix::<T>::zeros(rows, 2 * free.len());
        let mut res = DVector::<T>::zeros(rows);
        for (i, m) in survey.iter().enumerate() {
            let (a, b) = (positions[&m.link.tx], positions[&m.link.rx]);
            let d = b - a;
            let r2 = d.norm_squared();
            let r = r2.sqrt();
            let u = d / r;
            res[2 * i] = (m.length - r) / sd;
            res[2 * i + 1] = wrap_difference(m.angle_deg - bearing_deg(&a, &b)) / sa;
            // d(bearing)/d(rx) in degrees; tx gets the negation.
            let gb = nalgebra::Vector2::new(d.y / r2, -d.x / r2) * rad_to_deg;
            for (node, sign) in [(m.link.rx, T::one()), (m.link.tx, -T::one())] {
                if let Some(&c) = column.get(&node) {
                    jac[(2 * i, c)] -= sign * u.x / sd;
                    jac[(2 * i, c + 1)] -= sign * u.y / sd;
                    jac[(2 * i + 1, c)] -= sign * gb.x / sa;
                    jac[(2 * i + 1, c + 1)] -= sign * gb.y / sa;
                }
            }
        }
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let gradient = &jt * &res;
        let mut damping = T::zero();
        let step = loop {
            let mut system = normal.clone();
            for k in 0..system.nrows() {
                system[(k, k)] += damping;
            }
            if let Some(chol) = system.cholesky() {
                break chol.solve(&(-&gradient));
            }
            damping = if damping == T::zero() { T::of(1e-9) } else { damping * T::of(10.0) };
            if damping > T::of(1e6) {
                return Err(RtiError::NotConverged {
                    iterations: iteration,
                    objective: objective.as_f64(),
                });
            }
        };

        let mut scale = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = positions.clone();
            for (&node, &c) in &column {
                let p = trial.get_mut(&node).expect("free node placed");
                p.x += scale * step[c];
                p.y += scale * step[c + 1];
            }
            let value = survey_objective(survey, noise, &trial);
            if value <= objective {
                accepted = Some((trial, value));
                break;
            }
            scale *= T::of(0.5);
        }
        let Some((trial, value)) = accepted else {
            // No descent direction left: we are at the minimum to precision.
            return Ok(finish(positions, history, iteration - 1));
        };
        let decrease = (objective - value) / objective.max(tiny);
        positions = trial;
        objective = value;
        history.push(objective);
        if decrease < T::of(options.relative_tolerance) {
            return Ok(finish(positions, history, iteration));
        }
    }
    Err(RtiError::NotConverged {
        iterations: options.max_iterations,
        objective: objective.as_f64(),
    })
}

fn finish<T: Scalar>(
    positions: BTreeMap<NodeId, Point2<T>>,
    objective_history: Vec<T>,
    iterations: usize,
) -> LocateResult<T> {
    LocateResult {
        nodes: positions
            .into_iter()
            .map(|(id, p)| NodeRecord::new(id, p.x, p.y))
            .collect(),
        objective_history,
        iterations,
    }
}
