//! Expert policies that see the ground truth and label every step.
//!
//! Both experts decide each axis independently from the residual between the
//! accumulator and the registration goal. The steady expert takes the largest
//! step that does not overshoot the signed error; the greedy expert takes the
//! step closest to the error.

use serde::{Deserialize, Serialize};

use crate::env::{ActionVector, Episode, StepTable, N_AXES, N_STEPS, STOP_INDEX};
use crate::error::{Error, Result};
use crate::geometry::{rotation_to_euler, EulerAngles, RigidTransform, TransformAccumulator, TransformMode, Vec3};

/// Remaining rotation (as Euler angles, radians) and translation between the
/// accumulator and the goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualError {
    pub rot: EulerAngles,
    pub trans: Vec3,
}

impl ResidualError {
    pub fn zero() -> Self {
        Self {
            rot: EulerAngles::default(),
            trans: Vec3::zeros(),
        }
    }

    /// Rotation components followed by translation components.
    pub fn components(&self) -> [f64; 2 * N_AXES] {
        [self.rot.x, self.rot.y, self.rot.z, self.trans.x, self.trans.y, self.trans.z]
    }
}

/// Residual of `acc` with respect to `goal`, the rigid transform that maps
/// the initial observed source onto the target frame.
///
/// In the disentangled modes the goal translation is first expressed about
/// the rotation origin, `t_d = t - μ + R μ`. For the global mode the rotation
/// residual is `R_goal R_accᵀ` (the step that would finish when
/// left-multiplied); for the local mode it is `R_accᵀ R_goal`. The basic mode
/// uses the homogeneous step `[R_goal R_accᵀ, t_goal - δR t_acc]`.
pub fn residual(goal: &RigidTransform, acc: &TransformAccumulator) -> Result<ResidualError> {
    let rg = goal.rotation;
    let ri = acc.rotation;
    let (delta_r, delta_t) = match acc.mode {
        TransformMode::Global | TransformMode::Local => {
            let mu = acc.origin;
            let t_d = goal.translation - mu + rg * mu;
            let dr = if acc.mode == TransformMode::Global {
                rg * ri.transpose()
            } else {
                ri.transpose() * rg
            };
            (dr, t_d - acc.translation)
        }
        TransformMode::Basic => {
            let dr = rg * ri.transpose();
            (dr, goal.translation - dr * acc.translation)
        }
    };
    Ok(ResidualError {
        rot: rotation_to_euler(&delta_r)?,
        trans: delta_t,
    })
}

/// Largest step with the sign of `error` whose magnitude does not exceed
/// `|error|`; stop when `|error|` is below the smallest step.
pub fn steady_index(error: f64, table: &StepTable) -> usize {
    let mut best = STOP_INDEX;
    if error > 0.0 {
        for i in STOP_INDEX + 1..N_STEPS {
            if table.get(i) <= error {
                best = i;
            }
        }
    } else if error < 0.0 {
        for i in (0..STOP_INDEX).rev() {
            if table.get(i) >= error {
                best = i;
            }
        }
    }
    best
}

/// Step closest to `error`; ties go to the smaller magnitude.
pub fn greedy_index(error: f64, table: &StepTable) -> usize {
    // Visit candidates in order of increasing magnitude so strict improvement breaks ties.
    let mut best = STOP_INDEX;
    let mut best_gap = error.abs();
    for k in 1..=STOP_INDEX {
        for i in [STOP_INDEX + k, STOP_INDEX - k] {
            let gap = (error - table.get(i)).abs();
            if gap < best_gap {
                best = i;
                best_gap = gap;
            }
        }
    }
    best
}

fn per_axis(res: &ResidualError, table: &StepTable, rule: fn(f64, &StepTable) -> usize) -> ActionVector {
    let c = res.components();
    ActionVector {
        rot: [rule(c[0], table), rule(c[1], table), rule(c[2], table)],
        trans: [rule(c[3], table), rule(c[4], table), rule(c[5], table)],
    }
}

pub fn steady_action(res: &ResidualError, table: &StepTable) -> ActionVector {
    per_axis(res, table, steady_index)
}

pub fn greedy_action(res: &ResidualError, table: &StepTable) -> ActionVector {
    per_axis(res, table, greedy_index)
}

/// A policy that labels a residual with an action.
pub trait Expert {
    fn act(&self, res: &ResidualError, table: &StepTable) -> ActionVector;

    /// Label for the current state of an episode with known ground truth.
    fn label(&self, episode: &Episode) -> Result<ActionVector> {
        let goal = episode
            .goal()
            .ok_or_else(|| Error::InvalidState("expert needs the ground-truth pose".into()))?;
        let res = residual(&goal, episode.accumulator())?;
        Ok(self.act(&res, &episode.config().table))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpertKind {
    #[default]
    Steady,
    Greedy,
}

impl Expert for ExpertKind {
    fn act(&self, res: &ResidualError, table: &StepTable) -> ActionVector {
        match self {
            ExpertKind::Steady => steady_action(res, table),
            ExpertKind::Greedy => greedy_action(res, table),
        }
    }
}

impl std::str::FromStr for ExpertKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steady" => Ok(Self::Steady),
            "greedy" => Ok(Self::Greedy),
            other => Err(Error::invalid(format!("unknown expert '{other}'"))),
        }
    }
}

/// Runs an episode to its horizon following `expert`, returning the
/// residual before each step and after the last one.
pub fn rollout(expert: &impl Expert, episode: &mut Episode) -> Result<Vec<ResidualError>> {
    let goal = episode
        .goal()
        .ok_or_else(|| Error::InvalidState("expert rollout needs the ground-truth pose".into()))?;
    let mut history = vec![residual(&goal, episode.accumulator())?];
    while !episode.is_done() {
        let a = expert.act(history.last().unwrap(), &episode.config().table);
        episode.step(&a)?;
        history.push(residual(&goal, episode.accumulator())?);
    }
    Ok(history)
}
