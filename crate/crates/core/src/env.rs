//! The iterative registration environment.
//!
//! An [`Episode`] holds the initial observed source, the target and an
//! accumulator. Each [`ActionVector`] selects one of eleven steps per axis;
//! the decoded step is folded into the accumulator and the current source is
//! recomputed from the initial one. With a known ground truth every step is
//! scored by the change of the Chamfer distance to the true source.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    apply_accumulator, apply_rigid, chamfer, euler_to_rotation, rotation_to_euler, EulerAngles, Mat3, PointCloud,
    RigidTransform, TransformAccumulator, TransformMode, Vec3,
};

pub const N_STEPS: usize = 11;
pub const STOP_INDEX: usize = 5;
pub const N_AXES: usize = 3;

/// Step magnitudes: radians for rotation axes, scene units for translation.
pub const DEFAULT_STEPS: [f64; N_STEPS] = [-0.27, -0.09, -0.03, -0.01, -0.0033, 0.0, 0.0033, 0.01, 0.03, 0.09, 0.27];

/// Two CDs closer than this count as equal when scoring a step.
pub const REWARD_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTable {
    steps: [f64; N_STEPS],
}

impl Default for StepTable {
    fn default() -> Self {
        Self { steps: DEFAULT_STEPS }
    }
}

impl StepTable {
    /// Requires a strictly increasing table, antisymmetric about a zero centre.
    pub fn new(steps: [f64; N_STEPS]) -> Result<Self> {
        if steps[STOP_INDEX] != 0.0 {
            return Err(Error::invalid("centre step must be exactly zero"));
        }
        if !steps.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("steps must be strictly increasing"));
        }
        if (0..N_STEPS).any(|i| steps[i] != -steps[N_STEPS - 1 - i]) {
            return Err(Error::invalid("steps must be antisymmetric about the centre"));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[f64; N_STEPS] {
        &self.steps
    }

    pub fn get(&self, index: usize) -> f64 {
        self.steps[index]
    }

    /// Smallest non-zero step magnitude.
    pub fn min_step(&self) -> f64 {
        self.steps[STOP_INDEX + 1]
    }
}

/// One step index per rotation axis and per translation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionVector {
    pub rot: [usize; N_AXES],
    pub trans: [usize; N_AXES],
}

impl Default for ActionVector {
    fn default() -> Self {
        Self::stop()
    }
}

impl ActionVector {
    pub fn new(rot: [usize; N_AXES], trans: [usize; N_AXES]) -> Result<Self> {
        if rot.iter().chain(&trans).any(|&i| i >= N_STEPS) {
            return Err(Error::invalid(format!("action index out of range: {rot:?} {trans:?}")));
        }
        Ok(Self { rot, trans })
    }

    pub const fn stop() -> Self {
        Self {
            rot: [STOP_INDEX; N_AXES],
            trans: [STOP_INDEX; N_AXES],
        }
    }

    /// Rotation indices followed by translation indices.
    pub fn indices(&self) -> [usize; 2 * N_AXES] {
        [self.rot[0], self.rot[1], self.rot[2], self.trans[0], self.trans[1], self.trans[2]]
    }

    pub fn from_indices(idx: [usize; 2 * N_AXES]) -> Result<Self> {
        Self::new([idx[0], idx[1], idx[2]], [idx[3], idx[4], idx[5]])
    }

    /// Number of sub-actions equal to those of `other`.
    pub fn matches(&self, other: &ActionVector) -> usize {
        self.indices().iter().zip(other.indices()).filter(|(a, b)| **a == *b).count()
    }
}

pub fn decode_action(a: &ActionVector, table: &StepTable) -> RigidTransform {
    let angles = EulerAngles::new(table.get(a.rot[0]), table.get(a.rot[1]), table.get(a.rot[2]));
    RigidTransform {
        rotation: euler_to_rotation(&angles),
        translation: Vec3::new(table.get(a.trans[0]), table.get(a.trans[1]), table.get(a.trans[2])),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub eps_plus: f64,
    pub eps_zero: f64,
    pub eps_minus: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            eps_plus: 0.5,
            eps_zero: 0.1,
            eps_minus: 0.6,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.eps_plus, self.eps_zero, self.eps_minus];
        if !w.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::invalid("reward weights must be positive"));
        }
        if self.eps_minus <= self.eps_plus {
            return Err(Error::invalid("eps_minus must exceed eps_plus"));
        }
        Ok(())
    }
}

/// Step reward from the Chamfer distances before and after a step.
pub fn reward(cd_prev: f64, cd_curr: f64, w: &RewardWeights) -> f64 {
    if (cd_curr - cd_prev).abs() <= REWARD_TIE_TOL {
        -w.eps_zero
    } else if cd_curr < cd_prev {
        w.eps_plus
    } else {
        -w.eps_minus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub n_max: usize,
    pub mode: TransformMode,
    pub weights: RewardWeights,
    #[serde(skip)]
    pub table: StepTable,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            n_max: 10,
            mode: TransformMode::Global,
            weights: RewardWeights::default(),
            table: StepTable::default(),
        }
    }
}

/// Result of a single [`Episode::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub decoded: RigidTransform,
    /// Chamfer distance of the new source to the true source, if known.
    pub chamfer: Option<f64>,
    pub reward: Option<f64>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Episode {
    source0: PointCloud,
    target: PointCloud,
    truth: Option<RigidTransform>,
    true_source: Option<PointCloud>,
    current: PointCloud,
    acc: TransformAccumulator,
    step_count: usize,
    prev_cd: Option<f64>,
    config: EpisodeConfig,
}

impl Episode {
    /// Starts an episode. `truth` is the corruption that produced the
    /// observed source (`source = truth ⊗ clean`); it is only needed for
    /// rewards and expert labels.
    pub fn reset(
        source: PointCloud,
        target: PointCloud,
        truth: Option<RigidTransform>,
        config: EpisodeConfig,
    ) -> Result<Self> {
        if config.n_max == 0 {
            return Err(Error::invalid("n_max must be at least 1"));
        }
        let acc = TransformAccumulator::for_source(&source, config.mode);
        let true_source = truth.map(|t| apply_rigid(&source, &t.inverse()));
        let prev_cd = match &true_source {
            Some(ts) => Some(chamfer(&source, ts)?),
            None => None,
        };
        Ok(Self {
            current: source.clone(),
            source0: source,
            target,
            truth,
            true_source,
            acc,
            step_count: 0,
            prev_cd,
            config,
        })
    }

    pub fn step(&mut self, a: &ActionVector) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::InvalidState(format!(
                "episode finished after {} steps",
                self.step_count
            )));
        }
        let decoded = decode_action(a, &self.config.table);
        self.acc = self.acc.accumulate(&decoded);
        self.current = apply_accumulator(&self.source0, &self.acc);
        self.step_count += 1;
        let (cd, r) = match (&self.true_source, self.prev_cd) {
            (Some(ts), Some(prev)) => {
                let cd = chamfer(&self.current, ts)?;
                self.prev_cd = Some(cd);
                (Some(cd), Some(reward(prev, cd, &self.config.weights)))
            }
            _ => (None, None),
        };
        Ok(StepOutcome {
            decoded,
            chamfer: cd,
            reward: r,
            done: self.is_done(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.step_count >= self.config.n_max
    }

    /// The current observation `(source, target)`.
    pub fn observation(&self) -> (&PointCloud, &PointCloud) {
        (&self.current, &self.target)
    }

    pub fn source0(&self) -> &PointCloud {
        &self.source0
    }

    pub fn current(&self) -> &PointCloud {
        &self.current
    }

    pub fn target(&self) -> &PointCloud {
        &self.target
    }

    pub fn truth(&self) -> Option<&RigidTransform> {
        self.truth.as_ref()
    }

    /// The registration that maps the observed source back onto the target
    /// frame, `truth⁻¹`.
    pub fn goal(&self) -> Option<RigidTransform> {
        self.truth.map(|t| t.inverse())
    }

    pub fn accumulator(&self) -> &TransformAccumulator {
        &self.acc
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn prev_chamfer(&self) -> Option<f64> {
        self.prev_cd
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    /// Registration estimate so far, as a plain rigid transform on the
    /// observed source.
    pub fn estimate(&self) -> RigidTransform {
        self.acc.to_rigid()
    }
}

/// Row-major 3×3 matrix for JSON output.
pub fn mat_rows(m: &Mat3) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedStep {
    /// Euler angles in radians.
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccumulatorState {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub origin: [f64; 3],
}

impl From<&TransformAccumulator> for AccumulatorState {
    fn from(acc: &TransformAccumulator) -> Self {
        Self {
            rotation: mat_rows(&acc.rotation),
            translation: acc.translation.into(),
            origin: acc.origin.into(),
        }
    }
}

/// One line of a trajectory trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub rot_idx: [usize; 3],
    pub trans_idx: [usize; 3],
    pub decoded: DecodedStep,
    pub chamfer: Option<f64>,
    pub reward: Option<f64>,
    pub accumulator: AccumulatorState,
    /// Per-axis step probabilities (rx, ry, rz, tx, ty, tz), when a policy acted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distributions: Option<Vec<[f64; N_STEPS]>>,
}

impl StepTrace {
    pub fn new(step: usize, action: &ActionVector, outcome: &StepOutcome, acc: &TransformAccumulator) -> Result<Self> {
        let euler = rotation_to_euler(&outcome.decoded.rotation)?;
        Ok(Self {
            step,
            rot_idx: action.rot,
            trans_idx: action.trans,
            decoded: DecodedStep {
                rotation: euler.to_array(),
                translation: outcome.decoded.translation.into(),
            },
            chamfer: outcome.chamfer,
            reward: outcome.reward,
            accumulator: acc.into(),
            distributions: None,
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{centroid, rotation_x, rotation_z};
    use crate::rng::seeded;
    use rand::Rng;

    fn random_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
        PointCloud::new((0..n).map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()).unwrap()
    }

    #[test]
    fn default_table_is_valid_and_exact() {
        let t = StepTable::default();
        assert_eq!(StepTable::new(*t.steps()).unwrap(), t);
        assert_eq!(t.get(STOP_INDEX), 0.0);
        assert_eq!(t.min_step(), 0.0033);
        assert!(StepTable::new([0.0; 11]).is_err());
    }

    #[test]
    fn action_indices_are_range_checked() {
        assert!(ActionVector::new([0, 10, 5], [5, 5, 5]).is_ok());
        assert!(ActionVector::new([11, 5, 5], [5, 5, 5]).is_err());
    }

    #[test]
    fn decode_examples() {
        let t = StepTable::default();
        let stop = decode_action(&ActionVector::stop(), &t);
        assert_eq!(stop, RigidTransform::identity());

        let rx = decode_action(&ActionVector::new([10, 5, 5], [5, 5, 5]).unwrap(), &t);
        assert!((rx.rotation - rotation_x(0.27)).amax() < 1e-15);
        assert_eq!(rx.translation, Vec3::zeros());

        let tz = decode_action(&ActionVector::new([5, 5, 5], [5, 5, 0]).unwrap(), &t);
        assert_eq!(tz.rotation, Mat3::identity());
        assert_eq!(tz.translation, Vec3::new(0.0, 0.0, -0.27));
    }

    #[test]
    fn reward_cases() {
        let w = RewardWeights::default();
        assert_eq!(reward(1.0, 0.5, &w), 0.5);
        assert_eq!(reward(1.0, 1.0, &w), -0.1);
        assert_eq!(reward(0.5, 1.0, &w), -0.6);
        assert_eq!(reward(1.0, 1.0 + 1e-13, &w), -0.1);
        assert!(RewardWeights { eps_plus: 0.7, ..w }.validate().is_err());
        w.validate().unwrap();
    }

    #[test]
    fn reset_examples() {
        let mut rng = seeded(41);
        let src = random_cloud(&mut rng, 32);
        let tgt = random_cloud(&mut rng, 32);
        let ep = Episode::reset(src.clone(), tgt.clone(), Some(RigidTransform::identity()), EpisodeConfig::default()).unwrap();
        assert_eq!(ep.prev_chamfer(), Some(0.0));
        assert_eq!(ep.step_count(), 0);
        assert_eq!(ep.accumulator().rotation, Mat3::identity());
        assert_eq!(ep.accumulator().origin, centroid(&src));

        let truth = RigidTransform::new(rotation_z(0.4), Vec3::new(0.2, -0.1, 0.3)).unwrap();
        let ep = Episode::reset(src.clone(), tgt, Some(truth), EpisodeConfig::default()).unwrap();
        let inv = truth.inverse();
        let true_src: Vec<Vec3> = src.iter().map(|p| inv.rotation * p + inv.translation).collect();
        let mut brute = 0.0;
        for a in src.iter() {
            brute += true_src.iter().map(|b| (a - b).norm_squared()).fold(f64::INFINITY, f64::min);
        }
        assert!((ep.prev_chamfer().unwrap() - brute / 32.0).abs() < 1e-12);
    }

    #[test]
    fn stop_action_penalised_and_cloud_unchanged() {
        let mut rng = seeded(42);
        let src = random_cloud(&mut rng, 32);
        let truth = RigidTransform::from_translation(Vec3::new(0.1, 0.0, 0.0));
        let mut ep = Episode::reset(src.clone(), src.clone(), Some(truth), EpisodeConfig::default()).unwrap();
        let out = ep.step(&ActionVector::stop()).unwrap();
        assert_eq!(out.reward, Some(-0.1));
        for (a, b) in ep.current().iter().zip(src.iter()) {
            assert!((a - b).amax() < 1e-15);
        }
        assert!(!out.done);
    }

    #[test]
    fn cancelling_step_is_rewarded() {
        let mut rng = seeded(43);
        let clean = random_cloud(&mut rng, 32);
        let truth = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.27));
        let src = apply_rigid(&clean, &truth);
        let mut ep = Episode::reset(src, clean.clone(), Some(truth), EpisodeConfig::default()).unwrap();
        let out = ep.step(&ActionVector::new([5, 5, 5], [5, 5, 0]).unwrap()).unwrap();
        assert_eq!(out.reward, Some(0.5));
        assert!(out.chamfer.unwrap() < 1e-20);
    }

    #[test]
    fn fixed_horizon_and_finished_episode_errors() {
        let mut rng = seeded(44);
        let src = random_cloud(&mut rng, 16);
        let mut ep = Episode::reset(src.clone(), src, None, EpisodeConfig::default()).unwrap();
        for i in 0..10 {
            let out = ep.step(&ActionVector::stop()).unwrap();
            assert_eq!(out.done, i == 9);
            assert_eq!(out.reward, None);
        }
        assert!(matches!(ep.step(&ActionVector::stop()), Err(Error::InvalidState(_))));
    }

    #[test]
    fn rollout_matches_accumulator_oracle_and_is_reproducible() {
        let mut rng = seeded(45);
        let src = random_cloud(&mut rng, 40);
        let truth = RigidTransform::new(rotation_x(0.3), Vec3::new(0.1, 0.2, -0.1)).unwrap();
        let actions: Vec<ActionVector> = (0..10)
            .map(|_| {
                ActionVector::new(
                    [rng.random_range(0..11), rng.random_range(0..11), rng.random_range(0..11)],
                    [rng.random_range(0..11), rng.random_range(0..11), rng.random_range(0..11)],
                )
                .unwrap()
            })
            .collect();
        let run = |src: &PointCloud| {
            let mut ep = Episode::reset(src.clone(), src.clone(), Some(truth), EpisodeConfig::default()).unwrap();
            for a in &actions {
                let r = ep.step(a).unwrap().reward.unwrap();
                assert!(r == 0.5 || r == -0.1 || r == -0.6);
            }
            ep
        };
        let ep = run(&src);
        // Oracle: product of decoded steps under the global rule.
        let table = StepTable::default();
        let mut r = Mat3::identity();
        let mut t = Vec3::zeros();
        for a in &actions {
            let d = decode_action(a, &table);
            r = d.rotation * r;
            t += d.translation;
        }
        let mu = centroid(&src);
        for (p, q) in src.iter().zip(ep.current().iter()) {
            let want = r * (p - mu) + mu + t;
            assert!((want - q).amax() < 1e-9);
        }
        let again = run(&src);
        assert_eq!(again.accumulator(), ep.accumulator());
    }

    #[test]
    fn trace_line_is_json() {
        let mut rng = seeded(46);
        let src = random_cloud(&mut rng, 8);
        let mut ep = Episode::reset(src.clone(), src, Some(RigidTransform::identity()), EpisodeConfig::default()).unwrap();
        let a = ActionVector::new([6, 5, 5], [5, 5, 5]).unwrap();
        let out = ep.step(&a).unwrap();
        let line = StepTrace::new(1, &a, &out, ep.accumulator()).unwrap().to_json_line();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["rot_idx"][0], 6);
        assert_eq!(v["reward"], -0.6);
    }
}
