//! Evaluation harness: runs registration methods over a corrupted test set
//! and aggregates the pose and point-distance metrics.

use std::time::Instant;

use serde::Serialize;

use crate::data::{make_pair, CorruptionConfig, Pair, Shape};
use crate::env::{ActionVector, Episode, EpisodeConfig, StepOutcome, StepTrace};
use crate::error::{Error, Result};
use crate::expert::{Expert, ExpertKind};
use crate::geometry::{apply_rigid, chamfer, diameter, PointCloud, RigidTransform};
use crate::icp::{icp, IcpConfig};
use crate::metrics::{adi, adi_auc, PoseError};
use crate::model::{argmax_action, encode, forward_with_target, sample_action, AgentParams, PolicyOutput};
use crate::par;
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Icp,
    /// The expert with access to ground truth; an oracle, not a competitor.
    Expert,
    /// The agent sampling from its policy.
    Agent,
    /// The agent taking the most likely step on every axis.
    AgentArgmax,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Icp, Method::Expert, Method::Agent, Method::AgentArgmax];

    pub fn name(self) -> &'static str {
        match self {
            Method::Icp => "icp",
            Method::Expert => "expert",
            Method::Agent => "agent",
            Method::AgentArgmax => "agent-argmax",
        }
    }

    pub fn needs_agent(self) -> bool {
        matches!(self, Method::Agent | Method::AgentArgmax)
    }

    /// Parses a comma-separated list such as `icp,agent,expert`.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let methods = s
            .split(',')
            .map(str::trim)
            .filter(|m| !m.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        if methods.is_empty() {
            return Err(Error::invalid("no evaluation methods given"));
        }
        Ok(methods)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// A corrupted test pair with cached model diameter.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub id: String,
    pub pair: Pair,
    pub diameter: f64,
}

/// Corrupts every shape once; item `i` uses the stream `(seed, i)`.
pub fn make_eval_set(shapes: &[Shape], corruption: &CorruptionConfig, seed: u64) -> Result<Vec<EvalItem>> {
    if shapes.is_empty() {
        return Err(Error::invalid("evaluation dataset is empty"));
    }
    let items = par::map_range(shapes.len(), |i| {
        let s = &shapes[i];
        let pair = make_pair(&s.cloud, corruption, &mut stream(seed, &[i as u64]))?;
        let d = diameter(&s.cloud);
        Ok(EvalItem {
            id: s.id.clone(),
            pair,
            diameter: d,
        })
    });
    items.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    Sample,
    Argmax,
}

/// Rolls the agent out until the episode horizon. `on_step` sees the policy
/// output, the chosen action and the outcome of every step.
pub fn run_agent(
    params: &AgentParams,
    episode: &mut Episode,
    mode: PolicyMode,
    rng: &mut Rng,
    mut on_step: impl FnMut(&Episode, &PolicyOutput, &ActionVector, &StepOutcome) -> Result<()>,
) -> Result<()> {
    let target = encode(params, episode.target());
    while !episode.is_done() {
        let out = forward_with_target(params, episode.current(), &target);
        if !out.is_finite() {
            return Err(Error::Numerical("non-finite policy output".into()));
        }
        let action = match mode {
            PolicyMode::Sample => sample_action(&out, rng),
            PolicyMode::Argmax => argmax_action(&out),
        };
        let outcome = episode.step(&action)?;
        on_step(episode, &out, &action, &outcome)?;
    }
    Ok(())
}

/// Per-step trace of an agent rollout, including the action distributions.
pub fn trace_agent(params: &AgentParams, episode: &mut Episode, mode: PolicyMode, rng: &mut Rng) -> Result<Vec<StepTrace>> {
    let mut traces = Vec::new();
    run_agent(params, episode, mode, rng, |ep, out, action, outcome| {
        let mut t = StepTrace::new(ep.step_count(), action, outcome, ep.accumulator())?;
        t.distributions = Some(out.probabilities());
        traces.push(t);
        Ok(())
    })?;
    Ok(traces)
}

/// Everything a method may need besides the pair itself.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub params: Option<&'a AgentParams>,
    pub episode: EpisodeConfig,
    pub icp: IcpConfig,
    pub expert: ExpertKind,
}

/// Metrics of a single registration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ItemResult {
    pub pose: PoseError,
    /// ADI divided by the model diameter.
    pub adi_rel: f64,
    pub modified_chamfer: f64,
    /// Sum of step rewards, for episode-based methods.
    pub episode_reward: Option<f64>,
    /// Fraction of sub-actions that matched the expert label, for the agent.
    pub expert_agreement: Option<f64>,
    pub ms: f64,
    /// False when ICP found no usable correspondences and fell back to the
    /// identity.
    pub converged: bool,
}

/// Modified Chamfer distance of the registered source, using the clean
/// model in both frames.
pub fn registration_chamfer(pair: &Pair, estimate: &RigidTransform) -> Result<f64> {
    let x = apply_rigid(&pair.source, estimate);
    let x_clean = apply_rigid(&pair.clean, &estimate.compose(&pair.truth));
    Ok(chamfer(&x, &pair.clean)? + chamfer(&pair.target, &x_clean)?)
}

fn score(item: &EvalItem, estimate: &RigidTransform) -> Result<(PoseError, f64, f64)> {
    let pair = &item.pair;
    let goal = pair.truth.inverse();
    let pose = PoseError::between(estimate, &goal)?;
    let est_model = apply_rigid(&pair.clean, &estimate.compose(&pair.truth));
    let adi_rel = adi(&est_model, &pair.clean) / item.diameter;
    Ok((pose, adi_rel, registration_chamfer(pair, estimate)?))
}

/// Registers one item with one method.
pub fn evaluate_item(method: Method, item: &EvalItem, ctx: &EvalContext<'_>, rng: &mut Rng) -> Result<ItemResult> {
    let pair = &item.pair;
    let start = Instant::now();
    let mut reward = None;
    let mut agreement = None;
    let mut converged = true;
    let estimate = match method {
        Method::Icp => match icp(&pair.source, &pair.target, &ctx.icp, &RigidTransform::identity()) {
            Ok(r) => r.transform,
            Err(Error::NoCorrespondences { .. } | Error::DegenerateInput(_)) => {
                converged = false;
                RigidTransform::identity()
            }
            Err(e) => return Err(e),
        },
        Method::Expert => {
            let mut ep = Episode::reset(pair.source.clone(), pair.target.clone(), Some(pair.truth), ctx.episode)?;
            let mut total = 0.0;
            while !ep.is_done() {
                let a = ctx.expert.label(&ep)?;
                total += ep.step(&a)?.reward.unwrap_or(0.0);
            }
            reward = Some(total);
            ep.estimate()
        }
        Method::Agent | Method::AgentArgmax => {
            let params = ctx
                .params
                .ok_or_else(|| Error::invalid("agent evaluation needs a checkpoint"))?;
            let mode = if method == Method::Agent { PolicyMode::Sample } else { PolicyMode::Argmax };
            let mut ep = Episode::reset(pair.source.clone(), pair.target.clone(), Some(pair.truth), ctx.episode)?;
            let (mut total, mut matched, mut steps) = (0.0, 0usize, 0usize);
            let target = encode(params, ep.target());
            while !ep.is_done() {
                let out = forward_with_target(params, ep.current(), &target);
                if !out.is_finite() {
                    return Err(Error::Numerical("non-finite policy output".into()));
                }
                let action = match mode {
                    PolicyMode::Sample => sample_action(&out, rng),
                    PolicyMode::Argmax => argmax_action(&out),
                };
                matched += action.matches(&ctx.expert.label(&ep)?);
                steps += 1;
                total += ep.step(&action)?.reward.unwrap_or(0.0);
            }
            reward = Some(total);
            agreement = Some(matched as f64 / (6 * steps.max(1)) as f64);
            ep.estimate()
        }
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let (pose, adi_rel, modified_chamfer) = score(item, &estimate)?;
    Ok(ItemResult {
        pose,
        adi_rel,
        modified_chamfer,
        episode_reward: reward,
        expert_agreement: agreement,
        ms,
        converged,
    })
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub mae_r: f64,
    pub mae_t: f64,
    pub iso_r: f64,
    pub iso_t: f64,
    pub adi_auc: f64,
    pub modified_chamfer: f64,
    pub mean_reward: Option<f64>,
    pub expert_agreement: Option<f64>,
    pub ms_per_registration: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n.max(1) as f64
}

pub fn summarize(method: Method, results: &[ItemResult]) -> Result<MethodSummary> {
    let adi: Vec<f64> = results.iter().map(|r| r.adi_rel).collect();
    let optional = |f: fn(&ItemResult) -> Option<f64>| {
        let v: Vec<f64> = results.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| mean(v.into_iter()))
    };
    Ok(MethodSummary {
        method: method.name().to_string(),
        mae_r: mean(results.iter().map(|r| r.pose.mae_rot)),
        mae_t: mean(results.iter().map(|r| r.pose.mae_trans)),
        iso_r: mean(results.iter().map(|r| r.pose.iso_rot)),
        iso_t: mean(results.iter().map(|r| r.pose.iso_trans)),
        adi_auc: adi_auc(&adi, 1.0)?,
        modified_chamfer: mean(results.iter().map(|r| r.modified_chamfer)),
        mean_reward: optional(|r| r.episode_reward),
        expert_agreement: optional(|r| r.expert_agreement),
        ms_per_registration: mean(results.iter().map(|r| r.ms)),
    })
}

/// Runs every method on every item. Item `i` under method `m` draws from
/// the stream `(seed, m, i)`, so results do not depend on scheduling.
pub fn evaluate(methods: &[Method], items: &[EvalItem], ctx: &EvalContext<'_>, seed: u64) -> Result<Vec<(MethodSummary, Vec<ItemResult>)>> {
    if items.is_empty() {
        return Err(Error::invalid("evaluation dataset is empty"));
    }
    if methods.iter().any(|m| m.needs_agent()) && ctx.params.is_none() {
        return Err(Error::invalid("agent evaluation needs a checkpoint"));
    }
    methods
        .iter()
        .map(|&m| {
            let tag = Method::ALL.iter().position(|x| *x == m).unwrap() as u64;
            let results = par::map_range(items.len(), |i| {
                evaluate_item(m, &items[i], ctx, &mut stream(seed, &[tag, i as u64]))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            Ok((summarize(m, &results)?, results))
        })
        .collect()
}

pub const CSV_COLUMNS: [&str; 8] = [
    "method",
    "mae_r",
    "mae_t",
    "iso_r",
    "iso_t",
    "adi_auc",
    "modified_chamfer",
    "ms_per_registration",
];

/// The result table as CSV. Timing is the last column, so stripping it
/// leaves a deterministic document.
pub fn to_csv(rows: &[MethodSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in rows {
        let values = [r.mae_r, r.mae_t, r.iso_r, r.iso_t, r.adi_auc, r.modified_chamfer];
        let mut record = vec![r.method.clone()];
        record.extend(values.iter().map(f64::to_string));
        record.push(format!("{:.3}", r.ms_per_registration));
        w.write_record(&record).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// The observed clouds registered by `estimate`, for callers that want to
/// write them out.
pub fn registered_source(source: &PointCloud, estimate: &RigidTransform) -> PointCloud {
    apply_rigid(source, estimate)
}
