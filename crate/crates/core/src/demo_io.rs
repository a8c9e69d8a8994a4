//! Demonstration recording and the on-disk formats for trajectories,
//! policies, and discriminator checkpoints.
//!
//! All formats are JSON text whose reals are written as shortest round-trip
//! decimals, so save followed by load reproduces every `f64` bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discriminator::MlpDiscriminator;
use crate::envs::{rollout, Env, EnvKind, EnvSpec, RewardSource, Trajectory, EVAL_STREAM};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng, RunningStats};
use crate::policy::{BcDataset, LinearPolicy, ObservationNormalizer};

pub const FORMAT_VERSION: u64 = 1;

/// Expert demonstrations for one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub env_name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(
        env_name: impl Into<String>,
        state_dim: usize,
        action_dim: usize,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self> {
        let set = Self {
            env_name: env_name.into(),
            state_dim,
            action_dim,
            trajectories,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories.is_empty() {
            return Err(Error::Empty("trajectory set"));
        }
        for (i, t) in self.trajectories.iter().enumerate() {
            validate_trajectory(t, self.state_dim, self.action_dim)
                .map_err(|e| prefix(e, &format!("trajectory {i}")))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Keeps only the first `episodes` trajectories.
    pub fn truncated(&self, episodes: usize) -> Result<Self> {
        Self::new(
            self.env_name.clone(),
            self.state_dim,
            self.action_dim,
            self.trajectories.iter().take(episodes).cloned().collect(),
        )
    }

    pub fn check_env(&self, spec: &EnvSpec) -> Result<()> {
        if self.state_dim != spec.state_dim {
            return Err(Error::dims(
                "demonstrations state_dim",
                spec.state_dim,
                self.state_dim,
            ));
        }
        if self.action_dim != spec.action_dim {
            return Err(Error::dims(
                "demonstrations action_dim",
                spec.action_dim,
                self.action_dim,
            ));
        }
        if self.env_name != spec.name() {
            return Err(Error::Validation(format!(
                "demonstrations recorded on `{}`, expected `{}`",
                self.env_name,
                spec.name()
            )));
        }
        Ok(())
    }

    /// Mean stored env return. Audit only; training never reads it.
    pub fn mean_env_return(&self) -> f64 {
        self.trajectories
            .iter()
            .map(Trajectory::env_return)
            .sum::<f64>()
            / self.trajectories.len() as f64
    }

    pub fn bc_dataset(&self) -> BcDataset {
        let states = self
            .trajectories
            .iter()
            .flat_map(|t| t.states.iter().cloned())
            .collect();
        let actions = self
            .trajectories
            .iter()
            .flat_map(|t| t.actions.iter().cloned())
            .collect();
        BcDataset { states, actions }
    }

    /// Normalizer fitted to every demonstrated state.
    pub fn state_normalizer(&self) -> Result<ObservationNormalizer> {
        let mut norm = ObservationNormalizer::new(self.state_dim);
        for t in &self.trajectories {
            norm.observe_all(&t.states)?;
        }
        Ok(norm)
    }
}

fn prefix(e: Error, ctx: &str) -> Error {
    match e {
        Error::Validation(m) => Error::Validation(format!("{ctx}: {m}")),
        Error::NonFinite(m) => Error::NonFinite(format!("{ctx}: {m}")),
        other => other,
    }
}

fn validate_trajectory(t: &Trajectory, n: usize, p: usize) -> Result<()> {
    let len = t.states.len();
    if len == 0 {
        return Err(Error::Validation("empty trajectory".into()));
    }
    if t.actions.len() != len || t.env_rewards.len() != len {
        return Err(Error::Validation(format!(
            "lengths differ: {} states, {} actions, {} rewards",
            len,
            t.actions.len(),
            t.env_rewards.len()
        )));
    }
    for (k, s) in t.states.iter().enumerate() {
        if s.len() != n {
            return Err(Error::dims("trajectory state row", n, s.len()));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("state {k}")));
        }
    }
    for (k, a) in t.actions.iter().enumerate() {
        if a.len() != p {
            return Err(Error::dims("trajectory action row", p, a.len()));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("action {k}")));
        }
    }
    if t.env_rewards.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("env reward".into()));
    }
    Ok(())
}

/// Records `episodes` env-reward rollouts with a frozen normalizer. Episode `k`
/// uses the same stream as [`evaluate`](crate::envs::evaluate) episode `k`.
pub fn record(
    policy: &LinearPolicy,
    normalizer: &ObservationNormalizer,
    env: &Env,
    episodes: usize,
    seed: u64,
) -> Result<TrajectorySet> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be >= 1".into()));
    }
    let mut env_instance = env.clone();
    let trajectories = (0..episodes as u64)
        .map(|k| {
            let mut rng = Rng::new(seed, &[EVAL_STREAM, k]);
            rollout(
                &mut env_instance,
                policy,
                normalizer,
                RewardSource::Environment,
                &mut rng,
                true,
            )
            .map(|o| o.trajectory)
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = env.spec();
    TrajectorySet::new(spec.name(), spec.state_dim, spec.action_dim, trajectories)
}

#[derive(Serialize, Deserialize)]
struct TrajectoryHeader {
    format_version: u64,
    env: String,
    state_dim: usize,
    action_dim: usize,
    episodes: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryLine {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    env_rewards: Vec<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_line<T: for<'de> Deserialize<'de>>(text: &str, line: usize) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("finite values serialize")
}

pub fn trajectories_to_string(set: &TrajectorySet) -> Result<String> {
    set.validate()?;
    let header = TrajectoryHeader {
        format_version: FORMAT_VERSION,
        env: set.env_name.clone(),
        state_dim: set.state_dim,
        action_dim: set.action_dim,
        episodes: set.trajectories.len(),
    };
    let mut out = to_json(&header);
    out.push('\n');
    for t in &set.trajectories {
        let line = TrajectoryLine {
            states: t.states.clone(),
            actions: t.actions.clone(),
            env_rewards: t.env_rewards.clone(),
        };
        out.push_str(&to_json(&line));
        out.push('\n');
    }
    Ok(out)
}

pub fn trajectories_from_str(text: &str) -> Result<TrajectorySet> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines
        .next()
        .filter(|(_, l)| !l.trim().is_empty())
        .ok_or(Error::Parse {
            line: 1,
            message: "missing metadata header".into(),
        })?;
    let version: serde_json::Value = parse_line(first, 1)?;
    if let Some(found) = version.get("format_version").and_then(|v| v.as_u64()) {
        if found != FORMAT_VERSION {
            return Err(Error::Version {
                found,
                expected: FORMAT_VERSION,
            });
        }
    }
    let header: TrajectoryHeader = parse_line(first, 1)?;
    if header.state_dim == 0 || header.action_dim == 0 {
        return Err(Error::Validation(
            "state_dim and action_dim must be >= 1".into(),
        ));
    }
    let mut trajectories = Vec::with_capacity(header.episodes);
    for k in 0..header.episodes {
        let (line_no, text) = match lines.next() {
            Some(l) => l,
            None => {
                return Err(Error::Parse {
                    line: k + 2,
                    message: format!("file ends after {k} of {} trajectories", header.episodes),
                })
            }
        };
        let parsed: TrajectoryLine = parse_line(text, line_no)?;
        let t = Trajectory {
            states: parsed.states,
            actions: parsed.actions,
            env_rewards: parsed.env_rewards,
        };
        validate_trajectory(&t, header.state_dim, header.action_dim)
            .map_err(|e| prefix(e, &format!("line {line_no}")))?;
        trajectories.push(t);
    }
    if let Some((line_no, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        let _ = extra;
        return Err(Error::Parse {
            line: line_no,
            message: format!("more trajectories than the declared {}", header.episodes),
        });
    }
    TrajectorySet::new(
        header.env,
        header.state_dim,
        header.action_dim,
        trajectories,
    )
}

pub fn save_trajectories(set: &TrajectorySet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_file(path, &trajectories_to_string(set)?)
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<TrajectorySet> {
    let path = path.as_ref();
    trajectories_from_str(&fs::read_to_string(path).map_err(io_err(path))?)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDocument {
    format_version: u64,
    env: String,
    state_dim: usize,
    action_dim: usize,
    theta: Vec<Vec<f64>>,
    mu: Vec<f64>,
    var: Vec<f64>,
    count: u64,
}

/// A persisted policy with the normalizer it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFile {
    pub env: EnvKind,
    pub policy: LinearPolicy,
    pub normalizer: ObservationNormalizer,
}

pub fn policy_to_string(
    env: EnvKind,
    policy: &LinearPolicy,
    normalizer: &ObservationNormalizer,
) -> Result<String> {
    let spec = env.spec();
    if policy.state_dim() != spec.state_dim || policy.action_dim() != spec.action_dim {
        return Err(Error::Validation(format!(
            "policy is {}x{}, env {} needs {}x{}",
            policy.action_dim(),
            policy.state_dim(),
            env,
            spec.action_dim,
            spec.state_dim
        )));
    }
    if normalizer.dim() != spec.state_dim {
        return Err(Error::dims(
            "policy normalizer",
            spec.state_dim,
            normalizer.dim(),
        ));
    }
    let doc = PolicyDocument {
        format_version: FORMAT_VERSION,
        env: env.name().to_string(),
        state_dim: spec.state_dim,
        action_dim: spec.action_dim,
        theta: policy.theta().to_rows(),
        mu: normalizer.stats().mean().to_vec(),
        var: normalizer.stats().variance(),
        count: normalizer.count(),
    };
    let mut s = to_json(&doc);
    s.push('\n');
    Ok(s)
}

/// Parses a policy document; when `expected` is given the document must match it.
pub fn policy_from_str(text: &str, expected: Option<EnvKind>) -> Result<PolicyFile> {
    let raw: serde_json::Value = parse_line(text, 1)?;
    if let Some(found) = raw.get("format_version").and_then(|v| v.as_u64()) {
        if found != FORMAT_VERSION {
            return Err(Error::Version {
                found,
                expected: FORMAT_VERSION,
            });
        }
    }
    let doc: PolicyDocument = serde_json::from_value(raw).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let env: EnvKind = doc.env.parse()?;
    let spec = env.spec();
    if doc.state_dim != spec.state_dim || doc.action_dim != spec.action_dim {
        return Err(Error::Validation(format!(
            "policy declares {}x{} but {} is {}x{}",
            doc.action_dim, doc.state_dim, env, spec.action_dim, spec.state_dim
        )));
    }
    if let Some(want) = expected {
        if want != env {
            return Err(Error::Validation(format!(
                "policy was trained for `{env}`, not `{want}`"
            )));
        }
    }
    if doc.theta.len() != spec.action_dim {
        return Err(Error::dims(
            "policy theta rows",
            spec.action_dim,
            doc.theta.len(),
        ));
    }
    let theta = Matrix::from_rows(&doc.theta)?;
    if theta.cols() != spec.state_dim {
        return Err(Error::dims(
            "policy theta cols",
            spec.state_dim,
            theta.cols(),
        ));
    }
    if doc.mu.len() != spec.state_dim {
        return Err(Error::dims("policy mu", spec.state_dim, doc.mu.len()));
    }
    let stats = RunningStats::from_parts(doc.count, doc.mu, doc.var)?;
    Ok(PolicyFile {
        env,
        policy: LinearPolicy::new(theta)?,
        normalizer: ObservationNormalizer::from_stats(stats),
    })
}

pub fn save_policy(
    env: EnvKind,
    policy: &LinearPolicy,
    normalizer: &ObservationNormalizer,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_file(path.as_ref(), &policy_to_string(env, policy, normalizer)?)
}

pub fn load_policy(path: impl AsRef<Path>, expected: Option<EnvKind>) -> Result<PolicyFile> {
    let path = path.as_ref();
    policy_from_str(&fs::read_to_string(path).map_err(io_err(path))?, expected)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscDocument {
    format_version: u64,
    state_dim: usize,
    action_dim: usize,
    hidden: usize,
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
    w3: Vec<f64>,
    b3: f64,
}

pub fn discriminator_to_string(disc: &MlpDiscriminator) -> String {
    let l = disc.layers();
    let doc = DiscDocument {
        format_version: FORMAT_VERSION,
        state_dim: disc.state_dim(),
        action_dim: disc.action_dim(),
        hidden: disc.hidden(),
        w1: l.w1.to_rows(),
        b1: l.b1.to_vec(),
        w2: l.w2.to_rows(),
        b2: l.b2.to_vec(),
        w3: l.w3.to_vec(),
        b3: l.b3,
    };
    let mut s = to_json(&doc);
    s.push('\n');
    s
}

pub fn discriminator_from_str(text: &str) -> Result<MlpDiscriminator> {
    let raw: serde_json::Value = parse_line(text, 1)?;
    if let Some(found) = raw.get("format_version").and_then(|v| v.as_u64()) {
        if found != FORMAT_VERSION {
            return Err(Error::Version {
                found,
                expected: FORMAT_VERSION,
            });
        }
    }
    let doc: DiscDocument = serde_json::from_value(raw).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if doc.b1.len() != doc.hidden {
        return Err(Error::dims(
            "discriminator hidden",
            doc.hidden,
            doc.b1.len(),
        ));
    }
    MlpDiscriminator::from_layers(
        doc.state_dim,
        doc.action_dim,
        Matrix::from_rows(&doc.w1)?,
        doc.b1,
        Matrix::from_rows(&doc.w2)?,
        doc.b2,
        doc.w3,
        doc.b3,
    )
}

pub fn save_discriminator(disc: &MlpDiscriminator, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &discriminator_to_string(disc))
}

pub fn load_discriminator(path: impl AsRef<Path>) -> Result<MlpDiscriminator> {
    let path = path.as_ref();
    discriminator_from_str(&fs::read_to_string(path).map_err(io_err(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::evaluate;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn sample_set() -> TrajectorySet {
        let env = Env::new(EnvKind::Lqr2d);
        let policy = LinearPolicy::new(Matrix::from_rows(&[vec![-1.0, -1.5]]).unwrap()).unwrap();
        record(&policy, &ObservationNormalizer::new(2), &env, 3, 7).unwrap()
    }

    #[test]
    fn record_shapes_and_matches_evaluate() {
        let env = Env::new(EnvKind::Lqr2d);
        let policy = LinearPolicy::new(Matrix::from_rows(&[vec![-2.0, -3.0]]).unwrap()).unwrap();
        let norm = ObservationNormalizer::new(2);
        let set = record(&policy, &norm, &env, 10, 4).unwrap();
        assert_eq!(set.len(), 10);
        assert!(set.trajectories.iter().all(|t| t.len() == 100));
        let eval = evaluate(&policy, &norm, &env, 10, 4).unwrap();
        assert!((set.mean_env_return() - eval.mean).abs() < 1e-12);
        assert_eq!(
            trajectories_to_string(&set).unwrap(),
            trajectories_to_string(&record(&policy, &norm, &env, 10, 4).unwrap()).unwrap()
        );
    }

    #[test]
    fn trajectory_round_trip() {
        let set = sample_set();
        let text = trajectories_to_string(&set).unwrap();
        assert_eq!(trajectories_from_str(&text).unwrap(), set);
        assert!(text.lines().next().unwrap().contains("\"episodes\":3"));
    }

    #[test]
    fn truncated_file_names_line() {
        let text = trajectories_to_string(&sample_set()).unwrap();
        let cut: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        match trajectories_from_str(&cut) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let mid = &text[..text.len() - 40];
        match trajectories_from_str(mid) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_row_width_rejected() {
        let text = trajectories_to_string(&sample_set()).unwrap();
        let bad = text.replacen("\"state_dim\":2", "\"state_dim\":3", 1);
        assert!(matches!(
            trajectories_from_str(&bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn version_and_finiteness_errors_are_distinct() {
        let text = trajectories_to_string(&sample_set()).unwrap();
        let bad = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(
            trajectories_from_str(&bad),
            Err(Error::Version { found: 2, .. })
        ));
        let mut t = sample_set();
        t.trajectories[0].env_rewards[0] = f64::INFINITY;
        assert!(matches!(t.validate(), Err(Error::NonFinite(_))));
        let huge = text.replacen("\"env_rewards\":[", "\"env_rewards\":[1e999,", 1);
        assert!(trajectories_from_str(&huge).is_err());
    }

    #[test]
    fn empty_set_rejected() {
        let header = "{\"format_version\":1,\"env\":\"lqr2d\",\"state_dim\":2,\"action_dim\":1,\"episodes\":0}\n";
        assert!(matches!(
            trajectories_from_str(header),
            Err(Error::Empty(_))
        ));
        assert!(trajectories_from_str("").is_err());
    }

    #[test]
    fn policy_round_trip_and_env_check() {
        let mut rng = Rng::new(3, &[]);
        let policy = LinearPolicy::new(rng.gaussian_matrix(1, 2)).unwrap();
        let mut norm = ObservationNormalizer::new(2);
        for _ in 0..37 {
            norm.observe(&[rng.gaussian(), 3.0 * rng.gaussian()])
                .unwrap();
        }
        let text = policy_to_string(EnvKind::Lqr2d, &policy, &norm).unwrap();
        let back = policy_from_str(&text, Some(EnvKind::Lqr2d)).unwrap();
        assert_eq!(back.policy, policy);
        assert_eq!(back.normalizer.count(), 37);
        assert_eq!(back.normalizer.stats().mean(), norm.stats().mean());
        assert_eq!(back.normalizer.stats().variance(), norm.stats().variance());
        assert_eq!(
            policy_to_string(EnvKind::Lqr2d, &back.policy, &back.normalizer).unwrap(),
            text
        );
        assert!(policy_from_str(&text, Some(EnvKind::Pendulum)).is_err());
        assert!(policy_to_string(EnvKind::Pendulum, &policy, &norm).is_err());
    }

    #[test]
    fn discriminator_round_trip() {
        let d = MlpDiscriminator::with_hidden(2, 1, 7, &mut Rng::new(1, &[])).unwrap();
        let back = discriminator_from_str(&discriminator_to_string(&d)).unwrap();
        assert_eq!(back, d);
        let bad = discriminator_to_string(&d).replacen("\"hidden\":7", "\"hidden\":8", 1);
        assert!(discriminator_from_str(&bad).is_err());
    }

    proptest! {
        #[test]
        fn policy_text_round_trip_is_bit_exact(
            theta in prop::collection::vec(-1e6f64..1e6, 4),
            xs in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 0..20),
        ) {
            let policy = LinearPolicy::new(Matrix::from_vec(2, 4, [theta.clone(), theta].concat()).unwrap()).unwrap();
            let mut norm = ObservationNormalizer::new(4);
            for x in &xs { norm.observe(x).unwrap(); }
            let text = policy_to_string(EnvKind::PointMass2d, &policy, &norm).unwrap();
            let back = policy_from_str(&text, None).unwrap();
            prop_assert_eq!(&back.policy, &policy);
            prop_assert_eq!(back.normalizer.stats().variance(), norm.stats().variance());
            prop_assert_eq!(policy_to_string(EnvKind::PointMass2d, &back.policy, &back.normalizer).unwrap(), text);
        }
    }
}
