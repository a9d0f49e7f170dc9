//! Line-oriented text formats for datasets, networks, policies, critics and
//! fingerprint exports.
//!
//! Every file starts with a `<kind> <version>` magic line. Blank lines and
//! lines starting with `#` are ignored. Reals are written with 17 significant
//! digits (`{:.16e}`), which round-trips every `f64` bit-exactly.

use std::fmt::Write as _;
use std::iter::{Enumerate, Peekable};
use std::path::Path;
use std::str::Lines;

use trajaudit_core::critic::{Critic, CriticConfig};
use trajaudit_core::data::{Dataset, Trajectory, TrajectoryId, Transition};
use trajaudit_core::fingerprint::Fingerprint;
use trajaudit_core::nn::{Activation, Mlp};
use trajaudit_core::policy::{gaussian_distort, BcPolicy, GaussianDistortion, Policy};

use crate::error::{read_artifact, write_artifact, Error, Result};

const DATASET_MAGIC: &str = "trajaudit-dataset";
const MLP_MAGIC: &str = "trajaudit-mlp";
const POLICY_MAGIC: &str = "trajaudit-policy";
const CRITIC_MAGIC: &str = "trajaudit-critic";
const VERSION: &str = "1";

fn push_reals(out: &mut String, values: &[f64]) {
    for v in values {
        write!(out, " {v:.16e}").unwrap();
    }
}

struct Records<'a> {
    path: &'a Path,
    lines: Peekable<Enumerate<Lines<'a>>>,
}

impl<'a> Records<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Records {
            path,
            lines: text.lines().enumerate().peekable(),
        }
    }

    fn skip_blank(&mut self) {
        while let Some((_, l)) = self.lines.peek() {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                self.lines.next();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<&'a str> {
        self.skip_blank();
        self.lines.peek().map(|(_, l)| l.trim())
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        self.skip_blank();
        self.lines.next().map(|(i, l)| (i + 1, l.trim()))
    }

    fn line_no(&mut self) -> usize {
        self.skip_blank();
        self.lines.peek().map_or(0, |(i, _)| i + 1)
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::parse(self.path, line, message)
    }

    /// The rest of the next record after `key`.
    fn keyword(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let Some((line, text)) = self.next() else {
            return Err(self.err(0, format!("unexpected end of file, expected `{key}`")));
        };
        match text.split_once(char::is_whitespace) {
            Some((k, rest)) if k == key => Ok((line, rest.trim())),
            None if text == key => Ok((line, "")),
            _ => Err(self.err(line, format!("expected `{key}` record, found `{text}`"))),
        }
    }

    fn magic(&mut self, kind: &str) -> Result<()> {
        let (line, version) = self.keyword(kind)?;
        if version != VERSION {
            return Err(self.err(line, format!("unsupported {kind} version `{version}`")));
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        match self.next() {
            None => Ok(()),
            Some((line, text)) => Err(self.err(line, format!("unexpected trailing record `{text}`"))),
        }
    }
}

fn parse_real(r: &Records, line: usize, tok: &str) -> Result<f64> {
    tok.parse()
        .map_err(|_| r.err(line, format!("invalid number `{tok}`")))
}

fn parse_int<T: std::str::FromStr>(r: &Records, line: usize, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| r.err(line, format!("invalid integer `{tok}`")))
}

fn parse_reals(r: &Records, line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace().map(|t| parse_real(r, line, t)).collect()
}

// ---- datasets ----

pub fn dataset_to_string(dataset: &Dataset) -> Result<String> {
    dataset.validate().map_err(|v| {
        let list: Vec<String> = v.iter().map(ToString::to_string).collect();
        Error::InvalidDataset(list.join("; "))
    })?;
    let mut out = format!("{DATASET_MAGIC} {VERSION}\n");
    writeln!(out, "name {}", dataset.name).unwrap();
    writeln!(out, "dims {} {}", dataset.state_dim, dataset.action_dim).unwrap();
    out.push_str("action_low");
    push_reals(&mut out, &dataset.action_low);
    out.push_str("\naction_high");
    push_reals(&mut out, &dataset.action_high);
    out.push_str("\n# t <trajectory> <step> <state> <action> <reward> <next_state> <terminal>\n");
    for traj in &dataset.trajectories {
        for (step, tr) in traj.transitions.iter().enumerate() {
            write!(out, "t {} {step}", traj.id).unwrap();
            push_reals(&mut out, &tr.state);
            push_reals(&mut out, &tr.action);
            push_reals(&mut out, &[tr.reward]);
            push_reals(&mut out, &tr.next_state);
            writeln!(out, " {}", u8::from(tr.terminal)).unwrap();
        }
    }
    Ok(out)
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<Dataset> {
    let mut r = Records::new(path, text);
    r.magic(DATASET_MAGIC)?;
    let (_, name) = r.keyword("name")?;
    let (line, dims) = r.keyword("dims")?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|t| parse_int(&r, line, t))
        .collect::<Result<_>>()?;
    let [ds, da] = dims[..] else {
        return Err(r.err(line, "dims needs exactly two integers"));
    };
    let (line, low) = r.keyword("action_low")?;
    let action_low = parse_reals(&r, line, low)?;
    if action_low.len() != da {
        return Err(r.err(line, format!("expected {da} action bounds, found {}", action_low.len())));
    }
    let (line, high) = r.keyword("action_high")?;
    let action_high = parse_reals(&r, line, high)?;
    if action_high.len() != da {
        return Err(r.err(line, format!("expected {da} action bounds, found {}", action_high.len())));
    }

    let width = 2 * ds + da + 1;
    let mut trajectories: Vec<Trajectory> = Vec::new();
    while r.peek().is_some() {
        let (line, rest) = r.keyword("t")?;
        let mut tok = rest.split_whitespace();
        let (Some(id), Some(step)) = (tok.next(), tok.next()) else {
            return Err(r.err(line, "record needs trajectory and step"));
        };
        let id = TrajectoryId(parse_int(&r, line, id)?);
        let step: usize = parse_int(&r, line, step)?;
        let fields: Vec<&str> = tok.collect();
        if fields.len() != width + 1 {
            return Err(r.err(
                line,
                format!(
                    "record for trajectory {id} step {step}: expected {} fields for dims {ds} {da}, found {}",
                    width + 1,
                    fields.len()
                ),
            ));
        }
        let values: Vec<f64> = fields[..width]
            .iter()
            .map(|t| parse_real(&r, line, t))
            .collect::<Result<_>>()?;
        let terminal = match fields[width] {
            "0" => false,
            "1" => true,
            other => return Err(r.err(line, format!("terminal flag must be 0 or 1, found `{other}`"))),
        };
        let transition = Transition {
            state: values[..ds].to_vec(),
            action: values[ds..ds + da].to_vec(),
            reward: values[ds + da],
            next_state: values[ds + da + 1..].to_vec(),
            terminal,
        };
        match trajectories.last_mut() {
            Some(t) if t.id == id => {
                if step != t.transitions.len() {
                    return Err(r.err(line, format!("trajectory {id}: expected step {}, found {step}", t.transitions.len())));
                }
                t.transitions.push(transition);
            }
            _ => {
                if trajectories.iter().any(|t| t.id == id) {
                    return Err(r.err(line, format!("trajectory {id} is not contiguous")));
                }
                if step != 0 {
                    return Err(r.err(line, format!("trajectory {id} starts at step {step}")));
                }
                trajectories.push(Trajectory {
                    id,
                    transitions: vec![transition],
                });
            }
        }
    }
    Ok(Dataset {
        name: name.to_string(),
        state_dim: ds,
        action_dim: da,
        action_low,
        action_high,
        trajectories,
    })
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    write_artifact(path, &dataset_to_string(dataset)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(&read_artifact("dataset", path)?, path)
}

// ---- networks ----

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Identity => "identity",
        Activation::Tanh => "tanh",
    }
}

fn write_mlp(out: &mut String, net: &Mlp) {
    writeln!(out, "{MLP_MAGIC} {VERSION}").unwrap();
    out.push_str("layers");
    for s in net.layer_sizes() {
        write!(out, " {s}").unwrap();
    }
    writeln!(out, "\noutput {}", activation_name(net.output_activation())).unwrap();
    for l in 0..net.num_layers() {
        let (w, b) = net.layer(l);
        let fan_in = net.layer_sizes()[l];
        for (row, chunk) in w.chunks(fan_in).enumerate() {
            write!(out, "w {l} {row}").unwrap();
            push_reals(out, chunk);
            out.push('\n');
        }
        write!(out, "b {l}").unwrap();
        push_reals(out, b);
        out.push('\n');
    }
}

fn read_mlp(r: &mut Records) -> Result<Mlp> {
    r.magic(MLP_MAGIC)?;
    let (line, sizes) = r.keyword("layers")?;
    let sizes: Vec<usize> = sizes
        .split_whitespace()
        .map(|t| parse_int(r, line, t))
        .collect::<Result<_>>()?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(r.err(line, "layers needs at least two positive sizes"));
    }
    let (line, act) = r.keyword("output")?;
    let output = match act {
        "identity" => Activation::Identity,
        "tanh" => Activation::Tanh,
        other => return Err(r.err(line, format!("unknown activation `{other}`"))),
    };
    let mut params = Vec::new();
    for l in 0..sizes.len() - 1 {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        for row in 0..fan_out {
            let (line, rest) = r.keyword("w")?;
            let mut tok = rest.split_whitespace();
            let head = (tok.next(), tok.next());
            if head != (Some(l.to_string().as_str()), Some(row.to_string().as_str())) {
                return Err(r.err(line, format!("expected weights for layer {l} row {row}")));
            }
            let vals: Vec<f64> = tok.map(|t| parse_real(r, line, t)).collect::<Result<_>>()?;
            if vals.len() != fan_in {
                return Err(r.err(line, format!("layer {l} row {row}: expected {fan_in} weights, found {}", vals.len())));
            }
            params.extend(vals);
        }
        let (line, rest) = r.keyword("b")?;
        let mut tok = rest.split_whitespace();
        if tok.next() != Some(l.to_string().as_str()) {
            return Err(r.err(line, format!("expected biases for layer {l}")));
        }
        let vals: Vec<f64> = tok.map(|t| parse_real(r, line, t)).collect::<Result<_>>()?;
        if vals.len() != fan_out {
            return Err(r.err(line, format!("layer {l}: expected {fan_out} biases, found {}", vals.len())));
        }
        params.extend(vals);
    }
    let line = r.line_no();
    Mlp::from_params(&sizes, output, params).map_err(|e| r.err(line, e.to_string()))
}

pub fn mlp_to_string(net: &Mlp) -> String {
    let mut out = String::new();
    write_mlp(&mut out, net);
    out
}

pub fn parse_mlp(text: &str, path: &Path) -> Result<Mlp> {
    let mut r = Records::new(path, text);
    let net = read_mlp(&mut r)?;
    r.finish()?;
    Ok(net)
}

// ---- policies ----

/// A policy as stored on disk: a BC network, optionally behind a Gaussian
/// distortion wrapper.
#[derive(Debug)]
pub enum StoredPolicy {
    Bc(BcPolicy),
    Distorted(GaussianDistortion<BcPolicy>),
}

impl StoredPolicy {
    pub fn bc(&self) -> &BcPolicy {
        match self {
            StoredPolicy::Bc(p) => p,
            StoredPolicy::Distorted(d) => d.inner(),
        }
    }
}

impl Policy for StoredPolicy {
    fn action_dim(&self) -> usize {
        self.bc().action_dim()
    }
    fn label(&self) -> &str {
        match self {
            StoredPolicy::Bc(p) => p.label(),
            StoredPolicy::Distorted(d) => d.label(),
        }
    }
    fn act(&self, state: &[f64]) -> trajaudit_core::Result<Vec<f64>> {
        match self {
            StoredPolicy::Bc(p) => p.act(state),
            StoredPolicy::Distorted(d) => d.act(state),
        }
    }
    fn act_batch(&self, states: &[f64], count: usize) -> trajaudit_core::Result<Vec<f64>> {
        match self {
            StoredPolicy::Bc(p) => p.act_batch(states, count),
            StoredPolicy::Distorted(d) => d.act_batch(states, count),
        }
    }
}

pub fn policy_to_string(policy: &StoredPolicy) -> String {
    let bc = policy.bc();
    let mut out = format!("{POLICY_MAGIC} {VERSION}\nlabel {}\n", bc.label);
    match policy {
        StoredPolicy::Bc(_) => out.push_str("wrapper none\n"),
        StoredPolicy::Distorted(d) => {
            writeln!(out, "wrapper gaussian {:.16e} {}", d.sigma(), d.seed()).unwrap()
        }
    }
    write_mlp(&mut out, &bc.net);
    out
}

pub fn parse_policy(text: &str, path: &Path) -> Result<StoredPolicy> {
    let mut r = Records::new(path, text);
    r.magic(POLICY_MAGIC)?;
    let (_, label) = r.keyword("label")?;
    let (wline, wrapper) = r.keyword("wrapper")?;
    let net = read_mlp(&mut r)?;
    r.finish()?;
    let bc = BcPolicy::new(net, label).map_err(|e| r.err(wline, e.to_string()))?;
    let fields: Vec<&str> = wrapper.split_whitespace().collect();
    match fields[..] {
        ["none"] => Ok(StoredPolicy::Bc(bc)),
        ["gaussian", sigma, seed] => {
            let sigma = parse_real(&r, wline, sigma)?;
            let seed = parse_int(&r, wline, seed)?;
            let d = gaussian_distort(bc, sigma, seed).map_err(|e| r.err(wline, e.to_string()))?;
            Ok(StoredPolicy::Distorted(d))
        }
        _ => Err(r.err(wline, format!("unknown wrapper `{wrapper}`"))),
    }
}

pub fn save_policy(path: &Path, policy: &StoredPolicy) -> Result<()> {
    write_artifact(path, &policy_to_string(policy))
}

pub fn load_policy(path: &Path) -> Result<StoredPolicy> {
    parse_policy(&read_artifact("policy", path)?, path)
}

// ---- critics ----

/// A trained critic with the configuration it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredCritic {
    pub critic: Critic,
    pub config: CriticConfig,
    pub dropped_transitions: usize,
}

pub fn critic_to_string(stored: &StoredCritic) -> Result<String> {
    let c = &stored.critic;
    let mut out = format!("{CRITIC_MAGIC} {VERSION}\n");
    writeln!(out, "dims {} {}", c.state_dim(), c.action_dim()).unwrap();
    writeln!(out, "config {}", serde_json::to_string(&stored.config)?).unwrap();
    writeln!(out, "dropped {}", stored.dropped_transitions).unwrap();
    write_mlp(&mut out, c.net());
    Ok(out)
}

pub fn parse_critic(text: &str, path: &Path) -> Result<StoredCritic> {
    let mut r = Records::new(path, text);
    r.magic(CRITIC_MAGIC)?;
    let (line, dims) = r.keyword("dims")?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|t| parse_int(&r, line, t))
        .collect::<Result<_>>()?;
    let [ds, da] = dims[..] else {
        return Err(r.err(line, "dims needs exactly two integers"));
    };
    let (cline, config) = r.keyword("config")?;
    let config: CriticConfig =
        serde_json::from_str(config).map_err(|e| r.err(cline, format!("bad critic config: {e}")))?;
    let (line, dropped) = r.keyword("dropped")?;
    let dropped_transitions = parse_int(&r, line, dropped)?;
    let net = read_mlp(&mut r)?;
    r.finish()?;
    let critic = Critic::from_net(net, ds, da).map_err(|e| r.err(line, e.to_string()))?;
    Ok(StoredCritic {
        critic,
        config,
        dropped_transitions,
    })
}

pub fn save_critic(path: &Path, critic: &StoredCritic) -> Result<()> {
    write_artifact(path, &critic_to_string(critic)?)
}

pub fn load_critic(path: &Path) -> Result<StoredCritic> {
    parse_critic(&read_artifact("critic", path)?, path)
}

// ---- fingerprints ----

/// Long-format TSV: one row per fingerprint value.
pub fn fingerprints_to_tsv(fingerprints: &[Fingerprint]) -> String {
    let mut out = String::from("trajectory\tpolicy\tstep\tvalue\n");
    for fp in fingerprints {
        for (t, v) in fp.values.iter().enumerate() {
            writeln!(out, "{}\t{}\t{t}\t{v:.16e}", fp.trajectory, fp.policy).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use trajaudit_core::env::{benchmark_controllers, generate_dataset, LinearControlEnv};

    fn sample() -> Dataset {
        let env = LinearControlEnv {
            horizon: 5,
            episodic: true,
            ..Default::default()
        };
        generate_dataset("ctrl 0", &env, &benchmark_controllers()[0], 3, 9).unwrap()
    }

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        let mut d = sample();
        d.trajectories[1].transitions[2].reward = -0.0;
        d.trajectories[0].transitions[0].reward = f64::MIN_POSITIVE / 3.0;
        let text = dataset_to_string(&d).unwrap();
        let back = parse_dataset(&text, Path::new("x")).unwrap();
        assert_eq!(back, d);
        assert!(back.trajectories[1].transitions[2].reward.is_sign_negative());
        assert_eq!(dataset_to_string(&back).unwrap(), text);
    }

    #[test]
    fn wrong_action_width_names_the_record() {
        let text = dataset_to_string(&sample()).unwrap();
        // Splice an extra action value into trajectory 1, step 3.
        let bad: String = text
            .lines()
            .map(|l| {
                if l.starts_with("t 1 3 ") {
                    let mut f: Vec<&str> = l.split(' ').collect();
                    f.insert(5, "0.5");
                    f.join(" ")
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        let err = parse_dataset(&bad, Path::new("d.data")).unwrap_err().to_string();
        assert!(err.contains("trajectory 1 step 3"), "{err}");
        assert!(err.contains("line "), "{err}");
    }

    #[test]
    fn invalid_dataset_is_not_saved() {
        let mut d = sample();
        d.trajectories.clear();
        assert!(matches!(dataset_to_string(&d), Err(Error::InvalidDataset(m)) if m.contains("m=0")));
    }

    #[test]
    fn mlp_round_trip() {
        let net = Mlp::new(&[2, 5, 3, 1], Activation::Tanh, 4).unwrap();
        let back = parse_mlp(&mlp_to_string(&net), Path::new("n")).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn policy_and_critic_round_trip() {
        let bc = BcPolicy::new(Mlp::new(&[2, 4, 1], Activation::Tanh, 1).unwrap(), "bc:x:seed1").unwrap();
        let p = StoredPolicy::Distorted(gaussian_distort(bc.clone(), 0.01, 77).unwrap());
        let back = parse_policy(&policy_to_string(&p), Path::new("p")).unwrap();
        let StoredPolicy::Distorted(d) = &back else { panic!() };
        assert_eq!((d.sigma(), d.seed(), d.inner()), (0.01, 77, &bc));
        let plain = parse_policy(&policy_to_string(&StoredPolicy::Bc(bc.clone())), Path::new("p")).unwrap();
        assert!(matches!(plain, StoredPolicy::Bc(b) if b == bc));

        let stored = StoredCritic {
            critic: Critic::from_net(Mlp::new(&[3, 4, 1], Activation::Identity, 2).unwrap(), 2, 1).unwrap(),
            config: CriticConfig::default(),
            dropped_transitions: 12,
        };
        let text = critic_to_string(&stored).unwrap();
        assert_eq!(parse_critic(&text, Path::new("c")).unwrap(), stored);
    }

    #[test]
    fn truncated_mlp_is_a_parse_error() {
        let net = Mlp::new(&[2, 3, 1], Activation::Identity, 0).unwrap();
        let text = mlp_to_string(&net);
        let cut: Vec<&str> = text.lines().take(4).collect();
        let err = parse_mlp(&cut.join("\n"), Path::new("n")).unwrap_err();
        assert!(err.to_string().contains("unexpected end of file"), "{err}");
    }
}
