//! Versioned, deterministic text snapshots of agent learner state, used for
//! freeze checks, respawn-retention checks and warm-started experiments.
//!
//! Format (`savanna-agent-snapshot v1`): key-ordered `key = value` lines.
//! Floats print in Rust's shortest round-trip form, so emit/parse is exact
//! for the default `f64` scalar.

use std::fmt::Write as _;

use crate::adaptive::AdaptiveLearner;
use crate::agent::{AgentState, ArchitectureProfile};
use crate::contextual::Episode;
use crate::num::{lit, Scalar};
use crate::soma::PerDrive;
use crate::world::{ACTION_COUNT, FEATURE_COUNT};

pub const SNAPSHOT_HEADER: &str = "savanna-agent-snapshot v1";

/// Render the durable (learned plus somatic) state of an agent.
pub fn write_agent<S: Scalar>(agent: &AgentState<S>) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "{SNAPSHOT_HEADER}");
    let _ = writeln!(w, "agent.id = {}", agent.id);
    let _ = writeln!(w, "agent.kind = {}", agent.kind.as_str());
    let _ = writeln!(w, "agent.profile = {}", agent.profile.name());
    let _ = writeln!(w, "internal.energy = {}", agent.internal.energy);
    let _ = writeln!(w, "internal.integrity = {}", agent.internal.integrity);
    let _ = writeln!(w, "clock.steps = {}", agent.step_count);

    if let Some(learner) = &agent.learner {
        let _ = writeln!(w, "prototypes.count = {}", learner.map.len());
        for p in 0..learner.map.len() as u32 {
            let c = learner.map.centroid(p).expect("in range");
            let rendered: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(
                w,
                "prototype.{p} = {} ; visits {}",
                rendered.join(" "),
                learner.map.visit_count(p)
            );
        }
        for d in crate::soma::Drive::ALL {
            for p in 0..learner.map.len() as u32 {
                let row = learner.tables.row(d, p).expect("in range");
                let rendered: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                let _ = writeln!(w, "q.{}.{p} = {}", d.as_str(), rendered.join(" "));
            }
        }
    } else {
        let _ = writeln!(w, "prototypes.count = 0");
    }

    match &agent.graph {
        Some(g) => {
            let edges: Vec<_> = g.edges().collect();
            let _ = writeln!(w, "graph.edges = {}", edges.len());
            for (p, a, pn, n) in edges {
                let _ = writeln!(w, "graph.edge = {p} {a} {pn} {n}");
            }
        }
        None => {
            let _ = writeln!(w, "graph.edges = 0");
        }
    }

    match &agent.goals {
        Some(book) => {
            let entries: Vec<_> = book.iter().collect();
            let _ = writeln!(w, "goals.count = {}", entries.len());
            for (g, rec) in entries {
                let ring: String =
                    rec.outcomes().map(|o| if o { '1' } else { '0' }).collect();
                let _ = writeln!(w, "goal.{g} = {ring}");
            }
        }
        None => {
            let _ = writeln!(w, "goals.count = 0");
        }
    }

    match &agent.memory {
        Some(store) => {
            let _ = writeln!(w, "memory.count = {}", store.len());
            for ep in store.iter() {
                let goal = ep.goal.map(|g| g.to_string()).unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    w,
                    "memory.entry = {} {} {} {} {} {}",
                    ep.step,
                    ep.prototype,
                    ep.action,
                    ep.reward.0[0],
                    ep.reward.0[1],
                    goal
                );
            }
        }
        None => {
            let _ = writeln!(w, "memory.count = 0");
        }
    }

    out
}

/// The learned-structure portion only (prototypes, values, graph, goals,
/// memory): the part that must be bit-stable under freezing and respawn.
pub fn write_learner<S: Scalar>(agent: &AgentState<S>) -> String {
    let full = write_agent(agent);
    full.lines()
        .filter(|l| {
            l.starts_with("prototype")
                || l.starts_with("q.")
                || l.starts_with("graph.")
                || l.starts_with("goal")
                || l.starts_with("memory")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug)]
pub struct SnapshotError(pub String);

impl std::fmt::Display for SnapshotError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "snapshot parse error: {}", self.0)
    }
}

impl std::error::Error for SnapshotError {}

fn err(msg: impl Into<String>) -> SnapshotError {
    SnapshotError(msg.into())
}

/// Restore a snapshot into a freshly constructed agent. The caller provides
/// construction parameters and seed (those live in the run configuration,
/// not the snapshot).
pub fn read_agent<S: Scalar>(
    text: &str,
    params: crate::agent::AgentParams<S>,
    master_seed: u64,
) -> Result<AgentState<S>, SnapshotError> {
    let mut lines = text.lines();
    if lines.next() != Some(SNAPSHOT_HEADER) {
        return Err(err("missing or unsupported header"));
    }
    let mut kv: Vec<(String, String)> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| err(format!("bad line: {line}")))?;
        kv.push((k.trim().to_string(), v.trim().to_string()));
    }
    let get = |key: &str| -> Result<&str, SnapshotError> {
        kv.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| err(format!("missing key {key}")))
    };

    let id: u32 = get("agent.id")?.parse().map_err(|e| err(format!("agent.id: {e}")))?;
    let kind = match get("agent.kind")? {
        "prey" => crate::world::EntityKind::Prey,
        "predator" => crate::world::EntityKind::Predator,
        other => return Err(err(format!("bad kind {other}"))),
    };
    let profile = ArchitectureProfile::parse(get("agent.profile")?)
        .map_err(|e| err(format!("profile: {e}")))?;

    let mut agent = AgentState::new(id, kind, profile, params, master_seed)
        .map_err(|e| err(format!("construct: {e}")))?;
    let parse_s = |v: &str| -> Result<S, SnapshotError> {
        v.parse::<f64>().map(lit::<S>).map_err(|e| err(format!("float {v}: {e}")))
    };
    agent.internal.energy = parse_s(get("internal.energy")?)?;
    agent.internal.integrity = parse_s(get("internal.integrity")?)?;
    agent.step_count =
        get("clock.steps")?.parse().map_err(|e| err(format!("clock.steps: {e}")))?;
    agent.life_started_at = agent.step_count;

    if let Some(learner) = agent.learner.as_mut() {
        restore_learner(learner, &kv)?;
    }
    if let Some(graph) = agent.graph.as_mut() {
        for (k, v) in kv.iter().filter(|(k, _)| k == "graph.edge") {
            let _ = k;
            let parts: Vec<&str> = v.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(err(format!("bad graph edge: {v}")));
            }
            let p: u32 = parts[0].parse().map_err(|e| err(format!("edge p: {e}")))?;
            let a: u8 = parts[1].parse().map_err(|e| err(format!("edge a: {e}")))?;
            let pn: u32 = parts[2].parse().map_err(|e| err(format!("edge p': {e}")))?;
            let n: u64 = parts[3].parse().map_err(|e| err(format!("edge count: {e}")))?;
            for _ in 0..n {
                graph.record(p, a, pn).map_err(|e| err(format!("edge: {e}")))?;
            }
        }
    }
    if let Some(book) = agent.goals.as_mut() {
        for (k, v) in kv.iter().filter(|(k, _)| k.starts_with("goal.")) {
            let g: u32 = k["goal.".len()..]
                .parse()
                .map_err(|e| err(format!("goal key {k}: {e}")))?;
            for ch in v.chars() {
                match ch {
                    '1' => book.update_outcome(g, true),
                    '0' => book.update_outcome(g, false),
                    other => return Err(err(format!("goal ring char {other}"))),
                }
            }
        }
    }
    if let Some(store) = agent.memory.as_mut() {
        for (_, v) in kv.iter().filter(|(k, _)| k == "memory.entry") {
            let parts: Vec<&str> = v.split_whitespace().collect();
            if parts.len() != 6 {
                return Err(err(format!("bad memory entry: {v}")));
            }
            store.append(Episode {
                step: parts[0].parse().map_err(|e| err(format!("mem step: {e}")))?,
                prototype: parts[1].parse().map_err(|e| err(format!("mem proto: {e}")))?,
                action: parts[2].parse().map_err(|e| err(format!("mem action: {e}")))?,
                reward: PerDrive([parse_s(parts[3])?, parse_s(parts[4])?]),
                goal: if parts[5] == "-" {
                    None
                } else {
                    Some(parts[5].parse().map_err(|e| err(format!("mem goal: {e}")))?)
                },
            });
        }
    }

    Ok(agent)
}

fn restore_learner<S: Scalar>(
    learner: &mut AdaptiveLearner<S>,
    kv: &[(String, String)],
) -> Result<(), SnapshotError> {
    let count: usize = kv
        .iter()
        .find(|(k, _)| k == "prototypes.count")
        .ok_or_else(|| err("missing prototypes.count"))?
        .1
        .parse()
        .map_err(|e| err(format!("prototypes.count: {e}")))?;

    for p in 0..count as u32 {
        let key = format!("prototype.{p}");
        let v = &kv
            .iter()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| err(format!("missing {key}")))?
            .1;
        let (coords, visits) =
            v.split_once(';').ok_or_else(|| err(format!("bad prototype line: {v}")))?;
        let coords: Vec<f64> = coords
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| err(format!("{key}: {e}")))?;
        if coords.len() != FEATURE_COUNT {
            return Err(err(format!("{key}: expected {FEATURE_COUNT} coords")));
        }
        let visits: u64 = visits
            .trim()
            .strip_prefix("visits")
            .ok_or_else(|| err(format!("{key}: missing visits")))?
            .trim()
            .parse()
            .map_err(|e| err(format!("{key} visits: {e}")))?;
        let mut arr = [S::zero(); FEATURE_COUNT];
        for (i, c) in coords.iter().enumerate() {
            arr[i] = lit(*c);
        }
        learner.restore_prototype(&arr, visits);
    }

    for d in crate::soma::Drive::ALL {
        for p in 0..count as u32 {
            let key = format!("q.{}.{p}", d.as_str());
            let v = &kv
                .iter()
                .find(|(k, _)| *k == key)
                .ok_or_else(|| err(format!("missing {key}")))?
                .1;
            let row: Vec<f64> = v
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| err(format!("{key}: {e}")))?;
            if row.len() != ACTION_COUNT {
                return Err(err(format!("{key}: expected {ACTION_COUNT} values")));
            }
            for (a, q) in row.iter().enumerate() {
                learner.restore_q(d, p, a as u8, lit(*q));
            }
        }
    }
    Ok(())
}

/// Equality check helper: the round-trip identity holds up to float
/// rendering, which is exact for `f64`.
pub fn roundtrip_identical<S: Scalar>(agent: &AgentState<S>) -> bool {
    let text = write_agent(agent);
    match read_agent::<S>(&text, agent.params, 0) {
        Ok(back) => write_agent(&back) == text,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{AgentParams, AgentState, ArchitectureProfile};
    use crate::soma::StepEffects;
    use crate::world::{EntityKind, OdorCategory, Percept};

    fn trained_agent() -> AgentState<f64> {
        use rand::Rng;
        let mut a = AgentState::new(
            3,
            EntityKind::Prey,
            ArchitectureProfile::FULL,
            AgentParams::default(),
            42,
        )
        .unwrap();
        let mut draw = crate::rng::stream(42, crate::rng::StreamDomain::Harness, 0);
        for k in 0..200 {
            let mut p = Percept::zero();
            p.intensity[OdorCategory::Food as usize] = [draw.gen(), draw.gen()];
            p.intensity[OdorCategory::Predator as usize] = [draw.gen(), draw.gen()];
            a.act(&p, true).unwrap();
            let fx = StepEffects { energy_gain: if k % 7 == 0 { 0.3 } else { 0.0 }, damage_hits: 0 };
            a.learn(&fx, Some(&p), true).unwrap();
        }
        a
    }

    #[test]
    fn snapshot_round_trips_exactly() {
        let a = trained_agent();
        assert!(a.learner.as_ref().unwrap().map.len() > 1);
        assert!(roundtrip_identical(&a));
    }

    #[test]
    fn learner_section_ignores_perishable_state() {
        let mut a = trained_agent();
        let before = write_learner(&a);
        a.internal.energy = 0.0;
        a.respawn_reset();
        let after = write_learner(&a);
        assert_eq!(before, after);
    }

    #[test]
    fn header_is_checked() {
        let a = trained_agent();
        let text = write_agent(&a).replace(SNAPSHOT_HEADER, "other v9");
        assert!(read_agent::<f64>(&text, a.params, 0).is_err());
    }
}
