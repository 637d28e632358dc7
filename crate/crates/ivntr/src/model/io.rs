//! Line-delimited record serialization for tasks and demonstrations.
//! Every line is one JSON record carrying an explicit `version` field;
//! object and predicate references are stored by name and resolved against
//! the domain on load.

use super::{
    Demonstration, DomainSpec, GroundAction, GroundAtom, ModelError, State, Task,
};
use crate::FORMAT_VERSION;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

#[derive(Debug, Serialize, Deserialize)]
pub struct HeaderRecord {
    pub version: String,
    pub record: String,
    pub domain: String,
    pub demos: usize,
    #[serde(default)]
    pub seed: u64,
    /// Full flat config the artifact was produced under, for provenance.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AtomRecord {
    pub pred: String,
    pub objects: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActionRecord {
    pub controller: String,
    pub objects: Vec<String>,
    pub omega: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TaskRecord {
    pub objects: Vec<super::ObjectRef>,
    pub x0: BTreeMap<String, Vec<f64>>,
    pub goal: Vec<AtomRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DemoRecord {
    pub version: String,
    pub record: String,
    pub split: String,
    pub task: TaskRecord,
    pub plan: Vec<ActionRecord>,
    pub states: Vec<BTreeMap<String, Vec<f64>>>,
}

pub fn task_to_record(task: &Task) -> TaskRecord {
    TaskRecord {
        objects: task.objects.clone(),
        x0: task.x0.features.clone(),
        goal: task
            .goal
            .iter()
            .map(|g| AtomRecord {
                pred: g.pred.name.clone(),
                objects: g.objects.iter().map(|o| o.name.clone()).collect(),
            })
            .collect(),
    }
}

pub fn demo_to_record(demo: &Demonstration, is_train: bool) -> DemoRecord {
    DemoRecord {
        version: FORMAT_VERSION.to_string(),
        record: "demo".to_string(),
        split: if is_train { "train" } else { "val" }.to_string(),
        task: task_to_record(&demo.task),
        plan: demo
            .plan
            .iter()
            .map(|a| ActionRecord {
                controller: a.controller.name.clone(),
                objects: a.objects.iter().map(|o| o.name.clone()).collect(),
                omega: a.omega.clone(),
            })
            .collect(),
        states: demo.states.iter().map(|s| s.features.clone()).collect(),
    }
}

fn resolve_objects(
    names: &[String],
    objects: &[super::ObjectRef],
) -> Result<Vec<super::ObjectRef>, ModelError> {
    names
        .iter()
        .map(|n| {
            objects
                .iter()
                .find(|o| &o.name == n)
                .cloned()
                .ok_or_else(|| ModelError::UnknownObject(n.clone()))
        })
        .collect()
}

pub fn task_from_record(rec: &TaskRecord, spec: &DomainSpec) -> Result<Task, ModelError> {
    let x0 = State {
        features: rec.x0.clone(),
    };
    x0.validate(&rec.objects, &spec.types)?;
    let goal = rec
        .goal
        .iter()
        .map(|g| {
            let p = spec
                .scripted_by_name(&g.pred)
                .ok_or_else(|| ModelError::Format(format!("unknown predicate `{}`", g.pred)))?;
            Ok(GroundAtom::new(
                &p.sig,
                resolve_objects(&g.objects, &rec.objects)?,
            ))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(Task {
        objects: rec.objects.clone(),
        x0,
        goal,
    })
}

pub fn demo_from_record(
    rec: &DemoRecord,
    spec: &DomainSpec,
) -> Result<(Demonstration, bool), ModelError> {
    let task = task_from_record(&rec.task, spec)?;
    let plan = rec
        .plan
        .iter()
        .map(|a| {
            let c = spec.controller(&a.controller).ok_or_else(|| {
                ModelError::Format(format!("unknown controller `{}`", a.controller))
            })?;
            let mut ga = GroundAction::new(c, resolve_objects(&a.objects, &task.objects)?);
            ga.omega = a.omega.clone();
            Ok(ga)
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let states: Vec<State> = rec
        .states
        .iter()
        .map(|f| State {
            features: f.clone(),
        })
        .collect();
    if states.len() != plan.len() + 1 {
        return Err(ModelError::Format(format!(
            "demo has {} states for {} plan steps",
            states.len(),
            plan.len()
        )));
    }
    Ok((
        Demonstration { task, plan, states },
        rec.split == "train",
    ))
}

pub fn write_demos<W: Write>(
    mut w: W,
    spec: &DomainSpec,
    demos: &[(Demonstration, bool)],
    seed: u64,
    config: &BTreeMap<String, String>,
) -> Result<(), ModelError> {
    let header = HeaderRecord {
        version: FORMAT_VERSION.to_string(),
        record: "header".to_string(),
        domain: spec.name.clone(),
        demos: demos.len(),
        seed,
        config: config.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).unwrap())?;
    for (demo, is_train) in demos {
        let rec = demo_to_record(demo, *is_train);
        writeln!(w, "{}", serde_json::to_string(&rec).unwrap())?;
    }
    Ok(())
}

pub fn read_demos<R: BufRead>(
    r: R,
    spec: &DomainSpec,
) -> Result<Vec<(Demonstration, bool)>, ModelError> {
    let mut lines = r.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| ModelError::Format("empty dataset file".into()))??;
    let header: HeaderRecord = serde_json::from_str(&header_line)
        .map_err(|e| ModelError::Format(format!("bad header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(ModelError::Format(format!(
            "unsupported format version `{}`",
            header.version
        )));
    }
    if header.domain != spec.name {
        return Err(ModelError::Format(format!(
            "dataset is for domain `{}`, expected `{}`",
            header.domain, spec.name
        )));
    }
    let mut out = Vec::with_capacity(header.demos);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DemoRecord = serde_json::from_str(&line)
            .map_err(|e| ModelError::Format(format!("bad demo record: {e}")))?;
        out.push(demo_from_record(&rec, spec)?);
    }
    if out.len() != header.demos {
        return Err(ModelError::Format(format!(
            "header promises {} demos, found {}",
            header.demos,
            out.len()
        )));
    }
    Ok(out)
}
