use serde_json::{json, Value as Json};

use noetic_core::classify::{
    cross_validate, epoch_covariance, train, ClassifierKind, ClassifierModel, CvReport, Hyperparams, Sample, TrainData,
};
use noetic_core::sim::{new_session, ClassSequence, FeedbackFlags, SimConfig, SimSession};

use super::{err, BuildCtx, Ctx, Node, NodeResult, Params};
use crate::catalog::PortType;
use crate::value::{Decision, Event, Value};

fn covariances(data: &[Vec<Vec<f64>>], shrinkage: f64) -> NodeResult<Vec<noetic_core::classify::SpdMatrix>> {
    data.iter().map(|d| epoch_covariance(d, shrinkage).map_err(err)).collect()
}

/// Collects every labeled batch and fits once the input ends.
pub struct Train {
    kind: ClassifierKind,
    folds: usize,
    hp: Hyperparams,
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    epochs: Vec<Vec<Vec<f64>>>,
    labels: Vec<u32>,
    cv: Option<CvReport>,
    n_train: usize,
}

impl Train {
    pub fn build(p: &Params<'_>, ctx: &BuildCtx<'_>) -> NodeResult<Self> {
        let kind = ClassifierKind::parse(&p.need::<String>("kind")?).map_err(err)?;
        let wants = if kind.uses_covariances() { PortType::Epochs } else { PortType::Features };
        if ctx.input != Some(wants) {
            return Err(format!("{} trains on {}", p.need::<String>("kind")?, wants.name()));
        }
        let hp = Hyperparams { shrinkage: p.need("shrinkage")?, seed: ctx.seed, ..Hyperparams::default() };
        Ok(Self {
            kind,
            folds: p.need("folds")?,
            hp,
            names: Vec::new(),
            rows: Vec::new(),
            epochs: Vec::new(),
            labels: Vec::new(),
            cv: None,
            n_train: 0,
        })
    }
}

impl Node for Train {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        match inputs.into_iter().next() {
            Some(Value::Features(b)) => {
                self.labels.extend(b.matrix.labels_strict().map_err(err)?);
                self.names = b.matrix.names;
                self.rows.extend(b.matrix.rows);
            }
            Some(Value::Epochs(set)) => {
                self.labels.extend(set.labels().map_err(err)?);
                self.names = set.channels.iter().map(|c| c.name.clone()).collect();
                self.epochs.extend(set.epochs.into_iter().map(|e| e.data));
            }
            _ => return Err("expected features or epochs".into()),
        }
        Ok(None)
    }

    fn finish(&mut self, _ctx: &mut Ctx<'_>) -> NodeResult<Option<Value>> {
        if self.labels.is_empty() {
            return Err("no labeled samples reached the trainer".into());
        }
        let data = if self.kind.uses_covariances() {
            TrainData::Covariances(covariances(&self.epochs, self.hp.shrinkage)?)
        } else {
            TrainData::Features(std::mem::take(&mut self.rows))
        };
        if self.folds > 1 {
            self.cv = Some(cross_validate(self.kind, &data, &self.labels, self.folds, &self.hp).map_err(err)?);
        }
        let mut model = train(self.kind, &data, &self.labels, &self.hp).map_err(err)?;
        model.meta.feature_names = self.names.clone();
        self.n_train = self.labels.len();
        Ok(Some(Value::Model(Box::new(model))))
    }

    fn report(&self) -> Option<Json> {
        Some(json!({ "n_train": self.n_train, "cv": self.cv }))
    }
}

pub struct Classify {
    model: ClassifierModel,
    shrinkage: f64,
    count: usize,
}

impl Classify {
    pub fn build(kind: &str, p: &Params<'_>) -> NodeResult<Self> {
        let model = match (p.get("model"), p.parse::<String>("model_path")?) {
            (Some(inline), None) => ClassifierModel::from_json(&inline.to_string()).map_err(err)?,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
                ClassifierModel::from_json(&text).map_err(|e| format!("{path}: {e}"))?
            }
            (Some(_), Some(_)) => return Err("give 'model' or 'model_path', not both".into()),
            (None, None) => return Err("a trained model is required ('model' or 'model_path')".into()),
        };
        let expected = ClassifierKind::parse(kind.trim_start_matches("classify.")).map_err(err)?;
        if model.kind != expected {
            return Err(format!("model is {:?}, node expects {:?}", model.kind, expected));
        }
        let shrinkage = p.parse("shrinkage")?.unwrap_or(0.0);
        Ok(Self { model, shrinkage, count: 0 })
    }
}

impl Node for Classify {
    fn process(&mut self, ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let mut decisions = Vec::new();
        let mut decide = |marker_t: f64, post_s: f64, true_class: Option<u32>, sample: Sample<'_>| -> NodeResult<()> {
            let p = self.model.predict(sample).map_err(err)?;
            decisions.push(Event::Decision(Decision {
                node: ctx.node.to_string(),
                marker_t,
                t: marker_t + post_s,
                class_id: p.class_id,
                scores: p.scores,
                true_class,
                source_t0: ctx.source_t0,
            }));
            Ok(())
        };
        match inputs.into_iter().next() {
            Some(Value::Features(b)) => {
                for (i, row) in b.matrix.rows.iter().enumerate() {
                    decide(b.matrix.times[i], b.post_s, b.matrix.labels[i], Sample::Features(row))?;
                }
            }
            Some(Value::Epochs(set)) => {
                for e in &set.epochs {
                    let c = epoch_covariance(&e.data, self.shrinkage).map_err(err)?;
                    decide(e.marker_t, set.post_s, e.class_id, Sample::Covariance(&c))?;
                }
            }
            _ => return Err("expected features or epochs".into()),
        }
        self.count += decisions.len();
        Ok((!decisions.is_empty()).then_some(Value::Events(decisions)))
    }

    fn report(&self) -> Option<Json> {
        Some(json!({ "decisions": self.count, "classes": self.model.classes }))
    }
}

/// Feeds decisions into the obstacle game, using decision time minus
/// `t_origin` as the game clock.
pub struct Arena {
    session: SimSession,
    t_origin: f64,
}

impl Arena {
    pub fn build(p: &Params<'_>, ctx: &BuildCtx<'_>) -> NodeResult<Self> {
        let sequence = match p.parse::<Vec<u32>>("sequence")? {
            Some(s) => ClassSequence::Explicit(s),
            None => ClassSequence::Seeded(ctx.seed),
        };
        let config = SimConfig {
            n_obstacles: p.need("n_obstacles")?,
            inter_obstacle_s: p.need("inter_obstacle_s")?,
            decision_window_s: p.need("decision_window_s")?,
            sequence,
            feedback: FeedbackFlags { auditory: p.need("auditory")?, visual: p.need("visual")? },
        };
        Ok(Self { session: new_session(config).map_err(err)?, t_origin: p.need("t_origin")? })
    }

    fn wrap(ctx: &Ctx<'_>, events: Vec<noetic_core::sim::SimEvent>) -> Option<Value> {
        let out: Vec<Event> = events
            .into_iter()
            .map(|event| Event::Sim { node: ctx.node.to_string(), source_t0: ctx.source_t0, event })
            .collect();
        (!out.is_empty()).then_some(Value::Events(out))
    }
}

impl Node for Arena {
    fn process(&mut self, ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let Some(Value::Events(events)) = inputs.into_iter().next() else {
            return Err("expected events".into());
        };
        let mut out = Vec::new();
        for e in events {
            if let Event::Decision(d) = e {
                let now = (d.t - self.t_origin).max(self.session.clock);
                out.extend(self.session.step(now, Some(d.class_id)).map_err(err)?);
            }
        }
        Ok(Self::wrap(ctx, out))
    }

    fn finish(&mut self, ctx: &mut Ctx<'_>) -> NodeResult<Option<Value>> {
        let events = self.session.finish().map_err(err)?;
        Ok(Self::wrap(ctx, events))
    }

    fn report(&self) -> Option<Json> {
        Some(json!({
            "score": self.session.score(),
            "records": self.session.records,
            "ignored_decisions": self.session.ignored_decisions,
        }))
    }
}
