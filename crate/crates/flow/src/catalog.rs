//! Node kinds, their port signatures and parameter schemas.

use serde::Serialize;
use serde_json::Value as Json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PortType {
    RawStream,
    Epochs,
    Features,
    Labels,
    Model,
    Spectrum,
    Events,
    Frame,
}

impl PortType {
    pub fn name(self) -> &'static str {
        match self {
            PortType::RawStream => "raw-stream",
            PortType::Epochs => "epochs",
            PortType::Features => "features",
            PortType::Labels => "labels",
            PortType::Model => "model",
            PortType::Spectrum => "spectrum",
            PortType::Events => "events",
            PortType::Frame => "frame",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    Transform,
    Sink,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", content = "values", rename_all = "snake_case")]
pub enum ParamType {
    Number,
    Integer,
    Bool,
    String,
    NumberList,
    IntegerList,
    StringList,
    Object,
    ObjectList,
    Enum(&'static [&'static str]),
}

impl ParamType {
    /// Checks a JSON value against the type; `Err` carries a short reason.
    pub fn check(self, v: &Json) -> Result<(), String> {
        let ok = match self {
            ParamType::Number => v.as_f64().is_some_and(f64::is_finite),
            ParamType::Integer => v.as_i64().is_some() || v.as_u64().is_some(),
            ParamType::Bool => v.is_boolean(),
            ParamType::String => v.is_string(),
            ParamType::NumberList => v.as_array().is_some_and(|a| a.iter().all(|x| x.as_f64().is_some_and(f64::is_finite))),
            ParamType::IntegerList => v.as_array().is_some_and(|a| a.iter().all(|x| x.as_u64().is_some())),
            ParamType::StringList => v.as_array().is_some_and(|a| a.iter().all(Json::is_string)),
            ParamType::Object => v.is_object(),
            ParamType::ObjectList => v.as_array().is_some_and(|a| a.iter().all(Json::is_object)),
            ParamType::Enum(values) => v.as_str().is_some_and(|s| values.contains(&s)),
        };
        if ok {
            Ok(())
        } else if let ParamType::Enum(values) = self {
            Err(format!("expected one of [{}], got {v}", values.join(", ")))
        } else {
            Err(format!("expected {}, got {v}", self.label()))
        }
    }

    fn label(self) -> &'static str {
        match self {
            ParamType::Number => "a finite number",
            ParamType::Integer => "an integer",
            ParamType::Bool => "a boolean",
            ParamType::String => "a string",
            ParamType::NumberList => "a list of numbers",
            ParamType::IntegerList => "a list of non-negative integers",
            ParamType::StringList => "a list of strings",
            ParamType::Object => "an object",
            ParamType::ObjectList => "a list of objects",
            ParamType::Enum(_) => "an enumerated string",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    #[serde(flatten)]
    pub ty: ParamType,
    pub required: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<Json>,
    pub tunable: bool,
    pub doc: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct PortSpec {
    pub name: &'static str,
    pub accepts: Vec<PortType>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "rule", content = "type", rename_all = "snake_case")]
pub enum OutputRule {
    None,
    Fixed(PortType),
    /// Same type as whatever feeds the named input port.
    SameAs(&'static str),
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeSpec {
    pub kind: &'static str,
    pub role: Role,
    pub doc: &'static str,
    pub inputs: Vec<PortSpec>,
    pub output: OutputRule,
    pub params: Vec<ParamSpec>,
}

impl NodeSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn input(&self, name: &str) -> Option<&PortSpec> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn output_port(&self) -> Option<&'static str> {
        (self.output != OutputRule::None).then_some(OUT)
    }
}

pub const OUT: &str = "out";
pub const IN: &str = "in";

fn p(name: &'static str, ty: ParamType, doc: &'static str) -> ParamSpec {
    ParamSpec { name, ty, required: false, default: None, tunable: false, doc }
}

impl ParamSpec {
    fn req(mut self) -> Self {
        self.required = true;
        self
    }

    fn def(mut self, v: Json) -> Self {
        self.default = Some(v);
        self
    }

    fn tune(mut self) -> Self {
        self.tunable = true;
        self
    }
}

fn input(types: &[PortType]) -> Vec<PortSpec> {
    vec![PortSpec { name: IN, accepts: types.to_vec() }]
}

use serde_json::json;
use ParamType as T;
use PortType::*;

const FILTER_KINDS: &[&str] = &["lowpass", "highpass", "bandpass", "bandstop"];
const SELECT_METHODS: &[&str] = &["correlation", "mutual_information", "chi_squared", "csp"];
const PLOT_KINDS: &[&str] = &["raw", "filtered", "ic", "fft", "periodogram", "decision"];
const CLASSIFIERS: &[&str] = &["nb", "rmdm", "tangent_linear"];

fn feature(kind: &'static str, doc: &'static str, params: Vec<ParamSpec>) -> NodeSpec {
    NodeSpec { kind, role: Role::Transform, doc, inputs: input(&[Epochs]), output: OutputRule::Fixed(Features), params }
}

fn classifier(kind: &'static str, doc: &'static str, from: PortType) -> NodeSpec {
    let mut params = vec![
        p("model", T::Object, "inline trained model document"),
        p("model_path", T::String, "path to a trained model JSON file"),
    ];
    if from == Epochs {
        params.push(p("shrinkage", T::Number, "covariance shrinkage").def(json!(0.1)));
    }
    NodeSpec { kind, role: Role::Transform, doc, inputs: input(&[from]), output: OutputRule::Fixed(Events), params }
}

/// Every registered node kind.
pub fn catalog() -> Vec<NodeSpec> {
    let samples_per_frame = || p("samples_per_frame", T::Integer, "samples per wire frame when streamed").def(json!(32));
    vec![
        NodeSpec {
            kind: "source.replay",
            role: Role::Source,
            doc: "replays a recording file",
            inputs: vec![],
            output: OutputRule::Fixed(RawStream),
            params: vec![p("path", T::String, "recording path (.neeg or .csv)"), p("fs", T::Number, "sampling rate for CSV input"), samples_per_frame()],
        },
        NodeSpec {
            kind: "source.stream",
            role: Role::Source,
            doc: "receives wire frames from a TCP endpoint",
            inputs: vec![],
            output: OutputRule::Fixed(RawStream),
            params: vec![p("endpoint", T::String, "host:port of the frame producer")],
        },
        NodeSpec {
            kind: "source.synth",
            role: Role::Source,
            doc: "generates a synthetic recording",
            inputs: vec![],
            output: OutputRule::Fixed(RawStream),
            params: vec![p("spec", T::Object, "synthetic recording description").req(), samples_per_frame()],
        },
        NodeSpec {
            kind: "epoch.markers",
            role: Role::Transform,
            doc: "cuts marker-locked epochs",
            inputs: input(&[RawStream]),
            output: OutputRule::Fixed(Epochs),
            params: vec![
                p("pre_s", T::Number, "window start relative to the marker").def(json!(0.0)),
                p("post_s", T::Number, "window end relative to the marker").req(),
                p("offset_s", T::Number, "clock offset subtracted from marker times").def(json!(0.0)),
                p("labels", T::StringList, "only markers with these labels"),
                p("require_class", T::Bool, "skip markers without a class id").def(json!(true)),
            ],
        },
        NodeSpec {
            kind: "epoch.sliding",
            role: Role::Transform,
            doc: "cuts unlabeled fixed-step windows",
            inputs: input(&[RawStream]),
            output: OutputRule::Fixed(Epochs),
            params: vec![p("window_s", T::Number, "window length").req(), p("step_s", T::Number, "hop between windows").req()],
        },
        NodeSpec {
            kind: "select.channels",
            role: Role::Transform,
            doc: "keeps a channel subset, explicit or ranked",
            inputs: input(&[RawStream, Epochs]),
            output: OutputRule::SameAs(IN),
            params: vec![
                p("channels", T::IntegerList, "channel indices to keep").tune(),
                p("method", T::Enum(SELECT_METHODS), "ranking criterion (labeled epochs, offline)"),
                p("n", T::Integer, "number of ranked channels to keep"),
            ],
        },
        NodeSpec {
            kind: "filt.butter",
            role: Role::Transform,
            doc: "Butterworth IIR filter in second-order sections",
            inputs: input(&[RawStream, Epochs]),
            output: OutputRule::SameAs(IN),
            params: vec![
                p("kind", T::Enum(FILTER_KINDS), "response type").req(),
                p("order", T::Integer, "prototype order").tune(),
                p("cutoffs", T::NumberList, "cutoff frequencies in Hz").tune(),
                p("passband", T::NumberList, "passband edges for automatic order"),
                p("stopband", T::NumberList, "stopband edges for automatic order"),
                p("ripple_db", T::Number, "maximum passband loss").def(json!(3.0)),
                p("attenuation_db", T::Number, "minimum stopband attenuation").def(json!(40.0)),
                p("zero_phase", T::Bool, "forward-backward filtering (epochs only)").def(json!(false)),
            ],
        },
        NodeSpec {
            kind: "ref.car",
            role: Role::Transform,
            doc: "common average reference",
            inputs: input(&[RawStream, Epochs]),
            output: OutputRule::SameAs(IN),
            params: vec![],
        },
        NodeSpec {
            kind: "window.kaiser",
            role: Role::Transform,
            doc: "Kaiser taper applied to each epoch",
            inputs: input(&[Epochs]),
            output: OutputRule::Fixed(Epochs),
            params: vec![
                p("length", T::Integer, "window length in samples; must equal the epoch length").req(),
                p("beta", T::Number, "shape parameter").def(json!(8.6)).tune(),
            ],
        },
        NodeSpec {
            kind: "artifact.amplitude",
            role: Role::Transform,
            doc: "drops epochs whose peak amplitude exceeds a threshold",
            inputs: input(&[Epochs]),
            output: OutputRule::Fixed(Epochs),
            params: vec![p("threshold_uv", T::Number, "peak threshold in microvolts").def(json!(100.0)).tune()],
        },
        NodeSpec {
            kind: "artifact.regression",
            role: Role::Transform,
            doc: "regresses reference (EOG) channels out of the stream",
            inputs: input(&[RawStream]),
            output: OutputRule::Fixed(RawStream),
            params: vec![
                p("reference", T::IntegerList, "reference channel indices").req(),
                p("calibration_s", T::Number, "leading seconds used to fit coefficients").def(json!(10.0)),
            ],
        },
        NodeSpec {
            kind: "artifact.ica",
            role: Role::Transform,
            doc: "per-epoch FastICA with heuristic component rejection",
            inputs: input(&[Epochs]),
            output: OutputRule::Fixed(Epochs),
            params: vec![
                p("frontal", T::IntegerList, "frontal channel indices for the correlation rule").def(json!([])),
                p("kurtosis_threshold", T::Number, "excess kurtosis rejection level").def(json!(5.0)).tune(),
                p("correlation_threshold", T::Number, "frontal correlation rejection level").def(json!(0.6)).tune(),
                p("template_threshold", T::Number, "blink template similarity level").def(json!(0.7)).tune(),
                p("blink_template", T::NumberList, "spatial blink topography, one weight per channel"),
                p("seed", T::Integer, "overrides the seed derived from the document"),
            ],
        },
        feature("feature.moments", "mean, variance, skewness, kurtosis per channel", vec![]),
        feature("feature.hjorth", "Hjorth activity, mobility, complexity", vec![]),
        feature(
            "feature.fractal",
            "fractal dimension",
            vec![p("method", T::Enum(&["higuchi", "katz"]), "estimator").def(json!("higuchi"))],
        ),
        feature(
            "feature.entropy",
            "signal entropy",
            vec![p("method", T::Enum(&["shannon", "approximate", "sample"]), "estimator").def(json!("sample"))],
        ),
        feature("feature.dfa", "detrended fluctuation analysis exponent", vec![]),
        feature(
            "feature.band_power",
            "Welch band power",
            vec![
                p("bands", T::ObjectList, "list of {name, lo, hi}; defaults to delta..gamma"),
                p("relative", T::Bool, "divide by 1-45 Hz power").def(json!(false)),
            ],
        ),
        feature("feature.stft", "mean STFT magnitude per band", vec![p("bands", T::ObjectList, "list of {name, lo, hi}")]),
        feature("feature.dwt", "db4 wavelet log-energies", vec![p("levels", T::Integer, "decomposition depth")]),
        feature(
            "feature.connectivity",
            "pairwise channel connectivity",
            vec![
                p("method", T::Enum(&["xcorr", "coherence", "psi"]), "measure").def(json!("coherence")),
                p("band", T::Object, "{name, lo, hi} for coherence and PSI").def(json!({"name": "alpha", "lo": 8.0, "hi": 13.0})),
            ],
        ),
        feature(
            "feature.csp",
            "log-variance of CSP-filtered epochs",
            vec![
                p("pairs", T::Integer, "filter pairs").def(json!(3)),
                p("filters", T::Object, "pre-fitted CSP model; fitted on the batch when absent (offline)"),
            ],
        ),
        NodeSpec {
            kind: "feature.concat",
            role: Role::Transform,
            doc: "joins two feature matrices column-wise",
            inputs: vec![PortSpec { name: "a", accepts: vec![Features] }, PortSpec { name: "b", accepts: vec![Features] }],
            output: OutputRule::Fixed(Features),
            params: vec![],
        },
        NodeSpec {
            kind: "feature.welch",
            role: Role::Transform,
            doc: "Welch power spectral density per epoch",
            inputs: input(&[Epochs]),
            output: OutputRule::Fixed(Spectrum),
            params: vec![],
        },
        NodeSpec {
            kind: "train.classifier",
            role: Role::Transform,
            doc: "fits a classifier on labeled features or epochs (offline)",
            inputs: input(&[Features, Epochs]),
            output: OutputRule::Fixed(Model),
            params: vec![
                p("kind", T::Enum(CLASSIFIERS), "classifier family").req(),
                p("folds", T::Integer, "cross-validation folds; 0 disables").def(json!(5)),
                p("shrinkage", T::Number, "covariance shrinkage").def(json!(0.1)),
            ],
        },
        classifier("classify.nb", "Gaussian naive Bayes decisions", Features),
        classifier("classify.rmdm", "minimum Riemannian distance to class means", Epochs),
        classifier("classify.tangent_linear", "tangent-space logistic regression", Epochs),
        NodeSpec {
            kind: "sim.arena",
            role: Role::Transform,
            doc: "two-class obstacle-avoidance game driven by decisions",
            inputs: input(&[Events]),
            output: OutputRule::Fixed(Events),
            params: vec![
                p("n_obstacles", T::Integer, "obstacle count").req(),
                p("inter_obstacle_s", T::Number, "seconds between announcements").req(),
                p("decision_window_s", T::Number, "binding decision window").req(),
                p("sequence", T::IntegerList, "explicit class sequence"),
                p("t_origin", T::Number, "stream time of the first announcement").def(json!(0.0)),
                p("auditory", T::Bool, "auditory feedback flag").def(json!(true)),
                p("visual", T::Bool, "visual feedback flag").def(json!(true)),
            ],
        },
        NodeSpec {
            kind: "sink.plot",
            role: Role::Sink,
            doc: "emits decimated plot frames",
            inputs: input(&[RawStream, Epochs, Spectrum, Events]),
            output: OutputRule::None,
            params: vec![
                p("kind", T::Enum(PLOT_KINDS), "plot kind").req(),
                p("window_samples", T::Integer, "stream samples per frame").def(json!(256)),
            ],
        },
        NodeSpec {
            kind: "sink.file",
            role: Role::Sink,
            doc: "writes its input to a file at the end of the run",
            inputs: input(&[RawStream, Epochs, Features, Model, Spectrum, Events]),
            output: OutputRule::None,
            params: vec![p("path", T::String, "output path; kept in memory when absent")],
        },
        NodeSpec {
            kind: "sink.decision",
            role: Role::Sink,
            doc: "collects decisions and simulator events",
            inputs: input(&[Events]),
            output: OutputRule::None,
            params: vec![],
        },
    ]
}

pub fn lookup(kind: &str) -> Option<NodeSpec> {
    catalog().into_iter().find(|s| s.kind == kind)
}

pub fn known_kinds() -> Vec<&'static str> {
    catalog().iter().map(|s| s.kind).collect()
}
