//! The end-to-end forecaster: temporal encoding, relational graph
//! convolutions, event-signal fusion, and a layer-normalized linear head,
//! with exact analytic gradients for training.
//!
//! Three independent switches swap stages out: `use_mdwt` picks between the
//! wavelet-attention encoder and a recurrent encoder of the same output
//! width; `use_hgcn` toggles the graph stage (off = identity on stock
//! embeddings); `use_gre` toggles the event-game stage (off = no fusion and
//! no equilibrium loss). All paths share the same head, so ablations differ
//! only in the stage under study.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::game::{
    decay_weights, encode_events, encode_events_backward, equilibrium_loss,
    equilibrium_loss_grad, event_input, gated_fuse, gated_fuse_backward, predict_actions,
    predict_actions_backward, solve_equilibrium, ActionHeadCache, ActionHeadParams, DecaySpec,
    EventEncodeCache, EventEncoderParams, GameError, GameEvent, GameSpec, GateCache, GateParams,
    Profile,
};
use crate::graph::{
    rgcn_backward, rgcn_forward, GraphError, HeteroGraph, NormMode, RgcnCache, RgcnLayerParams,
};
use crate::mat::Mat;
use crate::nn::Linear;
use crate::panel::{PanelError, StockPanel, TrainStats, WindowBatch, CHANNELS};
use crate::rng::Rng;
use crate::temporal::{
    encode_pooled, encode_pooled_backward, gru_backward, gru_forward, GruCache, GruEncoder,
    TemporalCache, TemporalParams,
};
use crate::temporal::pooled_from_batch;
use crate::wavelet::{BoundaryMode, PooledFeatures, WaveletError, WaveletKind};

/// Layer-normalization stabilizer on the feature variance.
pub const LN_EPS: f64 = 1e-5;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug)]
pub enum ModelError {
    BadConfig(String),
    NoLabels { date: String },
    NotStandardized,
    StockMismatch { missing: Vec<String>, extra: Vec<String> },
    Graph(GraphError),
    Wavelet(WaveletError),
    Game(GameError),
    Panel(PanelError),
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::BadConfig(msg) => write!(f, "invalid model config: {msg}"),
            ModelError::NoLabels { date } => {
                write!(f, "no stock has a label on anchor day {date}")
            }
            ModelError::NotStandardized => {
                write!(f, "panel must be standardized before building samples")
            }
            ModelError::StockMismatch { missing, extra } => write!(
                f,
                "stock set mismatch: missing from panel {missing:?}, unknown to checkpoint {extra:?}"
            ),
            ModelError::Graph(e) => write!(f, "{e}"),
            ModelError::Wavelet(e) => write!(f, "{e}"),
            ModelError::Game(e) => write!(f, "{e}"),
            ModelError::Panel(e) => write!(f, "{e}"),
        }
    }
}

impl From<GraphError> for ModelError {
    fn from(e: GraphError) -> Self {
        ModelError::Graph(e)
    }
}
impl From<WaveletError> for ModelError {
    fn from(e: WaveletError) -> Self {
        ModelError::Wavelet(e)
    }
}
impl From<GameError> for ModelError {
    fn from(e: GameError) -> Self {
        ModelError::Game(e)
    }
}
impl From<PanelError> for ModelError {
    fn from(e: PanelError) -> Self {
        ModelError::Panel(e)
    }
}

/// Every knob of the forecaster in one serializable record.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub lookback: usize,
    /// Wavelet decomposition depth.
    pub level: usize,
    pub wavelet: WaveletKind,
    pub boundary: BoundaryMode,
    /// Indicator channels per day in the input windows.
    pub channels: usize,
    /// Stock embedding width M out of the temporal stage.
    pub embed_dim: usize,
    /// Node feature width after each graph layer.
    pub graph_hidden: usize,
    pub graph_layers: usize,
    pub graph_norm: NormMode,
    /// Weight of the equilibrium-consistency loss.
    pub lambda_eq: f64,
    pub use_mdwt: bool,
    pub use_hgcn: bool,
    pub use_gre: bool,
    /// Per-day decay rate of event influence.
    pub alpha_decay: f64,
    /// Sinusoidal position width for event ages (even).
    pub pos_dim: usize,
    pub game: GameSpec,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Early-stopping patience in epochs.
    pub patience: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lookback: 20,
            level: 3,
            wavelet: WaveletKind::Db4,
            boundary: BoundaryMode::Symmetric,
            channels: CHANNELS,
            embed_dim: 48,
            graph_hidden: 64,
            graph_layers: 2,
            graph_norm: NormMode::Degree,
            lambda_eq: 0.1,
            use_mdwt: true,
            use_hgcn: true,
            use_gre: true,
            alpha_decay: 0.1,
            pos_dim: 16,
            game: GameSpec::default(),
            learning_rate: 0.001,
            weight_decay: 0.001,
            max_epochs: 300,
            patience: 20,
            seed: 7,
        }
    }
}

impl ModelConfig {
    /// Width of the representation entering the head: the graph stage's
    /// output when present, otherwise the temporal embedding itself.
    pub fn fused_width(&self) -> usize {
        if self.use_hgcn {
            self.graph_hidden
        } else {
            self.embed_dim
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::BadConfig(msg));
        for (name, v) in [
            ("lookback", self.lookback),
            ("channels", self.channels),
            ("embed_dim", self.embed_dim),
            ("graph_hidden", self.graph_hidden),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.use_mdwt {
            if self.level == 0 {
                return bad("wavelet level must be positive".into());
            }
            if self.lookback < (1usize << self.level) {
                return bad(format!(
                    "lookback {} shorter than 2^level = {}",
                    self.lookback,
                    1usize << self.level
                ));
            }
        }
        if self.use_hgcn && self.graph_layers == 0 {
            return bad("need at least one graph layer".into());
        }
        if !(self.lambda_eq.is_finite() && self.lambda_eq >= 0.0) {
            return bad(format!("lambda_eq {} must be >= 0", self.lambda_eq));
        }
        if self.use_gre {
            if self.pos_dim == 0 || self.pos_dim % 2 != 0 {
                return bad(format!("pos_dim {} must be positive and even", self.pos_dim));
            }
            if !(self.alpha_decay.is_finite() && self.alpha_decay > 0.0) {
                return bad(format!("alpha_decay {} must be > 0", self.alpha_decay));
            }
            self.game.validate()?;
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay {} must be >= 0", self.weight_decay));
        }
        Ok(())
    }
}

/// Learned features for the non-stock nodes entering the graph stage.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct NodeEmbedParams {
    /// n_industries x embed_dim.
    pub industry: Mat,
    /// 3 x embed_dim.
    pub investor: Mat,
}

impl NodeEmbedParams {
    pub fn zeros(n_industries: usize, width: usize) -> Self {
        NodeEmbedParams {
            industry: Mat::zeros(n_industries, width),
            investor: Mat::zeros(3, width),
        }
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.industry.data_mut(), self.investor.data_mut()]
    }
}

/// Per-feature scale and shift applied after row-wise normalization.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct LayerNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNormParams {
    pub fn zeros(width: usize) -> Self {
        LayerNormParams {
            gamma: vec![0.0; width],
            beta: vec![0.0; width],
        }
    }

    pub fn ones(width: usize) -> Self {
        LayerNormParams {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
        }
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.gamma.as_mut_slice(), self.beta.as_mut_slice()]
    }
}

/// All trainable state. Stages switched off by the config are `None`, so a
/// checkpoint is self-describing about which paths it trained.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    pub temporal: Option<TemporalParams>,
    pub recurrent: Option<GruEncoder>,
    pub node_embed: Option<NodeEmbedParams>,
    pub graph_layers: Vec<RgcnLayerParams>,
    pub event_encoder: Option<EventEncoderParams>,
    pub gate: Option<GateParams>,
    pub action_head: Option<ActionHeadParams>,
    pub layer_norm: LayerNormParams,
    pub head: Linear,
}

impl ModelParams {
    /// All-zero parameters with the shapes the config implies.
    pub fn zeros(config: &ModelConfig, n_industries: usize) -> Self {
        let m = config.embed_dim;
        let f = config.fused_width();
        ModelParams {
            temporal: config
                .use_mdwt
                .then(|| TemporalParams::zeros(config.channels, config.level, m)),
            recurrent: (!config.use_mdwt).then(|| GruEncoder::zeros(config.channels, m)),
            node_embed: config
                .use_hgcn
                .then(|| NodeEmbedParams::zeros(n_industries, m)),
            graph_layers: if config.use_hgcn {
                (0..config.graph_layers)
                    .map(|i| {
                        let d_in = if i == 0 { m } else { f };
                        RgcnLayerParams::zeros(d_in, f, config.graph_norm)
                    })
                    .collect()
            } else {
                Vec::new()
            },
            event_encoder: config
                .use_gre
                .then(|| EventEncoderParams::zeros(config.pos_dim, f, f)),
            gate: config.use_gre.then(|| GateParams::zeros(f)),
            action_head: config.use_gre.then(|| ActionHeadParams::zeros(f)),
            layer_norm: LayerNormParams::zeros(f),
            head: Linear::zeros(f, 1),
        }
    }

    /// Zero gradients (or momenta) matching this parameter set's shapes.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            temporal: self.temporal.as_ref().map(|p| p.zeros_like()),
            recurrent: self.recurrent.as_ref().map(|p| p.zeros_like()),
            node_embed: self.node_embed.as_ref().map(|p| {
                NodeEmbedParams::zeros(p.industry.rows(), p.industry.cols())
            }),
            graph_layers: self.graph_layers.iter().map(|p| p.zeros_like()).collect(),
            event_encoder: self.event_encoder.as_ref().map(|p| p.zeros_like()),
            gate: self.gate.as_ref().map(|p| p.zeros_like()),
            action_head: self.action_head.as_ref().map(|p| p.zeros_like()),
            layer_norm: LayerNormParams::zeros(self.layer_norm.gamma.len()),
            head: self.head.zeros_like(),
        }
    }

    /// Mutable views over every parameter buffer in a fixed traversal order;
    /// optimizers key their state to this order.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(p) = self.temporal.as_mut() {
            out.extend(p.slices_mut());
        }
        if let Some(p) = self.recurrent.as_mut() {
            out.extend(p.slices_mut());
        }
        if let Some(p) = self.node_embed.as_mut() {
            out.extend(p.slices_mut());
        }
        for layer in &mut self.graph_layers {
            out.extend(layer.slices_mut());
        }
        if let Some(p) = self.event_encoder.as_mut() {
            out.extend(p.slices_mut());
        }
        if let Some(p) = self.gate.as_mut() {
            out.extend(p.slices_mut());
        }
        if let Some(p) = self.action_head.as_mut() {
            out.extend(p.slices_mut());
        }
        out.extend(self.layer_norm.slices_mut());
        out.extend(self.head.slices_mut());
        out
    }
}

fn glorot(rng: &mut Rng, m: &mut Mat) {
    let limit = libm::sqrt(6.0 / (m.rows() + m.cols()) as f64);
    for v in m.data_mut() {
        *v = rng.range(-limit, limit);
    }
}

fn small_uniform(rng: &mut Rng, m: &mut Mat) {
    for v in m.data_mut() {
        *v = rng.range(-0.01, 0.01);
    }
}

/// Seeded initialization: fan-balanced uniform weights, zero biases, unit
/// normalization scales, small node embeddings. The draw order is fixed, so
/// one seed always yields the same parameters.
pub fn init_params(
    config: &ModelConfig,
    n_industries: usize,
) -> Result<ModelParams, ModelError> {
    config.validate()?;
    let mut p = ModelParams::zeros(config, n_industries);
    let mut rng = Rng::stream(config.seed, 16);
    if let Some(t) = p.temporal.as_mut() {
        for lin in t.fusion.level_maps.iter_mut() {
            glorot(&mut rng, &mut lin.w);
        }
        glorot(&mut rng, &mut t.fusion.trend.w);
        glorot(&mut rng, &mut t.fusion.gate.w);
        glorot(&mut rng, &mut t.attention.l1.w);
        glorot(&mut rng, &mut t.attention.l2.w);
    }
    if let Some(g) = p.recurrent.as_mut() {
        for m in [
            &mut g.wr, &mut g.ur, &mut g.wu, &mut g.uu, &mut g.wn, &mut g.un,
        ] {
            glorot(&mut rng, m);
        }
        glorot(&mut rng, &mut g.proj.w);
    }
    if let Some(ne) = p.node_embed.as_mut() {
        small_uniform(&mut rng, &mut ne.industry);
        small_uniform(&mut rng, &mut ne.investor);
    }
    for layer in p.graph_layers.iter_mut() {
        for w in layer.w_rel.iter_mut() {
            glorot(&mut rng, w);
        }
        glorot(&mut rng, &mut layer.w_self);
    }
    if let Some(e) = p.event_encoder.as_mut() {
        glorot(&mut rng, &mut e.l1.w);
        glorot(&mut rng, &mut e.l2.w);
    }
    if let Some(g) = p.gate.as_mut() {
        glorot(&mut rng, &mut g.lin.w);
    }
    if let Some(a) = p.action_head.as_mut() {
        glorot(&mut rng, &mut a.l1.w);
    }
    p.layer_norm = LayerNormParams::ones(config.fused_width());
    // Readout layers (scalar head, action-head output) stay at zero: first
    // outputs then sit at the zero-prediction baseline, whose loss the early
    // epochs improve on steadily, instead of a random-head transient that is
    // orders of magnitude above label scale and trips the plateau/early-stop
    // counters before real learning starts.
    Ok(p)
}

/// One trading event located on the panel's index grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedEvent {
    pub stock: usize,
    pub day: usize,
    pub actions: [i8; 3],
    pub ret: f64,
}

/// Maps parsed events onto panel indices; events for unknown stocks or dates
/// are dropped and counted (second return).
pub fn resolve_events(events: &[GameEvent], panel: &StockPanel) -> (Vec<ResolvedEvent>, usize) {
    let mut out = Vec::with_capacity(events.len());
    let mut skipped = 0usize;
    for e in events {
        let stock = panel
            .stocks()
            .binary_search_by(|s| s.as_str().cmp(&e.stock))
            .ok();
        let day = panel.date_index(&e.date);
        match (stock, day) {
            (Some(stock), Some(day)) => out.push(ResolvedEvent {
                stock,
                day,
                actions: e.actions,
                ret: e.return_1d,
            }),
            _ => skipped += 1,
        }
    }
    (out, skipped)
}

/// The event inputs for one anchor day, flattened across stocks: encoder
/// input rows, their per-stock normalized decay weights, and per-stock
/// equilibrium targets from each stock's most recent in-window event.
#[derive(Clone, Debug)]
pub struct EventContext {
    /// rows x (pos_dim + 3) encoder inputs, stock-major then oldest-first.
    pub inputs: Mat,
    pub weights: Vec<f64>,
    pub stock_of: Vec<usize>,
    /// Per stock: the action profile a* from the most recent in-window event.
    pub targets: Vec<Option<Profile>>,
}

pub fn build_event_context(
    events: &[ResolvedEvent],
    n_stocks: usize,
    anchor: usize,
    config: &ModelConfig,
) -> EventContext {
    let window = config.lookback;
    let earliest = (anchor + 1).saturating_sub(window);
    let mut per_stock: Vec<Vec<&ResolvedEvent>> = vec![Vec::new(); n_stocks];
    for e in events {
        if e.day <= anchor && e.day >= earliest {
            per_stock[e.stock].push(e);
        }
    }
    let spec = DecaySpec {
        alpha: config.alpha_decay,
        window,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut weights = Vec::new();
    let mut stock_of = Vec::new();
    let mut targets = vec![None; n_stocks];
    for (i, evs) in per_stock.iter_mut().enumerate() {
        if evs.is_empty() {
            continue;
        }
        evs.sort_by_key(|e| e.day);
        let days: Vec<usize> = evs.iter().map(|e| e.day).collect();
        let w = decay_weights(&days, anchor, &spec);
        for (e, wj) in evs.iter().zip(w) {
            rows.push(event_input(
                (anchor - e.day) as f64,
                e.actions,
                config.pos_dim,
            ));
            weights.push(wj);
            stock_of.push(i);
        }
        let latest = evs.last().expect("nonempty");
        targets[i] = Some(solve_equilibrium(latest.ret, &config.game).actions);
    }
    let width = config.pos_dim + 3;
    let mut inputs = Mat::zeros(rows.len(), width);
    for (j, r) in rows.iter().enumerate() {
        inputs.row_mut(j).copy_from_slice(r);
    }
    EventContext {
        inputs,
        weights,
        stock_of,
        targets,
    }
}

/// Everything the forward/backward passes need for one anchor day,
/// precomputed once: gradients never flow into the wavelet pooling or the
/// event features, so both are fixed per sample.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub anchor: usize,
    pub date: String,
    pub labels: Vec<f64>,
    pub label_available: Vec<bool>,
    /// Wavelet features per stock (when the wavelet path is active).
    pub pooled: Option<Vec<PooledFeatures>>,
    /// Raw windows (when the recurrent path is active).
    pub window: Option<WindowBatch>,
    pub events: Option<EventContext>,
}

impl PreparedSample {
    pub fn n_labeled(&self) -> usize {
        self.label_available.iter().filter(|a| **a).count()
    }
}

/// Builds one sample per anchor from a standardized panel. Anchors whose day
/// has no labeled stock are skipped when `require_labels` is set (training
/// needs the regression target; prediction does not).
pub fn prepare_samples(
    panel: &StockPanel,
    events: &[ResolvedEvent],
    config: &ModelConfig,
    anchors: &[usize],
    require_labels: bool,
) -> Result<Vec<PreparedSample>, ModelError> {
    if !panel.is_standardized() {
        return Err(ModelError::NotStandardized);
    }
    let n = panel.n_stocks();
    let mut out = Vec::with_capacity(anchors.len());
    for &anchor in anchors {
        let batch = panel.window_at(anchor, config.lookback)?;
        if require_labels && !batch.label_available.iter().any(|a| *a) {
            continue;
        }
        let pooled = if config.use_mdwt {
            Some(pooled_from_batch(
                &batch,
                config.wavelet,
                config.boundary,
                config.level,
            )?)
        } else {
            None
        };
        let ev = config
            .use_gre
            .then(|| build_event_context(events, n, anchor, config));
        out.push(PreparedSample {
            anchor,
            date: batch.date.clone(),
            labels: batch.labels.clone(),
            label_available: batch.label_available.clone(),
            pooled,
            window: (!config.use_mdwt).then(|| batch),
            events: ev,
        });
    }
    Ok(out)
}

/// Anchor days inside an inclusive calendar index range that have a full
/// lookback window; `labeled` additionally drops the final calendar day,
/// which has no next-day label.
pub fn anchors_in_range(
    range: (usize, usize),
    n_days: usize,
    lookback: usize,
    labeled: bool,
) -> Vec<usize> {
    let lo = range.0.max(lookback.saturating_sub(1));
    let cap = if labeled {
        n_days.saturating_sub(2)
    } else {
        n_days.saturating_sub(1)
    };
    let hi = range.1.min(cap);
    (lo..=hi.max(lo)).filter(|t| *t >= lo && *t <= hi).collect()
}

struct LnCache {
    xhat: Mat,
    inv: Vec<f64>,
}

fn layer_norm(x: &Mat, p: &LayerNormParams) -> (Mat, LnCache) {
    let (n, fd) = (x.rows(), x.cols());
    let mut out = Mat::zeros(n, fd);
    let mut xhat = Mat::zeros(n, fd);
    let mut inv = vec![0.0; n];
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / fd as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / fd as f64;
        let s = 1.0 / libm::sqrt(var + LN_EPS);
        inv[i] = s;
        let xh = xhat.row_mut(i);
        for j in 0..fd {
            xh[j] = (row[j] - mean) * s;
        }
        let o = out.row_mut(i);
        for j in 0..fd {
            o[j] = p.gamma[j] * xhat.at(i, j) + p.beta[j];
        }
    }
    (out, LnCache { xhat, inv })
}

fn layer_norm_backward(
    dout: &Mat,
    p: &LayerNormParams,
    cache: &LnCache,
    grads: &mut LayerNormParams,
    dx: &mut Mat,
) {
    let (n, fd) = (dout.rows(), dout.cols());
    for i in 0..n {
        let (dr, xh) = (dout.row(i), cache.xhat.row(i));
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for j in 0..fd {
            let dxh = dr[j] * p.gamma[j];
            s1 += dxh;
            s2 += dxh * xh[j];
            grads.gamma[j] += dr[j] * xh[j];
            grads.beta[j] += dr[j];
        }
        s1 /= fd as f64;
        s2 /= fd as f64;
        let dxr = dx.row_mut(i);
        for j in 0..fd {
            let dxh = dr[j] * p.gamma[j];
            dxr[j] += cache.inv[i] * (dxh - s1 - xh[j] * s2);
        }
    }
}

struct ForwardCache {
    temporal: Option<TemporalCache>,
    recurrent: Option<GruCache>,
    /// Per graph layer: (input features, layer cache).
    rgcn: Vec<(Mat, RgcnCache)>,
    /// Stock rows out of the graph stage (or the embeddings themselves).
    h_stock: Mat,
    g: Option<Mat>,
    encodings: Option<(Mat, EventEncodeCache)>,
    gate: Option<GateCache>,
    actions: Option<ActionHeadCache>,
    fused: Mat,
    ln_out: Mat,
    ln: LnCache,
}

/// Output of one forward pass, holding what the backward pass reuses.
pub struct Forward {
    pub yhat: Vec<f64>,
    /// Predicted continuous actions per stock (event path only).
    pub actions: Option<Mat>,
    cache: ForwardCache,
}

fn missing(part: &'static str) -> ModelError {
    ModelError::BadConfig(format!("parameters lack the {part} the config requires"))
}

pub fn forward(
    sample: &PreparedSample,
    graph: &HeteroGraph,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Forward, ModelError> {
    let n = graph.n_stocks();
    let f = config.fused_width();

    // Temporal stage.
    let (z, temporal_cache, recurrent_cache) = if config.use_mdwt {
        let pooled = sample.pooled.as_ref().ok_or_else(|| missing("wavelet features"))?;
        let p = params.temporal.as_ref().ok_or_else(|| missing("wavelet encoder"))?;
        let (z, c) = encode_pooled(pooled, p);
        (z, Some(c), None)
    } else {
        let batch = sample.window.as_ref().ok_or_else(|| missing("raw windows"))?;
        let p = params.recurrent.as_ref().ok_or_else(|| missing("recurrent encoder"))?;
        let (z, c) = gru_forward(batch, p);
        (z, None, Some(c))
    };
    if z.rows() != n {
        return Err(ModelError::BadConfig(format!(
            "sample covers {} stocks but the graph has {n}",
            z.rows()
        )));
    }

    // Graph stage.
    let mut rgcn = Vec::new();
    let h_stock = if config.use_hgcn {
        let ne = params.node_embed.as_ref().ok_or_else(|| missing("node embeddings"))?;
        if params.graph_layers.is_empty() {
            return Err(missing("graph layers"));
        }
        let k = graph.n_industries();
        if ne.industry.rows() != k {
            return Err(ModelError::BadConfig(format!(
                "industry embeddings cover {} industries but the graph has {k}",
                ne.industry.rows()
            )));
        }
        let mut x = Mat::zeros(graph.node_count(), config.embed_dim);
        for i in 0..n {
            x.row_mut(i).copy_from_slice(z.row(i));
        }
        for j in 0..k {
            x.row_mut(graph.industry_node(j)).copy_from_slice(ne.industry.row(j));
        }
        for p in 0..3 {
            x.row_mut(graph.investor_node(p)).copy_from_slice(ne.investor.row(p));
        }
        let mut cur = x;
        for layer in &params.graph_layers {
            let (out, cache) = rgcn_forward(&cur, graph, layer);
            rgcn.push((cur, cache));
            cur = out;
        }
        let mut h = Mat::zeros(n, f);
        for i in 0..n {
            h.row_mut(i).copy_from_slice(&cur.row(i)[..f]);
        }
        h
    } else {
        z
    };

    // Event-game stage.
    let (fused, g, encodings, gate_cache, actions_mat, actions_cache) = if config.use_gre {
        let ctx = sample.events.as_ref().ok_or_else(|| missing("event context"))?;
        let enc_params = params.event_encoder.as_ref().ok_or_else(|| missing("event encoder"))?;
        let gate = params.gate.as_ref().ok_or_else(|| missing("fusion gate"))?;
        let head = params.action_head.as_ref().ok_or_else(|| missing("action head"))?;
        let (enc, enc_cache) = encode_events(&ctx.inputs, enc_params);
        let mut g = Mat::zeros(n, f);
        for (j, (&stock, &w)) in ctx.stock_of.iter().zip(&ctx.weights).enumerate() {
            let row = g.row_mut(stock);
            for (acc, v) in row.iter_mut().zip(enc.row(j)) {
                *acc += w * v;
            }
        }
        let (fused, gc) = gated_fuse(&h_stock, &g, gate)?;
        let (a, ac) = predict_actions(&fused, head);
        (
            fused,
            Some(g),
            Some((enc, enc_cache)),
            Some(gc),
            Some(a),
            Some(ac),
        )
    } else {
        (h_stock.clone(), None, None, None, None, None)
    };

    // Normalized linear head.
    let (ln_out, ln) = layer_norm(&fused, &params.layer_norm);
    let scores = params.head.forward(&ln_out);
    let yhat: Vec<f64> = (0..n).map(|i| scores.at(i, 0)).collect();

    Ok(Forward {
        yhat,
        actions: actions_mat,
        cache: ForwardCache {
            temporal: temporal_cache,
            recurrent: recurrent_cache,
            rgcn,
            h_stock,
            g,
            encodings,
            gate: gate_cache,
            actions: actions_cache,
            fused,
            ln_out,
            ln,
        },
    })
}

/// Mean squared error over stocks with labels; `None` when no stock has one.
pub fn prediction_loss(
    yhat: &[f64],
    labels: &[f64],
    available: &[bool],
) -> Option<(f64, usize)> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..yhat.len() {
        if available[i] {
            let d = yhat[i] - labels[i];
            sum += d * d;
            count += 1;
        }
    }
    (count > 0).then(|| (sum / count as f64, count))
}

/// Total training objective: regression loss plus the weighted
/// equilibrium-consistency loss.
pub fn combine_losses(l_pred: f64, l_eq: f64, lambda_eq: f64) -> f64 {
    l_pred + lambda_eq * l_eq
}

/// The loss pieces of one anchor day, with how many stocks fed each piece.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub pred: f64,
    pub eq: f64,
    pub total: f64,
    pub labeled: usize,
    pub evented: usize,
}

fn losses_of(
    fwd: &Forward,
    sample: &PreparedSample,
    config: &ModelConfig,
) -> Result<LossBreakdown, ModelError> {
    let (pred, labeled) =
        prediction_loss(&fwd.yhat, &sample.labels, &sample.label_available).ok_or_else(|| {
            ModelError::NoLabels {
                date: sample.date.clone(),
            }
        })?;
    let (eq, evented) = match (&fwd.actions, sample.events.as_ref()) {
        (Some(a), Some(ctx)) => equilibrium_loss(a, &ctx.targets),
        _ => (0.0, 0),
    };
    Ok(LossBreakdown {
        pred,
        eq,
        total: combine_losses(pred, eq, config.lambda_eq),
        labeled,
        evented,
    })
}

/// Forward pass plus loss evaluation, no gradients.
pub fn evaluate_sample(
    sample: &PreparedSample,
    graph: &HeteroGraph,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(Forward, LossBreakdown), ModelError> {
    let fwd = forward(sample, graph, params, config)?;
    let losses = losses_of(&fwd, sample, config)?;
    Ok((fwd, losses))
}

/// Forward, loss, and backward for one anchor day; gradients of the total
/// objective accumulate into `grads` (shaped by `ModelParams::zeros_like`).
pub fn step_sample(
    sample: &PreparedSample,
    graph: &HeteroGraph,
    params: &ModelParams,
    config: &ModelConfig,
    grads: &mut ModelParams,
) -> Result<LossBreakdown, ModelError> {
    let (fwd, losses) = evaluate_sample(sample, graph, params, config)?;
    let n = fwd.yhat.len();
    let f = config.fused_width();

    // d L_pred / d yhat.
    let mut dy = Mat::zeros(n, 1);
    let w = 2.0 / losses.labeled as f64;
    for i in 0..n {
        if sample.label_available[i] {
            dy.set(i, 0, w * (fwd.yhat[i] - sample.labels[i]));
        }
    }

    // Head and layer norm.
    let mut dln = Mat::zeros(n, f);
    params
        .head
        .backward(&fwd.cache.ln_out, &dy, &mut grads.head, Some(&mut dln));
    let mut dfused = Mat::zeros(n, f);
    layer_norm_backward(&dln, &params.layer_norm, &fwd.cache.ln, &mut grads.layer_norm, &mut dfused);

    // Event-game stage.
    let mut dh = Mat::zeros(n, f);
    if config.use_gre {
        let ctx = sample.events.as_ref().ok_or_else(|| missing("event context"))?;
        let actions = fwd.actions.as_ref().ok_or_else(|| missing("action predictions"))?;
        let mut da = Mat::zeros(n, 3);
        equilibrium_loss_grad(actions, &ctx.targets, config.lambda_eq, &mut da);
        predict_actions_backward(
            &da,
            &fwd.cache.fused,
            params.action_head.as_ref().ok_or_else(|| missing("action head"))?,
            fwd.cache.actions.as_ref().ok_or_else(|| missing("action cache"))?,
            grads.action_head.as_mut().ok_or_else(|| missing("action head grads"))?,
            &mut dfused,
        );
        let g = fwd.cache.g.as_ref().ok_or_else(|| missing("game signal"))?;
        let mut dg = Mat::zeros(n, f);
        gated_fuse_backward(
            &dfused,
            &fwd.cache.h_stock,
            g,
            params.gate.as_ref().ok_or_else(|| missing("fusion gate"))?,
            fwd.cache.gate.as_ref().ok_or_else(|| missing("gate cache"))?,
            grads.gate.as_mut().ok_or_else(|| missing("gate grads"))?,
            &mut dh,
            &mut dg,
        );
        let (enc, enc_cache) = fwd.cache.encodings.as_ref().ok_or_else(|| missing("event encodings"))?;
        let mut denc = Mat::zeros(enc.rows(), f);
        for (j, (&stock, &wj)) in ctx.stock_of.iter().zip(&ctx.weights).enumerate() {
            let dr = denc.row_mut(j);
            for (d, v) in dr.iter_mut().zip(dg.row(stock)) {
                *d += wj * v;
            }
        }
        encode_events_backward(
            &denc,
            &ctx.inputs,
            params.event_encoder.as_ref().ok_or_else(|| missing("event encoder"))?,
            enc_cache,
            grads.event_encoder.as_mut().ok_or_else(|| missing("event encoder grads"))?,
        );
    } else {
        dh = dfused;
    }

    // Graph stage.
    let dz = if config.use_hgcn {
        let nodes = graph.node_count();
        let mut dout = Mat::zeros(nodes, f);
        for i in 0..n {
            dout.row_mut(i).copy_from_slice(dh.row(i));
        }
        for li in (0..params.graph_layers.len()).rev() {
            let (input, cache) = &fwd.cache.rgcn[li];
            let mut dinput = Mat::zeros(nodes, params.graph_layers[li].d_in());
            rgcn_backward(
                &dout,
                input,
                graph,
                &params.graph_layers[li],
                cache,
                &mut grads.graph_layers[li],
                &mut dinput,
            );
            dout = dinput;
        }
        let ne = grads.node_embed.as_mut().ok_or_else(|| missing("node embedding grads"))?;
        let k = graph.n_industries();
        for j in 0..k {
            let src = dout.row(graph.industry_node(j)).to_vec();
            for (g, v) in ne.industry.row_mut(j).iter_mut().zip(src) {
                *g += v;
            }
        }
        for p in 0..3 {
            let src = dout.row(graph.investor_node(p)).to_vec();
            for (g, v) in ne.investor.row_mut(p).iter_mut().zip(src) {
                *g += v;
            }
        }
        let mut dz = Mat::zeros(n, config.embed_dim);
        for i in 0..n {
            dz.row_mut(i).copy_from_slice(dout.row(i));
        }
        dz
    } else {
        dh
    };

    // Temporal stage.
    if config.use_mdwt {
        encode_pooled_backward(
            &dz,
            params.temporal.as_ref().ok_or_else(|| missing("wavelet encoder"))?,
            fwd.cache.temporal.as_ref().ok_or_else(|| missing("temporal cache"))?,
            grads.temporal.as_mut().ok_or_else(|| missing("temporal grads"))?,
        );
    } else {
        gru_backward(
            &dz,
            params.recurrent.as_ref().ok_or_else(|| missing("recurrent encoder"))?,
            fwd.cache.recurrent.as_ref().ok_or_else(|| missing("recurrent cache"))?,
            grads.recurrent.as_mut().ok_or_else(|| missing("recurrent grads"))?,
        );
    }

    Ok(losses)
}

/// Everything needed to reuse a trained model: parameters, the exact config
/// they were trained under, the stock universe, and the input statistics.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub stocks: Vec<String>,
    pub params: ModelParams,
    pub stats: TrainStats,
}

/// Per-day scores for a span of anchor days: `scores[(day, stock)]`.
#[derive(Clone, Debug)]
pub struct PredictionTable {
    pub dates: Vec<String>,
    pub stocks: Vec<String>,
    pub scores: Mat,
}

/// Runs a checkpoint over every anchor day in the inclusive date range.
/// The panel must be raw (unstandardized); the checkpoint's stored train
/// statistics are applied so inference matches training exactly. Anchors
/// without a full lookback window are skipped; an empty range is fine.
pub fn predict_range(
    ckpt: &Checkpoint,
    panel: &StockPanel,
    graph: &HeteroGraph,
    events: &[GameEvent],
    range: (&str, &str),
) -> Result<PredictionTable, ModelError> {
    ckpt.config.validate()?;
    if panel.stocks() != &ckpt.stocks[..] {
        let missing: Vec<String> = ckpt
            .stocks
            .iter()
            .filter(|s| panel.stocks().binary_search(s).is_err())
            .cloned()
            .collect();
        let extra: Vec<String> = panel
            .stocks()
            .iter()
            .filter(|s| ckpt.stocks.binary_search(s).is_err())
            .cloned()
            .collect();
        return Err(ModelError::StockMismatch { missing, extra });
    }
    if ckpt.config.channels != CHANNELS {
        return Err(ModelError::BadConfig(format!(
            "checkpoint expects {} channels per day, panel files carry {CHANNELS}",
            ckpt.config.channels
        )));
    }
    let std_panel = panel.standardize_with(&ckpt.stats)?;
    let dates = std_panel.dates();
    let lo = dates.partition_point(|d| d.as_str() < range.0);
    let hi = dates.partition_point(|d| d.as_str() <= range.1);
    let mut result_dates = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    if lo < hi {
        let anchors = anchors_in_range((lo, hi - 1), dates.len(), ckpt.config.lookback, false);
        let (resolved, _) = resolve_events(events, &std_panel);
        let samples = prepare_samples(&std_panel, &resolved, &ckpt.config, &anchors, false)?;
        for sample in &samples {
            let fwd = forward(sample, graph, &ckpt.params, &ckpt.config)?;
            result_dates.push(sample.date.clone());
            rows.push(fwd.yhat);
        }
    }
    let n = panel.n_stocks();
    let mut scores = Mat::zeros(rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        scores.row_mut(i).copy_from_slice(r);
    }
    Ok(PredictionTable {
        dates: result_dates,
        stocks: ckpt.stocks.clone(),
        scores,
    })
}
