//! Trading-event signals and the three-player action game.
//!
//! Each listed event carries a date, a (-1/0/1) action triple for the three
//! investor types, and the realized 1-day return. Per stock and anchor day,
//! in-window events are weighted by exponential age decay, encoded through a
//! positional-embedding MLP, and averaged into a game signal that a sigmoid
//! gate blends into the stock embedding. The same events define a 3-player
//! game whose payoffs are linear in each player's own action; its equilibrium
//! profile supervises an auxiliary action-prediction head.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::mat::Mat;
use crate::nn::{elu, elu_grad_from_out, sigmoid, tanh, Linear};

pub const EVENTS_HEADER: &str = "date,stock_id,a_ins,a_hot,a_ret,return_1d";

/// One listing: which stock, when, who did what, and the realized return.
#[derive(Clone, Debug, PartialEq)]
pub struct GameEvent {
    pub date: String,
    pub stock: String,
    /// Actions in investor order (ins, hot, ret), each in {-1, 0, 1}.
    pub actions: [i8; 3],
    pub return_1d: f64,
}

#[derive(Debug, PartialEq)]
pub enum GameError {
    Parse { line: usize, msg: String },
    BadAction { value: i8 },
    BadSpec { msg: String },
    ShapeMismatch { what: &'static str, got: usize, want: usize },
}

impl core::fmt::Display for GameError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GameError::Parse { line, msg } => write!(f, "line {line}: {msg}"),
            GameError::BadAction { value } => {
                write!(f, "action {value} outside {{-1, 0, 1}}")
            }
            GameError::BadSpec { msg } => write!(f, "invalid game spec: {msg}"),
            GameError::ShapeMismatch { what, got, want } => {
                write!(f, "{what}: got {got}, want {want}")
            }
        }
    }
}

/// `date,stock_id,a_ins,a_hot,a_ret,return_1d` rows; actions must be the
/// integers -1, 0, or 1.
pub fn parse_events_csv(text: &str) -> Result<Vec<GameEvent>, GameError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(GameError::Parse {
        line: 1,
        msg: "empty events file".into(),
    })?;
    if header.trim_end() != EVENTS_HEADER {
        return Err(GameError::Parse {
            line: 1,
            msg: alloc::format!("bad header {:?}", header.trim_end()),
        });
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(GameError::Parse {
                line: lineno,
                msg: alloc::format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let mut actions = [0i8; 3];
        for (slot, raw) in actions.iter_mut().zip(&fields[2..5]) {
            *slot = match *raw {
                "-1" => -1,
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(GameError::Parse {
                        line: lineno,
                        msg: alloc::format!("action {other:?} not one of -1, 0, 1"),
                    })
                }
            };
        }
        let return_1d: f64 = fields[5].parse().map_err(|_| GameError::Parse {
            line: lineno,
            msg: alloc::format!("bad return {:?}", fields[5]),
        })?;
        if !return_1d.is_finite() {
            return Err(GameError::Parse {
                line: lineno,
                msg: alloc::format!("non-finite return {return_1d}"),
            });
        }
        out.push(GameEvent {
            date: fields[0].to_string(),
            stock: fields[1].to_string(),
            actions,
            return_1d,
        });
    }
    Ok(out)
}

/// Exponential age decay over a fixed trailing window of trading days.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DecaySpec {
    /// Per-day decay rate, > 0.
    pub alpha: f64,
    /// Window length in trading days; events older than this are excluded
    /// by the caller.
    pub window: usize,
}

/// Normalized event weights exp(-alpha * age) / sum for one stock's
/// in-window events, given event day indices and the anchor day index.
/// Empty input yields an empty weight list.
pub fn decay_weights(event_days: &[usize], anchor: usize, spec: &DecaySpec) -> Vec<f64> {
    debug_assert!(spec.alpha > 0.0);
    let mut weights: Vec<f64> = event_days
        .iter()
        .map(|&d| {
            debug_assert!(d <= anchor && anchor - d < spec.window, "event outside window");
            libm::exp(-spec.alpha * (anchor - d) as f64)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in &mut weights {
            *w /= total;
        }
    }
    weights
}

/// Sinusoidal embedding of an event's age with geometrically spaced
/// frequencies: pairs (sin(t/10000^(2i/P)), cos(t/10000^(2i/P))).
pub fn pos_embedding(offset: f64, width: usize) -> Vec<f64> {
    assert!(width >= 2 && width % 2 == 0, "positional width must be even");
    let mut out = vec![0.0; width];
    for i in 0..width / 2 {
        let freq = libm::pow(10000.0, -((2 * i) as f64) / width as f64);
        out[2 * i] = libm::sin(offset * freq);
        out[2 * i + 1] = libm::cos(offset * freq);
    }
    out
}

/// Encoder input: positional embedding of the age concatenated with the
/// action triple.
pub fn event_input(offset: f64, actions: [i8; 3], pos_dim: usize) -> Vec<f64> {
    let mut x = pos_embedding(offset, pos_dim);
    x.extend(actions.iter().map(|&a| a as f64));
    x
}

/// Two-layer map from (pos_dim + 3)-wide event inputs to signal width.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct EventEncoderParams {
    pub l1: Linear,
    pub l2: Linear,
}

impl EventEncoderParams {
    pub fn zeros(pos_dim: usize, hidden: usize, out: usize) -> Self {
        EventEncoderParams {
            l1: Linear::zeros(pos_dim + 3, hidden),
            l2: Linear::zeros(hidden, out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        EventEncoderParams {
            l1: self.l1.zeros_like(),
            l2: self.l2.zeros_like(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.l1.d_in()
    }

    pub fn out_dim(&self) -> usize {
        self.l2.d_out()
    }

    /// Mutable views over all parameter storage, for optimizers.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.l1.slices_mut();
        out.extend(self.l2.slices_mut());
        out
    }
}

pub struct EventEncodeCache {
    pre1: Mat,
    act1: Mat,
}

/// Encodes a batch of event inputs (one row per event) to signal vectors.
pub fn encode_events(x: &Mat, p: &EventEncoderParams) -> (Mat, EventEncodeCache) {
    let pre1 = p.l1.forward(x);
    let mut act1 = pre1.clone();
    for v in act1.data_mut() {
        *v = elu(*v);
    }
    let out = p.l2.forward(&act1);
    (out, EventEncodeCache { pre1, act1 })
}

pub fn encode_events_backward(
    dout: &Mat,
    x: &Mat,
    p: &EventEncoderParams,
    cache: &EventEncodeCache,
    grads: &mut EventEncoderParams,
) {
    let mut dact1 = Mat::zeros(cache.act1.rows(), cache.act1.cols());
    p.l2.backward(&cache.act1, dout, &mut grads.l2, Some(&mut dact1));
    for i in 0..dact1.rows() {
        let row = dact1.row_mut(i);
        let pre = cache.pre1.row(i);
        let act = cache.act1.row(i);
        for j in 0..row.len() {
            row[j] *= elu_grad_from_out(pre[j], act[j]);
        }
    }
    // Event inputs are data, not parameters: no input gradient needed.
    p.l1.backward(x, &dact1, &mut grads.l1, None);
}

/// Weighted average of event encodings: g = sum_j w_j v_j.
pub fn aggregate_signal(weights: &[f64], encodings: &Mat) -> Vec<f64> {
    assert_eq!(weights.len(), encodings.rows());
    let mut g = vec![0.0; encodings.cols()];
    for (j, &w) in weights.iter().enumerate() {
        for (acc, v) in g.iter_mut().zip(encodings.row(j)) {
            *acc += w * v;
        }
    }
    g
}

pub fn aggregate_signal_backward(dg: &[f64], weights: &[f64], d_encodings: &mut Mat) {
    for (j, &w) in weights.iter().enumerate() {
        for (d, out) in d_encodings.row_mut(j).iter_mut().zip(dg) {
            *d += w * out;
        }
    }
}

/// Sigmoid gate over concatenated [stock embedding; game signal].
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct GateParams {
    /// 2F -> F map producing the gate pre-activation.
    pub lin: Linear,
}

impl GateParams {
    pub fn zeros(width: usize) -> Self {
        GateParams {
            lin: Linear::zeros(2 * width, width),
        }
    }

    pub fn zeros_like(&self) -> Self {
        GateParams {
            lin: self.lin.zeros_like(),
        }
    }

    pub fn width(&self) -> usize {
        self.lin.d_out()
    }

    /// Mutable views over all parameter storage, for optimizers.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.lin.slices_mut()
    }
}

#[derive(Debug)]
pub struct GateCache {
    concat: Mat,
    z: Mat,
}

/// z = sigmoid([h; g] W_z + b_z); output z*h + (1-z)*g elementwise.
pub fn gated_fuse(h: &Mat, g: &Mat, p: &GateParams) -> Result<(Mat, GateCache), GameError> {
    if h.rows() != g.rows() || h.cols() != g.cols() {
        return Err(GameError::ShapeMismatch {
            what: "game signal shape",
            got: g.cols(),
            want: h.cols(),
        });
    }
    if h.cols() != p.width() {
        return Err(GameError::ShapeMismatch {
            what: "gate width",
            got: h.cols(),
            want: p.width(),
        });
    }
    let n = h.rows();
    let f = h.cols();
    let mut concat = Mat::zeros(n, 2 * f);
    for i in 0..n {
        let row = concat.row_mut(i);
        row[..f].copy_from_slice(h.row(i));
        row[f..].copy_from_slice(g.row(i));
    }
    let mut z = p.lin.forward(&concat);
    for v in z.data_mut() {
        *v = sigmoid(*v);
    }
    let mut out = Mat::zeros(n, f);
    for i in 0..n {
        let o = out.row_mut(i);
        let (hr, gr, zr) = (h.row(i), g.row(i), z.row(i));
        for j in 0..f {
            o[j] = zr[j] * hr[j] + (1.0 - zr[j]) * gr[j];
        }
    }
    Ok((out, GateCache { concat, z }))
}

pub fn gated_fuse_backward(
    dout: &Mat,
    h: &Mat,
    g: &Mat,
    p: &GateParams,
    cache: &GateCache,
    grads: &mut GateParams,
    dh: &mut Mat,
    dg: &mut Mat,
) {
    let n = h.rows();
    let f = h.cols();
    let mut dpre = Mat::zeros(n, f);
    for i in 0..n {
        let (dr, hr, gr, zr) = (dout.row(i), h.row(i), g.row(i), cache.z.row(i));
        let dp = dpre.row_mut(i);
        for j in 0..f {
            // d out / d z = h - g; d z / d pre = z (1 - z).
            dp[j] = dr[j] * (hr[j] - gr[j]) * zr[j] * (1.0 - zr[j]);
        }
    }
    let mut dconcat = Mat::zeros(n, 2 * f);
    p.lin.backward(&cache.concat, &dpre, &mut grads.lin, Some(&mut dconcat));
    for i in 0..n {
        let dc = dconcat.row(i);
        let (dr, zr) = (dout.row(i), cache.z.row(i));
        let dhr = dh.row_mut(i);
        for j in 0..f {
            dhr[j] += dr[j] * zr[j] + dc[j];
        }
        let dgr = dg.row_mut(i);
        for j in 0..f {
            dgr[j] += dr[j] * (1.0 - zr[j]) + dc[f + j];
        }
    }
}

/// The three players' follow structure and coupling strength. `beta[p][q]`
/// weights how much player q's action enters player p's payoff.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GameSpec {
    pub lambda_follow: f64,
    pub beta: [[f64; 3]; 3],
}

impl Default for GameSpec {
    /// Retail follows both institutions and speculative capital; speculative
    /// capital half-follows institutions; institutions follow nobody.
    fn default() -> Self {
        GameSpec {
            lambda_follow: 0.1,
            beta: [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.0, 1.0, 0.0]],
        }
    }
}

impl GameSpec {
    pub fn validate(&self) -> Result<(), GameError> {
        if !self.lambda_follow.is_finite() || self.lambda_follow < 0.0 {
            return Err(GameError::BadSpec {
                msg: alloc::format!("lambda_follow {} must be finite and >= 0", self.lambda_follow),
            });
        }
        for p in 0..3 {
            for q in 0..3 {
                if !self.beta[p][q].is_finite() {
                    return Err(GameError::BadSpec {
                        msg: alloc::format!("beta[{p}][{q}] is not finite"),
                    });
                }
            }
            if self.beta[p][p] != 0.0 {
                return Err(GameError::BadSpec {
                    msg: alloc::format!(
                        "beta diagonal must be zero, found beta[{p}][{p}] = {}",
                        self.beta[p][p]
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Joint action in player order (ins, hot, ret).
pub type Profile = [i8; 3];

pub const ACTIONS: [i8; 3] = [-1, 0, 1];

/// All 27 joint profiles in lexicographic order with -1 < 0 < 1.
pub fn all_profiles() -> Vec<Profile> {
    let mut out = Vec::with_capacity(27);
    for &x in &ACTIONS {
        for &y in &ACTIONS {
            for &z in &ACTIONS {
                out.push([x, y, z]);
            }
        }
    }
    out
}

fn check_profile(a: Profile) -> Result<(), GameError> {
    for &v in &a {
        if !ACTIONS.contains(&v) {
            return Err(GameError::BadAction { value: v });
        }
    }
    Ok(())
}

/// Coefficient of player p's own action in their payoff:
/// c_p = r + lambda * sum_{q != p} beta[p][q] a_q. The payoff is a_p * c_p,
/// so p's best responses are sign(c_p) when c_p != 0 and any action when
/// c_p = 0.
fn coefficient(p: usize, a: Profile, r: f64, spec: &GameSpec) -> f64 {
    let mut follow = 0.0;
    for q in 0..3 {
        if q != p {
            follow += spec.beta[p][q] * a[q] as f64;
        }
    }
    r + spec.lambda_follow * follow
}

/// Player p's utility under joint action a: own return exposure plus the
/// follow coupling.
pub fn payoff(p: usize, a: Profile, r: f64, spec: &GameSpec) -> Result<f64, GameError> {
    check_profile(a)?;
    Ok(a[p] as f64 * coefficient(p, a, r, spec))
}

/// Sum over players of (best unilateral deviation payoff - current payoff).
/// Zero exactly when the profile is a pure equilibrium.
pub fn profile_regret(a: Profile, r: f64, spec: &GameSpec) -> f64 {
    let mut total = 0.0;
    for p in 0..3 {
        let c = coefficient(p, a, r, spec);
        // max over b in {-1,0,1} of b*c is |c|.
        total += libm::fabs(c) - a[p] as f64 * c;
    }
    total
}

/// All pure equilibria: profiles where every player's action is a weak best
/// response, i.e. total regret is exactly zero.
pub fn pure_equilibria(r: f64, spec: &GameSpec) -> Vec<Profile> {
    all_profiles()
        .into_iter()
        .filter(|&a| profile_regret(a, r, spec) == 0.0)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Pure,
    FallbackRegret,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumProfile {
    pub actions: Profile,
    pub status: SolveStatus,
    pub total_regret: f64,
}

/// Selects the joint profile minimizing (total regret, total activity,
/// lexicographic order). Pure equilibria have regret 0, so when any exist the
/// least-active, lexicographically-first one wins; otherwise the result is
/// the minimum-regret fallback.
pub fn solve_equilibrium(r: f64, spec: &GameSpec) -> EquilibriumProfile {
    let mut best: Option<(f64, i32, Profile)> = None;
    for a in all_profiles() {
        let regret = profile_regret(a, r, spec);
        let activity = a.iter().map(|&v| v.abs() as i32).sum::<i32>();
        let better = match &best {
            None => true,
            Some((br, ba, _)) => regret < *br || (regret == *br && activity < *ba),
        };
        if better {
            best = Some((regret, activity, a));
        }
    }
    let (total_regret, _, actions) = best.expect("profile space is never empty");
    EquilibriumProfile {
        actions,
        status: if total_regret == 0.0 {
            SolveStatus::Pure
        } else {
            SolveStatus::FallbackRegret
        },
        total_regret,
    }
}

/// Two-layer head with tanh activations mapping fused stock state to
/// continuous per-player actions in (-1, 1).
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ActionHeadParams {
    pub l1: Linear,
    pub l2: Linear,
}

impl ActionHeadParams {
    pub fn zeros(width: usize) -> Self {
        ActionHeadParams {
            l1: Linear::zeros(width, width),
            l2: Linear::zeros(width, 3),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ActionHeadParams {
            l1: self.l1.zeros_like(),
            l2: self.l2.zeros_like(),
        }
    }

    /// Mutable views over all parameter storage, for optimizers.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.l1.slices_mut();
        out.extend(self.l2.slices_mut());
        out
    }
}

pub struct ActionHeadCache {
    act1: Mat,
    out: Mat,
}

pub fn predict_actions(x: &Mat, p: &ActionHeadParams) -> (Mat, ActionHeadCache) {
    let mut act1 = p.l1.forward(x);
    for v in act1.data_mut() {
        *v = tanh(*v);
    }
    let mut out = p.l2.forward(&act1);
    for v in out.data_mut() {
        *v = tanh(*v);
    }
    (
        out.clone(),
        ActionHeadCache { act1, out },
    )
}

pub fn predict_actions_backward(
    dout: &Mat,
    x: &Mat,
    p: &ActionHeadParams,
    cache: &ActionHeadCache,
    grads: &mut ActionHeadParams,
    dx: &mut Mat,
) {
    let mut dpre2 = dout.clone();
    for i in 0..dpre2.rows() {
        let row = dpre2.row_mut(i);
        let out = cache.out.row(i);
        for j in 0..row.len() {
            row[j] *= 1.0 - out[j] * out[j];
        }
    }
    let mut dact1 = Mat::zeros(cache.act1.rows(), cache.act1.cols());
    p.l2.backward(&cache.act1, &dpre2, &mut grads.l2, Some(&mut dact1));
    for i in 0..dact1.rows() {
        let row = dact1.row_mut(i);
        let act = cache.act1.row(i);
        for j in 0..row.len() {
            row[j] *= 1.0 - act[j] * act[j];
        }
    }
    p.l1.backward(x, &dact1, &mut grads.l1, Some(dx));
}

/// Mean over evented stocks of the summed squared action error; stocks
/// without an equilibrium target are skipped. Returns the loss and how many
/// stocks were included (0 means the loss carries no signal).
pub fn equilibrium_loss(pred: &Mat, targets: &[Option<Profile>]) -> (f64, usize) {
    assert_eq!(pred.rows(), targets.len());
    assert_eq!(pred.cols(), 3);
    let mut total = 0.0;
    let mut included = 0usize;
    for (i, target) in targets.iter().enumerate() {
        if let Some(t) = target {
            let p = pred.row(i);
            for j in 0..3 {
                let d = p[j] - t[j] as f64;
                total += d * d;
            }
            included += 1;
        }
    }
    if included == 0 {
        (0.0, 0)
    } else {
        (total / included as f64, included)
    }
}

/// Accumulates scale * dL/dpred for the mean-squared equilibrium loss.
pub fn equilibrium_loss_grad(
    pred: &Mat,
    targets: &[Option<Profile>],
    scale: f64,
    dpred: &mut Mat,
) {
    let included = targets.iter().filter(|t| t.is_some()).count();
    if included == 0 {
        return;
    }
    let w = scale * 2.0 / included as f64;
    for (i, target) in targets.iter().enumerate() {
        if let Some(t) = target {
            let p = pred.row(i);
            let d = dpred.row_mut(i);
            for j in 0..3 {
                d[j] += w * (p[j] - t[j] as f64);
            }
        }
    }
}
