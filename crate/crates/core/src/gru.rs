//! Single-layer GRU with a scalar linear head.
//!
//! ```text
//! z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
//! r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
//! c_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
//! h_t = (1 - z_t) * h_{t-1} + z_t * c_t,      h_0 = 0
//! f_t = w_out . h_t + b_out
//! ```
//!
//! Three derivative routines share the stored [`ForwardTrace`]:
//!
//! * [`backward`]: reverse mode through time, `d/dtheta sum_t g_t f_t`.
//! * [`price_jacobian`] / [`jvp`]: forward-mode tangents of `f_t` with respect
//!   to inputs, giving `J[t][tau] = df_t / dx_{tau, price}`.
//! * [`mixed_grad`]: reverse mode over the tangent recurrence, giving
//!   `d/dtheta sum_{t,tau} w[t][tau] J[t][tau]` without finite differences.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math::{dot, sigmoid, sqrt, tanh};
use crate::{Error, Result};

/// Number of scalars in a GRU with input size `d` and hidden size `h`:
/// `3h(d + h + 1) + h + 1`.
pub const fn param_count(d: usize, h: usize) -> usize {
    3 * h * (d + h + 1) + h + 1
}

/// Which gate a weight block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Update = 0,
    Reset = 1,
    Candidate = 2,
}

/// GRU weights stored as one flat vector.
///
/// Layout, each matrix row-major:
/// `W_z (HxD), U_z (HxH), b_z (H), W_r, U_r, b_r, W_h, U_h, b_h, w_out (H), b_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    input_dim: usize,
    hidden: usize,
    theta: Vec<f64>,
}

/// Owned structured copy of [`GruParams`], one field per block.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParts {
    pub w_z: Vec<f64>,
    pub u_z: Vec<f64>,
    pub b_z: Vec<f64>,
    pub w_r: Vec<f64>,
    pub u_r: Vec<f64>,
    pub b_r: Vec<f64>,
    pub w_h: Vec<f64>,
    pub u_h: Vec<f64>,
    pub b_h: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl GruParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Result<Self> {
        Self::from_theta(input_dim, hidden, vec![0.0; param_count(input_dim, hidden)])
    }

    pub fn from_theta(input_dim: usize, hidden: usize, theta: Vec<f64>) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidInput("input and hidden sizes must be at least 1".into()));
        }
        let n = param_count(input_dim, hidden);
        if theta.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: theta.len() });
        }
        Ok(Self { input_dim, hidden, theta })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn into_theta(self) -> Vec<f64> {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Same shape, new values.
    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        Self::from_theta(self.input_dim, self.hidden, theta.to_vec())
    }

    fn layout(&self) -> Layout {
        Layout::new(self.input_dim, self.hidden)
    }

    pub fn w(&self, g: Gate) -> &[f64] {
        let l = self.layout();
        &self.theta[l.w(g)..l.w(g) + l.h * l.d]
    }

    pub fn u(&self, g: Gate) -> &[f64] {
        let l = self.layout();
        &self.theta[l.u(g)..l.u(g) + l.h * l.h]
    }

    pub fn b(&self, g: Gate) -> &[f64] {
        let l = self.layout();
        &self.theta[l.b(g)..l.b(g) + l.h]
    }

    pub fn w_out(&self) -> &[f64] {
        let l = self.layout();
        &self.theta[l.w_out()..l.w_out() + l.h]
    }

    pub fn b_out(&self) -> f64 {
        self.theta[self.layout().b_out()]
    }

    pub fn to_parts(&self) -> GruParts {
        use Gate::*;
        GruParts {
            w_z: self.w(Update).to_vec(),
            u_z: self.u(Update).to_vec(),
            b_z: self.b(Update).to_vec(),
            w_r: self.w(Reset).to_vec(),
            u_r: self.u(Reset).to_vec(),
            b_r: self.b(Reset).to_vec(),
            w_h: self.w(Candidate).to_vec(),
            u_h: self.u(Candidate).to_vec(),
            b_h: self.b(Candidate).to_vec(),
            w_out: self.w_out().to_vec(),
            b_out: self.b_out(),
        }
    }

    pub fn from_parts(input_dim: usize, hidden: usize, p: &GruParts) -> Result<Self> {
        let mut theta = Vec::with_capacity(param_count(input_dim, hidden));
        for block in [&p.w_z, &p.u_z, &p.b_z, &p.w_r, &p.u_r, &p.b_r, &p.w_h, &p.u_h, &p.b_h, &p.w_out] {
            theta.extend_from_slice(block);
        }
        theta.push(p.b_out);
        Self::from_theta(input_dim, hidden, theta)
    }
}

/// Offsets into the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    d: usize,
    h: usize,
}

impl Layout {
    fn new(d: usize, h: usize) -> Self {
        Self { d, h }
    }
    fn block(&self) -> usize {
        self.h * (self.d + self.h + 1)
    }
    fn w(&self, g: Gate) -> usize {
        g as usize * self.block()
    }
    fn u(&self, g: Gate) -> usize {
        self.w(g) + self.h * self.d
    }
    fn b(&self, g: Gate) -> usize {
        self.u(g) + self.h * self.h
    }
    fn w_out(&self) -> usize {
        3 * self.block()
    }
    fn b_out(&self) -> usize {
        self.w_out() + self.h
    }
}

/// Weights uniform on `[-1/sqrt(H), 1/sqrt(H)]` (including `w_out`), biases zero.
pub fn init_params(input_dim: usize, hidden: usize, seed: u64) -> Result<GruParams> {
    let mut p = GruParams::zeros(input_dim, hidden)?;
    let l = p.layout();
    let a = 1.0 / sqrt(hidden as f64);
    let dist = Uniform::new_inclusive(-a, a).expect("finite bounds");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for g in [Gate::Update, Gate::Reset, Gate::Candidate] {
        for i in l.w(g)..l.b(g) {
            p.theta[i] = dist.sample(&mut rng);
        }
    }
    for i in l.w_out()..l.b_out() {
        p.theta[i] = dist.sample(&mut rng);
    }
    Ok(p)
}

// y += M x for row-major M (rows = y.len()).
#[inline]
fn gemv_acc(m: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = x.len();
    for (i, yi) in y.iter_mut().enumerate() {
        *yi += dot(&m[i * cols..(i + 1) * cols], x);
    }
}

// y += M^T x for row-major M (rows = x.len(), cols = y.len()).
#[inline]
fn gemv_t_acc(m: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = y.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (yj, mij) in y.iter_mut().zip(&m[i * cols..(i + 1) * cols]) {
            *yj += mij * xi;
        }
    }
}

// G += a b^T for row-major G (rows = a.len(), cols = b.len()).
#[inline]
fn outer_acc(g: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (gij, bj) in g[i * cols..(i + 1) * cols].iter_mut().zip(b) {
            *gij += ai * bj;
        }
    }
}

/// Everything computed by [`forward`], stored per step, row-major `T x H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub steps: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    /// Candidate state `tanh(...)`.
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    /// Predictions `f_t`.
    pub f: Vec<f64>,
    zero: Vec<f64>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.steps
    }
    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }
    pub fn x(&self, t: usize) -> &[f64] {
        &self.x[t * self.input_dim..(t + 1) * self.input_dim]
    }
    pub fn z(&self, t: usize) -> &[f64] {
        &self.z[t * self.hidden..(t + 1) * self.hidden]
    }
    pub fn r(&self, t: usize) -> &[f64] {
        &self.r[t * self.hidden..(t + 1) * self.hidden]
    }
    pub fn c(&self, t: usize) -> &[f64] {
        &self.c[t * self.hidden..(t + 1) * self.hidden]
    }
    pub fn h(&self, t: usize) -> &[f64] {
        &self.h[t * self.hidden..(t + 1) * self.hidden]
    }
    /// `h_{t-1}`, with the zero initial state for `t = 0`.
    pub fn h_prev(&self, t: usize) -> &[f64] {
        if t == 0 {
            &self.zero
        } else {
            self.h(t - 1)
        }
    }

    fn matches(&self, p: &GruParams) -> bool {
        self.input_dim == p.input_dim && self.hidden == p.hidden
    }
}

/// Run the GRU over `x` (row-major `T x D`) from `h_0 = 0`.
pub fn forward(p: &GruParams, x: &[f64]) -> Result<ForwardTrace> {
    let (d, hd) = (p.input_dim, p.hidden);
    if x.len() % d != 0 {
        return Err(Error::InvalidInput(alloc::format!("input length {} not a multiple of {d}", x.len())));
    }
    let steps = x.len() / d;
    let mut tr = ForwardTrace {
        steps,
        input_dim: d,
        hidden: hd,
        x: x.to_vec(),
        z: vec![0.0; steps * hd],
        r: vec![0.0; steps * hd],
        c: vec![0.0; steps * hd],
        h: vec![0.0; steps * hd],
        f: vec![0.0; steps],
        zero: vec![0.0; hd],
    };
    let (wz, uz, bz) = (p.w(Gate::Update), p.u(Gate::Update), p.b(Gate::Update));
    let (wr, ur, br) = (p.w(Gate::Reset), p.u(Gate::Reset), p.b(Gate::Reset));
    let (wh, uh, bh) = (p.w(Gate::Candidate), p.u(Gate::Candidate), p.b(Gate::Candidate));
    let w_out = p.w_out();
    let mut hp = vec![0.0; hd];
    let mut az = vec![0.0; hd];
    let mut ar = vec![0.0; hd];
    let mut ah = vec![0.0; hd];
    let mut q = vec![0.0; hd];
    for t in 0..steps {
        let xt = &x[t * d..(t + 1) * d];
        az.copy_from_slice(bz);
        gemv_acc(wz, xt, &mut az);
        gemv_acc(uz, &hp, &mut az);
        ar.copy_from_slice(br);
        gemv_acc(wr, xt, &mut ar);
        gemv_acc(ur, &hp, &mut ar);
        let o = t * hd;
        for i in 0..hd {
            tr.z[o + i] = sigmoid(az[i]);
            tr.r[o + i] = sigmoid(ar[i]);
            q[i] = tr.r[o + i] * hp[i];
        }
        ah.copy_from_slice(bh);
        gemv_acc(wh, xt, &mut ah);
        gemv_acc(uh, &q, &mut ah);
        for i in 0..hd {
            let c = tanh(ah[i]);
            let z = tr.z[o + i];
            tr.c[o + i] = c;
            tr.h[o + i] = (1.0 - z) * hp[i] + z * c;
        }
        hp.copy_from_slice(&tr.h[o..o + hd]);
        let f = dot(w_out, &hp) + p.b_out();
        if !f.is_finite() || hp.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalOverflow { step: t });
        }
        tr.f[t] = f;
    }
    Ok(tr)
}

/// Predictions only.
pub fn predict(p: &GruParams, x: &[f64]) -> Result<Vec<f64>> {
    forward(p, x).map(|tr| tr.f)
}

/// Scratch vectors reused across reverse steps.
struct Scratch {
    g_z: Vec<f64>,
    g_c: Vec<f64>,
    g_r: Vec<f64>,
    g_q: Vec<f64>,
    g_hp: Vec<f64>,
    g_az: Vec<f64>,
    g_ar: Vec<f64>,
    g_ah: Vec<f64>,
    q: Vec<f64>,
    // tangent side
    dz: Vec<f64>,
    dr: Vec<f64>,
    dq: Vec<f64>,
    dc: Vec<f64>,
    g_dz: Vec<f64>,
    g_dc: Vec<f64>,
    g_dr: Vec<f64>,
    g_dq: Vec<f64>,
    g_dhp: Vec<f64>,
    g_daz: Vec<f64>,
    g_dar: Vec<f64>,
    g_dah: Vec<f64>,
}

impl Scratch {
    fn new(h: usize) -> Self {
        let z = || vec![0.0; h];
        Self {
            g_z: z(),
            g_c: z(),
            g_r: z(),
            g_q: z(),
            g_hp: z(),
            g_az: z(),
            g_ar: z(),
            g_ah: z(),
            q: z(),
            dz: z(),
            dr: z(),
            dq: z(),
            dc: z(),
            g_dz: z(),
            g_dc: z(),
            g_dr: z(),
            g_dq: z(),
            g_dhp: z(),
            g_daz: z(),
            g_dar: z(),
            g_dah: z(),
        }
    }
}

/// Mutable gradient blocks matching [`GruParams`]' layout.
struct GradBlocks<'a> {
    w: [&'a mut [f64]; 3],
    u: [&'a mut [f64]; 3],
    b: [&'a mut [f64]; 3],
    w_out: &'a mut [f64],
    b_out: &'a mut f64,
}

fn split_grad(grad: &mut [f64], d: usize, h: usize) -> GradBlocks<'_> {
    let (wz, rest) = grad.split_at_mut(h * d);
    let (uz, rest) = rest.split_at_mut(h * h);
    let (bz, rest) = rest.split_at_mut(h);
    let (wr, rest) = rest.split_at_mut(h * d);
    let (ur, rest) = rest.split_at_mut(h * h);
    let (br, rest) = rest.split_at_mut(h);
    let (wh, rest) = rest.split_at_mut(h * d);
    let (uh, rest) = rest.split_at_mut(h * h);
    let (bh, rest) = rest.split_at_mut(h);
    let (w_out, rest) = rest.split_at_mut(h);
    GradBlocks { w: [wz, wr, wh], u: [uz, ur, uh], b: [bz, br, bh], w_out, b_out: &mut rest[0] }
}

/// Reverse step through the primal cell: accumulates parameter gradients and
/// replaces `g_h` (adjoint of `h_t`) with the adjoint of `h_{t-1}`.
fn primal_reverse_step(p: &GruParams, tr: &ForwardTrace, t: usize, g_h: &mut [f64], gb: &mut GradBlocks<'_>, s: &mut Scratch) {
    let hd = p.hidden;
    let (z, r, c, hp, x) = (tr.z(t), tr.r(t), tr.c(t), tr.h_prev(t), tr.x(t));
    for i in 0..hd {
        s.g_z[i] = g_h[i] * (c[i] - hp[i]);
        s.g_hp[i] = g_h[i] * (1.0 - z[i]);
        s.g_ah[i] = g_h[i] * z[i] * (1.0 - c[i] * c[i]);
        s.q[i] = r[i] * hp[i];
    }
    outer_acc(gb.w[2], &s.g_ah, x);
    outer_acc(gb.u[2], &s.g_ah, &s.q);
    add_into(gb.b[2], &s.g_ah);
    s.g_q.fill(0.0);
    gemv_t_acc(p.u(Gate::Candidate), &s.g_ah, &mut s.g_q);
    for i in 0..hd {
        s.g_hp[i] += s.g_q[i] * r[i];
        s.g_ar[i] = s.g_q[i] * hp[i] * r[i] * (1.0 - r[i]);
        s.g_az[i] = s.g_z[i] * z[i] * (1.0 - z[i]);
    }
    outer_acc(gb.w[1], &s.g_ar, x);
    outer_acc(gb.u[1], &s.g_ar, hp);
    add_into(gb.b[1], &s.g_ar);
    gemv_t_acc(p.u(Gate::Reset), &s.g_ar, &mut s.g_hp);
    outer_acc(gb.w[0], &s.g_az, x);
    outer_acc(gb.u[0], &s.g_az, hp);
    add_into(gb.b[0], &s.g_az);
    gemv_t_acc(p.u(Gate::Update), &s.g_az, &mut s.g_hp);
    g_h.copy_from_slice(&s.g_hp);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Gradient of `sum_t dl_df[t] * f_t` with respect to theta (BPTT).
pub fn backward(p: &GruParams, tr: &ForwardTrace, dl_df: &[f64]) -> Result<Vec<f64>> {
    if !tr.matches(p) {
        return Err(Error::TraceMismatch);
    }
    if dl_df.len() != tr.steps {
        return Err(Error::LengthMismatch { expected: tr.steps, found: dl_df.len() });
    }
    let mut grad = vec![0.0; p.len()];
    let mut g_h = vec![0.0; p.hidden];
    let mut s = Scratch::new(p.hidden);
    {
        let mut gb = split_grad(&mut grad, p.input_dim, p.hidden);
        let w_out = p.w_out();
        for t in (0..tr.steps).rev() {
            let g = dl_df[t];
            if g != 0.0 {
                *gb.b_out += g;
                for i in 0..p.hidden {
                    gb.w_out[i] += g * tr.h(t)[i];
                    g_h[i] += g * w_out[i];
                }
            }
            primal_reverse_step(p, tr, t, &mut g_h, &mut gb, &mut s);
        }
    }
    Ok(grad)
}

/// Tangent quantities of one input-direction sweep, row-major `T x H`.
struct TangentBuf {
    az: Vec<f64>,
    ar: Vec<f64>,
    ah: Vec<f64>,
    h: Vec<f64>,
}

impl TangentBuf {
    fn new(steps: usize, h: usize) -> Self {
        Self { az: vec![0.0; steps * h], ar: vec![0.0; steps * h], ah: vec![0.0; steps * h], h: vec![0.0; steps * h] }
    }
}

/// Propagate a tangent whose only nonzero input component is `x_{start, channel} = 1`
/// (or an arbitrary `dx` when given) through steps `start..end`.
fn tangent_sweep(
    p: &GruParams,
    tr: &ForwardTrace,
    start: usize,
    end: usize,
    seed: TangentSeed<'_>,
    buf: &mut TangentBuf,
    s: &mut Scratch,
) -> Result<()> {
    let (d, hd) = (p.input_dim, p.hidden);
    let zero = vec![0.0; hd];
    for t in start..end {
        let o = t * hd;
        let dhp: &[f64] = if t == start { &zero } else { &buf.h[o - hd..o] };
        let dhp = dhp.to_vec();
        let (z, r, c, hp) = (tr.z(t), tr.r(t), tr.c(t), tr.h_prev(t));
        let daz = &mut buf.az[o..o + hd];
        daz.fill(0.0);
        gemv_acc(p.u(Gate::Update), &dhp, daz);
        let dar = &mut buf.ar[o..o + hd];
        dar.fill(0.0);
        gemv_acc(p.u(Gate::Reset), &dhp, dar);
        let dah = &mut buf.ah[o..o + hd];
        dah.fill(0.0);
        match seed {
            TangentSeed::Unit { channel } if t == start => {
                for i in 0..hd {
                    buf.az[o + i] += p.w(Gate::Update)[i * d + channel];
                    buf.ar[o + i] += p.w(Gate::Reset)[i * d + channel];
                    buf.ah[o + i] += p.w(Gate::Candidate)[i * d + channel];
                }
            }
            TangentSeed::Dense(dx) => {
                let dxt = &dx[t * d..(t + 1) * d];
                gemv_acc(p.w(Gate::Update), dxt, &mut buf.az[o..o + hd]);
                gemv_acc(p.w(Gate::Reset), dxt, &mut buf.ar[o..o + hd]);
                gemv_acc(p.w(Gate::Candidate), dxt, &mut buf.ah[o..o + hd]);
            }
            _ => {}
        }
        for i in 0..hd {
            s.dr[i] = r[i] * (1.0 - r[i]) * buf.ar[o + i];
            s.dq[i] = s.dr[i] * hp[i] + r[i] * dhp[i];
        }
        gemv_acc(p.u(Gate::Candidate), &s.dq, &mut buf.ah[o..o + hd]);
        for i in 0..hd {
            let dz = z[i] * (1.0 - z[i]) * buf.az[o + i];
            let dc = (1.0 - c[i] * c[i]) * buf.ah[o + i];
            let v = dhp[i] + dz * (c[i] - hp[i]) + z[i] * (dc - dhp[i]);
            if !v.is_finite() {
                return Err(Error::NumericalOverflow { step: t });
            }
            buf.h[o + i] = v;
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum TangentSeed<'a> {
    Unit { channel: usize },
    Dense(&'a [f64]),
}

/// Directional derivative of every `f_t` along an input perturbation `dx`
/// (row-major `T x D`).
pub fn jvp(p: &GruParams, tr: &ForwardTrace, dx: &[f64]) -> Result<Vec<f64>> {
    if !tr.matches(p) {
        return Err(Error::TraceMismatch);
    }
    if dx.len() != tr.x.len() {
        return Err(Error::LengthMismatch { expected: tr.x.len(), found: dx.len() });
    }
    let mut buf = TangentBuf::new(tr.steps, p.hidden);
    let mut s = Scratch::new(p.hidden);
    tangent_sweep(p, tr, 0, tr.steps, TangentSeed::Dense(dx), &mut buf, &mut s)?;
    Ok((0..tr.steps).map(|t| dot(p.w_out(), &buf.h[t * p.hidden..(t + 1) * p.hidden])).collect())
}

/// Lower-triangular `T x T` table indexed by `(t, tau)` with `tau <= t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangular {
    steps: usize,
    data: Vec<f64>,
}

impl Triangular {
    pub fn zeros(steps: usize) -> Self {
        Self { steps, data: vec![0.0; steps * (steps + 1) / 2] }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    fn idx(t: usize, tau: usize) -> usize {
        t * (t + 1) / 2 + tau
    }

    /// `None` when `tau > t` or out of range.
    pub fn get(&self, t: usize, tau: usize) -> Option<f64> {
        (tau <= t && t < self.steps).then(|| self.data[Self::idx(t, tau)])
    }

    /// Panics if `tau > t`.
    pub fn set(&mut self, t: usize, tau: usize, v: f64) {
        assert!(tau <= t && t < self.steps, "({t}, {tau}) outside the lower triangle");
        self.data[Self::idx(t, tau)] = v;
    }

    /// Entries of row `t`, `tau = 0..=t`.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[Self::idx(t, 0)..Self::idx(t, 0) + t + 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.steps).flat_map(move |t| (0..=t).map(move |tau| (t, tau, self.data[Self::idx(t, tau)])))
    }
}

/// `J[t][tau] = df_t / dx_{tau, price}` for `tau <= t`.
pub type PriceJacobian = Triangular;

/// Price Jacobian by forward-mode tangents, one sweep per seed step `tau`.
pub fn price_jacobian(p: &GruParams, tr: &ForwardTrace, price_channel: usize) -> Result<PriceJacobian> {
    if !tr.matches(p) {
        return Err(Error::TraceMismatch);
    }
    if price_channel >= p.input_dim {
        return Err(Error::InvalidInput(alloc::format!("price channel {price_channel} >= D = {}", p.input_dim)));
    }
    let hd = p.hidden;
    let mut jac = Triangular::zeros(tr.steps);
    let mut buf = TangentBuf::new(tr.steps, hd);
    let mut s = Scratch::new(hd);
    for tau in 0..tr.steps {
        tangent_sweep(p, tr, tau, tr.steps, TangentSeed::Unit { channel: price_channel }, &mut buf, &mut s)?;
        for t in tau..tr.steps {
            jac.set(t, tau, dot(p.w_out(), &buf.h[t * hd..(t + 1) * hd]));
        }
    }
    Ok(jac)
}

/// Gradient with respect to theta of `sum_{t, tau} weights[t][tau] * J[t][tau]`.
pub fn mixed_grad(p: &GruParams, x: &[f64], price_channel: usize, weights: &Triangular) -> Result<Vec<f64>> {
    let tr = forward(p, x)?;
    mixed_grad_with_trace(p, &tr, price_channel, weights)
}

/// [`mixed_grad`] reusing an existing trace.
///
/// For each seed step `tau` the tangent recurrence is swept forward and then
/// differentiated in reverse together with the primal cell. Primal adjoints
/// that leave step `tau` are collected and pushed through steps `< tau` in a
/// single final BPTT sweep.
pub fn mixed_grad_with_trace(
    p: &GruParams,
    tr: &ForwardTrace,
    price_channel: usize,
    weights: &Triangular,
) -> Result<Vec<f64>> {
    if !tr.matches(p) {
        return Err(Error::TraceMismatch);
    }
    if weights.steps() != tr.steps {
        return Err(Error::LengthMismatch { expected: tr.steps, found: weights.steps() });
    }
    if price_channel >= p.input_dim {
        return Err(Error::InvalidInput(alloc::format!("price channel {price_channel} >= D = {}", p.input_dim)));
    }
    let (steps, hd) = (tr.steps, p.hidden);
    let mut grad = vec![0.0; p.len()];
    let mut pending = vec![0.0; steps * hd];
    let mut buf = TangentBuf::new(steps, hd);
    let mut s = Scratch::new(hd);
    let mut g_h = vec![0.0; hd];
    let mut g_dh = vec![0.0; hd];
    let zero = vec![0.0; hd];
    let w_out = p.w_out().to_vec();
    {
        let mut gb = split_grad(&mut grad, p.input_dim, hd);
        for tau in 0..steps {
            let Some(last) = (tau..steps).rev().find(|&t| weights.data[Triangular::idx(t, tau)] != 0.0) else {
                continue;
            };
            tangent_sweep(p, tr, tau, last + 1, TangentSeed::Unit { channel: price_channel }, &mut buf, &mut s)?;
            g_h.fill(0.0);
            g_dh.fill(0.0);
            for t in (tau..=last).rev() {
                let om = weights.data[Triangular::idx(t, tau)];
                let o = t * hd;
                if om != 0.0 {
                    for i in 0..hd {
                        g_dh[i] += om * w_out[i];
                        gb.w_out[i] += om * buf.h[o + i];
                    }
                }
                let dhp: &[f64] = if t == tau { &zero } else { &buf.h[o - hd..o] };
                let dx_unit = if t == tau { Some(price_channel) } else { None };
                tangent_reverse_step(p, tr, t, &buf, dhp, dx_unit, &mut g_h, &mut g_dh, &mut gb, &mut s);
            }
            if !g_h.iter().chain(g_dh.iter()).all(|v| v.is_finite()) {
                return Err(Error::NumericalOverflow { step: tau });
            }
            if tau > 0 {
                add_into(&mut pending[(tau - 1) * hd..tau * hd], &g_h);
            }
        }
        g_h.fill(0.0);
        for t in (0..steps).rev() {
            add_into(&mut g_h, &pending[t * hd..(t + 1) * hd]);
            if g_h.iter().all(|&v| v == 0.0) {
                continue;
            }
            primal_reverse_step(p, tr, t, &mut g_h, &mut gb, &mut s);
        }
    }
    if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericalOverflow { step: i });
    }
    Ok(grad)
}

/// Reverse step through one cell of the primal-plus-tangent recurrence.
///
/// On entry `g_h`, `g_dh` are the adjoints of `h_t` and of its tangent; on
/// exit they are the adjoints of `h_{t-1}` and its tangent.
#[allow(clippy::too_many_arguments)]
fn tangent_reverse_step(
    p: &GruParams,
    tr: &ForwardTrace,
    t: usize,
    buf: &TangentBuf,
    dhp: &[f64],
    dx_unit: Option<usize>,
    g_h: &mut [f64],
    g_dh: &mut [f64],
    gb: &mut GradBlocks<'_>,
    s: &mut Scratch,
) {
    let (d, hd) = (p.input_dim, p.hidden);
    let o = t * hd;
    let (z, r, c, hp, x) = (tr.z(t), tr.r(t), tr.c(t), tr.h_prev(t), tr.x(t));
    let (daz, dar, dah) = (&buf.az[o..o + hd], &buf.ar[o..o + hd], &buf.ah[o..o + hd]);
    for i in 0..hd {
        s.dz[i] = z[i] * (1.0 - z[i]) * daz[i];
        s.dr[i] = r[i] * (1.0 - r[i]) * dar[i];
        s.dq[i] = s.dr[i] * hp[i] + r[i] * dhp[i];
        s.dc[i] = (1.0 - c[i] * c[i]) * dah[i];
        s.q[i] = r[i] * hp[i];
    }
    // h_t and its tangent
    for i in 0..hd {
        s.g_dhp[i] = g_dh[i] * (1.0 - z[i]);
        s.g_dz[i] = g_dh[i] * (c[i] - hp[i]);
        s.g_c[i] = g_dh[i] * s.dz[i] + g_h[i] * z[i];
        s.g_hp[i] = -g_dh[i] * s.dz[i] + g_h[i] * (1.0 - z[i]);
        s.g_z[i] = g_dh[i] * (s.dc[i] - dhp[i]) + g_h[i] * (c[i] - hp[i]);
        s.g_dc[i] = g_dh[i] * z[i];
    }
    // candidate
    for i in 0..hd {
        let sc = 1.0 - c[i] * c[i];
        s.g_dah[i] = s.g_dc[i] * sc;
        s.g_c[i] += s.g_dc[i] * dah[i] * (-2.0 * c[i]);
        s.g_ah[i] = s.g_c[i] * sc;
    }
    let u_h = p.u(Gate::Candidate);
    if let Some(ch) = dx_unit {
        for i in 0..hd {
            gb.w[2][i * d + ch] += s.g_dah[i];
        }
    }
    outer_acc(gb.u[2], &s.g_dah, &s.dq);
    s.g_dq.fill(0.0);
    gemv_t_acc(u_h, &s.g_dah, &mut s.g_dq);
    outer_acc(gb.w[2], &s.g_ah, x);
    outer_acc(gb.u[2], &s.g_ah, &s.q);
    add_into(gb.b[2], &s.g_ah);
    s.g_q.fill(0.0);
    gemv_t_acc(u_h, &s.g_ah, &mut s.g_q);
    // reset gate
    for i in 0..hd {
        s.g_dr[i] = s.g_dq[i] * hp[i];
        s.g_hp[i] += s.g_dq[i] * s.dr[i] + s.g_q[i] * r[i];
        s.g_dhp[i] += s.g_dq[i] * r[i];
        let sr = r[i] * (1.0 - r[i]);
        s.g_r[i] = s.g_dq[i] * dhp[i] + s.g_q[i] * hp[i] + s.g_dr[i] * dar[i] * (1.0 - 2.0 * r[i]);
        s.g_dar[i] = s.g_dr[i] * sr;
        s.g_ar[i] = s.g_r[i] * sr;
    }
    let u_r = p.u(Gate::Reset);
    if let Some(ch) = dx_unit {
        for i in 0..hd {
            gb.w[1][i * d + ch] += s.g_dar[i];
        }
    }
    outer_acc(gb.u[1], &s.g_dar, dhp);
    gemv_t_acc(u_r, &s.g_dar, &mut s.g_dhp);
    outer_acc(gb.w[1], &s.g_ar, x);
    outer_acc(gb.u[1], &s.g_ar, hp);
    add_into(gb.b[1], &s.g_ar);
    gemv_t_acc(u_r, &s.g_ar, &mut s.g_hp);
    // update gate
    for i in 0..hd {
        let sz = z[i] * (1.0 - z[i]);
        s.g_daz[i] = s.g_dz[i] * sz;
        s.g_z[i] += s.g_dz[i] * daz[i] * (1.0 - 2.0 * z[i]);
        s.g_az[i] = s.g_z[i] * sz;
    }
    let u_z = p.u(Gate::Update);
    if let Some(ch) = dx_unit {
        for i in 0..hd {
            gb.w[0][i * d + ch] += s.g_daz[i];
        }
    }
    outer_acc(gb.u[0], &s.g_daz, dhp);
    gemv_t_acc(u_z, &s.g_daz, &mut s.g_dhp);
    outer_acc(gb.w[0], &s.g_az, x);
    outer_acc(gb.u[0], &s.g_az, hp);
    add_into(gb.b[0], &s.g_az);
    gemv_t_acc(u_z, &s.g_az, &mut s.g_hp);

    g_h.copy_from_slice(&s.g_hp);
    g_dh.copy_from_slice(&s.g_dhp);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_formula() {
        assert_eq!(param_count(1, 1), 11);
        assert_eq!(init_params(1, 1, 0).unwrap().len(), 11);
        assert_eq!(init_params(4, 8, 0).unwrap().len(), 3 * 8 * 13 + 9);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params(4, 8, 7).unwrap();
        let b = init_params(4, 8, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(4, 8, 8).unwrap());
        let bound = 1.0 / libm::sqrt(8.0);
        assert!(a.theta().iter().all(|v| v.abs() <= bound));
        for g in [Gate::Update, Gate::Reset, Gate::Candidate] {
            assert!(a.b(g).iter().all(|&v| v == 0.0));
        }
        assert_eq!(a.b_out(), 0.0);
        assert!(init_params(0, 3, 1).is_err());
    }

    #[test]
    fn parts_round_trip() {
        let p = init_params(3, 5, 11).unwrap();
        let q = GruParams::from_parts(3, 5, &p.to_parts()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let p = GruParams::zeros(2, 3).unwrap();
        let x = [0.3, -1.0, 2.0, 0.5, 7.0, 1.0];
        let tr = forward(&p, &x).unwrap();
        assert!(tr.f.iter().all(|&f| f == 0.0));
        assert!(tr.z.iter().all(|&z| z == 0.5));
        assert!(tr.r.iter().all(|&r| r == 0.5));
        assert!(tr.h.iter().all(|&h| h == 0.0));
        let jac = price_jacobian(&p, &tr, 1).unwrap();
        assert!(jac.iter().all(|(_, _, v)| v == 0.0));
    }

    #[test]
    fn empty_sequence() {
        let p = init_params(2, 3, 1).unwrap();
        let tr = forward(&p, &[]).unwrap();
        assert!(tr.is_empty());
        assert!(backward(&p, &tr, &[]).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn scalar_cell_by_hand() {
        // D = H = 1, theta = [wz, uz, bz, wr, ur, br, wh, uh, bh, wo, bo]
        let th = [0.5, -0.3, 0.1, 0.2, 0.4, -0.2, 0.9, -0.6, 0.05, 1.5, 0.25];
        let p = GruParams::from_theta(1, 1, th.to_vec()).unwrap();
        let xs = [0.8, -0.4];
        let sig = |a: f64| 1.0 / (1.0 + (-a).exp());
        let mut h = 0.0;
        let mut fs = [0.0; 2];
        for (t, &x) in xs.iter().enumerate() {
            let z = sig(th[0] * x + th[1] * h + th[2]);
            let r = sig(th[3] * x + th[4] * h + th[5]);
            let c = (th[6] * x + th[7] * (r * h) + th[8]).tanh();
            h = (1.0 - z) * h + z * c;
            fs[t] = th[9] * h + th[10];
        }
        let tr = forward(&p, &xs).unwrap();
        for t in 0..2 {
            assert!((tr.f[t] - fs[t]).abs() < 1e-14, "{} vs {}", tr.f[t], fs[t]);
        }
    }

    #[test]
    fn overflow_is_reported() {
        let mut p = init_params(1, 2, 3).unwrap();
        let n = p.len();
        p.theta_mut()[n - 1] = f64::INFINITY;
        assert_eq!(forward(&p, &[1.0, 2.0]), Err(Error::NumericalOverflow { step: 0 }));
    }

    #[test]
    fn mismatched_trace() {
        let p = init_params(2, 3, 1).unwrap();
        let q = init_params(2, 4, 1).unwrap();
        let tr = forward(&p, &[0.1, 0.2]).unwrap();
        assert_eq!(backward(&q, &tr, &[1.0]), Err(Error::TraceMismatch));
        assert!(backward(&p, &tr, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn triangular_absent_above_diagonal() {
        let mut j = Triangular::zeros(4);
        j.set(3, 1, 2.0);
        assert_eq!(j.get(3, 1), Some(2.0));
        assert_eq!(j.get(1, 3), None);
        assert_eq!(j.get(4, 0), None);
        assert_eq!(j.row(3), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_weights_zero_mixed_grad() {
        let p = init_params(2, 3, 5).unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let g = mixed_grad(&p, &x, 0, &Triangular::zeros(6)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }
}
