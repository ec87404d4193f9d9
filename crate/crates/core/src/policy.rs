//! Residual feedforward policy: an input layer lifting (normalized time,
//! joint state, joint sensitivity) to the working width, four residual
//! blocks, and an affine output layer producing the joint action. The output
//! layer initializes to zero so the initial policy is the zero control.

use std::io::{Read, Write};

use crate::error::{CoreError, Result};
use crate::rng::{stream, Stream};
use crate::sim::ActionSource;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyConfig {
    pub input_dim: usize,
    pub width: usize,
    pub blocks: usize,
    pub output_dim: usize,
}

impl PolicyConfig {
    /// Layout for the joint policy of a game: input `(t/T, X, Y)`, width
    /// `input + 10`, four residual blocks, output the joint action.
    pub fn for_game(players: usize, state_dim: usize, action_dim: usize) -> Self {
        let input_dim = 1 + 2 * players * state_dim;
        PolicyConfig {
            input_dim,
            width: input_dim + 10,
            blocks: 4,
            output_dim: players * action_dim,
        }
    }

    /// Same inputs, but controlling a single player's action.
    pub fn for_single_player(players: usize, state_dim: usize, action_dim: usize) -> Self {
        let input_dim = 1 + 2 * players * state_dim;
        PolicyConfig {
            input_dim,
            width: input_dim + 10,
            blocks: 4,
            output_dim: action_dim,
        }
    }

    pub fn param_len(&self) -> usize {
        let input = self.width * self.input_dim + self.width;
        let per_block = 2 * (self.width * self.width + self.width);
        let output = self.output_dim * self.width + self.output_dim;
        input + self.blocks * per_block + output
    }
}

/// Flat parameter vector with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    pub data: Vec<f64>,
}

struct Layout {
    w_in: usize,
    b_in: usize,
    blocks: Vec<(usize, usize, usize, usize)>, // (w2, b2, w1, b1)
    w_out: usize,
    b_out: usize,
}

impl PolicyParams {
    fn layout(config: &PolicyConfig) -> Layout {
        let w = config.width;
        let mut cursor = 0usize;
        let mut take = |len: usize| {
            let at = cursor;
            cursor += len;
            at
        };
        let w_in = take(w * config.input_dim);
        let b_in = take(w);
        let mut blocks = Vec::with_capacity(config.blocks);
        for _ in 0..config.blocks {
            let w2 = take(w * w);
            let b2 = take(w);
            let w1 = take(w * w);
            let b1 = take(w);
            blocks.push((w2, b2, w1, b1));
        }
        let w_out = take(config.output_dim * w);
        let b_out = take(config.output_dim);
        debug_assert_eq!(cursor, config.param_len());
        Layout {
            w_in,
            b_in,
            blocks,
            w_out,
            b_out,
        }
    }

    /// He-uniform weights for the input and block layers, zeros for the
    /// output layer and all biases: the initial policy is the zero control.
    pub fn init(config: PolicyConfig, seed: u64) -> Self {
        let mut p = PolicyParams {
            config,
            data: vec![0.0; config.param_len()],
        };
        let layout = Self::layout(&config);
        p.fill_he(layout.w_in, config.width * config.input_dim, config.input_dim, seed, 0);
        for (b, &(w2, _, w1, _)) in layout.blocks.iter().enumerate() {
            p.fill_he(w2, config.width * config.width, config.width, seed, 1 + 2 * b as u64);
            p.fill_he(w1, config.width * config.width, config.width, seed, 2 + 2 * b as u64);
        }
        p
    }

    /// Every layer He-uniform, including the output layer; useful when a
    /// nonzero initial control is wanted.
    pub fn random_init(config: PolicyConfig, seed: u64) -> Self {
        let mut p = Self::init(config, seed);
        let layout = Self::layout(&config);
        p.fill_he(
            layout.w_out,
            config.output_dim * config.width,
            config.width,
            seed,
            1 + 2 * config.blocks as u64,
        );
        p
    }

    fn fill_he(&mut self, offset: usize, len: usize, fan_in: usize, seed: u64, layer: u64) {
        let bound = (6.0 / fan_in as f64).sqrt();
        for i in 0..len {
            let u = Stream::new(seed)
                .with(stream::WEIGHTS)
                .with(layer)
                .with(i as u64)
                .uniform();
            self.data[offset + i] = bound * (2.0 * u - 1.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Plain forward pass: `out` receives the action vector.
    pub fn forward(&self, t_norm: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        let cfg = &self.config;
        debug_assert_eq!(1 + x.len() + y.len(), cfg.input_dim);
        debug_assert_eq!(out.len(), cfg.output_dim);
        assert!(self.is_finite(), "policy parameters must be finite");
        let layout = Self::layout(cfg);
        let w = cfg.width;
        let mut input = Vec::with_capacity(cfg.input_dim);
        input.push(t_norm);
        input.extend_from_slice(x);
        input.extend_from_slice(y);

        let mut h = vec![0.0; w];
        affine(
            &self.data[layout.w_in..layout.w_in + w * cfg.input_dim],
            &self.data[layout.b_in..layout.b_in + w],
            &input,
            &mut h,
        );
        relu_inplace(&mut h);
        let mut v = vec![0.0; w];
        let mut u = vec![0.0; w];
        for &(w2, b2, w1, b1) in &layout.blocks {
            affine(
                &self.data[w2..w2 + w * w],
                &self.data[b2..b2 + w],
                &h,
                &mut v,
            );
            relu_inplace(&mut v);
            affine(
                &self.data[w1..w1 + w * w],
                &self.data[b1..b1 + w],
                &v,
                &mut u,
            );
            relu_inplace(&mut u);
            for i in 0..w {
                h[i] += u[i];
            }
        }
        affine(
            &self.data[layout.w_out..layout.w_out + cfg.output_dim * w],
            &self.data[layout.b_out..layout.b_out + cfg.output_dim],
            &h,
            out,
        );
    }

    const MAGIC: &'static [u8; 8] = b"APGCKPT1";

    /// Self-describing binary checkpoint: dimensions header plus the flat
    /// parameter array.
    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(Self::MAGIC)?;
        for v in [
            self.config.input_dim as u64,
            self.config.width as u64,
            self.config.blocks as u64,
            self.config.output_dim as u64,
            self.data.len() as u64,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(CoreError::Invalid("not a policy checkpoint file".into()));
        }
        let mut buf = [0u8; 8];
        let mut next = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut buf)?;
            Ok(u64::from_le_bytes(buf))
        };
        let config = PolicyConfig {
            input_dim: next(input)? as usize,
            width: next(input)? as usize,
            blocks: next(input)? as usize,
            output_dim: next(input)? as usize,
        };
        let len = next(input)? as usize;
        if len != config.param_len() {
            return Err(CoreError::Invalid(format!(
                "checkpoint length {len} does not match architecture ({})",
                config.param_len()
            )));
        }
        let mut data = Vec::with_capacity(len);
        let mut fbuf = [0u8; 8];
        for _ in 0..len {
            input.read_exact(&mut fbuf)?;
            data.push(f64::from_le_bytes(fbuf));
        }
        Ok(PolicyParams { config, data })
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = b[r];
        for (wv, xv) in row.iter().zip(x.iter()) {
            acc += wv * xv;
        }
        *o = acc;
    }
}

fn relu_inplace(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Tape handles for every layer of a policy, pushed once per tape.
pub struct PolicyVars {
    w_in: Var,
    b_in: Var,
    blocks: Vec<(Var, Var, Var, Var)>,
    w_out: Var,
    b_out: Var,
}

impl PolicyParams {
    /// Push all parameters as leaves; gradients accumulate across every
    /// forward recorded against these handles.
    pub fn push_leaves(&self, tape: &mut Tape) -> PolicyVars {
        let cfg = &self.config;
        let layout = Self::layout(cfg);
        let w = cfg.width;
        PolicyVars {
            w_in: tape.leaf(&self.data[layout.w_in..layout.w_in + w * cfg.input_dim]),
            b_in: tape.leaf(&self.data[layout.b_in..layout.b_in + w]),
            blocks: layout
                .blocks
                .iter()
                .map(|&(w2, b2, w1, b1)| {
                    (
                        tape.leaf(&self.data[w2..w2 + w * w]),
                        tape.leaf(&self.data[b2..b2 + w]),
                        tape.leaf(&self.data[w1..w1 + w * w]),
                        tape.leaf(&self.data[b1..b1 + w]),
                    )
                })
                .collect(),
            w_out: tape.leaf(&self.data[layout.w_out..layout.w_out + cfg.output_dim * w]),
            b_out: tape.leaf(&self.data[layout.b_out..layout.b_out + cfg.output_dim]),
        }
    }

    /// Differentiable forward pass against previously pushed leaves.
    /// `input` must be the concatenated `(t/T, x, y)` node.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &PolicyVars, input: Var) -> Var {
        let cfg = &self.config;
        let w = cfg.width;
        let lin = tape.matvec(vars.w_in, input, w, cfg.input_dim);
        let lin = tape.add(lin, vars.b_in);
        let mut h = tape.relu(lin);
        for &(w2, b2, w1, b1) in &vars.blocks {
            let z2 = tape.matvec(w2, h, w, w);
            let z2 = tape.add(z2, b2);
            let v = tape.relu(z2);
            let z1 = tape.matvec(w1, v, w, w);
            let z1 = tape.add(z1, b1);
            let u = tape.relu(z1);
            h = tape.add(u, h);
        }
        let out = tape.matvec(vars.w_out, h, cfg.output_dim, w);
        tape.add(out, vars.b_out)
    }

    /// Collect leaf adjoints into a flat gradient with the parameter layout.
    pub fn gradient_from(&self, tape: &Tape, vars: &PolicyVars, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.data.len());
        let mut cursor = 0usize;
        let mut copy = |tape: &Tape, v: Var, cursor: &mut usize| {
            let adj = tape.adjoint(v);
            out[*cursor..*cursor + adj.len()].copy_from_slice(adj);
            *cursor += adj.len();
        };
        copy(tape, vars.w_in, &mut cursor);
        copy(tape, vars.b_in, &mut cursor);
        for &(w2, b2, w1, b1) in &vars.blocks {
            copy(tape, w2, &mut cursor);
            copy(tape, b2, &mut cursor);
            copy(tape, w1, &mut cursor);
            copy(tape, b1, &mut cursor);
        }
        copy(tape, vars.w_out, &mut cursor);
        copy(tape, vars.b_out, &mut cursor);
        debug_assert_eq!(cursor, self.data.len());
    }
}

/// Feedback action source backed by a policy network.
pub struct NeuralPolicy<'a> {
    pub params: &'a PolicyParams,
    pub horizon: f64,
}

impl ActionSource for NeuralPolicy<'_> {
    fn actions(&self, _step: usize, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.params.forward(t / self.horizon, x, y, out);
    }
}
