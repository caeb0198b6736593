use super::batch::{encode_sample, Batch, EncodedSample};
use super::config::ModelConfig;
use super::heads::{eol_loss, gen_loss, guidance, LabelHead};
use super::layers::{causal_mask, positions, Attention, FeedForward, Guide, Init, Norm};
use super::rgcn::{fuse, rgcn_forward, RgcnLayer};
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::corpus::{PosLexicon, Sample, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct EncoderLayer {
    norm1: Norm,
    attn: Attention,
    norm2: Norm,
    ffn: FeedForward,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    norm1: Norm,
    self_attn: Attention,
    norm2: Norm,
    cross_attn: Attention,
    norm3: Norm,
    ffn: FeedForward,
}

#[derive(Debug, Clone)]
struct Params {
    /// Shared by source, target and output projection.
    embed: ParamId,
    encoder: Vec<EncoderLayer>,
    enc_norm: Norm,
    rgcn: Vec<RgcnLayer>,
    head: LabelHead,
    decoder: Vec<DecoderLayer>,
    dec_norm: Norm,
}

impl Params {
    fn build(cfg: &ModelConfig, store: &mut ParamStore) -> Result<Params> {
        let d = cfg.d_model;
        let mut init = Init::new(store, cfg.init_seed);
        let embed = init.uniform("embed", &[cfg.vocab_size, d], (3.0 / d as f64).sqrt())?;
        let mut encoder = Vec::new();
        for l in 0..cfg.enc_layers {
            let p = format!("enc.{l}");
            encoder.push(EncoderLayer {
                norm1: Norm::new(&mut init, &format!("{p}.norm1"), d)?,
                attn: Attention::new(&mut init, &format!("{p}.attn"), d, cfg.heads)?,
                norm2: Norm::new(&mut init, &format!("{p}.norm2"), d)?,
                ffn: FeedForward::new(&mut init, &format!("{p}.ffn"), d, cfg.ffn_dim)?,
            });
        }
        let enc_norm = Norm::new(&mut init, "enc.norm", d)?;
        let rgcn = (0..cfg.rgcn_layers)
            .map(|l| RgcnLayer::new(&mut init, &format!("rgcn.{l}"), d))
            .collect::<Result<_>>()?;
        let head = LabelHead::new(&mut init, "label", d, cfg.label_mode.num_classes())?;
        let mut decoder = Vec::new();
        for l in 0..cfg.dec_layers {
            let p = format!("dec.{l}");
            decoder.push(DecoderLayer {
                norm1: Norm::new(&mut init, &format!("{p}.norm1"), d)?,
                self_attn: Attention::new(&mut init, &format!("{p}.self"), d, cfg.heads)?,
                norm2: Norm::new(&mut init, &format!("{p}.norm2"), d)?,
                cross_attn: Attention::new(&mut init, &format!("{p}.cross"), d, cfg.heads)?,
                norm3: Norm::new(&mut init, &format!("{p}.norm3"), d)?,
                ffn: FeedForward::new(&mut init, &format!("{p}.ffn"), d, cfg.ffn_dim)?,
            });
        }
        let dec_norm = Norm::new(&mut init, "dec.norm", d)?;
        Ok(Params {
            embed,
            encoder,
            enc_norm,
            rgcn,
            head,
            decoder,
            dec_norm,
        })
    }
}

/// Source-side results of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct SourceState {
    /// Encoder output `[B, K, d]`.
    pub encoder: Var,
    /// Fused graph/encoder representation `[B, K, d]`, the decoder memory.
    pub memory: Var,
    /// `[B, K, C]`.
    pub label_logits: Var,
    pub label_probs: Var,
    /// Guidance `[B, K]`.
    pub lambda: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct Losses {
    pub gen: Var,
    pub eol: Var,
    pub source: SourceState,
    /// `[B, T, V]`.
    pub token_logits: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Greedy,
    Beam(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub strategy: Strategy,
    /// Cap on generated tokens including `</s>`; the model's `max_len`
    /// when `None`.
    pub max_len: Option<usize>,
    /// `false` forces the guidance to zero, i.e. plain cross-attention.
    pub guided: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            strategy: Strategy::Greedy,
            max_len: None,
            guided: true,
        }
    }
}

/// Encoder, graph branch, label head and guided decoder with their
/// parameters and vocabulary.
#[derive(Debug, Clone)]
pub struct RewriteModel {
    config: ModelConfig,
    vocab: Vocab,
    store: ParamStore,
    params: Params,
    lexicon: PosLexicon,
    positions: Tensor,
}

impl RewriteModel {
    /// Fresh model; `config.vocab_size` is taken from `vocab`.
    pub fn new(mut config: ModelConfig, vocab: Vocab) -> Result<Self> {
        config.vocab_size = vocab.len();
        config.validate()?;
        let mut store = ParamStore::new();
        let params = Params::build(&config, &mut store)?;
        Ok(RewriteModel {
            positions: positions(config.max_len, config.d_model),
            config,
            vocab,
            store,
            params,
            lexicon: PosLexicon::english(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn set_lexicon(&mut self, lexicon: PosLexicon) {
        self.lexicon = lexicon;
    }

    pub fn lexicon(&self) -> &PosLexicon {
        &self.lexicon
    }

    /// Parameters used only by the label head.
    pub fn label_head_params(&self) -> Vec<ParamId> {
        let h = &self.params.head;
        [Some(h.hidden.w), h.hidden.b, Some(h.out.w), h.out.b].into_iter().flatten().collect()
    }

    pub fn encode(&self, sample: &Sample) -> Result<EncodedSample> {
        let e = encode_sample(sample, &self.vocab, &self.lexicon)?;
        if e.src.len() > self.config.max_len {
            return Err(Error::Invalid(format!(
                "source stream of {} tokens exceeds max_len {}",
                e.src.len(),
                self.config.max_len
            )));
        }
        Ok(e)
    }

    fn embed(&self, t: &mut Tape, ids: &[usize], batch: usize, len: usize) -> Result<Var> {
        if len > self.config.max_len {
            return Err(Error::Invalid(format!("sequence of {len} exceeds max_len {}", self.config.max_len)));
        }
        let d = self.config.d_model;
        let table = t.param(self.params.embed);
        let x = t.embedding(table, ids)?;
        let x = t.reshape(x, &[batch, len, d])?;
        let x = t.scale(x, (d as f64).sqrt());
        let pos = Tensor::new(vec![len, d], self.positions.data()[..len * d].to_vec())?;
        let pos = t.constant(pos);
        let x = t.add(x, pos)?;
        Ok(t.dropout(x, self.config.dropout))
    }

    /// Encoder, graph convolution, fusion and label head.
    pub fn encode_source(&self, t: &mut Tape, batch: &Batch) -> Result<SourceState> {
        let p = self.config.dropout;
        let mut x = self.embed(t, &batch.src_ids, batch.size, batch.src_len)?;
        let mask = t.constant(batch.key_mask.clone());
        for layer in &self.params.encoder {
            let h = layer.norm1.forward(t, x)?;
            let a = layer.attn.forward(t, h, h, Some(mask), None)?;
            let a = t.dropout(a, p);
            x = t.add(x, a)?;
            let h = layer.norm2.forward(t, x)?;
            let f = layer.ffn.forward(t, h, p)?;
            let f = t.dropout(f, p);
            x = t.add(x, f)?;
        }
        let encoder = self.params.enc_norm.forward(t, x)?;
        let adjacency: Vec<Var> = batch.adjacency.iter().map(|a| t.constant(a.clone())).collect();
        let graph = rgcn_forward(t, encoder, &adjacency, &self.params.rgcn)?;
        let memory = fuse(t, graph, encoder)?;
        let label_logits = self.params.head.logits(t, memory)?;
        let label_probs = t.softmax(label_logits, 2)?;
        let lambda = guidance(t, label_probs, self.config.label_mode, self.config.guidance_grad)?;
        Ok(SourceState {
            encoder,
            memory,
            label_logits,
            label_probs,
            lambda,
        })
    }

    /// Token logits `[B, T, V]` for decoder inputs `dec_in` (`[B * T]`).
    pub fn decode_logits(
        &self,
        t: &mut Tape,
        memory: Var,
        lambda: Var,
        key_mask: Var,
        dec_in: &[usize],
        batch: usize,
        len: usize,
    ) -> Result<Var> {
        let p = self.config.dropout;
        let mut y = self.embed(t, dec_in, batch, len)?;
        let causal = t.constant(causal_mask(len));
        let guide = Guide {
            lambda,
            tau: self.config.tau_d,
        };
        for layer in &self.params.decoder {
            let h = layer.norm1.forward(t, y)?;
            let a = layer.self_attn.forward(t, h, h, Some(causal), None)?;
            let a = t.dropout(a, p);
            y = t.add(y, a)?;
            let h = layer.norm2.forward(t, y)?;
            let c = layer.cross_attn.forward(t, h, memory, Some(key_mask), Some(guide))?;
            let c = t.dropout(c, p);
            y = t.add(y, c)?;
            let h = layer.norm3.forward(t, y)?;
            let f = layer.ffn.forward(t, h, p)?;
            let f = t.dropout(f, p);
            y = t.add(y, f)?;
        }
        let y = self.params.dec_norm.forward(t, y)?;
        let table = t.param(self.params.embed);
        t.matmul_ext(y, table, true)
    }

    /// Teacher-forced forward pass with both losses.
    pub fn losses(&self, t: &mut Tape, batch: &Batch) -> Result<Losses> {
        let source = self.encode_source(t, batch)?;
        let mask = t.constant(batch.key_mask.clone());
        let token_logits = self.decode_logits(
            t,
            source.memory,
            source.lambda,
            mask,
            &batch.dec_in,
            batch.size,
            batch.tgt_len,
        )?;
        let gen = gen_loss(t, token_logits, &batch.targets)?;
        let eol = eol_loss(t, source.label_logits, &batch.labels)?;
        Ok(Losses {
            gen,
            eol,
            source,
            token_logits,
        })
    }

    /// Decodes a rewrite for every item. Guidance is computed once per
    /// input from the source pass and reused at every step.
    pub fn generate(&self, items: &[&EncodedSample], opts: GenerateOptions) -> Result<Vec<Vec<String>>> {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let k = match opts.strategy {
            Strategy::Greedy => 1,
            Strategy::Beam(0) => return Err(Error::Invalid("beam size must be positive".into())),
            Strategy::Beam(k) => k,
        };
        let max_len = opts.max_len.unwrap_or(self.config.max_len).min(self.config.max_len);
        let batch = Batch::new(items, self.config.label_mode);
        let (memory, lambda) = {
            let mut t = Tape::new(&self.store);
            let s = self.encode_source(&mut t, &batch)?;
            let lambda = if opts.guided {
                t.value(s.lambda).clone()
            } else {
                Tensor::zeros(&[batch.size, batch.src_len])
            };
            (t.value(s.memory).clone(), lambda)
        };
        let beams = super::decode::beam_search(self, &batch, &memory, &lambda, k, max_len)?;
        Ok(beams.into_iter().map(|ids| self.vocab.decode(&ids)).collect())
    }

    /// Greedy rewrites of raw samples, in batches of `batch_size`.
    pub fn rewrite(&self, samples: &[Sample], batch_size: usize, opts: GenerateOptions) -> Result<Vec<Vec<String>>> {
        let encoded = samples.iter().map(|s| self.encode(s)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&EncodedSample> = encoded.iter().collect();
        let mut out = Vec::with_capacity(samples.len());
        for chunk in refs.chunks(batch_size.max(1)) {
            out.extend(self.generate(chunk, opts)?);
        }
        Ok(out)
    }

    pub(crate) fn from_parts(config: ModelConfig, vocab: Vocab, store: ParamStore) -> Result<Self> {
        let mut model = Self::new(config, vocab)?;
        for id in model.store.ids().collect::<Vec<_>>() {
            let name = model.store.name(id).to_string();
            let src = store
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            let value = store.get(src);
            if value.shape() != model.store.get(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    value.shape(),
                    model.store.get(id).shape()
                )));
            }
            *model.store.get_mut(id) = value.clone();
        }
        if store.len() != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, model expects {}",
                store.len(),
                model.store.len()
            )));
        }
        Ok(model)
    }
}
