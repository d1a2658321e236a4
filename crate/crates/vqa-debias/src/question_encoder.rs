//! Question encoding: character embeddings through a convolution, fused with
//! word embeddings by masked single-head self-attention, then a gated
//! recurrent pass whose final hidden state is the question feature vector.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use tapegrad::{xavier, zeros, Mat, NodeId, ParamId, ParamSet, Tape};

use crate::data_synth::TokenizedQuestion;
use crate::error::{Error, Result};

/// Score added to masked attention keys; exp(-1e30) underflows to exactly 0,
/// so padding receives zero weight rather than merely small weight.
const MASK_SCORE: f64 = -1e30;

#[derive(Debug, Clone)]
pub struct QuestionEncoderParams {
    pub char_emb: ParamId,
    pub word_emb: ParamId,
    pub conv_kernel: ParamId,
    pub conv_bias: ParamId,
    pub attn_q: ParamId,
    pub attn_k: ParamId,
    pub attn_v: ParamId,
    pub lstm_w: [ParamId; 4],
    pub lstm_b: [ParamId; 4],
    pub d_a: usize,
    pub d_w: usize,
    pub hidden: usize,
    pub attention_d: usize,
    pub kernel_width: usize,
    pub char_vocab: usize,
    pub word_vocab: usize,
}

impl QuestionEncoderParams {
    /// Token dimension after fusing word and char features.
    pub fn fused_dim(&self) -> usize {
        self.d_w + self.d_a
    }

    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng>(
        store: &mut ParamSet,
        prefix: &str,
        char_vocab: usize,
        word_vocab: usize,
        d_a: usize,
        d_w: usize,
        hidden: usize,
        attention_d: usize,
        kernel_width: usize,
        rng: &mut R,
    ) -> Self {
        let m = d_w + d_a;
        let name = |s: &str| format!("{prefix}.{s}");
        let char_emb = store.add(&name("char_emb"), tapegrad::normal(rng, char_vocab, d_a, 0.1));
        let word_emb = store.add(&name("word_emb"), tapegrad::normal(rng, word_vocab, d_w, 0.1));
        let conv_kernel = store.add(
            &name("conv_kernel"),
            xavier(rng, kernel_width * d_a, d_a),
        );
        let conv_bias = store.add(&name("conv_bias"), zeros(1, d_a));
        let attn_q = store.add(&name("attn_q"), xavier(rng, m, attention_d));
        let attn_k = store.add(&name("attn_k"), xavier(rng, m, attention_d));
        let attn_v = store.add(&name("attn_v"), xavier(rng, m, m));
        let gate = ["i", "f", "o", "g"];
        let lstm_w = gate.map(|g| store.add(&name(&format!("lstm_w_{g}")), xavier(rng, m + hidden, hidden)));
        let lstm_b = gate.map(|g| store.add(&name(&format!("lstm_b_{g}")), zeros(1, hidden)));
        QuestionEncoderParams {
            char_emb,
            word_emb,
            conv_kernel,
            conv_bias,
            attn_q,
            attn_k,
            attn_v,
            lstm_w,
            lstm_b,
            d_a,
            d_w,
            hidden,
            attention_d,
            kernel_width,
            char_vocab,
            word_vocab,
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = vec![
            self.char_emb,
            self.word_emb,
            self.conv_kernel,
            self.conv_bias,
            self.attn_q,
            self.attn_k,
            self.attn_v,
        ];
        ids.extend(self.lstm_w);
        ids.extend(self.lstm_b);
        ids
    }
}

fn check_ids(q: &TokenizedQuestion, params: &QuestionEncoderParams) -> Result<()> {
    if let Some(bad) = q
        .word_ids
        .iter()
        .find(|id| **id as usize >= params.word_vocab)
    {
        return Err(Error::Index(format!(
            "word id {bad} outside vocabulary of {}",
            params.word_vocab
        )));
    }
    if let Some(bad) = q
        .char_ids
        .iter()
        .flatten()
        .find(|id| **id as usize >= params.char_vocab)
    {
        return Err(Error::Index(format!(
            "char id {bad} outside vocabulary of {}",
            params.char_vocab
        )));
    }
    Ok(())
}

/// Per-token character features: embed, mask padding to zero, convolve over
/// character positions, mask again, max-pool positions. One d_a row per token
/// (padding tokens yield zero rows).
pub fn embed_chars(
    tape: &mut Tape,
    q: &TokenizedQuestion,
    params: &QuestionEncoderParams,
) -> Result<NodeId> {
    q.validate()?;
    check_ids(q, params)?;
    let table = tape.param(params.char_emb);
    let kernel = tape.param(params.conv_kernel);
    let bias = tape.param(params.conv_bias);
    let mut token_rows = Vec::with_capacity(q.word_ids.len());
    for row in &q.char_ids {
        let ids: Vec<usize> = row.iter().map(|c| *c as usize).collect();
        let emb = tape.gather_rows(table, &ids)?;
        let mask = Mat::from_shape_fn((ids.len(), params.d_a), |(i, _)| {
            if ids[i] == 0 {
                0.0
            } else {
                1.0
            }
        });
        let mask_in = tape.constant(mask.clone());
        let masked = tape.mul_elem(emb, mask_in)?;
        let windows = tape.unfold_rows(masked, params.kernel_width)?;
        let conv = tape.matmul(windows, kernel)?;
        let with_bias = tape.add_row(conv, bias)?;
        let mask_out = tape.constant(mask);
        let masked_out = tape.mul_elem(with_bias, mask_out)?;
        let pooled = tape.max_cols(masked_out);
        token_rows.push(pooled);
    }
    tape.stack_rows(&token_rows).map_err(Error::from)
}

/// Fuse word embeddings with char features through one masked scaled
/// dot-product self-attention head. Returns (fused tokens, attention weights).
pub fn fuse(
    tape: &mut Tape,
    word_emb: NodeId,
    char_feat: NodeId,
    pad_mask: &[bool],
    params: &QuestionEncoderParams,
) -> Result<(NodeId, NodeId)> {
    let tokens = tape.value(word_emb).dim().0;
    if tape.value(char_feat).dim().0 != tokens || pad_mask.len() != tokens {
        return Err(Error::Shape(format!(
            "fuse: {} word rows vs {} char rows vs {} mask entries",
            tokens,
            tape.value(char_feat).dim().0,
            pad_mask.len()
        )));
    }
    let x = tape.concat_cols(word_emb, char_feat)?;
    let wq = tape.param(params.attn_q);
    let wk = tape.param(params.attn_k);
    let wv = tape.param(params.attn_v);
    let q = tape.matmul(x, wq)?;
    let k = tape.matmul(x, wk)?;
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (params.attention_d as f64).sqrt());
    let mask = Mat::from_shape_fn((tokens, tokens), |(_, j)| {
        if pad_mask[j] {
            MASK_SCORE
        } else {
            0.0
        }
    });
    let mask_node = tape.constant(mask);
    let masked = tape.add(scaled, mask_node)?;
    let weights = tape.softmax_rows(masked);
    let v = tape.matmul(x, wv)?;
    let fused = tape.matmul(weights, v)?;
    Ok((fused, weights))
}

/// Encode a question into its feature vector: the final hidden state of a
/// single-layer gated recurrence over the fused token sequence.
pub fn encode(
    tape: &mut Tape,
    q: &TokenizedQuestion,
    params: &QuestionEncoderParams,
) -> Result<NodeId> {
    q.validate()?;
    check_ids(q, params)?;
    let word_ids: Vec<usize> = q.word_ids.iter().map(|w| *w as usize).collect();
    let table = tape.param(params.word_emb);
    let words = tape.gather_rows(table, &word_ids)?;
    let chars = embed_chars(tape, q, params)?;
    let (fused, _) = fuse(tape, words, chars, &q.pad_mask, params)?;

    let h0 = tape.constant(zeros(1, params.hidden));
    let c0 = tape.constant(zeros(1, params.hidden));
    let w: Vec<NodeId> = params.lstm_w.iter().map(|id| tape.param(*id)).collect();
    let b: Vec<NodeId> = params.lstm_b.iter().map(|id| tape.param(*id)).collect();
    let mut h = h0;
    let mut c = c0;
    for t in 0..q.length {
        let x_t = tape.slice_row(fused, t)?;
        let cat = tape.concat_cols(x_t, h)?;
        let gate = |tape: &mut Tape, idx: usize| -> Result<NodeId> {
            let z = tape.matmul(cat, w[idx])?;
            tape.add_row(z, b[idx]).map_err(Error::from)
        };
        let zi = gate(tape, 0)?;
        let zf = gate(tape, 1)?;
        let zo = gate(tape, 2)?;
        let zg = gate(tape, 3)?;
        let i_g = tape.sigmoid(zi);
        let f_g = tape.sigmoid(zf);
        let o_g = tape.sigmoid(zo);
        let g_g = tape.tanh(zg);
        let fc = tape.mul_elem(f_g, c)?;
        let ig = tape.mul_elem(i_g, g_g)?;
        c = tape.add(fc, ig)?;
        let tc = tape.tanh(c);
        h = tape.mul_elem(o_g, tc)?;
    }
    Ok(h)
}

/// Value-level convenience: run [`encode`] on a throwaway tape.
pub fn encode_value(
    store: &ParamSet,
    q: &TokenizedQuestion,
    params: &QuestionEncoderParams,
) -> Result<Mat> {
    let mut tape = Tape::with_trainable(store, &[]);
    let node = encode(&mut tape, q, params)?;
    Ok(tape.value(node).clone())
}

/// Load pretrained word vectors (`token v1 … v_dw` per line) into the word
/// embedding table. Unknown tokens keep their random initialization. Returns
/// the number of vocabulary hits.
pub fn load_pretrained_word_vectors(
    path: &Path,
    word_vocab: &[String],
    store: &mut ParamSet,
    params: &QuestionEncoderParams,
) -> Result<usize> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut hits = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().ok_or_else(|| Error::Parse {
            context: path.display().to_string(),
            detail: format!("line {}: missing token", lineno + 1),
        })?;
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|e| Error::Parse {
                    context: path.display().to_string(),
                    detail: format!("line {}: {e}", lineno + 1),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != params.d_w {
            return Err(Error::Parse {
                context: path.display().to_string(),
                detail: format!(
                    "line {}: expected {} values, got {}",
                    lineno + 1,
                    params.d_w,
                    values.len()
                ),
            });
        }
        if let Some(row) = word_vocab.iter().position(|w| w == token) {
            let table = store.value_mut(params.word_emb);
            for (c, v) in values.iter().enumerate() {
                table[[row, c]] = *v;
            }
            hits += 1;
        }
    }
    Ok(hits)
}
