use std::cmp::Ordering;

use super::lstm::lstm_step;
use super::model::{Encoded, PointerGenModel, SourceIds};
use super::{Result, EOS, PAD, SOS};

/// A (partial) output sequence over the extended vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeHypothesis {
    /// Extended-vocabulary ids, EOS excluded.
    pub tokens: Vec<usize>,
    /// Surface forms of `tokens`, source OOVs resolved.
    pub words: Vec<String>,
    pub log_prob: f64,
    /// True when the hypothesis ended with EOS.
    pub finished: bool,
    pub(crate) h: Vec<f64>,
    pub(crate) c: Vec<f64>,
}

fn generable(id: usize) -> bool {
    id != PAD && id != SOS
}

/// Next-token log-probabilities and the new decoder state after feeding
/// `last` (an extended id) from state (h, c).
fn step(
    model: &PointerGenModel,
    enc: &Encoded,
    last: usize,
    h: &[f64],
    c: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let x = model.embed(model.input_id(last));
    let (h, c, _) = lstm_step(&model.params, &model.layout.dec, &x, h, c);
    let out = model.output_step(enc, &h, &x);
    let dist = model.step_distribution(enc, &out);
    (dist.into_iter().map(f64::ln).collect(), h, c)
}

/// Components of the output distribution at one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct NextToken {
    pub source: SourceIds,
    pub attention: Vec<f64>,
    pub p_vocab: Vec<f64>,
    pub p_gen: f64,
    /// Final distribution over the extended vocabulary.
    pub distribution: Vec<f64>,
}

/// Distribution of the token following `prefix` (teacher-forced), with the
/// vocabulary and copy paths kept apart.
pub fn next_token<S: AsRef<str>, T: AsRef<str>>(
    model: &PointerGenModel,
    source: &[S],
    prefix: &[T],
) -> Result<NextToken> {
    let enc = model.encode_source(SourceIds::new(model.vocab(), source))?;
    let (mut h, mut c) = (enc.h0.clone(), enc.c0.clone());
    let inputs = std::iter::once(SOS).chain(
        prefix
            .iter()
            .map(|t| model.input_id(enc.source.target_id(model.vocab(), t.as_ref()))),
    );
    let mut x = Vec::new();
    for id in inputs {
        x = model.embed(id);
        (h, c, _) = lstm_step(&model.params, &model.layout.dec, &x, &h, &c);
    }
    let out = model.output_step(&enc, &h, &x);
    let distribution = model.step_distribution(&enc, &out);
    Ok(NextToken {
        source: enc.source,
        attention: out.attention,
        p_vocab: out.p_vocab,
        p_gen: out.p_gen,
        distribution,
    })
}

fn words(model: &PointerGenModel, source: &SourceIds, tokens: &[usize]) -> Vec<String> {
    tokens
        .iter()
        .map(|&t| source.token(model.vocab(), t).to_string())
        .collect()
}

/// Length-unnormalized beam search. Hypotheses reaching EOS move to the
/// finished pool; search stops once the best finished score is at least the
/// best live score (scores only decrease), when no live hypothesis remains,
/// or at `max_len` steps. Returns the best finished hypothesis, else the best
/// live one.
pub fn beam_search<S: AsRef<str>>(
    model: &PointerGenModel,
    source: &[S],
    beam_size: usize,
    max_len: usize,
) -> Result<DecodeHypothesis> {
    let beam_size = beam_size.max(1);
    let enc = model.encode_source(SourceIds::new(model.vocab(), source))?;
    let mut live = vec![DecodeHypothesis {
        tokens: Vec::new(),
        words: Vec::new(),
        log_prob: 0.0,
        finished: false,
        h: enc.h0.clone(),
        c: enc.c0.clone(),
    }];
    let mut finished: Vec<DecodeHypothesis> = Vec::new();

    for _ in 0..max_len {
        // (score, hypothesis index, token, h, c)
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        let mut states = Vec::with_capacity(live.len());
        for (k, hyp) in live.iter().enumerate() {
            let last = hyp.tokens.last().copied().unwrap_or(SOS);
            let (logp, h, c) = step(model, &enc, last, &hyp.h, &hyp.c);
            let mut ranked: Vec<(usize, f64)> = logp
                .iter()
                .copied()
                .enumerate()
                .filter(|(id, lp)| generable(*id) && lp.is_finite())
                .collect();
            ranked.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            for &(id, lp) in ranked.iter().take(beam_size + 1) {
                candidates.push((hyp.log_prob + lp, k, id));
            }
            states.push((h, c));
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut next = Vec::with_capacity(beam_size);
        for (score, k, id) in candidates {
            if next.len() == beam_size {
                break;
            }
            let parent = &live[k];
            if id == EOS {
                if finished.len() < beam_size {
                    finished.push(DecodeHypothesis {
                        tokens: parent.tokens.clone(),
                        words: parent.words.clone(),
                        log_prob: score,
                        finished: true,
                        h: states[k].0.clone(),
                        c: states[k].1.clone(),
                    });
                }
                continue;
            }
            let mut tokens = parent.tokens.clone();
            tokens.push(id);
            next.push(DecodeHypothesis {
                words: words(model, &enc.source, &tokens),
                tokens,
                log_prob: score,
                finished: false,
                h: states[k].0.clone(),
                c: states[k].1.clone(),
            });
        }
        live = next;

        let best_finished = finished
            .iter()
            .map(|h| h.log_prob)
            .fold(f64::NEG_INFINITY, f64::max);
        let best_live = live
            .iter()
            .map(|h| h.log_prob)
            .fold(f64::NEG_INFINITY, f64::max);
        if live.is_empty() || best_finished >= best_live {
            break;
        }
    }

    let best = |pool: Vec<DecodeHypothesis>| {
        pool.into_iter()
            .fold(None::<DecodeHypothesis>, |acc, h| match acc {
                Some(a) if a.log_prob >= h.log_prob => Some(a),
                _ => Some(h),
            })
    };
    Ok(best(finished)
        .or_else(|| best(live))
        .expect("beam never empties without finishing"))
}

/// Argmax decoding, one token per step, until EOS or `max_len` tokens.
pub fn greedy_decode<S: AsRef<str>>(
    model: &PointerGenModel,
    source: &[S],
    max_len: usize,
) -> Result<DecodeHypothesis> {
    let enc = model.encode_source(SourceIds::new(model.vocab(), source))?;
    let (mut h, mut c) = (enc.h0.clone(), enc.c0.clone());
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    let mut finished = false;
    for _ in 0..max_len {
        let last = tokens.last().copied().unwrap_or(SOS);
        let (logp, nh, nc) = step(model, &enc, last, &h, &c);
        h = nh;
        c = nc;
        let (id, lp) = logp
            .iter()
            .copied()
            .enumerate()
            .filter(|(id, _)| generable(*id))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        log_prob += lp;
        if id == EOS {
            finished = true;
            break;
        }
        tokens.push(id);
    }
    Ok(DecodeHypothesis {
        words: words(model, &enc.source, &tokens),
        tokens,
        log_prob,
        finished,
        h,
        c,
    })
}
