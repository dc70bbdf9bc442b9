//! Synthetic response-selection corpora for desk-scale experiments.
//!
//! The vocabulary `w0..w{V-1}` is split into equal topic pools. A standard
//! group draws its context from one topic; its true response copies
//! `overlap_rate` of its tokens from the context and fills the rest from the
//! same topic; negatives are true responses of other groups (in the same
//! split) whose topic differs.
//!
//! The *ordered* variant gives every context utterance its own topic. The
//! true response continues the last utterance, and for every earlier
//! utterance there is a hard negative built the same way from that
//! utterance, so only the order of the context identifies the answer.

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{write_tsv, DialogueInstance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Training groups; validation and test get half as many each.
    pub n_groups: usize,
    pub candidates: usize,
    pub vocab_size: usize,
    pub overlap_rate: f64,
    pub seed: u64,
    pub topics: usize,
    pub min_context: usize,
    pub max_context: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_groups: 200,
            candidates: 10,
            vocab_size: 400,
            overlap_rate: 0.4,
            seed: 0,
            topics: 8,
            min_context: 2,
            max_context: 4,
            min_len: 4,
            max_len: 8,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.candidates < 2 {
            return Err(Error::invalid("candidates per group must be at least 2"));
        }
        if self.n_groups == 0 {
            return Err(Error::invalid("need at least one group"));
        }
        if !(0.0..=1.0).contains(&self.overlap_rate) {
            return Err(Error::invalid("overlap rate must lie in [0, 1]"));
        }
        if self.topics == 0 || self.vocab_size < self.topics {
            return Err(Error::invalid("vocabulary must hold at least one token per topic"));
        }
        if self.min_context == 0 || self.min_context > self.max_context {
            return Err(Error::invalid("need 1 <= min_context <= max_context"));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::invalid("need 1 <= min_len <= max_len"));
        }
        Ok(())
    }

    fn pool(&self, topic: usize) -> std::ops::Range<usize> {
        let per = self.vocab_size / self.topics;
        topic * per..(topic + 1) * per
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthCorpus {
    pub train: Vec<DialogueInstance>,
    pub valid: Vec<DialogueInstance>,
    pub test: Vec<DialogueInstance>,
    pub ordered_train: Vec<DialogueInstance>,
    pub ordered_valid: Vec<DialogueInstance>,
    pub ordered_test: Vec<DialogueInstance>,
}

impl SynthCorpus {
    pub const FILES: [&'static str; 6] = [
        "train.tsv",
        "valid.tsv",
        "test.tsv",
        "ordered_train.tsv",
        "ordered_valid.tsv",
        "ordered_test.tsv",
    ];

    pub fn splits(&self) -> [&[DialogueInstance]; 6] {
        [
            &self.train,
            &self.valid,
            &self.test,
            &self.ordered_train,
            &self.ordered_valid,
            &self.ordered_test,
        ]
    }

    /// Writes the six splits as TSV files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, split) in Self::FILES.iter().zip(self.splits()) {
            write_tsv(&dir.join(name), split)?;
        }
        Ok(())
    }
}

struct Gen<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
}

impl Gen<'_> {
    fn token(&mut self, topic: usize) -> String {
        format!("w{}", self.rng.random_range(self.cfg.pool(topic)))
    }

    fn utterance(&mut self, topic: usize) -> Vec<String> {
        let len = self.rng.random_range(self.cfg.min_len..=self.cfg.max_len);
        (0..len).map(|_| self.token(topic)).collect()
    }

    /// Response on `topic` with `overlap_rate` of its tokens copied from `source`.
    fn response(&mut self, topic: usize, source: &[String]) -> Vec<String> {
        let len = self.rng.random_range(self.cfg.min_len..=self.cfg.max_len);
        let shared = if source.is_empty() {
            0
        } else {
            (self.cfg.overlap_rate * len as f64).round() as usize
        };
        let mut toks: Vec<String> = (0..shared)
            .map(|_| source.choose(&mut self.rng).expect("non-empty").clone())
            .collect();
        while toks.len() < len {
            toks.push(self.token(topic));
        }
        toks.shuffle(&mut self.rng);
        toks
    }

    fn other_topic(&mut self, exclude: &[usize]) -> usize {
        let allowed: Vec<usize> = (0..self.cfg.topics).filter(|t| !exclude.contains(t)).collect();
        match allowed.choose(&mut self.rng) {
            Some(&t) => t,
            None => self.rng.random_range(0..self.cfg.topics),
        }
    }

    fn emit(
        &mut self,
        out: &mut Vec<DialogueInstance>,
        group_id: usize,
        context: &[Vec<String>],
        positive: Vec<String>,
        negatives: Vec<Vec<String>>,
    ) {
        let mut rows: Vec<(u8, Vec<String>)> = negatives.into_iter().map(|r| (0, r)).collect();
        let at = self.rng.random_range(0..=rows.len());
        rows.insert(at, (1, positive));
        for (label, response) in rows {
            out.push(DialogueInstance {
                context: context.to_vec(),
                response,
                label,
                group_id,
            });
        }
    }

    fn standard_split(&mut self, n: usize) -> Vec<DialogueInstance> {
        let mut groups = Vec::with_capacity(n);
        for _ in 0..n {
            let topic = self.rng.random_range(0..self.cfg.topics);
            let turns = self
                .rng
                .random_range(self.cfg.min_context..=self.cfg.max_context);
            let context: Vec<Vec<String>> = (0..turns).map(|_| self.utterance(topic)).collect();
            let flat: Vec<String> = context.iter().flatten().cloned().collect();
            let positive = self.response(topic, &flat);
            groups.push((topic, context, positive));
        }
        let mut out = Vec::with_capacity(n * self.cfg.candidates);
        for g in 0..n {
            let topic = groups[g].0;
            let pool: Vec<usize> = (0..n).filter(|&j| j != g && groups[j].0 != topic).collect();
            let negatives = (1..self.cfg.candidates)
                .map(|_| match pool.choose(&mut self.rng) {
                    Some(&j) => groups[j].2.clone(),
                    None => {
                        let t = self.other_topic(&[topic]);
                        self.response(t, &[])
                    }
                })
                .collect();
            let (_, context, positive) = &groups[g];
            let (context, positive) = (context.clone(), positive.clone());
            self.emit(&mut out, g, &context, positive, negatives);
        }
        out
    }

    fn ordered_split(&mut self, n: usize) -> Vec<DialogueInstance> {
        let mut out = Vec::with_capacity(n * self.cfg.candidates);
        let turns = self.cfg.max_context;
        for g in 0..n {
            let mut topics: Vec<usize> = (0..self.cfg.topics).collect();
            topics.shuffle(&mut self.rng);
            let topics: Vec<usize> = (0..turns).map(|i| topics[i % topics.len()]).collect();
            let context: Vec<Vec<String>> = topics.iter().map(|&t| self.utterance(t)).collect();
            let last = turns - 1;
            let positive = self.response(topics[last], &context[last]);
            let mut negatives = Vec::with_capacity(self.cfg.candidates - 1);
            for k in 0..last {
                if negatives.len() + 1 == self.cfg.candidates {
                    break;
                }
                negatives.push(self.response(topics[k], &context[k]));
            }
            while negatives.len() + 1 < self.cfg.candidates {
                let t = self.other_topic(&topics);
                negatives.push(self.response(t, &[]));
            }
            self.emit(&mut out, g, &context, positive, negatives);
        }
        out
    }
}

/// Generates all six splits deterministically from `cfg.seed`.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let held_out = (cfg.n_groups / 2).max(1);
    let mut stream = 0u64;
    let mut split = |ordered: bool, n: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        stream += 1;
        let mut g = Gen { cfg, rng };
        if ordered {
            g.ordered_split(n)
        } else {
            g.standard_split(n)
        }
    };
    Ok(SynthCorpus {
        train: split(false, cfg.n_groups),
        valid: split(false, held_out),
        test: split(false, held_out),
        ordered_train: split(true, cfg.n_groups),
        ordered_valid: split(true, held_out),
        ordered_test: split(true, held_out),
    })
}
