use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tokenizer::{TokenId, Tokenizer};
use crate::corpus::RewritePlan;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};

/// Token-frequency table. Counts are always positive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenCounts {
    counts: BTreeMap<TokenId, u64>,
    total: u64,
}

impl TokenCounts {
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a TokenId>) -> Self {
        let mut c = Self::default();
        c.add_tokens(tokens);
        c
    }

    /// Builds from explicit `(id, count)` pairs; zero counts are rejected.
    pub fn from_counts(pairs: impl IntoIterator<Item = (TokenId, u64)>) -> Result<Self> {
        let mut c = Self::default();
        for (id, n) in pairs {
            if n == 0 {
                return Err(Error::domain(format!("token {id} has a zero count")));
            }
            *c.counts.entry(id).or_insert(0) += n;
            c.total += n;
        }
        Ok(c)
    }

    pub fn add_tokens<'a>(&mut self, tokens: impl IntoIterator<Item = &'a TokenId>) {
        for &t in tokens {
            *self.counts.entry(t).or_insert(0) += 1;
            self.total += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn unique(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    /// Types by descending count, ties by ascending id.
    pub fn ranked(&self) -> Vec<(TokenId, u64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

fn require_tokens(counts: &TokenCounts) -> Result<()> {
    if counts.is_empty() {
        Err(Error::domain("entropy undefined on empty corpus"))
    } else {
        Ok(())
    }
}

/// Shannon entropy (bits) of the empirical token distribution.
pub fn token_entropy(counts: &TokenCounts) -> Result<f64> {
    require_tokens(counts)?;
    let total = counts.total() as f64;
    let h: f64 = counts
        .iter()
        .map(|(_, c)| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // a single type gives -1·log2(1) = -0.0
    Ok(h.max(0.0))
}

/// Cumulative token share of the top-k types, k = 1..=unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub points: Vec<(usize, f64)>,
    /// Smallest k covering at least 80% of tokens.
    pub k80: usize,
}

pub fn coverage_cdf(counts: &TokenCounts) -> Result<Coverage> {
    require_tokens(counts)?;
    let total = counts.total();
    let mut cum = 0u64;
    let mut k80 = None;
    let points = counts
        .ranked()
        .into_iter()
        .enumerate()
        .map(|(i, (_, c))| {
            cum += c;
            let k = i + 1;
            // integer test avoids 0.8 rounding: cum/total >= 4/5
            if k80.is_none() && cum * 5 >= total * 4 {
                k80 = Some(k);
            }
            (k, cum as f64 / total as f64)
        })
        .collect();
    Ok(Coverage {
        points,
        k80: k80.expect("full coverage reaches 80%"),
    })
}

/// Distributional statistics of one token sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalStats {
    pub total_tokens: u64,
    pub unique_types: usize,
    pub h_bits: f64,
    pub ttr: f64,
    pub top20_mass: f64,
    /// Share of types seen exactly once (reported as Hapax%).
    pub hapax_type_rate: f64,
    /// Share of tokens belonging to once-seen types.
    pub hapax_token_rate: f64,
    pub coverage: Coverage,
}

impl LexicalStats {
    pub fn from_counts(counts: &TokenCounts) -> Result<Self> {
        require_tokens(counts)?;
        let total = counts.total();
        let unique = counts.unique();
        let ranked = counts.ranked();
        let top_n = (unique * 2).div_ceil(10);
        let top_mass: u64 = ranked.iter().take(top_n).map(|&(_, c)| c).sum();
        let hapax = ranked.iter().filter(|&&(_, c)| c == 1).count();
        Ok(Self {
            total_tokens: total,
            unique_types: unique,
            h_bits: token_entropy(counts)?,
            ttr: unique as f64 / total as f64,
            top20_mass: top_mass as f64 / total as f64,
            hapax_type_rate: hapax as f64 / unique as f64,
            hapax_token_rate: hapax as f64 / total as f64,
            coverage: coverage_cdf(counts)?,
        })
    }
}

/// TTR, top-20% mass, hapax rates and coverage of a token sequence. Every id
/// must be below `vocab_size`.
pub fn lexical_stats(tokens: &[TokenId], vocab_size: u32) -> Result<LexicalStats> {
    if let Some(bad) = tokens.iter().find(|&&t| t >= vocab_size) {
        return Err(Error::contract(format!(
            "token id {bad} outside vocabulary of size {vocab_size}"
        )));
    }
    LexicalStats::from_counts(&TokenCounts::from_tokens(tokens))
}

pub fn tokenize_all(mode: ExecMode, texts: &[String], tokenizer: &dyn Tokenizer) -> Vec<Vec<TokenId>> {
    exec::map(mode, texts, |t| tokenizer.tokenize(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchSize {
    /// The whole corpus as one batch.
    #[default]
    Pooled,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchedEntropy {
    pub batch_size: BatchSize,
    pub seed: u64,
    pub per_batch: Vec<f64>,
    /// Arithmetic mean of `per_batch`.
    pub mean: f64,
    /// Mean weighted by each batch's token count; never exceeds the pooled
    /// entropy.
    pub token_weighted_mean: f64,
}

/// Shuffles `texts` with `seed`, splits into batches and averages the
/// per-batch entropies. `BatchSize::Pooled` reduces to the pooled corpus
/// entropy.
pub fn batched_entropy(
    mode: ExecMode,
    texts: &[String],
    tokenizer: &dyn Tokenizer,
    batch_size: BatchSize,
    seed: u64,
) -> Result<BatchedEntropy> {
    if texts.is_empty() {
        return Err(Error::domain("entropy undefined on empty corpus"));
    }
    let size = match batch_size {
        BatchSize::Pooled => texts.len(),
        BatchSize::Fixed(0) => return Err(Error::domain("batch_size must be at least 1")),
        BatchSize::Fixed(n) => n,
    };
    let mut order: Vec<usize> = (0..texts.len()).collect();
    if batch_size != BatchSize::Pooled {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let results: Vec<Result<(f64, u64)>> = exec::map_chunks(mode, &order, size, |batch| {
        let mut counts = TokenCounts::default();
        for &i in batch {
            counts.add_tokens(&tokenizer.tokenize(&texts[i]));
        }
        Ok((token_entropy(&counts)?, counts.total()))
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let per_batch: Vec<f64> = results.iter().map(|r| r.0).collect();
    let tokens: u64 = results.iter().map(|r| r.1).sum();
    let mean = per_batch.iter().sum::<f64>() / per_batch.len() as f64;
    let token_weighted_mean = results.iter().map(|&(h, n)| h * n as f64).sum::<f64>() / tokens as f64;
    Ok(BatchedEntropy {
        batch_size,
        seed,
        per_batch,
        mean,
        token_weighted_mean,
    })
}

/// Per-(encoder, task, arm) input-side report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalReport {
    pub encoder_id: String,
    pub task_id: String,
    pub plan: RewritePlan,
    pub arm: String,
    pub tokenizer_id: String,
    pub vocab_size: u32,
    #[serde(flatten)]
    pub stats: LexicalStats,
    pub delta_h_bits: Option<f64>,
    pub batching: BatchedEntropy,
}

impl LexicalReport {
    /// Tokenizes `texts` and computes every statistic. `h_bits` is the
    /// entropy under `batch_size` (pooled by default).
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        mode: ExecMode,
        encoder_id: &str,
        task_id: &str,
        plan: &RewritePlan,
        texts: &[String],
        tokenizer: &dyn Tokenizer,
        batch_size: BatchSize,
        seed: u64,
    ) -> Result<Self> {
        let token_lists = tokenize_all(mode, texts, tokenizer);
        let mut counts = TokenCounts::default();
        for t in &token_lists {
            counts.add_tokens(t);
        }
        if let Some(bad) = counts.iter().map(|(id, _)| id).find(|&id| id >= tokenizer.vocab_size()) {
            return Err(Error::contract(format!(
                "tokenizer {} emitted id {bad} >= vocab size {}",
                tokenizer.id(),
                tokenizer.vocab_size()
            )));
        }
        let mut stats = LexicalStats::from_counts(&counts)?;
        let batching = batched_entropy(mode, texts, tokenizer, batch_size, seed)?;
        stats.h_bits = batching.mean;
        Ok(Self {
            encoder_id: encoder_id.to_string(),
            task_id: task_id.to_string(),
            plan: plan.clone(),
            arm: plan.arm_label(),
            tokenizer_id: tokenizer.id().to_string(),
            vocab_size: tokenizer.vocab_size(),
            stats,
            delta_h_bits: None,
            batching,
        })
    }
}

/// ΔH = H(rewritten) − H(baseline), in bits.
pub fn delta_h(baseline: &LexicalReport, rewritten: &LexicalReport) -> Result<f64> {
    if baseline.encoder_id != rewritten.encoder_id || baseline.task_id != rewritten.task_id {
        return Err(Error::config(format!(
            "ΔH needs matching encoder and task: {}/{} vs {}/{}",
            baseline.encoder_id, baseline.task_id, rewritten.encoder_id, rewritten.task_id
        )));
    }
    Ok(rewritten.stats.h_bits - baseline.stats.h_bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TaskFamily;
    use crate::lexical::WordTokenizer;

    fn counts(pairs: &[(TokenId, u64)]) -> TokenCounts {
        TokenCounts::from_counts(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(token_entropy(&counts(&[(0, 4)])).unwrap(), 0.0);
        assert!((token_entropy(&counts(&[(0, 2), (1, 2)])).unwrap() - 1.0).abs() < 1e-12);
        assert!((token_entropy(&counts(&[(0, 1), (1, 1), (2, 2)])).unwrap() - 1.5).abs() < 1e-12);
        let err = token_entropy(&TokenCounts::default()).unwrap_err();
        assert!(err.to_string().contains("entropy undefined on empty corpus"));
        assert!(TokenCounts::from_counts([(1, 0)]).is_err());
    }

    #[test]
    fn lexical_stats_examples() {
        let s = lexical_stats(&[0, 1, 2, 3], 4).unwrap();
        assert_eq!(s.ttr, 1.0);
        assert_eq!(s.hapax_type_rate, 1.0);

        // [a,a,a,a,b]
        let s = lexical_stats(&[0, 0, 0, 0, 1], 2).unwrap();
        assert_eq!(s.unique_types, 2);
        assert!((s.top20_mass - 0.8).abs() < 1e-15);
        assert_eq!(s.hapax_type_rate, 0.5);
        assert!((s.hapax_token_rate - 0.2).abs() < 1e-15);
        assert!((s.ttr - 0.4).abs() < 1e-15);

        assert!(lexical_stats(&[], 4).is_err());
        assert!(matches!(lexical_stats(&[5], 4), Err(Error::Contract(_))));
    }

    #[test]
    fn coverage_examples() {
        let c = coverage_cdf(&counts(&[(7, 1)])).unwrap();
        assert_eq!(c.points, vec![(1, 1.0)]);
        assert_eq!(c.k80, 1);

        let c = coverage_cdf(&counts(&[(0, 3), (1, 1)])).unwrap();
        assert_eq!(c.points, vec![(1, 0.75), (2, 1.0)]);
        assert_eq!(c.k80, 2);

        // exactly 80% at k=1
        let c = coverage_cdf(&counts(&[(0, 4), (1, 1)])).unwrap();
        assert_eq!(c.k80, 1);
    }

    #[test]
    fn ranking_ties_by_id() {
        let c = counts(&[(9, 2), (3, 2), (5, 7)]);
        assert_eq!(c.ranked(), vec![(5, 7), (3, 2), (9, 2)]);
    }

    fn texts(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn pooled_batching_matches_pooled_entropy() {
        let tok = WordTokenizer::default();
        let corpus = texts(&["a b c", "a a d", "e f a b"]);
        let b = batched_entropy(ExecMode::Sequential, &corpus, &tok, BatchSize::Pooled, 0).unwrap();
        let mut c = TokenCounts::default();
        for t in &corpus {
            c.add_tokens(&tok.tokenize(t));
        }
        assert_eq!(b.per_batch.len(), 1);
        assert!((b.mean - token_entropy(&c).unwrap()).abs() < 1e-15);

        // two identical batches
        let twin = texts(&["x y z x", "x y z x"]);
        let b = batched_entropy(ExecMode::Sequential, &twin, &tok, BatchSize::Fixed(1), 3).unwrap();
        assert_eq!(b.per_batch[0], b.per_batch[1]);
        assert_eq!(b.mean, b.per_batch[0]);

        assert!(batched_entropy(ExecMode::Sequential, &[], &tok, BatchSize::Pooled, 0).is_err());
        assert!(batched_entropy(ExecMode::Sequential, &twin, &tok, BatchSize::Fixed(0), 0).is_err());
    }

    #[test]
    fn batching_is_seeded() {
        let tok = WordTokenizer::default();
        let corpus: Vec<String> = (0..30).map(|i| format!("w{} w{} common", i % 7, i % 3)).collect();
        let a = batched_entropy(ExecMode::Parallel, &corpus, &tok, BatchSize::Fixed(4), 11).unwrap();
        let b = batched_entropy(ExecMode::Sequential, &corpus, &tok, BatchSize::Fixed(4), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn delta_h_checks_pairing() {
        let tok = WordTokenizer::default();
        let plan = RewritePlan::baseline(TaskFamily::CodeToCode);
        let base = LexicalReport::compute(
            ExecMode::Sequential,
            "enc",
            "t",
            &plan,
            &texts(&["a a b"]),
            &tok,
            BatchSize::Pooled,
            0,
        )
        .unwrap();
        assert_eq!(delta_h(&base, &base).unwrap(), 0.0);
        let mut other = base.clone();
        other.task_id = "t2".into();
        assert!(matches!(delta_h(&base, &other), Err(Error::Config(_))));
    }
}
