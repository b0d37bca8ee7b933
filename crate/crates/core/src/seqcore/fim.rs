use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_span, LengthPolicy, ResidueAlphabet, SeqError, SpanSpec, Special, TokenId, TokenSequence, MIN_FLANK};

/// A training sample after the FIM transformation.
///
/// `flattened` is `[PRE] prefix [SUF] suffix [MID] middle [EOS]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FimExample {
    pub prefix: TokenSequence,
    pub middle: TokenSequence,
    pub suffix: TokenSequence,
    pub flattened: TokenSequence,
}

/// Inference prompt `[PRE] prefix [SUF] suffix [MID]` plus the number of
/// middle residues the caller wants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FimPrompt {
    pub flattened: TokenSequence,
    pub target_len: usize,
}

pub fn fim_transform(alphabet: &ResidueAlphabet, tokens: &[TokenId], span: SpanSpec) -> Result<FimExample, SeqError> {
    let n = tokens.len();
    if span.len == 0 || !span.fits(n) {
        return Err(SeqError::SpanOutOfRange { start: span.start, len: span.len, n });
    }
    let prefix = &tokens[..span.start];
    let middle = &tokens[span.start..span.end()];
    let suffix = &tokens[span.end()..];

    let mut flat = Vec::with_capacity(n + 4);
    flat.push(alphabet.special(Special::Pre));
    flat.extend_from_slice(prefix);
    flat.push(alphabet.special(Special::Suf));
    flat.extend_from_slice(suffix);
    flat.push(alphabet.special(Special::Mid));
    flat.extend_from_slice(middle);
    flat.push(alphabet.special(Special::Eos));

    Ok(FimExample {
        prefix: prefix.to_vec().into(),
        middle: middle.to_vec().into(),
        suffix: suffix.to_vec().into(),
        flattened: flat.into(),
    })
}

/// Split a flattened FIM stream back into `(prefix, suffix, middle)`.
/// A trailing `[EOS]` is optional; any other special token is rejected.
pub fn parse_fim(alphabet: &ResidueAlphabet, flat: &[TokenId]) -> Result<(TokenSequence, TokenSequence, TokenSequence), SeqError> {
    let pre = alphabet.special(Special::Pre);
    let suf = alphabet.special(Special::Suf);
    let mid = alphabet.special(Special::Mid);
    let eos = alphabet.special(Special::Eos);

    let body = match flat.split_last() {
        Some((&last, rest)) if last == eos => rest,
        _ => flat,
    };
    let positions = |tok: TokenId| body.iter().enumerate().filter(|(_, &t)| t == tok).map(|(i, _)| i).collect::<Vec<_>>();
    let (p, s, m) = (positions(pre), positions(suf), positions(mid));
    let single = |v: &[usize], name: &str| match v {
        [i] => Ok(*i),
        [] => Err(SeqError::Structure(format!("missing {name}"))),
        _ => Err(SeqError::Structure(format!("repeated {name}"))),
    };
    let (p, s, m) = (single(&p, "[PRE]")?, single(&s, "[SUF]")?, single(&m, "[MID]")?);
    if !(p == 0 && p < s && s < m) {
        return Err(SeqError::Structure("expected [PRE] < [SUF] < [MID] with [PRE] first".into()));
    }
    let segment = |range: &[TokenId]| -> Result<TokenSequence, SeqError> {
        if let Some(&t) = range.iter().find(|&&t| alphabet.is_special(t)) {
            return Err(SeqError::Structure(format!("stray special token {}", alphabet.symbol(t).unwrap_or("?"))));
        }
        Ok(range.to_vec().into())
    };
    Ok((segment(&body[p + 1..s])?, segment(&body[s + 1..m])?, segment(&body[m + 1..])?))
}

/// Recover the original token order `prefix · middle · suffix` from the
/// flattened layout.
pub fn invert_fim(alphabet: &ResidueAlphabet, example: &FimExample) -> Result<TokenSequence, SeqError> {
    let (prefix, suffix, middle) = parse_fim(alphabet, &example.flattened)?;
    let mut out = prefix.0;
    out.extend_from_slice(&middle);
    out.extend_from_slice(&suffix);
    Ok(out.into())
}

/// With probability `p_fim` return the FIM-transformed stream for a sampled
/// span, otherwise the plain autoregressive sample `tokens · [EOS]`.
pub fn maybe_fim<R: Rng + ?Sized>(
    alphabet: &ResidueAlphabet,
    tokens: &[TokenId],
    p_fim: f64,
    rng: &mut R,
    policy: LengthPolicy,
) -> Result<TokenSequence, SeqError> {
    if !(0.0..=1.0).contains(&p_fim) {
        return Err(SeqError::Probability(p_fim));
    }
    if rng.random_bool(p_fim) {
        let span = sample_span(tokens.len(), rng, policy)?;
        Ok(fim_transform(alphabet, tokens, span)?.flattened)
    } else {
        let mut out = tokens.to_vec();
        out.push(alphabet.special(Special::Eos));
        Ok(out.into())
    }
}

/// Assemble an inference prompt. Flanks shorter than four residues are
/// rejected unless `relax` is set.
pub fn build_fim_prompt(
    alphabet: &ResidueAlphabet,
    prefix: &[TokenId],
    suffix: &[TokenId],
    target_len: usize,
    relax: bool,
) -> Result<FimPrompt, SeqError> {
    if !relax && (prefix.len() < MIN_FLANK || suffix.len() < MIN_FLANK) {
        return Err(SeqError::TooShort { n: prefix.len().min(suffix.len()), min: MIN_FLANK });
    }
    let mut flat = Vec::with_capacity(prefix.len() + suffix.len() + 3);
    flat.push(alphabet.special(Special::Pre));
    flat.extend_from_slice(prefix);
    flat.push(alphabet.special(Special::Suf));
    flat.extend_from_slice(suffix);
    flat.push(alphabet.special(Special::Mid));
    Ok(FimPrompt { flattened: flat.into(), target_len })
}
