//! Exact integer combinatorics of the recursive words `e_k` over the
//! three-letter alphabet {U, D, Z}: construction, implicit indexing,
//! subword counting with rigorous interval enclosures, alternating sums,
//! and the four-loop sofic cover.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Default materialization cap for `build_elementary`: `|e_k|` above this
/// is refused and callers must fall back to implicit indexing.
pub const DEFAULT_WORD_CAP: u64 = 10_000_000;

#[derive(Debug, thiserror::Error)]
pub enum WordError {
    #[error("|e_{k}| = {len} exceeds the materialization cap {cap}")]
    CapExceeded { k: u32, len: BigUint, cap: u64 },
    #[error("index {index} out of range for e_{k} (length {len})")]
    IndexOutOfRange { k: u32, index: BigInt, len: BigUint },
    #[error("empty pattern word")]
    EmptyPattern,
    #[error("pattern not confirmed in the language at level {level}")]
    NotInLanguage { level: u32 },
    #[error("word is not in the level-{k} sofic language")]
    NotInSoficLanguage { k: u32 },
    #[error("invalid letter {0:?}, expected one of U, D, Z")]
    BadLetter(char),
    #[error("k must be >= 1")]
    BadLevel,
}

pub type Result<T> = std::result::Result<T, WordError>;

/// A letter of the alphabet, with numeric images +1, -1, 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    Up,
    Down,
    Zero,
}

impl Letter {
    pub fn value(self) -> i8 {
        match self {
            Letter::Up => 1,
            Letter::Down => -1,
            Letter::Zero => 0,
        }
    }

    /// The conjugation involution: swap Up and Down, fix Zero.
    pub fn conjugate(self) -> Letter {
        match self {
            Letter::Up => Letter::Down,
            Letter::Down => Letter::Up,
            Letter::Zero => Letter::Zero,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Letter::Up => 'U',
            Letter::Down => 'D',
            Letter::Zero => 'Z',
        }
    }

    pub fn from_char(c: char) -> Result<Letter> {
        match c {
            'U' => Ok(Letter::Up),
            'D' => Ok(Letter::Down),
            'Z' => Ok(Letter::Zero),
            other => Err(WordError::BadLetter(other)),
        }
    }
}

/// A finite (possibly empty) word over the alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn new(letters: Vec<Letter>) -> Word {
        Word(letters)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn conjugate(&self) -> Word {
        Word(self.0.iter().map(|l| l.conjugate()).collect())
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn repeat(&self, times: usize) -> Word {
        let mut v = Vec::with_capacity(self.len() * times);
        for _ in 0..times {
            v.extend_from_slice(&self.0);
        }
        Word(v)
    }

    pub fn subword(&self, start: usize, len: usize) -> Word {
        Word(self.0[start..start + len].to_vec())
    }

    /// True if `needle` occurs as a factor of `self`.
    pub fn contains(&self, needle: &Word) -> bool {
        let n = needle.letters();
        if n.is_empty() {
            return true;
        }
        self.0.windows(n.len()).any(|w| w == n)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.0 {
            write!(f, "{}", l.to_char())?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = WordError;

    fn from_str(s: &str) -> Result<Word> {
        s.chars().map(Letter::from_char).collect::<Result<Vec<_>>>().map(Word)
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Word, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The word-parameter family `(m_k)_{k>=1}`.
///
/// The built-in family is `m_k = 2^k`, which satisfies `m_k >= 2` and
/// `sum 1/m_k < inf`. A custom family supplies a finite prefix and falls
/// back to the built-in tail, so summability is preserved; the prefix
/// entries are validated to be at least 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum WordParams {
    Pow2,
    Custom { prefix: Vec<u64> },
}

impl Default for WordParams {
    fn default() -> Self {
        WordParams::Pow2
    }
}

impl WordParams {
    pub fn custom(prefix: Vec<u64>) -> Result<WordParams> {
        if prefix.iter().any(|&m| m < 2) {
            return Err(WordError::BadLevel);
        }
        Ok(WordParams::Custom { prefix })
    }

    /// `m_k` for `k >= 1`. Levels beyond 62 are outside every cap in this
    /// crate, so the `u64` range is never a constraint in practice.
    pub fn m(&self, k: u32) -> u64 {
        assert!(k >= 1 && k <= 62, "parameter level {k} out of range");
        match self {
            WordParams::Pow2 => 1u64 << k,
            WordParams::Custom { prefix } => {
                if (k as usize) <= prefix.len() {
                    prefix[k as usize - 1]
                } else {
                    1u64 << k
                }
            }
        }
    }
}

/// Exact `|e_k|` via `|e_1| = 2`, `|e_{k+1}| = 2(m_k+1)|e_k| + 2`.
pub fn length_of(k: u32, params: &WordParams) -> BigUint {
    assert!(k >= 1);
    let mut len = BigUint::from(2u32);
    for j in 1..k {
        len = BigUint::from(2u32) * (params.m(j) + 1) * len + BigUint::from(2u32);
    }
    len
}

/// Exact `theta(e_k)` via `theta(e_1) = 2`, `theta(e_{k+1}) = 2(m_k - 1) theta(e_k)`.
pub fn theta_of_elementary(k: u32, params: &WordParams) -> BigInt {
    assert!(k >= 1);
    let mut t = BigInt::from(2);
    for j in 1..k {
        t *= BigInt::from(2) * (params.m(j) - 1);
    }
    t
}

/// Materialize `e_k`. Refuses when `|e_k|` exceeds `cap`, reporting the
/// exact length.
pub fn build_elementary(k: u32, params: &WordParams, cap: u64) -> Result<Word> {
    if k < 1 {
        return Err(WordError::BadLevel);
    }
    let len = length_of(k, params);
    if len > BigUint::from(cap) {
        return Err(WordError::CapExceeded { k, len, cap });
    }
    let mut e = Word(vec![Letter::Up, Letter::Down]);
    for j in 1..k {
        let m = params.m(j) as usize;
        let bar = e.conjugate();
        let mut v = Vec::with_capacity(2 * (m + 1) * e.len() + 2);
        for _ in 0..m {
            v.extend_from_slice(e.letters());
        }
        v.push(Letter::Zero);
        v.extend_from_slice(e.letters());
        for _ in 0..m {
            v.extend_from_slice(bar.letters());
        }
        v.push(Letter::Zero);
        v.extend_from_slice(bar.letters());
        e = Word(v);
    }
    Ok(e)
}

/// The `i`-th letter of `e_k` by recursive block arithmetic, `O(k)` time,
/// without materializing the word.
pub fn letter_at(k: u32, i: &BigUint, params: &WordParams) -> Result<Letter> {
    // the upper limit keeps parameter lookups in u64 range; decoded
    // descriptions are untrusted, so this must be an error, not a panic
    if !(1..=62).contains(&k) {
        return Err(WordError::BadLevel);
    }
    let lens: Vec<BigUint> = (1..=k).map(|j| length_of(j, params)).collect();
    if *i >= lens[k as usize - 1] {
        return Err(WordError::IndexOutOfRange {
            k,
            index: BigInt::from(i.clone()),
            len: lens[k as usize - 1].clone(),
        });
    }
    let mut level = k;
    let mut idx = i.clone();
    let mut conj = false;
    while level > 1 {
        let l = &lens[level as usize - 2];
        let m = BigUint::from(params.m(level - 1));
        // e_{level} = e^m 0 e | conj(e^m 0 e), each half of length (m+1)l + 1
        let half = (&m + 1u32) * l + 1u32;
        if idx >= half {
            conj = !conj;
            idx -= &half;
        }
        let reps = &m * l;
        if idx < reps {
            idx %= l;
        } else if idx == reps {
            return Ok(Letter::Zero);
        } else {
            idx -= reps + 1u32;
        }
        level -= 1;
    }
    let base = if idx.is_zero() { Letter::Up } else { Letter::Down };
    Ok(if conj { base.conjugate() } else { base })
}

/// `|w|_v`: the number of occurrences of `v` as a factor of `w`
/// (overlaps counted).
pub fn count_subwords(w: &Word, v: &Word) -> Result<BigUint> {
    if v.is_empty() {
        return Err(WordError::EmptyPattern);
    }
    let n = v.letters();
    if n.len() > w.len() {
        return Ok(BigUint::zero());
    }
    let count = w.letters().windows(n.len()).filter(|win| *win == n).count();
    Ok(BigUint::from(count))
}

/// Alternating sum `theta(w) = sum (-1)^i a_i` of the numeric letter values.
pub fn theta(w: &Word) -> BigInt {
    let mut acc = 0i64;
    let mut chunks = 0u32;
    let mut total = BigInt::zero();
    for (i, l) in w.letters().iter().enumerate() {
        let sign = if i % 2 == 0 { 1 } else { -1 };
        acc += sign * l.value() as i64;
        chunks += 1;
        if chunks == 1 << 30 {
            total += acc;
            acc = 0;
            chunks = 0;
        }
    }
    total + acc
}

/// A closed interval of nonnegative big integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountInterval {
    pub lo: BigUint,
    pub hi: BigUint,
}

impl CountInterval {
    pub fn exact(v: BigUint) -> CountInterval {
        CountInterval { lo: v.clone(), hi: v }
    }

    pub fn contains(&self, v: &BigUint) -> bool {
        self.lo <= *v && *v <= self.hi
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }
}

/// Rigorous interval recursion for `(|e_k|_v, |conj(e_k)|_v)`.
///
/// The base case is a direct count on the largest materializable
/// `e_{k0}` with `|e_{k0}| <= base_cap`; one recursion level adds
/// `(2 m_j + 3)(|v| - 1)` of slack, plus the exact contribution of the
/// two separator zeros when `v` is the single letter Z (which the
/// coarser printed bound would miss).
pub fn count_enclosure(
    v: &Word,
    k: u32,
    params: &WordParams,
    base_cap: u64,
) -> Result<(CountInterval, CountInterval)> {
    if v.is_empty() {
        return Err(WordError::EmptyPattern);
    }
    if k < 1 {
        return Err(WordError::BadLevel);
    }
    let mut k0 = 1;
    for j in 1..=k {
        if length_of(j, params) <= BigUint::from(base_cap) {
            k0 = j;
        } else {
            break;
        }
    }
    let e = build_elementary(k0, params, base_cap)?;
    let ebar = e.conjugate();
    let mut int_e = CountInterval::exact(count_subwords(&e, v)?);
    let mut int_ebar = CountInterval::exact(count_subwords(&ebar, v)?);
    let sep = if v.letters() == [Letter::Zero] {
        BigUint::from(2u32)
    } else {
        BigUint::zero()
    };
    let vlen_minus_1 = BigUint::from(v.len() as u64 - 1);
    for j in k0..k {
        let m = BigUint::from(params.m(j));
        let lo = (&m + 1u32) * (&int_e.lo + &int_ebar.lo) + &sep;
        let hi = (&m + 1u32) * (&int_e.hi + &int_ebar.hi)
            + &sep
            + (BigUint::from(2u32) * &m + 3u32) * &vlen_minus_1;
        let next = CountInterval { lo, hi };
        int_e = next.clone();
        int_ebar = next;
    }
    Ok((int_e, int_ebar))
}

/// Frequency enclosure for a language word `v` at level `K`.
#[derive(Debug, Clone, Serialize)]
pub struct FreqEnclosure {
    pub lo: f64,
    pub hi: f64,
    pub midpoint: f64,
}

/// Enclosure `[lower/|e_K|, upper/|e_K|]` for the limit frequency of `v`,
/// with the midpoint as the point estimate.
pub fn phi_frequency(
    v: &Word,
    params: &WordParams,
    level: u32,
    base_cap: u64,
) -> Result<FreqEnclosure> {
    match is_in_language(v, params, level, DEFAULT_WORD_CAP)? {
        LanguageStatus::Yes { .. } => {}
        LanguageStatus::UnknownAtLevel(l) => return Err(WordError::NotInLanguage { level: l }),
    }
    let (int_e, _) = count_enclosure(v, level, params, base_cap)?;
    let len = length_of(level, params);
    let lo = ratio_to_f64(&int_e.lo, &len);
    let hi = ratio_to_f64(&int_e.hi, &len);
    Ok(FreqEnclosure { lo, hi, midpoint: 0.5 * (lo + hi) })
}

fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    Ratio::new(BigInt::from(num.clone()), BigInt::from(den.clone()))
        .to_f64()
        .unwrap_or(f64::NAN)
}

/// The exact ratio `theta(e_K)/|e_K|` and a rigorous bracket for the
/// limit `c`.
#[derive(Debug, Clone)]
pub struct CEstimate {
    pub ratio: Ratio<BigInt>,
    /// Lower endpoint of the tail bracket (rigorous lower bound for `c`).
    pub lower: f64,
    /// Upper endpoint: the ratio itself (the sequence is decreasing).
    pub upper: f64,
}

/// Bracket `c` between `ratio * prod_{j>=K} r_j` (lower-bounded via
/// `log(1-x) >= -2x`) and `ratio` itself, where
/// `r_j = (m_j - 1)/(m_j + 1 + 1/|e_j|)`.
pub fn c_estimate(params: &WordParams, level: u32) -> CEstimate {
    assert!(level >= 1);
    let ratio = Ratio::new(
        theta_of_elementary(level, params),
        BigInt::from(length_of(level, params)),
    );
    // 1 - r_j <= 2.5 / (m_j + 1.5) <= 2.5 / m_j, and the terms decay at
    // least geometrically once the built-in tail takes over, so a long
    // finite partial sum is an effectively exact tail bound.
    let mut tail = 0.0f64;
    for j in level..level + 60 {
        let m = if j <= 62 { params.m(j) as f64 } else { f64::INFINITY };
        tail += 2.5 / m;
    }
    let ratio_f = ratio.to_f64().unwrap_or(f64::NAN);
    CEstimate {
        lower: ratio_f * (-2.0 * tail).exp(),
        upper: ratio_f,
        ratio,
    }
}

/// Semi-decision of membership in the language of `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LanguageStatus {
    /// Confirmed: `w` occurs in `e_k` for the reported level.
    Yes { level: u32 },
    /// Not witnessed up to the given level; never a definite "no".
    UnknownAtLevel(u32),
}

impl LanguageStatus {
    pub fn is_yes(&self) -> bool {
        matches!(self, LanguageStatus::Yes { .. })
    }
}

/// Membership of `w` in `L(Y)`, confirmed up to level `K`.
///
/// Since `e_k` is a prefix of `e_{k+1}` and conjugates of lower levels
/// occur inside higher levels, scanning the largest materializable
/// `e_k` with `k <= K` witnesses every occurrence up to that level.
pub fn is_in_language(w: &Word, params: &WordParams, level: u32, cap: u64) -> Result<LanguageStatus> {
    if w.is_empty() {
        return Ok(LanguageStatus::Yes { level: 1 });
    }
    let mut best = None;
    for j in 1..=level {
        if length_of(j, params) <= BigUint::from(cap) {
            best = Some(j);
        } else {
            break;
        }
    }
    let Some(j) = best else {
        return Ok(LanguageStatus::UnknownAtLevel(level));
    };
    let e = build_elementary(j, params, cap)?;
    if e.contains(w) {
        Ok(LanguageStatus::Yes { level: j })
    } else {
        Ok(LanguageStatus::UnknownAtLevel(level))
    }
}

/// The "four-leaf clover" presentation of the level-`k` sofic cover:
/// four loops through a single central vertex, labeled by the four
/// k-elementary words.
#[derive(Debug, Clone)]
pub struct SoficGraph {
    pub k: u32,
    /// Loop label words: `e_k`, `conj(e_k)`, `e_k 0`, `conj(e_k) 0`.
    pub loops: [Word; 4],
}

/// Build the level-`k` graph; loops are materialized, so `k` must be
/// within the cap.
pub fn sofic_graph(k: u32, params: &WordParams, cap: u64) -> Result<SoficGraph> {
    let e = build_elementary(k, params, cap)?;
    let ebar = e.conjugate();
    let zero = Word(vec![Letter::Zero]);
    let loops = [e.concat(&zero), ebar.concat(&zero), e, ebar];
    Ok(SoficGraph { k, loops })
}

impl SoficGraph {
    fn elementary_words(&self) -> [&Word; 4] {
        [&self.loops[2], &self.loops[3], &self.loops[0], &self.loops[1]]
    }
}

/// Whether `w` labels a finite walk on the graph, i.e. `w` is a factor
/// of a bi-infinite concatenation of loop words. NFA subset simulation:
/// states are positions inside the loops plus the shared central vertex.
pub fn sofic_member(w: &Word, graph: &SoficGraph) -> bool {
    if w.is_empty() {
        return true;
    }
    let loops: Vec<&[Letter]> = graph.loops.iter().map(|l| l.letters()).collect();
    let offsets: Vec<usize> = {
        let mut off = vec![0usize; loops.len() + 1];
        for (i, l) in loops.iter().enumerate() {
            off[i + 1] = off[i] + (l.len() - 1);
        }
        off
    };
    let n_states = 1 + offsets[loops.len()]; // state 0 is the central vertex
    let mut cur = vec![true; n_states];
    let mut next = vec![false; n_states];
    for &a in w.letters() {
        let center_active = cur[0];
        next.iter_mut().for_each(|s| *s = false);
        let mut any = false;
        for (li, l) in loops.iter().enumerate() {
            // advance interior states
            for i in 1..l.len() {
                let sid = 1 + offsets[li] + (i - 1);
                if cur[sid] && l[i] == a {
                    if i + 1 == l.len() {
                        next[0] = true;
                    } else {
                        next[1 + offsets[li] + i] = true;
                    }
                    any = true;
                }
            }
            // leave the center
            if center_active && l[0] == a {
                if l.len() == 1 {
                    next[0] = true;
                } else {
                    next[1 + offsets[li]] = true;
                }
                any = true;
            }
        }
        if !any {
            return false;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    true
}

/// Parse `w` into factors where every inner factor is a k-elementary
/// word and the extremal factors have length at most `|e_k|`
/// (leftmost-longest greedy choice, deterministic).
pub fn elementary_factorization(w: &Word, graph: &SoficGraph) -> Result<Vec<Word>> {
    if w.is_empty() {
        return Ok(Vec::new());
    }
    let elems = graph.elementary_words();
    // A walk that never revisits the center stays inside one loop word.
    for e in elems {
        if e.contains(w) {
            return Ok(vec![w.clone()]);
        }
    }
    let n = w.len();
    let letters = w.letters();
    // ok[i]: w[i..] factors as (elementary)* followed by a proper prefix.
    let mut ok = vec![false; n + 1];
    ok[n] = true;
    for i in (0..n).rev() {
        let rest = &letters[i..];
        let proper_prefix = elems
            .iter()
            .any(|e| rest.len() < e.len() && &e.letters()[..rest.len()] == rest);
        ok[i] = proper_prefix
            || elems.iter().any(|e| {
                i + e.len() <= n && &letters[i..i + e.len()] == e.letters() && ok[i + e.len()]
            });
    }
    // Leading factor: the longest proper suffix of a loop word that
    // matches at position 0 and leaves a parsable remainder.
    let max_suffix = elems.iter().map(|e| e.len() - 1).max().unwrap().min(n);
    let mut lead_len = None;
    for s in (0..=max_suffix).rev() {
        let matches_suffix = s == 0
            || elems
                .iter()
                .any(|e| e.len() > s && &e.letters()[e.len() - s..] == &letters[..s]);
        if matches_suffix && ok[s] {
            lead_len = Some(s);
            break;
        }
    }
    let Some(lead) = lead_len else {
        return Err(WordError::NotInSoficLanguage { k: graph.k });
    };
    let mut factors = Vec::new();
    if lead > 0 {
        factors.push(w.subword(0, lead));
    }
    let mut pos = lead;
    while pos < n {
        let mut advanced = false;
        let mut best: Option<&Word> = None;
        for e in elems {
            if pos + e.len() <= n
                && &letters[pos..pos + e.len()] == e.letters()
                && ok[pos + e.len()]
                && best.map_or(true, |b| e.len() > b.len())
            {
                best = Some(e);
            }
        }
        if let Some(e) = best {
            factors.push(e.clone());
            pos += e.len();
            advanced = true;
        }
        if !advanced {
            // remainder is a proper prefix of a loop word
            factors.push(w.subword(pos, n - pos));
            break;
        }
    }
    Ok(factors)
}

/// Finite surrogate for minimality of the square of the shift: true iff
/// every window of length `2|e_{k+1}| + 1` of `e_{k+2}` contains `v` at
/// both an even and an odd position.
pub fn minimality_check(v: &Word, k: u32, params: &WordParams, cap: u64) -> Result<bool> {
    if v.is_empty() {
        return Err(WordError::EmptyPattern);
    }
    match is_in_language(v, params, k + 2, cap)? {
        LanguageStatus::Yes { .. } => {}
        LanguageStatus::UnknownAtLevel(l) => return Err(WordError::NotInLanguage { level: l }),
    }
    let host = build_elementary(k + 2, params, cap)?;
    let window = 2 * length_of(k + 1, params)
        .to_usize()
        .expect("window length fits usize")
        + 1;
    if window > host.len() {
        return Ok(false);
    }
    let n = host.len();
    let vlen = v.len();
    // next occurrence of v at an even / odd start, scanning from i
    let mut next_even = vec![usize::MAX; n + 1];
    let mut next_odd = vec![usize::MAX; n + 1];
    for i in (0..n).rev() {
        next_even[i] = next_even[i + 1];
        next_odd[i] = next_odd[i + 1];
        if i + vlen <= n && &host.letters()[i..i + vlen] == v.letters() {
            if i % 2 == 0 {
                next_even[i] = i;
            } else {
                next_odd[i] = i;
            }
        }
    }
    for start in 0..=(n - window) {
        let last_ok = start + window - vlen;
        if next_even[start] > last_ok || next_odd[start] > last_ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Number of distinct length-`n` factors of `w`.
pub fn subword_census(w: &Word, n: usize) -> usize {
    use std::collections::HashSet;
    if n == 0 || n > w.len() {
        return 0;
    }
    let set: HashSet<&[Letter]> = w.letters().windows(n).collect();
    set.len()
}
