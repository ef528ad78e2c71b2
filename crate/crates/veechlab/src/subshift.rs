//! Computational points of the ambient full shift and the recursive
//! subshift Y, with all metric data kept in integer agreement-radius
//! (log-domain) form: d = (1/16)·2^{-r} where r is the first coordinate
//! of disagreement. Radius arithmetic is exact where floats would
//! underflow doubly-exponentially.

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::words::{
    self, is_in_language, letter_at, length_of, LanguageStatus, Letter, Word, WordParams,
};

/// Metric prefactor: diam X = RHO < 1/10.
pub const RHO: f64 = 1.0 / 16.0;

#[derive(Debug, thiserror::Error)]
pub enum PointError {
    #[error("coordinate {0} outside the generator's valid window")]
    OutOfWindow(i64),
    #[error("shift by {0} leaves the generator's valid window")]
    ShiftExceeded(i64),
    #[error("membership of the central block unresolved at level {level}")]
    Inconclusive { level: u32 },
    #[error("flip construction invalid: {0}")]
    BadFlip(String),
    #[error(transparent)]
    Word(#[from] words::WordError),
}

pub type Result<T> = std::result::Result<T, PointError>;

fn biguint_from_str<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<BigUint, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn biguint_to_str<S: serde::Serializer>(
    v: &BigUint,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

/// How the letters of a point are produced. Positions inside elementary
/// words are decimal strings in JSON since they exceed 2^53 for deep
/// levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Generator {
    /// The point `i -> e_k[pos + i]`, defined while `0 <= pos+i < |e_k|`.
    Elementary {
        k: u32,
        #[serde(serialize_with = "biguint_to_str", deserialize_with = "biguint_from_str")]
        pos: BigUint,
    },
    /// An explicit finite block: coordinate `i` reads `word[i - anchor]`.
    Window { word: Word, anchor: i64 },
    /// A single-letter modification of a base generator.
    Flip {
        base: Box<Generator>,
        at: i64,
        letter: Letter,
    },
}

/// A finite central view of a bi-infinite sequence: a generator plus the
/// word-parameter family needed to resolve elementary positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointWindow {
    pub generator: Generator,
    pub params: WordParams,
}

impl PointWindow {
    pub fn elementary(k: u32, pos: BigUint, params: WordParams) -> PointWindow {
        PointWindow { generator: Generator::Elementary { k, pos }, params }
    }

    pub fn window(word: Word, anchor: i64, params: WordParams) -> PointWindow {
        PointWindow { generator: Generator::Window { word, anchor }, params }
    }

    pub fn flipped(base: PointWindow, at: i64, letter: Letter) -> PointWindow {
        PointWindow {
            generator: Generator::Flip { base: Box::new(base.generator), at, letter },
            params: base.params,
        }
    }

    fn coord_of(&self, g: &Generator, i: i64) -> Result<Letter> {
        match g {
            Generator::Elementary { k, pos } => {
                // decoded descriptions are untrusted: reject levels the
                // parameter family does not define instead of panicking
                if !(1..=62).contains(k) {
                    return Err(PointError::Word(crate::words::WordError::BadLevel));
                }
                let abs = BigInt::from(pos.clone()) + i;
                if abs.is_negative() {
                    return Err(PointError::OutOfWindow(i));
                }
                let abs = abs.to_biguint().unwrap();
                if abs >= length_of(*k, &self.params) {
                    return Err(PointError::OutOfWindow(i));
                }
                Ok(letter_at(*k, &abs, &self.params)?)
            }
            Generator::Window { word, anchor } => {
                let idx = i - anchor;
                if idx < 0 || idx as usize >= word.len() {
                    return Err(PointError::OutOfWindow(i));
                }
                Ok(word.letters()[idx as usize])
            }
            Generator::Flip { base, at, letter } => {
                if i == *at {
                    Ok(*letter)
                } else {
                    self.coord_of(base, i)
                }
            }
        }
    }

    /// The `i`-th letter of the represented sequence.
    pub fn coord(&self, i: i64) -> Result<Letter> {
        self.coord_of(&self.generator, i)
    }

    /// Largest `r` such that all coordinates in `[-r, r]` are defined.
    pub fn valid_radius(&self) -> i64 {
        fn rad(p: &PointWindow, g: &Generator) -> i64 {
            match g {
                Generator::Elementary { k, pos } => {
                    let len = length_of(*k, &p.params);
                    let left = pos.to_i64().unwrap_or(i64::MAX);
                    let right: BigInt = BigInt::from(len) - BigInt::from(pos.clone()) - 1;
                    let right = right.to_i64().unwrap_or(i64::MAX);
                    left.min(right)
                }
                Generator::Window { word, anchor } => {
                    let left = -anchor;
                    let right = anchor + word.len() as i64 - 1;
                    left.min(right)
                }
                Generator::Flip { base, .. } => rad(p, base),
            }
        }
        rad(self, &self.generator)
    }

    /// The central block `p_{[-n, n]}` as a word.
    pub fn central_block(&self, n: i64) -> Result<Word> {
        let mut v = Vec::with_capacity((2 * n + 1) as usize);
        for i in -n..=n {
            v.push(self.coord(i)?);
        }
        Ok(Word::new(v))
    }

    /// The block `p_{[a, b]}` as a word.
    pub fn block(&self, a: i64, b: i64) -> Result<Word> {
        let mut v = Vec::with_capacity((b - a + 1).max(0) as usize);
        for i in a..=b {
            v.push(self.coord(i)?);
        }
        Ok(Word::new(v))
    }

    /// True when the generator, ignoring flips that were overwritten,
    /// reads straight out of an elementary word (hence lies in Y up to
    /// window truncation).
    pub fn is_on_y(&self) -> bool {
        fn on_y(g: &Generator) -> bool {
            match g {
                Generator::Elementary { .. } => true,
                Generator::Window { .. } => false,
                Generator::Flip { .. } => false,
            }
        }
        on_y(&self.generator)
    }
}

/// The shift map: `shift(p, n)` reads coordinate `i` of the result as
/// coordinate `i + n` of `p`.
pub fn shift(p: &PointWindow, n: i64) -> Result<PointWindow> {
    fn shift_gen(g: &Generator, n: i64) -> Result<Generator> {
        Ok(match g {
            Generator::Elementary { k, pos } => {
                let pos = BigInt::from(pos.clone()) + n;
                if pos.is_negative() {
                    return Err(PointError::ShiftExceeded(n));
                }
                Generator::Elementary { k: *k, pos: pos.to_biguint().unwrap() }
            }
            Generator::Window { word, anchor } => {
                Generator::Window { word: word.clone(), anchor: anchor - n }
            }
            Generator::Flip { base, at, letter } => Generator::Flip {
                base: Box::new(shift_gen(base, n)?),
                at: at - n,
                letter: *letter,
            },
        })
    }
    Ok(PointWindow { generator: shift_gen(&p.generator, n)?, params: p.params.clone() })
}

/// Log-domain distance: `Radius(r)` means d = RHO·2^{-r}; `AtLeast(c)`
/// records that no disagreement was found while scanning `|i| < c`
/// (d ≤ RHO·2^{-c}); `Zero` marks genuinely equal points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogDistance {
    Zero,
    Radius(i64),
    AtLeast(i64),
}

impl LogDistance {
    /// Numeric value (upper bound for `AtLeast`); underflows to 0 for
    /// huge radii, which is why the radius form is authoritative.
    pub fn value(self) -> f64 {
        match self {
            LogDistance::Zero => 0.0,
            LogDistance::Radius(r) | LogDistance::AtLeast(r) => RHO * (-(r as f64)).exp2(),
        }
    }

    pub fn radius(self) -> Option<i64> {
        match self {
            LogDistance::Radius(r) => Some(r),
            _ => None,
        }
    }
}

/// First-disagreement scan over `|i| <= scan_cap`.
pub fn dist(p: &PointWindow, q: &PointWindow, scan_cap: i64) -> Result<LogDistance> {
    for r in 0..=scan_cap {
        for i in [r, -r] {
            if p.coord(i)? != q.coord(i)? {
                return Ok(LogDistance::Radius(r));
            }
            if r == 0 {
                break;
            }
        }
    }
    Ok(LogDistance::AtLeast(scan_cap + 1))
}

/// Bowen distance max over |j| ≤ n of d(T^j p, T^j q): under the chosen
/// metric the agreement radius simply drops by n, clamped at 0.
pub fn bowen_dist(p: &PointWindow, q: &PointWindow, n: i64, scan_cap: i64) -> Result<LogDistance> {
    match dist(p, q, scan_cap + n)? {
        LogDistance::Zero => Ok(LogDistance::Zero),
        LogDistance::Radius(r) => Ok(LogDistance::Radius((r - n).max(0))),
        LogDistance::AtLeast(c) => Ok(LogDistance::AtLeast((c - n).max(0))),
    }
}

/// Distance from `p` to the subshift Y, confirmed at language level `K`:
/// RHO·2^{-(n*+1)} where n* is the largest n whose central block is a
/// confirmed language word.
///
/// The result is exact (not just level-K-confirmed) when the first
/// non-member block contains a certified forbidden factor; consecutive
/// zeros are the certificate used here, since by induction on the
/// recursion every zero in every e_k is flanked by block edges that start
/// and end with non-zero letters. Otherwise membership of the failing
/// block is only "unknown at level K" and the scan reports an error
/// rather than guessing.
pub fn dist_to_y(p: &PointWindow, level: u32, scan_cap: i64, word_cap: u64) -> Result<LogDistance> {
    if p.is_on_y() {
        return Ok(LogDistance::Zero);
    }
    // Fast path: a flip over an elementary base whose flipped letter
    // forms a ZZ pair with a neighbor. Every block avoiding the flip is
    // a genuine factor, and the first block containing the full ZZ pair
    // is certified non-member, so the radius is pinned exactly — except
    // when the pair lies on the far side of a left-edge flip, where one
    // membership query decides between two adjacent radii.
    if let Generator::Flip { base, at, .. } = &p.generator {
        if matches!(**base, Generator::Elementary { .. }) && p.coord(*at)? == Letter::Zero {
            let at = *at;
            let left_zz = p.coord(at - 1).ok() == Some(Letter::Zero);
            let right_zz = p.coord(at + 1).ok() == Some(Letter::Zero);
            if at >= 1 && left_zz {
                return Ok(LogDistance::Radius(at));
            }
            if at == 0 && (left_zz || right_zz) {
                // the single-letter central block "Z" is always a factor
                return Ok(LogDistance::Radius(1));
            }
            if at < 0 && right_zz {
                return Ok(LogDistance::Radius(-at));
            }
            if at < 0 && left_zz {
                // blocks up to n = -at - 1 avoid the flip; the block at
                // n = -at carries the flipped zero on its left edge and
                // needs one membership query; n = -at + 1 holds the ZZ
                let n = -at;
                let edge = p.block(-n, n)?;
                return match is_in_language(&edge, &p.params, level, word_cap)? {
                    LanguageStatus::Yes { .. } => Ok(LogDistance::Radius(n + 1)),
                    LanguageStatus::UnknownAtLevel(l) => {
                        Err(PointError::Inconclusive { level: l })
                    }
                };
            }
        }
    }
    let zz: Word = "ZZ".parse().unwrap();
    for n in 0..=scan_cap {
        let block = p.central_block(n)?;
        match is_in_language(&block, &p.params, level, word_cap)? {
            LanguageStatus::Yes { .. } => continue,
            LanguageStatus::UnknownAtLevel(l) => {
                if block.contains(&zz) {
                    return Ok(LogDistance::Radius(n));
                }
                return Err(PointError::Inconclusive { level: l });
            }
        }
    }
    Ok(LogDistance::AtLeast(scan_cap + 1))
}

/// Scan outward from `target` for a zero letter of `e_k`; used to seed
/// certified flip points.
pub fn find_zero_near(k: u32, params: &WordParams, target: &BigUint) -> Result<BigUint> {
    let len = length_of(k, params);
    let t = BigInt::from(target.clone());
    for d in 0..1_000_000i64 {
        for cand in [&t + d, &t - d] {
            if cand.is_negative() {
                continue;
            }
            let cand = cand.to_biguint().unwrap();
            if cand >= len {
                continue;
            }
            if letter_at(k, &cand, params)? == Letter::Zero {
                return Ok(cand);
            }
        }
    }
    Err(PointError::BadFlip("no zero near target".into()))
}

/// A point at exact distance RHO·2^{-radius} from Y: take the Y-point
/// reading e_k around `zero_pos + 1 - radius` and flip the letter at
/// coordinate +radius (the successor of the zero) to another zero,
/// creating a certified-forbidden ZZ factor.
pub fn flip_point_at_radius(
    k: u32,
    params: &WordParams,
    zero_pos: &BigUint,
    radius: i64,
) -> Result<PointWindow> {
    if radius < 1 {
        return Err(PointError::BadFlip("radius must be >= 1".into()));
    }
    if letter_at(k, zero_pos, params)? != Letter::Zero {
        return Err(PointError::BadFlip(format!("position {zero_pos} is not a zero")));
    }
    let center: BigInt = BigInt::from(zero_pos.clone()) + 1 - radius;
    if center.is_negative() {
        return Err(PointError::BadFlip("flip radius reaches past the word start".into()));
    }
    let base = PointWindow::elementary(k, center.to_biguint().unwrap(), params.clone());
    debug_assert_eq!(base.coord(radius - 1).unwrap(), Letter::Zero);
    if base.coord(radius)? == Letter::Zero {
        return Err(PointError::BadFlip("successor of the zero is itself zero".into()));
    }
    Ok(PointWindow::flipped(base, radius, Letter::Zero))
}
