//! Fuzz the letter-string parser: must never panic, and any accepted
//! word must round-trip through Display.

#![no_main]

use libfuzzer_sys::fuzz_target;
use veechlab::Word;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(word) = text.parse::<Word>() {
            let shown = word.to_string();
            let again: Word = shown.parse().expect("round trip");
            assert_eq!(word.letters(), again.letters());
        }
    }
});
