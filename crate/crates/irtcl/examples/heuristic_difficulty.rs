//! Score item difficulty straight from text, no trained models involved:
//! surface length (token count) and word rarity (negative log-probability
//! under an add-one-smoothed unigram model of the corpus).
//!
//! ```text
//! cargo run --example heuristic_difficulty
//! ```

use std::collections::BTreeMap;

use irtcl::curriculum::{corpus_counts, score_sentence_length, score_word_rarity};
use irtcl::irt::ItemId;

fn main() -> irtcl::Result<()> {
    let corpus: &[(&str, &str)] = &[
        ("q1", "the cat sat on the mat"),
        ("q2", "the dog sat"),
        ("q3", "a perspicacious ocelot contemplated the mat"),
        ("q4", "the cat sat on the cat"),
        ("q5", "ocelot"),
    ];
    let texts: BTreeMap<ItemId, String> = corpus
        .iter()
        .map(|(id, text)| Ok((ItemId::new(*id)?, text.to_string())))
        .collect::<irtcl::Result<_>>()?;

    let by_length = score_sentence_length(&texts)?;
    let counts = corpus_counts(&texts);
    let by_rarity = score_word_rarity(&texts, &counts)?;

    println!(" item   length   rarity   text");
    for (item, text) in &texts {
        println!(
            " {:<5} {:>6}   {:>6.2}   {}",
            item.as_str(),
            by_length.get(item).unwrap(),
            by_rarity.get(item).unwrap(),
            text
        );
    }

    println!();
    println!("q3 is rarity-hardest: rare words dominate its sum");
    println!("q4 repeats common words, so it is long but easy by rarity");
    println!("q5 is a single word, yet rarer per token than q2");

    // Both scorers feed the same selection machinery; on their raw scales
    // they should be standardized first (DifficultyTable::standardized)
    // before ability-matched thresholding.
    let z = by_rarity.standardized();
    println!("\nstandardized rarity scores (ability-scale):");
    for (item, score) in z.iter() {
        println!(" {:<5} {:+.3}", item.as_str(), score);
    }
    Ok(())
}
